from .sentiment import LexiconSentiment, RuleConstants, SentimentAnalyzer, default_analyzer, sentiment_proportions
from .tfidf import TfidfModel, batch_cosine, tfidf_cosine
from .vector import (
    OPTIMAL_LENGTH_PENALTY, FeatureVector, LengthStats, feature_matrix, feature_vector,
    length_penalty_batch, synthetic_target,
)

__all__ = [
    "FeatureVector", "LengthStats", "LexiconSentiment", "OPTIMAL_LENGTH_PENALTY", "RuleConstants",
    "SentimentAnalyzer", "TfidfModel", "batch_cosine", "default_analyzer", "feature_matrix",
    "feature_vector", "length_penalty_batch", "sentiment_proportions", "synthetic_target", "tfidf_cosine",
]

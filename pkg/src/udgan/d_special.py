"""Small feature-vector discriminator: does a sentence match the user's topic and sentiment?

``linear(5 -> 32) -> relu -> linear(32 -> 2) -> softmax``; class 1 means "matches".
Positives are idealized target vectors, negatives are descriptors of generated sentences.
"""

from __future__ import annotations

import math

import numpy as np

from . import nn
from .nn import ops
from .nn.autograd import ConfigError, Tensor, TrainingError, UsageError
from .nn.checkpoint import load as load_checkpoint
from .nn.checkpoint import save as save_checkpoint

MODEL_KIND = "d-special"
FEATURES = 5


class DSpecialModel:
    def __init__(self, hidden: int = 32, seed: int = 0, zero_init: bool = False):
        self.hidden, self.seed = hidden, seed
        rng = np.random.default_rng(seed)
        self.store = nn.ParamStore()
        self.fc1 = nn.Linear(self.store, "fc1", FEATURES, hidden, rng)
        self.fc2 = nn.Linear(self.store, "fc2", hidden, 2, rng)
        if zero_init:
            for _, p in self.store.items():
                p.data[:] = 0.0

    def config(self) -> dict:
        return {"hidden": self.hidden}

    def layer_specs(self) -> list[dict]:
        return [self.fc1.spec.to_dict(), self.fc2.spec.to_dict()]

    def num_params(self) -> int:
        return self.store.num_params()

    def save(self, path) -> str:
        return save_checkpoint(path, MODEL_KIND, self.store.state(), self.layer_specs(), self.seed, self.config())

    @classmethod
    def load(cls, path) -> "DSpecialModel":
        header, tensors = load_checkpoint(path, MODEL_KIND)
        model = cls(seed=header["seed"], **header["config"])
        model.store.load_state(tensors)
        return model

    @staticmethod
    def _check(X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.ndim != 2 or X.shape[1] != FEATURES:
            raise ConfigError(f"d-special expects rows of {FEATURES} features, got shape {X.shape}")
        if X.size and (not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0):
            raise ConfigError("feature vectors must be finite and within [0, 1]")
        return X

    def logits(self, X) -> Tensor:
        return self.fc2(ops.relu(self.fc1(self._check(X))))

    def probabilities(self, X) -> np.ndarray:
        with nn.no_grad():
            return ops.softmax_np(self.logits(X).data)

    def score(self, X) -> np.ndarray:
        """p(matches) per row; a single vector gives a length-1 array."""
        return self.probabilities(X)[:, 1]

    def loss(self, positives, negatives) -> Tensor:
        pos, neg = self._check(positives), self._check(negatives)
        if len(pos) == 0 or len(neg) == 0:
            raise UsageError("d-special training needs nonempty positive and negative batches")
        labels = np.concatenate([np.ones(len(pos), np.int64), np.zeros(len(neg), np.int64)])
        return ops.cross_entropy(self.logits(np.vstack([pos, neg])), labels)


def train_step(model: DSpecialModel, opt: nn.Adam, positives, negatives, lr: float | None = None) -> float:
    loss = model.loss(positives, negatives)
    value = loss.item()
    if not math.isfinite(value):
        raise TrainingError(f"d-special loss is not finite ({value})")
    loss.backward()
    opt.step(lr)
    return value

"""UD-GAN: text generation with a frozen paragraph discriminator and a cheap retrainable
topic/sentiment discriminator."""

__version__ = "0.1.0"

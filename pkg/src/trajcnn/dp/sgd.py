"""DP-SGD building blocks: per-sample clipping, Gaussian noise, configuration."""
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, TrainingError


@dataclass
class DpConfig:
    """Parameters of a DP-SGD run.

    ``delta=None`` resolves to ``1 / n**1.1`` and ``noise_multiplier=None``
    to the smallest sigma meeting ``epsilon`` (see :meth:`resolve`).
    ``scale_factor`` multiplies the batch size while the number of steps
    stays fixed.  ``target`` selects which network is privatised.
    """

    epsilon: float = 10.0
    delta: float = None
    clip_norm: float = 0.1
    noise_multiplier: float = None
    scale_factor: int = 10
    target: str = "generator"
    chunk_size: int = 128

    def validate(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.delta is not None and not 0 < self.delta < 1:
            raise ConfigurationError("delta must lie in (0, 1)")
        if not self.clip_norm > 0:
            raise ConfigurationError("clip norm must be positive")
        if self.noise_multiplier is not None and self.noise_multiplier < 0:
            raise ConfigurationError("noise multiplier must be non-negative")
        if self.scale_factor < 1 or self.chunk_size < 1:
            raise ConfigurationError("scale_factor and chunk_size must be >= 1")
        if self.target not in ("generator", "discriminator"):
            raise ConfigurationError(f"unknown DP target {self.target!r}")
        return self

    def resolve(self, n, batch_size, steps):
        """Fill in delta and sigma for a dataset of ``n`` records."""
        from .accountant import calibrate_sigma

        self.validate()
        delta = self.delta if self.delta is not None else 1.0 / n ** 1.1
        q = batch_size / n
        if not 0 < q <= 1:
            raise ConfigurationError(f"batch size {batch_size} exceeds dataset size {n}")
        sigma = self.noise_multiplier
        if sigma is None:
            sigma = calibrate_sigma(self.epsilon, delta, q, steps)
        return delta, q, sigma


def per_sample_norms(grads):
    g = np.asarray(grads, dtype=np.float64)
    return np.sqrt((g.reshape(len(g), -1) ** 2).sum(axis=1))


def clip_factors(norms, clip_norm):
    """``min(1, C / ||g||)`` per sample (1 for zero gradients)."""
    norms = np.asarray(norms, dtype=np.float64)
    if not np.all(np.isfinite(norms)):
        raise TrainingError("non-finite per-sample gradient")
    with np.errstate(divide="ignore"):
        return np.minimum(1.0, clip_norm / norms)


def clip_per_sample(grads, clip_norm):
    """Scale each row ``g`` of ``grads`` by ``min(1, C / ||g||)``."""
    g = np.asarray(grads)
    f = clip_factors(per_sample_norms(g), clip_norm)
    return g * f.reshape((-1,) + (1,) * (g.ndim - 1)).astype(g.dtype)


def gaussian_noise(shape, sigma, clip_norm, rng, dtype=np.float64):
    """Noise with per-coordinate std ``sigma * C``; exactly zero when ``sigma == 0``."""
    if sigma == 0:
        return np.zeros(shape, dtype=dtype)
    return (rng.standard_normal(shape) * (sigma * clip_norm)).astype(dtype)


def noisy_aggregate(clipped, sigma, clip_norm, seed):
    """``(sum_i g_i + N(0, sigma^2 C^2 I)) / batch``."""
    g = np.asarray(clipped)
    if len(g) == 0:
        raise ValueError("noisy_aggregate needs at least one gradient")
    rng = np.random.default_rng(seed)
    total = g.sum(axis=0)
    return (total + gaussian_noise(total.shape, sigma, clip_norm, rng, total.dtype)) / len(g)


def effective_batch(batch_size, dp):
    return batch_size if dp is None else batch_size * dp.scale_factor


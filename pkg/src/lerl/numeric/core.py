from __future__ import annotations

import math

import numpy as np

from lerl.errors import DomainError
from lerl.numeric.random import as_generator

LOG_2PI = math.log(2.0 * math.pi)


def softmax(v, temperature_scale: float = 1.0) -> np.ndarray:
    """Probabilities proportional to ``exp(temperature_scale * v)``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("softmax of an empty vector")
    if not np.all(np.isfinite(v)) or not math.isfinite(temperature_scale):
        raise DomainError("softmax inputs must be finite")
    z = temperature_scale * v
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def gaussian_log_density(x, mu, sigma) -> float:
    x, mu, sigma = (np.asarray(a, dtype=np.float64) for a in (x, mu, sigma))
    if np.any(sigma <= 0):
        raise DomainError("sigma must be strictly positive")
    z = (x - mu) / sigma
    return float(np.sum(-0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z))


def gaussian_sample(mu, sigma, rng) -> tuple[np.ndarray, float]:
    """Draw from N(mu, diag(sigma^2)) and return the sample with its log-density."""
    mu = np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    if mu.shape != sigma.shape:
        raise DomainError(f"mu and sigma lengths differ: {mu.size} vs {sigma.size}")
    if np.any(sigma <= 0):
        raise DomainError("sigma must be strictly positive")
    x = mu + sigma * as_generator(rng).standard_normal(mu.size)
    return x, gaussian_log_density(x, mu, sigma)

from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .preprocess import Distribution


def _masses(p: Distribution | Sequence[float] | np.ndarray) -> np.ndarray:
    return p.masses if isinstance(p, Distribution) else np.asarray(p, dtype=float)


def _pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    p, q = _masses(p), _masses(q)
    if p.shape != q.shape:
        raise DimensionError(f"distributions have {p.size} and {q.size} bins")
    return p, q


def kl_divergence(p, q) -> float:
    """D_KL(p || q) in nats; +inf when q is zero where p is positive."""
    p, q = _pair(p, q)
    support = p > 0
    if np.any(q[support] <= 0):
        return float("inf")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def _std(masses: np.ndarray, values: np.ndarray) -> float:
    mean = np.dot(masses, values)
    return float(np.sqrt(max(np.dot(masses, (values - mean) ** 2), 0.0)))


def l1_sd_loss(p, q, representatives: Sequence[float] | np.ndarray) -> float:
    p, q = _pair(p, q)
    values = np.asarray(representatives, dtype=float)
    if values.shape != p.shape:
        raise DimensionError(f"{values.size} representatives for {p.size} bins")
    return abs(_std(p, values) - _std(q, values))


def jaccard_index(p, q, threshold: float = 0.001) -> float:
    if threshold < 0:
        raise ConfigError(f"threshold must be >= 0, got {threshold}")
    p, q = _pair(p, q)
    a, b = p > threshold, q > threshold
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def cosine_similarity(p, q) -> float:
    p, q = _pair(p, q)
    norms = np.linalg.norm(p) * np.linalg.norm(q)
    if norms == 0:
        raise ConfigError("cosine similarity is undefined for a zero vector")
    return float(np.dot(p, q) / norms)


def compare(p, q, representatives, threshold: float = 0.001) -> dict[str, float]:
    """The metrics block of a report: kl, l1_sd, jaccard@<threshold>, cosine."""
    return {
        "kl": kl_divergence(p, q),
        "l1_sd": l1_sd_loss(p, q, representatives),
        f"jaccard@{threshold:g}": jaccard_index(p, q, threshold),
        "cosine": cosine_similarity(p, q),
    }

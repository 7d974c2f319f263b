"""Input validation helpers shared by the estimators and command-line tools."""
from __future__ import annotations

import math
from numbers import Integral, Real

import numpy as np


def check_probability(value, name: str) -> float:
    if not isinstance(value, Real) or not 0.0 <= float(value) <= 1.0:
        raise ValueError(f"{name} must be a probability in [0, 1], got {value!r}")
    return float(value)


def check_positive_int(value, name: str, allow_zero: bool = False) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < 0 or (value == 0 and not allow_zero):
        raise ValueError(f"{name} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return int(value)


def check_positive_real(value, name: str) -> float:
    if not isinstance(value, Real) or not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_latent(latent, n_players: int) -> int:
    if isinstance(latent, bool) or not isinstance(latent, Integral):
        raise TypeError(f"latent must be an integer, got {latent!r}")
    if not 0 <= latent < n_players:
        raise ValueError(f"latent {latent} out of range for a team of {n_players}")
    return int(latent)


def check_distribution(p, name: str = "distribution", atol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > atol:
        raise ValueError(f"{name} must be non-negative and sum to 1 (sum={p.sum()!r})")
    return p


def check_rng(rng) -> np.random.Generator:
    """Accept a Generator, a seed, or None (fresh entropy)."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)

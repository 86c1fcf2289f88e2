"""Input validation helpers shared across the estimator classes."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_matrix",
    "check_vector",
    "check_matching_length",
    "check_probability",
    "check_seed",
]


def check_matrix(X, name="X", allow_empty=False):
    """Coerce to a 2-D float64 array and reject non-finite entries."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not allow_empty and X.shape[0] == 0:
        raise ValueError(f"{name} has no rows")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    return X


def check_vector(y, name="y", n_rows=None):
    """Coerce to a 1-D float64 array, optionally checking its length."""
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.isfinite(y).all():
        raise ValueError(f"{name} contains non-finite values")
    if n_rows is not None and y.shape[0] != n_rows:
        raise ValueError(f"{name} has length {y.shape[0]}, expected {n_rows}")
    return y


def check_matching_length(n, *arrays_with_names):
    for arr, name in arrays_with_names:
        if len(arr) != n:
            raise ValueError(f"{name} has length {len(arr)}, expected {n}")


def check_probability(value, name):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie strictly between 0 and 1, got {value}")
    return value


def check_seed(seed):
    seed = int(seed)
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    return seed

"""Shared numeric utilities: seed derivation, fold assignment, targeting step."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import expit, logit

__all__ = [
    "derive_seed",
    "cluster_folds",
    "row_folds",
    "project_simplex",
    "logistic_fluctuation",
    "bound_away_from_unit_interval_edges",
    "ordered_thread_map",
]


def _as_entropy(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_seed(seed, *path):
    """Derive a child seed from a master seed and a label path.

    The same (seed, path) always yields the same child, independent of
    call order, platform, or thread schedule, so components can draw
    from their own generators without sharing a stream.
    """
    key = tuple(_as_entropy(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def cluster_folds(cluster_ids, n_folds, seed):
    """Assign every row a fold so that all rows of a cluster share one.

    Clusters are spread round-robin after a seeded shuffle, which keeps
    fold sizes balanced in cluster counts.
    """
    cluster_ids = np.asarray(cluster_ids)
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    uniq, inverse = np.unique(cluster_ids, return_inverse=True)
    if len(uniq) < n_folds:
        raise ValueError(
            f"cannot split {len(uniq)} clusters into {n_folds} folds; "
            "reduce folds or merge clusters"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(uniq))
    fold_of_cluster = np.empty(len(uniq), dtype=np.int64)
    fold_of_cluster[order] = np.arange(len(uniq)) % n_folds
    return fold_of_cluster[inverse]


def row_folds(n_rows, n_folds, seed):
    """Balanced fold ids for exchangeable rows."""
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    if n_rows < n_folds:
        raise ValueError(f"cannot split {n_rows} rows into {n_folds} folds")
    rng = np.random.default_rng(seed)
    folds = np.empty(n_rows, dtype=np.int64)
    folds[rng.permutation(n_rows)] = np.arange(n_rows) % n_folds
    return folds


def project_simplex(v):
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > (css - 1.0))[0][-1]
    tau = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def bound_away_from_unit_interval_edges(p, bound):
    """Clip values into [bound, 1 - bound]; keeps logits finite."""
    return np.clip(p, bound, 1.0 - bound)


def logistic_fluctuation(y, offset_logit, weights, tol=1e-12, max_iter=200):
    """Solve the one-parameter logistic score equation for epsilon.

    Finds epsilon with sum_i w_i * (y_i - expit(offset_i + eps)) = 0 by
    a safeguarded Newton iteration. y must live in [0, 1] and weights
    must be nonnegative. Returns 0.0 when every weight is zero.
    """
    y = np.asarray(y, dtype=np.float64)
    offset_logit = np.asarray(offset_logit, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError("fluctuation weights must be nonnegative")
    if not weights.any():
        return 0.0

    eps = 0.0
    for _ in range(max_iter):
        p = expit(offset_logit + eps)
        score = float(np.sum(weights * (y - p)))
        if abs(score) < tol * max(1.0, float(np.sum(weights))):
            break
        info = float(np.sum(weights * p * (1.0 - p)))
        if info <= 0.0:
            break
        step = score / info
        # cap the step; expit saturates well before |eps| = 20
        eps += float(np.clip(step, -4.0, 4.0))
        eps = float(np.clip(eps, -20.0, 20.0))
    return eps


def ordered_thread_map(fn, items, threads):
    """Map fn over items, optionally on a thread pool, preserving order."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))


def unscale_unit_interval(values, lo, hi):
    return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def scale_to_unit_interval(y):
    """Affine map of y onto [0, 1] by its observed range.

    Returns (scaled, lo, hi). A degenerate range is signalled with
    hi == lo and an all-zero scaled vector.
    """
    y = np.asarray(y, dtype=np.float64)
    lo = float(y.min())
    hi = float(y.max())
    if hi - lo <= 0.0:
        return np.zeros_like(y), lo, hi
    return (y - lo) / (hi - lo), lo, hi


# re-export the link functions so estimator modules share one import site
expit = expit
logit = logit

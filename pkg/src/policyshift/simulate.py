"""Synthetic data with known counterfactual truth.

Two data-generating processes back the verification suite: a
cross-sectional panel with a continuous exposure and a yearly adoption
process with binary exposure trajectories. Both expose their structural
outcome function, so the value of any exposure policy can be computed
directly (chunked Monte Carlo for the continuous case, exact
enumeration of the discrete process when it is small enough) and
compared against estimates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ._utils import derive_seed, expit, ordered_thread_map
from .panel import LongitudinalPanel, PanelTable

__all__ = [
    "DgpSpec",
    "LongitudinalDgpSpec",
    "TruthReport",
    "simulate",
    "structural_mean",
    "true_shift_contrast",
    "true_longitudinal_contrast",
    "stratum_shaped_spec",
]

MC_CHUNK = 250_000
MC_CHUNK_TRAJECTORY = 50_000


def _check_common(spec):
    if spec.n_clusters < 1 or spec.n_units < spec.n_clusters:
        raise ValueError(
            f"need n_units >= n_clusters >= 1, got {spec.n_units} units, "
            f"{spec.n_clusters} clusters"
        )
    if spec.cluster_sd < 0 or spec.noise_sd < 0:
        raise ValueError("variance parameters must be nonnegative")
    if spec.seed < 0:
        raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class DgpSpec:
    """Cross-sectional process: Gaussian covariates, truncated-linear exposure.

    Exposure is ``clip(exposure_coef * W1 + Uniform(0, exposure_span),
    0, a_max)``; with ``exposure_coef=0`` and ``exposure_span=a_max``
    the exposure is exactly Uniform(0, a_max), which admits closed-form
    policy-shift expectations. The outcome is linear in exposure and
    covariates plus an additive cluster effect and Gaussian noise.
    """

    n_units: int = 500
    n_clusters: int = 10
    n_covariates: int = 3
    exposure_coef: float = 0.5
    exposure_span: float = 4.0
    a_max: float = 4.79
    outcome_intercept: float = 1.0
    outcome_exposure_coef: float = 2.0
    outcome_covariate_coefs: tuple = (1.0, -0.5, 0.25)
    cluster_sd: float = 0.5
    noise_sd: float = 1.0
    seed: int = 0
    stratum: str = "LATE"

    def __post_init__(self):
        object.__setattr__(
            self, "outcome_covariate_coefs", tuple(float(c) for c in self.outcome_covariate_coefs)
        )
        _check_common(self)
        if self.a_max <= 0:
            raise ValueError(f"a_max must be positive, got {self.a_max}")
        if self.exposure_span <= 0:
            raise ValueError("exposure_span must be positive")
        if self.n_covariates < 1:
            raise ValueError("need at least one covariate")
        if len(self.outcome_covariate_coefs) != self.n_covariates:
            raise ValueError(
                f"outcome_covariate_coefs has length {len(self.outcome_covariate_coefs)}, "
                f"expected {self.n_covariates}"
            )
        values = [
            self.exposure_coef,
            self.outcome_intercept,
            self.outcome_exposure_coef,
            *self.outcome_covariate_coefs,
        ]
        if not np.isfinite(values).all():
            raise ValueError("coefficients must be finite")

    def to_dict(self):
        out = asdict(self)
        out["outcome_covariate_coefs"] = list(self.outcome_covariate_coefs)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown DgpSpec keys: {sorted(unknown)}")
        if "outcome_covariate_coefs" in data:
            data["outcome_covariate_coefs"] = tuple(data["outcome_covariate_coefs"])
        return cls(**data)


@dataclass(frozen=True)
class LongitudinalDgpSpec:
    """Yearly adoption process with one binary baseline covariate.

    Adoption is an absorbing state: once a unit's indicator turns on it
    stays on. A binary time-varying covariate precedes each year's
    adoption draw from year 2 onward. The outcome is linear in the
    number of adopted years, the covariates, and the final time-varying
    value, plus cluster effect and noise.
    """

    n_units: int = 500
    n_clusters: int = 10
    horizon: int = 3
    w_prob: float = 0.5
    hazard_intercept: float = -1.0
    hazard_w: float = 1.0
    hazard_tv: float = 0.5
    tv_intercept: float = -0.5
    tv_w: float = 0.8
    tv_exposure: float = 0.6
    tv_prev: float = 0.7
    outcome_intercept: float = 1.0
    outcome_w: float = 1.0
    outcome_exposure: float = 0.5
    outcome_tv: float = 0.8
    cluster_sd: float = 0.25
    noise_sd: float = 0.5
    seed: int = 0
    stratum: str = "LATE"

    def __post_init__(self):
        _check_common(self)
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not 0.0 <= self.w_prob <= 1.0:
            raise ValueError("w_prob must lie in [0, 1]")
        values = [
            self.hazard_intercept,
            self.hazard_w,
            self.hazard_tv,
            self.tv_intercept,
            self.tv_w,
            self.tv_exposure,
            self.tv_prev,
            self.outcome_intercept,
            self.outcome_w,
            self.outcome_exposure,
            self.outcome_tv,
        ]
        if not np.isfinite(values).all():
            raise ValueError("coefficients must be finite")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown LongitudinalDgpSpec keys: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class TruthReport:
    """Oracle value of a policy contrast with its numerical precision."""

    true_contrast: float
    mc_se: float
    method: str
    draws: int

    def to_dict(self):
        return {
            "true_contrast": self.true_contrast,
            "mc_se": self.mc_se,
            "method": self.method,
            "draws": self.draws,
        }


def _cluster_labels(n_units, n_clusters):
    """Balanced-within-one assignment, units grouped by cluster."""
    base, extra = divmod(n_units, n_clusters)
    sizes = [base + (1 if i < extra else 0) for i in range(n_clusters)]
    width = max(3, len(str(n_clusters - 1)))
    labels = np.repeat([f"c{i:0{width}d}" for i in range(n_clusters)], sizes)
    return labels, sizes


def _draw_covariates_exposure(spec, rng, m):
    W = rng.standard_normal((m, spec.n_covariates))
    raw = spec.exposure_coef * W[:, 0] + rng.uniform(0.0, spec.exposure_span, m)
    return W, np.clip(raw, 0.0, spec.a_max)


def structural_mean(spec, exposure, covariates):
    """Outcome mean given exposure and covariates (mean-zero terms dropped)."""
    a = np.asarray(exposure, dtype=np.float64)
    W = np.asarray(covariates, dtype=np.float64)
    coefs = np.asarray(spec.outcome_covariate_coefs)
    return spec.outcome_intercept + spec.outcome_exposure_coef * a + W @ coefs


def _simulate_point(spec):
    rng = np.random.default_rng(derive_seed(spec.seed, "panel"))
    n = spec.n_units
    labels, sizes = _cluster_labels(n, spec.n_clusters)
    W, a = _draw_covariates_exposure(spec, rng, n)
    effects = rng.normal(0.0, spec.cluster_sd, spec.n_clusters)
    noise = rng.normal(0.0, spec.noise_sd, n)
    y = structural_mean(spec, a, W) + np.repeat(effects, sizes) + noise
    cov_names = [f"w{j + 1}" for j in range(spec.n_covariates)]
    width = max(5, len(str(n - 1)))
    data = pd.DataFrame(
        {
            "unit_id": [f"u{i:0{width}d}" for i in range(n)],
            "cluster_id": labels,
            "exposure": a,
            "outcome": y,
        }
    )
    for j, name in enumerate(cov_names):
        data[name] = W[:, j]
    return PanelTable(data=data, covariates=cov_names, stratum=spec.stratum)


def _hazard(spec, w, tv, first_step):
    eta = spec.hazard_intercept + spec.hazard_w * w
    if not first_step:
        eta = eta + spec.hazard_tv * tv
    return expit(eta)


def _tv_prob(spec, w, prev_exposure, prev_tv):
    return expit(
        spec.tv_intercept
        + spec.tv_w * w
        + spec.tv_exposure * prev_exposure
        + spec.tv_prev * prev_tv
    )


def _trajectory_outcome_mean(spec, w, adopted_years, last_tv):
    out = (
        spec.outcome_intercept
        + spec.outcome_w * w
        + spec.outcome_exposure * adopted_years
    )
    if spec.horizon >= 2:
        out = out + spec.outcome_tv * last_tv
    return out


def _simulate_longitudinal(spec):
    rng = np.random.default_rng(derive_seed(spec.seed, "panel"))
    n, T = spec.n_units, spec.horizon
    labels, sizes = _cluster_labels(n, spec.n_clusters)
    w = rng.binomial(1, spec.w_prob, n).astype(np.float64)
    A = np.zeros((n, T))
    L = np.zeros((n, T + 1))
    A[:, 0] = rng.binomial(1, _hazard(spec, w, 0.0, True), n)
    for t in range(2, T + 1):
        L[:, t] = rng.binomial(1, _tv_prob(spec, w, A[:, t - 2], L[:, t - 1]), n)
        fresh = rng.binomial(1, _hazard(spec, w, L[:, t], False), n)
        A[:, t - 1] = np.where(A[:, t - 2] == 1, 1.0, fresh)
    effects = rng.normal(0.0, spec.cluster_sd, spec.n_clusters)
    noise = rng.normal(0.0, spec.noise_sd, n)
    y = (
        _trajectory_outcome_mean(spec, w, A.sum(axis=1), L[:, T])
        + np.repeat(effects, sizes)
        + noise
    )
    width = max(5, len(str(n - 1)))
    data = pd.DataFrame(
        {
            "unit_id": [f"u{i:0{width}d}" for i in range(n)],
            "cluster_id": labels,
            "w": w,
            "outcome": y,
        }
    )
    exposure_cols = [f"a_{t}" for t in range(1, T + 1)]
    for t, col in enumerate(exposure_cols, start=1):
        data[col] = A[:, t - 1]
    tv_covariates = {}
    for t in range(2, T + 1):
        data[f"l_{t}"] = L[:, t]
        tv_covariates[t] = [f"l_{t}"]
    return LongitudinalPanel(
        data=data,
        covariates=["w"],
        exposure_cols=exposure_cols,
        tv_covariates=tv_covariates,
        stratum=spec.stratum,
    )


def simulate(spec):
    """Draw one seed-deterministic dataset from a process spec."""
    if isinstance(spec, DgpSpec):
        return _simulate_point(spec)
    if isinstance(spec, LongitudinalDgpSpec):
        return _simulate_longitudinal(spec)
    raise TypeError(f"unsupported spec type {type(spec).__name__}")


def true_shift_contrast(spec, policy, mc_draws=1_000_000, threads=None):
    """Monte Carlo value of E[Y under shifted exposure] - E[Y].

    Draws (W, A) from the spec's law in fixed-size chunks with seeds
    derived per chunk, evaluates the structural mean at the shifted and
    observed exposures, and averages the pathwise difference (additive
    noise and cluster terms cancel exactly). The result is independent
    of the thread count.
    """
    if not isinstance(spec, DgpSpec):
        raise TypeError("true_shift_contrast needs a cross-sectional DgpSpec")
    mc_draws = int(mc_draws)
    if mc_draws < 2:
        raise ValueError("mc_draws must be at least 2")
    n_chunks = (mc_draws + MC_CHUNK - 1) // MC_CHUNK

    def run_chunk(i):
        m = min(MC_CHUNK, mc_draws - i * MC_CHUNK)
        rng = np.random.default_rng(derive_seed(spec.seed, "truth", i))
        W, a = _draw_covariates_exposure(spec, rng, m)
        shifted = np.asarray(policy.apply(a), dtype=np.float64)
        diff = structural_mean(spec, shifted, W) - structural_mean(spec, a, W)
        return float(diff.sum()), float(np.square(diff).sum()), m

    total = total_sq = 0.0
    count = 0
    for s, sq, m in ordered_thread_map(run_chunk, range(n_chunks), threads):
        total += s
        total_sq += sq
        count += m
    mean = total / count
    var = max(total_sq - count * mean**2, 0.0) / (count - 1)
    return TruthReport(
        true_contrast=float(mean),
        mc_se=float(np.sqrt(var / count)),
        method="monte_carlo",
        draws=count,
    )


def _policy_prefix(policy, prefix_and_draw):
    arr = np.asarray(prefix_and_draw, dtype=np.float64)
    out = policy.apply(arr)
    return tuple(float(v) for v in np.atleast_1d(out))


def _enumerate_regime_mean(spec, policy, path_cap):
    """Exact mean outcome when received adoption follows the policy.

    Walks the decision process forward keeping a probability table over
    (received prefix, current time-varying value). At each year the
    unit draws its natural adoption indicator given the history it
    actually received; the policy maps the received prefix plus that
    draw to the new received prefix. ``policy=None`` is the natural
    regime. Returns (mean, terminal path count) or None when the state
    table exceeds ``path_cap``.
    """
    T = spec.horizon
    total = 0.0
    n_paths = 0
    for w, pw in ((0.0, 1.0 - spec.w_prob), (1.0, spec.w_prob)):
        if pw == 0.0:
            continue
        states = {((), 0.0): 1.0}
        for t in range(1, T + 1):
            expanded = {}
            if t >= 2:
                for (prefix, tv), p in states.items():
                    recv_last = prefix[-1] if prefix else 0.0
                    q = _tv_prob(spec, w, recv_last, tv)
                    for tv_new, ptv in ((1.0, q), (0.0, 1.0 - q)):
                        if ptv == 0.0:
                            continue
                        key = (prefix, tv_new)
                        expanded[key] = expanded.get(key, 0.0) + p * ptv
            else:
                expanded = states
            states = {}
            for (prefix, tv), p in expanded.items():
                recv_last = prefix[-1] if prefix else 0.0
                if recv_last == 1.0:
                    choices = ((1.0, 1.0),)
                else:
                    h = _hazard(spec, w, tv, t == 1)
                    choices = ((1.0, h), (0.0, 1.0 - h))
                for draw, pa in choices:
                    if pa == 0.0:
                        continue
                    combined = prefix + (draw,)
                    new_prefix = (
                        combined if policy is None else _policy_prefix(policy, combined)
                    )
                    key = (new_prefix, tv)
                    states[key] = states.get(key, 0.0) + p * pa
            if len(states) > path_cap:
                return None
        for (prefix, tv), p in states.items():
            total += pw * p * _trajectory_outcome_mean(spec, w, sum(prefix), tv)
            n_paths += 1
    return total, n_paths


def _sample_regime_means(spec, policy, rng, m):
    """Coupled draws of the structural outcome mean under both regimes."""
    T = spec.horizon
    w = (rng.uniform(size=m) < spec.w_prob).astype(np.float64)
    u_tv = rng.uniform(size=(m, T + 1))
    u_a = rng.uniform(size=(m, T + 1))
    nat = np.zeros((m, 0))
    recv = np.zeros((m, 0))
    tv_nat = np.zeros(m)
    tv_recv = np.zeros(m)
    for t in range(1, T + 1):
        if t >= 2:
            tv_nat = (u_tv[:, t] < _tv_prob(spec, w, nat[:, -1], tv_nat)).astype(np.float64)
            tv_recv = (u_tv[:, t] < _tv_prob(spec, w, recv[:, -1], tv_recv)).astype(np.float64)
        nat_last = nat[:, -1] if t >= 2 else np.zeros(m)
        recv_last = recv[:, -1] if t >= 2 else np.zeros(m)
        draw_nat = np.where(
            nat_last == 1.0, 1.0, (u_a[:, t] < _hazard(spec, w, tv_nat, t == 1)).astype(np.float64)
        )
        draw_recv = np.where(
            recv_last == 1.0, 1.0, (u_a[:, t] < _hazard(spec, w, tv_recv, t == 1)).astype(np.float64)
        )
        nat = np.column_stack([nat, draw_nat])
        recv = np.asarray(policy.apply(np.column_stack([recv, draw_recv])), dtype=np.float64)
    mean_recv = _trajectory_outcome_mean(spec, w, recv.sum(axis=1), tv_recv)
    mean_nat = _trajectory_outcome_mean(spec, w, nat.sum(axis=1), tv_nat)
    return mean_recv - mean_nat


def true_longitudinal_contrast(spec, policy, path_cap=4096, mc_draws=200_000, threads=None):
    """Oracle contrast for a trajectory policy on the adoption process.

    Enumerates the decision process exactly when the state table stays
    under ``path_cap``; otherwise falls back to coupled Monte Carlo
    (same uniform draws drive the natural and policy regimes) with a
    reported standard error.
    """
    if not isinstance(spec, LongitudinalDgpSpec):
        raise TypeError("true_longitudinal_contrast needs a LongitudinalDgpSpec")
    exact_policy = _enumerate_regime_mean(spec, policy, path_cap)
    exact_natural = _enumerate_regime_mean(spec, None, path_cap)
    if exact_policy is not None and exact_natural is not None:
        return TruthReport(
            true_contrast=float(exact_policy[0] - exact_natural[0]),
            mc_se=0.0,
            method="exact_enumeration",
            draws=exact_policy[1] + exact_natural[1],
        )

    mc_draws = int(mc_draws)
    if mc_draws < 2:
        raise ValueError("mc_draws must be at least 2")
    n_chunks = (mc_draws + MC_CHUNK_TRAJECTORY - 1) // MC_CHUNK_TRAJECTORY

    def run_chunk(i):
        m = min(MC_CHUNK_TRAJECTORY, mc_draws - i * MC_CHUNK_TRAJECTORY)
        rng = np.random.default_rng(derive_seed(spec.seed, "truth-trajectory", i))
        diff = _sample_regime_means(spec, policy, rng, m)
        return float(diff.sum()), float(np.square(diff).sum()), m

    total = total_sq = 0.0
    count = 0
    for s, sq, m in ordered_thread_map(run_chunk, range(n_chunks), threads):
        total += s
        total_sq += sq
        count += m
    mean = total / count
    var = max(total_sq - count * mean**2, 0.0) / (count - 1)
    return TruthReport(
        true_contrast=float(mean),
        mc_se=float(np.sqrt(var / count)),
        method="monte_carlo",
        draws=count,
    )


def stratum_shaped_spec(stratum, fraction=1.0, seed=0, **overrides):
    """DgpSpec sized like the two analytic strata (409/9 or 2298/39 units/clusters)."""
    shapes = {"EARLY": (409, 9, 5.91), "LATE": (2298, 39, 4.79)}
    if stratum not in shapes:
        raise ValueError(f"stratum must be EARLY or LATE, got {stratum!r}")
    n_units, n_clusters, a_max = shapes[stratum]
    n_units = max(int(round(n_units * fraction)), n_clusters)
    params = {
        "n_units": n_units,
        "n_clusters": n_clusters,
        "a_max": a_max,
        "seed": seed,
        "stratum": stratum,
    }
    params.update(overrides)
    return DgpSpec(**params)

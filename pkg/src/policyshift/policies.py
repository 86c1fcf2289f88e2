"""Exposure shift policies.

Two interventions on law exposure are implemented: a bounded additive
shift of a continuous years-of-exposure variable, and a delay of the
first enactment step in a binary yearly trajectory. Both are plain
deterministic maps; estimators consume them through ``apply``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoundedAdditiveShift",
    "LongitudinalDelayPolicy",
    "SupportReport",
    "check_shift_support",
]


@dataclass(frozen=True)
class BoundedAdditiveShift:
    """Add years of exposure without leaving the observed support.

    Exposures at least ``delta2`` below the cap move up by ``delta2``,
    exposures within ``(delta1, delta2]`` of the cap move up by
    ``delta1``, and exposures within ``delta1`` of the cap stay put.
    Setting ``delta1 = delta2 = 0`` yields the identity map.

    Parameters
    ----------
    delta1 : float
        Small shift applied near the cap. Must satisfy
        0 <= delta1 <= delta2.
    delta2 : float
        Full shift applied away from the cap.
    a_max : float
        Upper bound of the exposure support; shifted values never
        exceed it.
    """

    delta1: float = 1.0
    delta2: float = 2.0
    a_max: float = 4.79

    def __post_init__(self):
        if not 0.0 <= self.delta1 <= self.delta2:
            raise ValueError(
                f"need 0 <= delta1 <= delta2, got delta1={self.delta1}, delta2={self.delta2}"
            )
        if self.a_max <= 0.0:
            raise ValueError(f"a_max must be positive, got {self.a_max}")
        if self.delta2 > self.a_max:
            raise ValueError(
                f"delta2={self.delta2} exceeds a_max={self.a_max}; no exposure could take the full shift"
            )

    def apply(self, a):
        """Map exposures through the three-branch shift.

        Parameters
        ----------
        a : array-like
            Exposure values in [0, a_max]. Values outside the support
            raise ValueError.

        Returns
        -------
        numpy.ndarray
            Shifted exposures, same shape, all within [0, a_max].
        """
        a = np.asarray(a, dtype=np.float64)
        if a.size and (a.min() < 0.0 or a.max() > self.a_max):
            raise ValueError(
                f"exposure outside [0, {self.a_max}]: "
                f"range observed [{a.min()}, {a.max()}]"
            )
        out = np.where(
            a <= self.a_max - self.delta2,
            a + self.delta2,
            np.where(a <= self.a_max - self.delta1, a + self.delta1, a),
        )
        return out

    def is_identity(self):
        return self.delta1 == 0.0 and self.delta2 == 0.0


@dataclass(frozen=True)
class LongitudinalDelayPolicy:
    """Push back the first enactment step of a binary trajectory.

    Trajectories are yearly 0/1 indicators that may switch on once and
    never switch off. At the first step t where the indicator turns on,
    the policy zeroes that step and the following ``delay_steps - 1``
    steps (truncated at the horizon). Trajectories that never turn on
    are left alone, and ``delay_steps=0`` is the identity map.

    The pre-period value is fixed at 0: a trajectory that starts at 1
    is treated as switching on at its first step.
    """

    delay_steps: int = 2

    def __post_init__(self):
        if self.delay_steps < 0:
            raise ValueError(f"delay_steps must be >= 0, got {self.delay_steps}")

    def apply(self, trajectories):
        """Delay every trajectory in an (n, T) or (T,) array."""
        traj = np.asarray(trajectories, dtype=np.float64)
        single = traj.ndim == 1
        if single:
            traj = traj.reshape(1, -1)
        if traj.ndim != 2 or traj.shape[1] < 1:
            raise ValueError(f"expected (n, T) trajectories, got shape {traj.shape}")
        _check_binary_monotone(traj)

        n, horizon = traj.shape
        has_on = traj[:, -1] > 0
        first_on = np.argmax(traj > 0, axis=1)
        cols = np.arange(horizon)
        suppress = (
            has_on[:, None]
            & (cols[None, :] >= first_on[:, None])
            & (cols[None, :] < first_on[:, None] + self.delay_steps)
        )
        out = np.where(suppress, 0.0, traj)
        return out[0] if single else out

    def value_at(self, prefix):
        """Delayed value of the last coordinate given a trajectory prefix.

        Matches ``apply`` coordinate-wise: for any full trajectory a,
        ``value_at(a[: t + 1]) == apply(a)[t]``.
        """
        prefix = np.asarray(prefix, dtype=np.float64)
        if prefix.ndim != 1 or prefix.size < 1:
            raise ValueError("prefix must be a nonempty 1-D array")
        _check_binary_monotone(prefix.reshape(1, -1))
        t = prefix.size - 1
        on = np.nonzero(prefix > 0)[0]
        if on.size == 0:
            return 0.0
        first = int(on[0])
        if first <= t < first + self.delay_steps:
            return 0.0
        return float(prefix[t])


def _check_binary_monotone(traj):
    vals = np.unique(traj)
    if not np.isin(vals, (0.0, 1.0)).all():
        raise ValueError(f"trajectories must be binary 0/1, found values {vals}")
    if np.any(np.diff(traj, axis=1) < 0):
        raise ValueError("trajectories must be non-decreasing (laws do not un-enact)")


@dataclass(frozen=True)
class SupportReport:
    """Where the shifted exposures land relative to the observed ones."""

    within_observed_range: bool
    observed_max: float
    shifted_max: float
    quantile: float
    quantile_value: float
    fraction_beyond_quantile: float
    warn: bool
    notes: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "within_observed_range": self.within_observed_range,
            "observed_max": self.observed_max,
            "shifted_max": self.shifted_max,
            "quantile": self.quantile,
            "quantile_value": self.quantile_value,
            "fraction_beyond_quantile": self.fraction_beyond_quantile,
            "warn": self.warn,
            "notes": list(self.notes),
        }


def check_shift_support(exposure, policy, quantile=0.99):
    """Compare shifted exposure values with the observed support.

    Parameters
    ----------
    exposure : array-like
        Observed exposure values.
    policy : object with ``apply``
        Shift policy to probe.
    quantile : float
        Reference quantile of the observed exposure.

    Returns
    -------
    SupportReport
    """
    a = np.asarray(exposure, dtype=np.float64).ravel()
    if a.size == 0:
        raise ValueError("exposure is empty")
    if not 0.0 < quantile < 1.0:
        raise ValueError(f"quantile must be in (0, 1), got {quantile}")
    shifted = np.asarray(policy.apply(a), dtype=np.float64)
    observed_max = float(a.max())
    shifted_max = float(shifted.max())
    q_value = float(np.quantile(a, quantile))
    beyond = float(np.mean(shifted > q_value))
    within = shifted_max <= observed_max + 1e-12
    notes = []
    if not within:
        notes.append(
            f"shifted exposures reach {shifted_max:.4f}, past the observed max {observed_max:.4f}"
        )
    return SupportReport(
        within_observed_range=within,
        observed_max=observed_max,
        shifted_max=shifted_max,
        quantile=quantile,
        quantile_value=q_value,
        fraction_beyond_quantile=beyond,
        warn=not within,
        notes=tuple(notes),
    )

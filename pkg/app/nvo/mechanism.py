"""Truncated per-instance Laplace mechanism over K bins.

Each instance's noise is Laplace(mu=representative, b=scale) restricted to
[0, 1] and renormalized. Bin masses are CDF differences written branch-wise
so that bins far from mu keep full relative precision when b << 1/K.
"""
import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.stats import laplace

from .errors import ConfigError, DimensionError
from .preprocess import BinnedDataset, Distribution, bin_edges, representatives

log = logging.getLogger(__name__)

__all__ = [
    "Distribution",
    "MassMatrix",
    "VariancePlan",
    "action_set",
    "baseline_plan",
    "build_mass_matrix",
    "mass_row",
    "mass_table",
    "mixture_distribution",
    "sample_output",
    "truncated_bin_mass",
]


class VariancePlan(BaseModel):
    multipliers: list[float]
    scales: list[float]
    assignment: list[int] = []
    epsilon: float
    sensitivity: float = 1.0

    model_config = ConfigDict(frozen=True)

    @field_validator("scales")
    @classmethod
    def _check_scales(cls, scales: list[float]) -> list[float]:
        if not scales:
            raise ConfigError("action set is empty")
        if any(not (np.isfinite(b) and b > 0) for b in scales):
            raise ConfigError(f"every scale must be finite and > 0, got {scales}")
        return scales

    @field_validator("assignment")
    @classmethod
    def _check_assignment(cls, assignment: list[int], info) -> list[int]:
        scales = info.data.get("scales")
        if scales is not None and any(a < 0 or a >= len(scales) for a in assignment):
            raise DimensionError(f"assignment indices must lie in [0, {len(scales) - 1}]")
        return assignment

    @property
    def b_min(self) -> float:
        return min(self.scales)

    def scale_array(self) -> np.ndarray:
        return np.asarray(self.scales, dtype=float)

    def assignment_array(self) -> np.ndarray:
        return np.asarray(self.assignment, dtype=np.intp)

    def assigned_scales(self) -> np.ndarray:
        return self.scale_array()[self.assignment_array()]

    def with_assignment(self, assignment: Sequence[int]) -> "VariancePlan":
        return VariancePlan(
            multipliers=self.multipliers,
            scales=self.scales,
            assignment=[int(a) for a in assignment],
            epsilon=self.epsilon,
            sensitivity=self.sensitivity,
        )


class MassMatrix(BaseModel):
    rows: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("rows", mode="before")
    @classmethod
    def _check_rows(cls, rows) -> np.ndarray:
        rows = np.asarray(rows, dtype=float)
        if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
            raise DimensionError(f"mass matrix must be a non-empty 2-D array, got shape {rows.shape}")
        if np.any(rows < 0):
            raise ConfigError("mass matrix entries must be nonnegative")
        sums = rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise ConfigError(f"row {bad} sums to {sums[bad]!r}, expected 1")
        return rows

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    @property
    def k(self) -> int:
        return int(self.rows.shape[1])

    @property
    def column_sums(self) -> np.ndarray:
        return self.rows.sum(axis=0)


def _interval_mass(mu, b, lo, hi) -> np.ndarray:
    """F(hi) - F(lo) for Laplace(mu, b), broadcasting over all arguments."""
    mu, b, lo, hi = np.broadcast_arrays(
        np.asarray(mu, dtype=float),
        np.asarray(b, dtype=float),
        np.asarray(lo, dtype=float),
        np.asarray(hi, dtype=float),
    )
    width = -np.expm1(-(hi - lo) / b)
    left = 0.5 * np.exp(np.minimum(hi - mu, 0.0) / b) * width
    right = 0.5 * np.exp(-np.maximum(lo - mu, 0.0) / b) * width
    straddle = -0.5 * np.expm1(np.minimum(lo - mu, 0.0) / b) - 0.5 * np.expm1(-np.maximum(hi - mu, 0.0) / b)
    return np.where(hi <= mu, left, np.where(lo >= mu, right, straddle))


def truncated_bin_mass(mu: float, b: float, bin_lo: float, bin_hi: float) -> float:
    if not b > 0:
        raise ConfigError(f"scale must be > 0, got {b}")
    if not 0.0 <= bin_lo < bin_hi <= 1.0:
        raise ConfigError(f"bin [{bin_lo}, {bin_hi}] must satisfy 0 <= lo < hi <= 1")
    return float(_interval_mass(mu, b, bin_lo, bin_hi) / _interval_mass(mu, b, 0.0, 1.0))


def _rows(mus, scales, k: int) -> np.ndarray:
    edges = bin_edges(k)
    mus = np.asarray(mus, dtype=float)[..., None]
    scales = np.asarray(scales, dtype=float)[..., None]
    masses = _interval_mass(mus, scales, edges[:-1], edges[1:])
    return masses / _interval_mass(mus, scales, 0.0, 1.0)


def mass_row(mu: float, b: float, k: int) -> np.ndarray:
    if not b > 0:
        raise ConfigError(f"scale must be > 0, got {b}")
    if k < 1:
        raise ConfigError(f"K must be positive, got {k}")
    return _rows(mu, b, k)


def mass_table(scales: Sequence[float], k: int) -> np.ndarray:
    """Rows for every (scale, bin representative) pair, shape (|scales|, K, K)."""
    scales = np.asarray(scales, dtype=float)
    if scales.size == 0 or np.any(~(scales > 0)):
        raise ConfigError(f"every scale must be > 0, got {scales.tolist()}")
    return _rows(representatives(k)[None, :], scales[:, None], k)


def build_mass_matrix(binned: BinnedDataset, plan: VariancePlan) -> MassMatrix:
    if len(plan.assignment) != binned.n:
        raise DimensionError(
            f"plan assigns {len(plan.assignment)} instances, dataset has {binned.n}"
        )
    table = mass_table(plan.scales, binned.k)
    return MassMatrix(rows=table[plan.assignment_array(), binned.bin_array()])


def mixture_distribution(mm: MassMatrix) -> Distribution:
    return Distribution(masses=mm.column_sums / mm.n)


def action_set(
    epsilon: float,
    sensitivity: float = 1.0,
    multipliers: Sequence[float] = (3.0, 2.0, 1.0, 0.33, 0.2),
) -> VariancePlan:
    """The strategy set {m * sensitivity / epsilon}, with nothing assigned yet."""
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    if not sensitivity > 0:
        raise ConfigError(f"sensitivity must be > 0, got {sensitivity}")
    if not multipliers or any(not m > 0 for m in multipliers):
        raise ConfigError(f"multipliers must be non-empty and all > 0, got {list(multipliers)}")
    return VariancePlan(
        multipliers=[float(m) for m in multipliers],
        scales=[float(m) * sensitivity / epsilon for m in multipliers],
        epsilon=epsilon,
        sensitivity=sensitivity,
    )


def baseline_plan(binned: BinnedDataset, epsilon: float, sensitivity: float = 1.0) -> VariancePlan:
    plan = action_set(epsilon, sensitivity, multipliers=(1.0,))
    return plan.with_assignment([0] * binned.n)


def sample_output(binned: BinnedDataset, plan: VariancePlan, n: int, seed: int) -> np.ndarray:
    """Draw n privatized answers of the random sampling query.

    RNG order: all n owner indices first, then all n uniforms. Each uniform is
    mapped through the owner's Laplace inverse CDF restricted to [0, 1].
    """
    if n < 1:
        raise ConfigError(f"number of samples must be >= 1, got {n}")
    if len(plan.assignment) != binned.n:
        raise DimensionError(
            f"plan assigns {len(plan.assignment)} instances, dataset has {binned.n}"
        )
    rng = np.random.default_rng(seed)
    owners = rng.integers(0, binned.n, size=n)
    u = rng.random(n)

    mu = np.asarray(binned.representatives)[binned.bin_array()[owners]]
    b = plan.assigned_scales()[owners]
    lo = laplace.cdf(0.0, loc=mu, scale=b)
    hi = laplace.cdf(1.0, loc=mu, scale=b)
    draws = laplace.ppf(lo + u * (hi - lo), loc=mu, scale=b)
    return np.clip(draws, 0.0, 1.0)

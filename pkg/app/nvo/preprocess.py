"""Normalization and K-bin categorization of a numeric column.

The raw values are min-max normalized over the data range widened on both
sides by the p-percentile radius of the target Laplace mechanism, then
assigned to K equal-width bins on [0, 1].
"""
import logging
import math
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import ConfigError, DatasetError, DimensionError

log = logging.getLogger(__name__)


class RawDataset(BaseModel):
    values: list[float]
    label: str = "value"

    model_config = ConfigDict(frozen=True)

    @field_validator("values")
    @classmethod
    def _check_values(cls, values: list[float]) -> list[float]:
        if len(values) == 0:
            raise DatasetError("dataset is empty")
        for index, value in enumerate(values):
            if not math.isfinite(value):
                raise DatasetError(f"non-finite value {value!r} at index {index}")
        if len(values) < 2:
            raise DatasetError("dataset needs at least 2 instances for per-instance accounting")
        return values


class NormalizationParams(BaseModel):
    epsilon_target: float
    percentile: float
    sensitivity: float
    margin: float
    d_min: float
    d_max: float

    model_config = ConfigDict(frozen=True)

    @property
    def lower(self) -> float:
        return self.d_min - self.margin

    @property
    def upper(self) -> float:
        return self.d_max + self.margin

    def normalize(self, values: Sequence[float] | np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, values: Sequence[float] | np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(values, dtype=float) * (self.upper - self.lower)


class Distribution(BaseModel):
    masses: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("masses", mode="before")
    @classmethod
    def _check_masses(cls, masses) -> np.ndarray:
        masses = np.asarray(masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise DimensionError(f"distribution must be a non-empty vector, got shape {masses.shape}")
        if np.any(masses < 0):
            raise ConfigError("distribution masses must be nonnegative")
        if abs(masses.sum() - 1.0) > 1e-9:
            raise ConfigError(f"distribution masses sum to {masses.sum()!r}, expected 1")
        return masses

    @property
    def k(self) -> int:
        return int(self.masses.size)


class BinnedDataset(BaseModel):
    k: int
    bin_of: list[int]
    representatives: list[float]
    counts: list[int]
    normalization: NormalizationParams | None = None
    label: str = "value"

    model_config = ConfigDict(frozen=True)

    @property
    def n(self) -> int:
        return len(self.bin_of)

    def bin_array(self) -> np.ndarray:
        return np.asarray(self.bin_of, dtype=np.intp)


def bin_edges(k: int) -> np.ndarray:
    return np.arange(k + 1, dtype=float) / k


def representatives(k: int) -> np.ndarray:
    return (2 * np.arange(k, dtype=float) + 1) / (2 * k)


def percentile_margin(epsilon: float, percentile: float, sensitivity: float) -> float:
    """Radius of the central `percentile` mass of Lap(sensitivity / epsilon)."""
    return (sensitivity / epsilon) * math.log(1.0 / (2.0 - 2.0 * percentile))


def compute_normalization(
    data: RawDataset,
    epsilon: float,
    percentile: float = 0.9,
    sensitivity: float = 1.0,
) -> NormalizationParams:
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    if not 0.5 < percentile < 1.0:
        raise ConfigError(f"percentile must lie in (0.5, 1), got {percentile}")
    if not sensitivity > 0:
        raise ConfigError(f"sensitivity must be > 0, got {sensitivity}")

    values = np.asarray(data.values, dtype=float)
    margin = percentile_margin(epsilon, percentile, sensitivity)
    params = NormalizationParams(
        epsilon_target=epsilon,
        percentile=percentile,
        sensitivity=sensitivity,
        margin=margin,
        d_min=float(values.min()),
        d_max=float(values.max()),
    )
    log.info(
        f"Normalizing '{data.label}' over [{params.lower:.6g}, {params.upper:.6g}] "
        f"(margin {margin:.6g})"
    )
    return params


def normalize_and_bin(data: RawDataset, params: NormalizationParams, k: int = 101) -> BinnedDataset:
    if k < 2:
        raise ConfigError(f"K must be >= 2, got {k}")
    values = np.asarray(data.values, dtype=float)
    if float(values.min()) != params.d_min or float(values.max()) != params.d_max:
        raise DatasetError(
            f"normalization extremes [{params.d_min}, {params.d_max}] do not match "
            f"the data extremes [{values.min()}, {values.max()}]"
        )

    normalized = params.normalize(values)
    # half-open bins [j/K, (j+1)/K), the last one closed at 1
    bin_of = np.minimum(np.floor(normalized * k).astype(np.intp), k - 1)
    counts = np.bincount(bin_of, minlength=k)
    log.info(f"Binned {len(values)} instances into {k} bins ({np.count_nonzero(counts)} occupied)")
    return BinnedDataset(
        k=k,
        bin_of=bin_of.tolist(),
        representatives=representatives(k).tolist(),
        counts=counts.tolist(),
        normalization=params,
        label=data.label,
    )


def from_bins(bin_of: Sequence[int], k: int, label: str = "value") -> BinnedDataset:
    """Build a histogram directly from bin indices (no source values)."""
    if k < 2:
        raise ConfigError(f"K must be >= 2, got {k}")
    bins = np.asarray(bin_of, dtype=np.intp)
    if bins.size < 2:
        raise DatasetError("dataset needs at least 2 instances for per-instance accounting")
    if bins.min() < 0 or bins.max() >= k:
        raise DimensionError(f"bin indices must lie in [0, {k - 1}]")
    return BinnedDataset(
        k=k,
        bin_of=bins.tolist(),
        representatives=representatives(k).tolist(),
        counts=np.bincount(bins, minlength=k).tolist(),
        label=label,
    )


def empirical_distribution(binned: BinnedDataset) -> Distribution:
    counts = np.asarray(binned.counts, dtype=float)
    return Distribution(masses=counts / counts.sum())

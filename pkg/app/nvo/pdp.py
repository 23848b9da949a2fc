"""Per-instance privacy loss of the truncated Laplace mixture.

For instance i, the query output with i present is the mixture of all n rows
(weighted 1/n) and without i it is the mixture of the other n-1 rows
(weighted 1/(n-1)). A ratio of sums over any bin subset is bounded by the
largest per-bin ratio, so the supremum over output events is attained on a
single bin and every loss here is a max over bins.
"""
import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict

from .config import Mode
from .errors import ConfigError, DatasetError, DimensionError
from .mechanism import MassMatrix

log = logging.getLogger(__name__)

Variant = Literal["main", "appendix"]


class InstanceRecord(BaseModel):
    index: int
    bin: int
    scale: float
    epsilon_exact: float
    epsilon_conservative: float
    satisfied: bool


class PrivacyReport(BaseModel):
    epsilon_target: float
    mode: Mode
    n: int
    per_instance: list[InstanceRecord]
    p_e: int
    p_u: float
    payoff: float
    b_min: float
    bound_main: float
    bound_appendix: float
    bound_cleared: bool
    v_min_value: float
    metrics: dict[str, float]

    model_config = ConfigDict(frozen=True)

    @property
    def all_satisfied(self) -> bool:
        return self.p_e == self.n


def loss_from_sums(rows: np.ndarray, column_sums: np.ndarray, n: int, mode: Mode = "exact") -> np.ndarray:
    """Privacy loss of each row given the column sums of the whole n-instance mixture.

    `rows` may hold one row per instance or one row per (scale, bin) group;
    the loss only depends on the row and the column sums.
    """
    if n < 2:
        raise DatasetError(f"per-instance loss needs at least 2 instances, got {n}")
    rows = np.atleast_2d(rows)
    others = column_sums[None, :] - rows
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if mode == "exact":
            log_ratio = np.abs(np.log((column_sums[None, :] / n) / (others / (n - 1))))
        elif mode == "conservative":
            log_ratio = np.log(column_sums[None, :] / others)
        else:
            raise ConfigError(f"unknown accounting mode {mode!r}")
    # mass only instance i puts there is infinitely distinguishing; 0/0 bins carry no loss
    log_ratio = np.where(others > 0, log_ratio, np.where(rows > 0, np.inf, 0.0))
    return log_ratio.max(axis=1)


def epsilons(mm: MassMatrix, mode: Mode = "exact") -> np.ndarray:
    return loss_from_sums(mm.rows, mm.column_sums, mm.n, mode)


def _check_index(mm: MassMatrix, i: int) -> None:
    if not 0 <= i < mm.n:
        raise DimensionError(f"instance index {i} out of range for {mm.n} instances")


def epsilon_exact(mm: MassMatrix, i: int) -> float:
    _check_index(mm, i)
    return float(loss_from_sums(mm.rows[i], mm.column_sums, mm.n, "exact")[0])


def epsilon_conservative(mm: MassMatrix, i: int) -> float:
    _check_index(mm, i)
    return float(loss_from_sums(mm.rows[i], mm.column_sums, mm.n, "conservative")[0])


def privacy_payoff(mm: MassMatrix, epsilon: float, mode: Mode = "exact") -> tuple[int, list[bool]]:
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    flags = epsilons(mm, mode) <= epsilon
    return int(flags.sum()), flags.tolist()


def theorem_bmin(epsilon: float, n: int, variant: Variant = "main", k: int | None = None) -> float:
    """Smallest scale for which every NE of the game satisfies epsilon-pDP.

    `main`: 1 / ln(1 + (n-1)(e^eps - 1)).
    `appendix`: the same with (n-1)(e^eps - 1) divided by K, the form that
    applies to bin masses.
    """
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    if n < 2:
        raise DatasetError(f"the bound needs at least 2 instances, got {n}")
    growth = (n - 1) * math.expm1(epsilon)
    if variant == "appendix":
        if k is None or k < 1:
            raise ConfigError("the appendix bound needs a positive K")
        growth /= k
    elif variant != "main":
        raise ConfigError(f"unknown bound variant {variant!r}")
    return 1.0 / math.log1p(growth)


def v_min_density(b_min: float) -> float:
    """Closed form 1 / (exp(1/b_min) - 1) of the density floor used by the bound.

    The truncated density at x=1 with mu=0 is this value divided by b_min.
    """
    if not b_min > 0:
        raise ConfigError(f"b_min must be > 0, got {b_min}")
    exponent = 1.0 / b_min
    if exponent > 700.0:
        return math.exp(-exponent)
    return 1.0 / math.expm1(exponent)

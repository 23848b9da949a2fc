"""The noise-variance game: common payoff and best-response dynamics.

Players are data instances, strategies are Laplace scales from the action
set, and every player receives the same payoff P = P_E + P_U. A unilateral
move changes P directly, so P is an exact potential and cyclic best
responses climb it until no instance wants to move.
"""
import itertools
import logging
import math
from typing import Literal, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel
from tqdm import tqdm

from .config import DEFAULT_JACCARD_THRESHOLD, BrdConfig, Mode
from .errors import ConfigError, DatasetError, DimensionError
from .mechanism import VariancePlan, build_mass_matrix, mass_table, mixture_distribution
from .metrics import compare, kl_divergence
from .pdp import (
    InstanceRecord,
    PrivacyReport,
    epsilons,
    loss_from_sums,
    privacy_payoff,
    theorem_bmin,
    v_min_density,
)
from .preprocess import BinnedDataset, Distribution, empirical_distribution

log = logging.getLogger(__name__)

Outcome = Literal["converged", "max_passes", "stalled", "generations"]

MAX_ENUMERATION = 1_000_000


class PayoffBreakdown(NamedTuple):
    payoff: float
    p_e: int
    p_u: float


class TraceStep(BaseModel):
    step: int
    instance: int
    scale_index: int
    payoff: float
    p_e: int
    p_u: float


class SolverTrace(BaseModel):
    method: Literal["brd", "ga"]
    steps: list[TraceStep] = []
    outcome: Outcome = "converged"
    iterations: int = 0

    def payoffs(self) -> list[float]:
        return [s.payoff for s in self.steps]

    def record(self, step: int, instance: int, scale_index: int, value: PayoffBreakdown) -> None:
        self.steps.append(
            TraceStep(
                step=step,
                instance=instance,
                scale_index=scale_index,
                payoff=value.payoff,
                p_e=value.p_e,
                p_u=value.p_u,
            )
        )


def _utility(original: np.ndarray, randomized: np.ndarray, k: int) -> float:
    kl = kl_divergence(original, randomized)
    if math.isinf(kl):
        return 0.0
    return min(max(1.0 - kl / math.log(k), 0.0), 1.0)


def utility_payoff(original: Distribution, randomized: Distribution, k: int) -> float:
    """1 - KL(original || randomized) / ln K, clamped to [0, 1]."""
    if k < 2:
        raise ConfigError(f"K must be >= 2, got {k}")
    if original.k != k or randomized.k != k:
        raise DimensionError(f"expected {k} bins, got {original.k} and {randomized.k}")
    value = _utility(original.masses, randomized.masses, k)
    if value == 0.0 and math.isinf(kl_divergence(original, randomized)):
        log.warning("Randomized distribution misses original support: KL is infinite, utility payoff 0")
    return value


def total_payoff(
    binned: BinnedDataset, plan: VariancePlan, epsilon: float, mode: Mode = "exact"
) -> PayoffBreakdown:
    mm = build_mass_matrix(binned, plan)
    p_e, _ = privacy_payoff(mm, epsilon, mode)
    p_u = utility_payoff(empirical_distribution(binned), mixture_distribution(mm), binned.k)
    return PayoffBreakdown(payoff=p_e + p_u, p_e=p_e, p_u=p_u)


class PayoffModel:
    """Payoff evaluator for one dataset, action set, target epsilon and mode.

    A profile is summarized by counts[s, k], the number of instances in bin k
    playing scale s. Instances sharing (s, k) have identical rows and
    identical losses, so privacy is checked once per occupied group. Column
    sums are rebuilt from the integer counts on every call, which keeps the
    payoff a pure function of the profile.
    """

    def __init__(self, binned: BinnedDataset, actions: VariancePlan, epsilon: float, mode: Mode = "exact"):
        if not epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {epsilon}")
        if binned.n < 2:
            raise DatasetError(f"the game needs at least 2 instances, got {binned.n}")
        self.n = binned.n
        self.k = binned.k
        self.epsilon = epsilon
        self.mode = mode
        self.scales = actions.scale_array()
        self.bins = binned.bin_array()
        self.table = mass_table(actions.scales, binned.k)
        self.original = empirical_distribution(binned).masses

    @property
    def options(self) -> int:
        return int(self.scales.size)

    def counts(self, assignment: Sequence[int] | np.ndarray) -> np.ndarray:
        counts = np.zeros((self.options, self.k), dtype=np.int64)
        np.add.at(counts, (np.asarray(assignment, dtype=np.intp), self.bins), 1)
        return counts

    def evaluate_counts(self, counts: np.ndarray) -> PayoffBreakdown:
        column_sums = np.tensordot(counts.astype(float), self.table, axes=([0, 1], [0, 1]))
        groups = np.nonzero(counts)
        loss = loss_from_sums(self.table[groups], column_sums, self.n, self.mode)
        p_e = int(counts[groups][loss <= self.epsilon].sum())
        p_u = _utility(self.original, column_sums / self.n, self.k)
        return PayoffBreakdown(payoff=p_e + p_u, p_e=p_e, p_u=p_u)

    def evaluate(self, assignment: Sequence[int] | np.ndarray) -> PayoffBreakdown:
        return self.evaluate_counts(self.counts(assignment))

    def evaluate_rows(self, assignment: Sequence[int] | np.ndarray) -> PayoffBreakdown:
        """Per-instance path: one row per instance, no grouping."""
        rows = self.table[np.asarray(assignment, dtype=np.intp), self.bins]
        column_sums = rows.sum(axis=0)
        p_e = int(np.count_nonzero(loss_from_sums(rows, column_sums, self.n, self.mode) <= self.epsilon))
        p_u = _utility(self.original, column_sums / self.n, self.k)
        return PayoffBreakdown(payoff=p_e + p_u, p_e=p_e, p_u=p_u)


def initial_assignment(scales: np.ndarray, n: int, cfg: BrdConfig) -> np.ndarray:
    if cfg.init == "random":
        return np.random.default_rng(cfg.seed).integers(0, scales.size, size=n)
    return np.full(n, int(np.argmax(scales)), dtype=np.intp)


def _best_response(
    model: PayoffModel,
    assignment: np.ndarray,
    counts: np.ndarray,
    i: int,
    order: np.ndarray,
    grouped: bool,
) -> tuple[int, PayoffBreakdown] | None:
    """Best alternative scale for instance i, or None when it has no alternative."""
    current = int(assignment[i])
    bin_i = int(model.bins[i])
    best: tuple[int, PayoffBreakdown] | None = None
    for s in order:
        s = int(s)
        if s == current:
            continue
        if grouped:
            counts[current, bin_i] -= 1
            counts[s, bin_i] += 1
            value = model.evaluate_counts(counts)
            counts[s, bin_i] -= 1
            counts[current, bin_i] += 1
        else:
            assignment[i] = s
            value = model.evaluate_rows(assignment)
            assignment[i] = current
        # order runs from the largest scale down, so strict > keeps the largest tie
        if best is None or value.payoff > best[1].payoff:
            best = (s, value)
    return best


def brd_solve(
    binned: BinnedDataset, actions: VariancePlan, epsilon: float, cfg: BrdConfig = BrdConfig()
) -> tuple[VariancePlan, SolverTrace]:
    model = PayoffModel(binned, actions, epsilon, cfg.mode)
    order = np.argsort(-model.scales, kind="stable")
    assignment = initial_assignment(model.scales, model.n, cfg)
    counts = model.counts(assignment)
    current = model.evaluate_counts(counts) if cfg.grouped else model.evaluate_rows(assignment)

    trace = SolverTrace(method="brd")
    trace.record(0, -1, -1, current)
    log.info(
        f"BRD start: {model.n} instances, {model.options} scales, eps={epsilon}, "
        f"P={current.payoff:.6f} (P_E={current.p_e})"
    )

    step = 0
    trace.outcome = "max_passes"
    for sweep in range(1, cfg.max_passes + 1):
        changes = 0
        for i in tqdm(range(model.n), desc=f"BRD pass {sweep}", disable=not cfg.progress):
            response = _best_response(model, assignment, counts, i, order, cfg.grouped)
            if response is None:
                continue
            s, value = response
            if value.payoff > current.payoff + cfg.payoff_tolerance:
                counts[assignment[i], model.bins[i]] -= 1
                counts[s, model.bins[i]] += 1
                assignment[i] = s
                current = value
                changes += 1
                step += 1
                trace.record(step, i, s, current)
                log.debug(f"instance {i} -> scale {model.scales[s]:.6g}: P={current.payoff:.9f}")
        trace.iterations = sweep
        log.info(f"BRD pass {sweep}: {changes} changes, P={current.payoff:.6f} (P_E={current.p_e})")
        if changes == 0:
            trace.outcome = "converged"
            break

    if trace.outcome == "max_passes":
        log.warning(f"BRD hit max_passes={cfg.max_passes} with assignments still changing")
    if current.p_e < model.n:
        log.warning(f"BRD finished with {model.n - current.p_e} of {model.n} instances above eps={epsilon}")
    return actions.with_assignment(assignment.tolist()), trace


def enumerate_profiles(model: PayoffModel) -> list[tuple[tuple[int, ...], PayoffBreakdown]]:
    """Every strategy profile with its payoff; only for desk-scale games."""
    total = model.options ** model.n
    if total > MAX_ENUMERATION:
        raise ConfigError(f"{total} profiles exceed the enumeration limit of {MAX_ENUMERATION}")
    return [
        (profile, model.evaluate(profile))
        for profile in itertools.product(range(model.options), repeat=model.n)
    ]


def is_nash(model: PayoffModel, assignment: Sequence[int], tolerance: float = 0.0) -> bool:
    """True when no single instance can raise the payoff by more than `tolerance`."""
    profile = np.asarray(assignment, dtype=np.intp).copy()
    base = model.evaluate(profile).payoff
    for i in range(model.n):
        current = profile[i]
        for s in range(model.options):
            if s == current:
                continue
            profile[i] = s
            better = model.evaluate(profile).payoff > base + tolerance
            profile[i] = current
            if better:
                return False
    return True


def evaluate_plan(
    binned: BinnedDataset,
    plan: VariancePlan,
    epsilon: float,
    mode: Mode = "exact",
    jaccard_threshold: float = DEFAULT_JACCARD_THRESHOLD,
) -> PrivacyReport:
    """Full privacy and utility report of a plan against its histogram."""
    mm = build_mass_matrix(binned, plan)
    exact = epsilons(mm, "exact")
    conservative = epsilons(mm, "conservative")
    chosen = exact if mode == "exact" else conservative
    flags = chosen <= epsilon
    scales = plan.assigned_scales()

    original = empirical_distribution(binned)
    mixture = mixture_distribution(mm)
    p_e = int(flags.sum())
    p_u = utility_payoff(original, mixture, binned.k)
    bound_appendix = theorem_bmin(epsilon, binned.n, "appendix", binned.k)

    records = [
        InstanceRecord(
            index=i,
            bin=binned.bin_of[i],
            scale=float(scales[i]),
            epsilon_exact=float(exact[i]),
            epsilon_conservative=float(conservative[i]),
            satisfied=bool(flags[i]),
        )
        for i in range(binned.n)
    ]
    return PrivacyReport(
        epsilon_target=epsilon,
        mode=mode,
        n=binned.n,
        per_instance=records,
        p_e=p_e,
        p_u=p_u,
        payoff=p_e + p_u,
        b_min=plan.b_min,
        bound_main=theorem_bmin(epsilon, binned.n, "main"),
        bound_appendix=bound_appendix,
        bound_cleared=plan.b_min >= bound_appendix,
        v_min_value=v_min_density(plan.b_min),
        metrics=compare(original, mixture, binned.representatives, jaccard_threshold),
    )

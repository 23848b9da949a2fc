"""Approximated enumeration: a steady-state genetic algorithm over scale assignments.

A chromosome holds one action-set index per instance and its fitness is the
game payoff. Each generation keeps the top `elites` chromosomes, breeds the
rest of the population from the top `mating_parents`, and tracks the best
chromosome ever seen.

RNG stream order per generation: parent selection draws nothing (rank
truncation), then the crossover cuts of every offspring in order, then one
block of per-gene mutation draws followed by one block of replacement draws.
"""
import functools
import logging
import multiprocessing

import numpy as np
from tqdm import tqdm

from .config import GaConfig
from .game import PayoffBreakdown, PayoffModel, SolverTrace
from .mechanism import VariancePlan
from .preprocess import BinnedDataset

log = logging.getLogger(__name__)


def _fitness(model: PayoffModel, chromosome: np.ndarray) -> PayoffBreakdown:
    return model.evaluate(chromosome)


def crossover(first: np.ndarray, second: np.ndarray, cuts: np.ndarray) -> np.ndarray:
    """Alternate segments of the two parents, switching at every cut position."""
    segment = np.searchsorted(cuts, np.arange(first.size), side="right")
    return np.where(segment % 2 == 0, first, second)


def next_generation(
    chromosomes: np.ndarray,
    fitness: np.ndarray,
    cfg: GaConfig,
    rng: np.random.Generator,
    options: int,
) -> np.ndarray:
    size, genes = chromosomes.shape
    ranked = np.argsort(-fitness, kind="stable")
    elites = chromosomes[np.sort(ranked[: cfg.elites])]
    parents = chromosomes[ranked[: cfg.mating_parents]]
    offspring_count = size - elites.shape[0]
    if offspring_count == 0:
        return elites.copy()

    points = min(cfg.crossover_points, genes - 1)
    offspring = np.empty((offspring_count, genes), dtype=chromosomes.dtype)
    for j in range(offspring_count):
        first = parents[j % parents.shape[0]]
        second = parents[(j + 1) % parents.shape[0]]
        cuts = np.sort(rng.choice(np.arange(1, genes), size=points, replace=False)) if points > 0 else np.empty(0)
        offspring[j] = crossover(first, second, cuts)

    mutate = rng.random((offspring_count, genes)) < cfg.mutation_rate
    if options > 1:
        # shift by 1..options-1 lands uniformly on a different option
        shifts = rng.integers(1, options, size=(offspring_count, genes))
        offspring = np.where(mutate, (offspring + shifts) % options, offspring)
    return np.vstack([elites, offspring])


class _Evaluator:
    """Fitness with a per-run cache, optionally fanned out over a process pool."""

    def __init__(self, model: PayoffModel, pool=None):
        self.model = model
        self.pool = pool
        self.cache: dict[bytes, PayoffBreakdown] = {}

    def __call__(self, chromosomes: np.ndarray) -> list[PayoffBreakdown]:
        keys = [row.tobytes() for row in chromosomes]
        missing = {}
        for key, row in zip(keys, chromosomes):
            if key not in self.cache and key not in missing:
                missing[key] = row
        if missing:
            rows = list(missing.values())
            if self.pool is not None:
                values = self.pool.map(functools.partial(_fitness, self.model), rows)
            else:
                values = [_fitness(self.model, row) for row in rows]
            self.cache.update(zip(missing.keys(), values))
        return [self.cache[key] for key in keys]


def ga_solve(
    binned: BinnedDataset, actions: VariancePlan, epsilon: float, cfg: GaConfig
) -> tuple[VariancePlan, SolverTrace]:
    model = PayoffModel(binned, actions, epsilon, cfg.mode)
    options = model.options
    rng = np.random.default_rng(cfg.seed)
    chromosomes = rng.integers(0, options, size=(cfg.population, model.n))

    pool = multiprocessing.Pool(cfg.workers) if cfg.workers > 1 else None
    try:
        evaluate = _Evaluator(model, pool)
        values = evaluate(chromosomes)
        fitness = np.array([v.payoff for v in values])
        top = int(np.argmax(fitness))
        best, best_value = chromosomes[top].copy(), values[top]

        trace = SolverTrace(method="ga", outcome="generations")
        trace.record(0, -1, -1, best_value)
        log.info(
            f"GA start: population {cfg.population}, {model.n} genes, {options} options, "
            f"best P={best_value.payoff:.6f}"
        )

        stall = 0
        for generation in tqdm(range(1, cfg.generations + 1), desc="GA", disable=not cfg.progress):
            chromosomes = next_generation(chromosomes, fitness, cfg, rng, options)
            values = evaluate(chromosomes)
            fitness = np.array([v.payoff for v in values])
            top = int(np.argmax(fitness))
            if fitness[top] > best_value.payoff:
                best, best_value = chromosomes[top].copy(), values[top]
                stall = 0
            else:
                stall += 1
            trace.record(generation, -1, -1, best_value)
            trace.iterations = generation
            log.debug(f"generation {generation}: best P={best_value.payoff:.9f}")
            if stall >= cfg.stall_generations:
                trace.outcome = "stalled"
                log.info(f"GA stopped at generation {generation}: best unchanged for {stall} generations")
                break
    finally:
        if pool is not None:
            pool.close()
            pool.join()

    log.info(f"GA finished: P={best_value.payoff:.6f} (P_E={best_value.p_e}/{model.n})")
    if best_value.p_e < model.n:
        log.warning(f"GA best plan leaves {model.n - best_value.p_e} instances above eps={epsilon}")
    return actions.with_assignment(best.tolist()), trace

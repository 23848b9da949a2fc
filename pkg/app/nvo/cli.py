"""Command line front door: preprocess -> solve -> evaluate -> sample/export."""
import argparse
import logging
import os
import time
from typing import Sequence

import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from .config import (
    DEFAULT_BINS,
    DEFAULT_JACCARD_THRESHOLD,
    DEFAULT_MULTIPLIERS,
    DEFAULT_PERCENTILE,
    DEFAULT_SENSITIVITY,
    BrdConfig,
    GaConfig,
    Method,
    Mode,
    RunConfig,
    load_settings,
)
from .errors import ConfigError, DimensionError, NvoError
from .evolution import ga_solve
from .file_io import (
    ensure_directory,
    histogram_to_doc,
    load_histogram,
    load_plan,
    plan_to_doc,
    read_column,
    report_to_doc,
    save_distributions,
    save_json,
    save_samples,
    save_sweep,
    save_trace,
)
from .game import SolverTrace, brd_solve, evaluate_plan
from .mechanism import (
    VariancePlan,
    action_set,
    baseline_plan,
    build_mass_matrix,
    mixture_distribution,
    sample_output,
)
from .preprocess import BinnedDataset, compute_normalization, empirical_distribution, normalize_and_bin

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_UNSATISFIED = 2


def preprocess_column(
    path: str, column: str, epsilon: float, percentile: float, bins: int, sensitivity: float
) -> BinnedDataset:
    data = read_column(path, column)
    params = compute_normalization(data, epsilon, percentile, sensitivity)
    return normalize_and_bin(data, params, bins)


def solve_plan(
    binned: BinnedDataset,
    epsilon: float,
    method: Method,
    multipliers: Sequence[float],
    sensitivity: float,
    brd: BrdConfig,
    ga: GaConfig | None,
) -> tuple[VariancePlan, SolverTrace | None]:
    if method == "baseline":
        return baseline_plan(binned, epsilon, sensitivity), None
    actions = action_set(epsilon, sensitivity, multipliers)
    if method == "brd":
        return brd_solve(binned, actions, epsilon, brd)
    if method != "ga":
        raise ConfigError(f"unknown method {method!r}")
    if ga is None:
        raise NvoError("method 'ga' needs --generations")
    return ga_solve(binned, actions, epsilon, ga)


def export_distributions(binned: BinnedDataset, plans: dict[str, VariancePlan]) -> pd.DataFrame:
    """One row per bin: the original masses and the output masses of each plan."""
    frame = pd.DataFrame(
        {
            "bin_index": range(binned.k),
            "representative": binned.representatives,
            "original_mass": empirical_distribution(binned).masses,
        }
    )
    for name, plan in plans.items():
        if len(plan.assignment) != binned.n:
            raise DimensionError(f"plan '{name}' assigns {len(plan.assignment)} instances, histogram has {binned.n}")
        frame[f"{name}_mass"] = mixture_distribution(build_mass_matrix(binned, plan)).masses
    return frame


def run(config: RunConfig) -> int:
    out = ensure_directory(config.out_dir)
    binned = preprocess_column(
        config.input, config.column, config.epsilon, config.percentile, config.bins, config.sensitivity
    )
    save_json(histogram_to_doc(binned), os.path.join(out, "histogram.json"))

    brd = config.brd.model_copy(update={"mode": config.mode, "seed": config.seed})
    ga = config.ga.model_copy(update={"mode": config.mode, "seed": config.seed}) if config.ga else None
    plan, trace = solve_plan(
        binned, config.epsilon, config.method, config.multipliers, config.sensitivity, brd, ga
    )
    save_json(plan_to_doc(plan, config.method, trace), os.path.join(out, "plan.json"))
    if trace is not None:
        save_trace(trace, os.path.join(out, "trace.csv"))

    report = evaluate_plan(binned, plan, config.epsilon, config.mode, config.jaccard_threshold)
    save_json(report_to_doc(report), os.path.join(out, "report.json"))

    if config.export_dist:
        plans = {"baseline": baseline_plan(binned, config.epsilon, config.sensitivity)}
        if config.method != "baseline":
            plans[config.method] = plan
        save_distributions(export_distributions(binned, plans), os.path.join(out, "distributions.csv"))
    if config.samples > 0:
        save_samples(sample_output(binned, plan, config.samples, config.seed), os.path.join(out, "samples.csv"))

    log.info(
        f"{config.method}: P_E={report.p_e}/{report.n}, KL={report.metrics['kl']:.6g}, "
        f"payoff={report.payoff:.6f}"
    )
    return _privacy_status(report.p_e, report.n)


def _privacy_status(p_e: int, n: int) -> int:
    if p_e < n:
        log.warning(f"{n - p_e} of {n} instances do not satisfy the target epsilon")
        return EXIT_UNSATISFIED
    return EXIT_OK


def sweep(
    path: str,
    column: str,
    epsilons: Sequence[float],
    methods: Sequence[Method],
    seed: int,
    percentile: float = DEFAULT_PERCENTILE,
    bins: int = DEFAULT_BINS,
    sensitivity: float = DEFAULT_SENSITIVITY,
    multipliers: Sequence[float] = DEFAULT_MULTIPLIERS,
    mode: Mode = "exact",
    brd: BrdConfig = BrdConfig(),
    ga: GaConfig | None = None,
    progress: bool = False,
) -> list[dict]:
    """Every method at every target epsilon, with wall-clock solve time."""
    rows = []
    cells = [(eps, method) for eps in epsilons for method in methods]
    for eps, method in tqdm(cells, desc="sweep", disable=not progress):
        binned = preprocess_column(path, column, eps, percentile, bins, sensitivity)
        brd_cfg = brd.model_copy(update={"mode": mode, "seed": seed})
        ga_cfg = ga.model_copy(update={"mode": mode, "seed": seed}) if ga else None
        started = time.perf_counter()
        plan, _ = solve_plan(binned, eps, method, multipliers, sensitivity, brd_cfg, ga_cfg)
        seconds = time.perf_counter() - started
        report = evaluate_plan(binned, plan, eps, mode)
        rows.append(
            {
                "method": method,
                "epsilon": eps,
                "seconds": seconds,
                **report.metrics,
                "p_e": report.p_e,
                "n": report.n,
            }
        )
        log.info(f"sweep eps={eps} {method}: KL={report.metrics['kl']:.6g} in {seconds:.2f}s")
    return rows


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _add_normalization_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--percentile", type=float, default=DEFAULT_PERCENTILE)
    parser.add_argument("--bins", "-k", type=int, default=DEFAULT_BINS)
    parser.add_argument("--sensitivity", type=float, default=DEFAULT_SENSITIVITY)


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--multipliers", type=_floats, default=DEFAULT_MULTIPLIERS)
    parser.add_argument("--mode", choices=["exact", "conservative"], default="exact")
    parser.add_argument("--seed", type=int, required=True)
    parser.add_argument("--max-passes", type=int, default=100)
    parser.add_argument("--tolerance", type=float, default=0.0)
    parser.add_argument("--init", choices=["max_scale", "random"], default="max_scale")
    parser.add_argument("--ungrouped", action="store_true", help="evaluate BRD candidates per instance")
    parser.add_argument("--generations", type=int, default=None, help="GA generations (required for ga)")
    parser.add_argument("--population", type=int, default=500)
    parser.add_argument("--mating-parents", type=int, default=10)
    parser.add_argument("--crossover-points", type=int, default=2)
    parser.add_argument("--mutation-rate", type=float, default=0.05)
    parser.add_argument("--elites", type=int, default=5)
    parser.add_argument("--stall-generations", type=int, default=50)
    parser.add_argument("--workers", type=int, default=1)


def _solver_configs(args: argparse.Namespace) -> tuple[BrdConfig, GaConfig | None]:
    brd = BrdConfig(
        max_passes=args.max_passes,
        payoff_tolerance=args.tolerance,
        init=args.init,
        seed=args.seed,
        mode=args.mode,
        grouped=not args.ungrouped,
        progress=args.progress,
    )
    ga = None
    if args.generations is not None:
        ga = GaConfig(
            population=args.population,
            mating_parents=args.mating_parents,
            crossover_points=args.crossover_points,
            mutation_rate=args.mutation_rate,
            elites=args.elites,
            generations=args.generations,
            seed=args.seed,
            stall_generations=args.stall_generations,
            mode=args.mode,
            workers=args.workers,
            progress=args.progress,
        )
    return brd, ga


def build_parser(default_out: str = "out") -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvo", description="Per-instance DP noise optimization for the random sampling query"
    )
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--progress", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("preprocess", help="normalize and bin a CSV column")
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    _add_normalization_flags(p)
    p.add_argument("--out", default=os.path.join(default_out, "histogram.json"))

    p = commands.add_parser("solve", help="optimize a per-instance scale plan")
    p.add_argument("--histogram", required=True)
    p.add_argument("--method", choices=["brd", "ga"], default="brd")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--sensitivity", type=float, default=DEFAULT_SENSITIVITY)
    _add_solver_flags(p)
    p.add_argument("--plan-out", default=os.path.join(default_out, "plan.json"))
    p.add_argument("--trace-out", default=os.path.join(default_out, "trace.csv"))

    p = commands.add_parser("baseline", help="identical-noise Laplace plan")
    p.add_argument("--histogram", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--sensitivity", type=float, default=DEFAULT_SENSITIVITY)
    p.add_argument("--plan-out", default=os.path.join(default_out, "baseline_plan.json"))

    p = commands.add_parser("evaluate", help="privacy and utility report of a plan")
    p.add_argument("--histogram", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--epsilon", type=float, default=None, help="defaults to the plan's epsilon")
    p.add_argument("--mode", choices=["exact", "conservative"], default="exact")
    p.add_argument("--jaccard-threshold", type=float, default=DEFAULT_JACCARD_THRESHOLD)
    p.add_argument("--report-out", default=os.path.join(default_out, "report.json"))

    p = commands.add_parser("sample", help="draw privatized answers of the sampling query")
    p.add_argument("--histogram", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=os.path.join(default_out, "samples.csv"))

    p = commands.add_parser("export-dist", help="per-bin masses of the original and each plan")
    p.add_argument("--histogram", required=True)
    p.add_argument("--plan", action="append", default=[], metavar="NAME=PATH")
    p.add_argument("--out", default=os.path.join(default_out, "distributions.csv"))

    p = commands.add_parser("run", help="full pipeline on a CSV column")
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--method", choices=["brd", "ga", "baseline"], default="brd")
    _add_normalization_flags(p)
    _add_solver_flags(p)
    p.add_argument("--jaccard-threshold", type=float, default=DEFAULT_JACCARD_THRESHOLD)
    p.add_argument("--out-dir", default=default_out)
    p.add_argument("--export-dist", action="store_true")
    p.add_argument("--samples", type=int, default=0)

    p = commands.add_parser("sweep", help="every method over a list of target epsilons")
    p.add_argument("--input", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--epsilons", type=_floats, default=(0.1, 0.3, 1.0, 2.0, 4.0, 8.0))
    p.add_argument("--methods", type=lambda s: tuple(s.split(",")), default=("baseline", "brd"))
    _add_normalization_flags(p)
    _add_solver_flags(p)
    p.add_argument("--out", default=os.path.join(default_out, "sweep.csv"))
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "preprocess":
        binned = preprocess_column(
            args.input, args.column, args.epsilon, args.percentile, args.bins, args.sensitivity
        )
        save_json(histogram_to_doc(binned), args.out)
        return EXIT_OK

    if args.command == "solve":
        binned = load_histogram(args.histogram)
        brd, ga = _solver_configs(args)
        plan, trace = solve_plan(binned, args.epsilon, args.method, args.multipliers, args.sensitivity, brd, ga)
        save_json(plan_to_doc(plan, args.method, trace), args.plan_out)
        if trace is not None:
            save_trace(trace, args.trace_out)
        return EXIT_OK

    if args.command == "baseline":
        binned = load_histogram(args.histogram)
        save_json(plan_to_doc(baseline_plan(binned, args.epsilon, args.sensitivity), "baseline"), args.plan_out)
        return EXIT_OK

    if args.command == "evaluate":
        binned = load_histogram(args.histogram)
        plan = load_plan(args.plan)
        epsilon = args.epsilon if args.epsilon is not None else plan.epsilon
        report = evaluate_plan(binned, plan, epsilon, args.mode, args.jaccard_threshold)
        save_json(report_to_doc(report), args.report_out)
        return _privacy_status(report.p_e, report.n)

    if args.command == "sample":
        binned = load_histogram(args.histogram)
        plan = load_plan(args.plan)
        save_samples(sample_output(binned, plan, args.n, args.seed), args.out)
        return EXIT_OK

    if args.command == "export-dist":
        binned = load_histogram(args.histogram)
        plans = {}
        for entry in args.plan:
            name, _, path = entry.partition("=")
            if not path:
                raise NvoError(f"--plan expects NAME=PATH, got '{entry}'")
            plans[name] = load_plan(path)
        save_distributions(export_distributions(binned, plans), args.out)
        return EXIT_OK

    if args.command == "run":
        brd, ga = _solver_configs(args)
        config = RunConfig(
            input=args.input,
            column=args.column,
            epsilon=args.epsilon,
            percentile=args.percentile,
            bins=args.bins,
            sensitivity=args.sensitivity,
            multipliers=args.multipliers,
            method=args.method,
            mode=args.mode,
            seed=args.seed,
            brd=brd,
            ga=ga,
            out_dir=args.out_dir,
            export_dist=args.export_dist,
            samples=args.samples,
            jaccard_threshold=args.jaccard_threshold,
        )
        return run(config)

    if args.command == "sweep":
        brd, ga = _solver_configs(args)
        rows = sweep(
            args.input,
            args.column,
            args.epsilons,
            args.methods,
            args.seed,
            percentile=args.percentile,
            bins=args.bins,
            sensitivity=args.sensitivity,
            multipliers=args.multipliers,
            mode=args.mode,
            brd=brd,
            ga=ga,
            progress=args.progress,
        )
        save_sweep(rows, args.out)
        return EXIT_OK

    raise NvoError(f"unknown command {args.command!r}")


def main(argv: Sequence[str] | None = None) -> int:
    settings = load_settings()
    args = build_parser(settings.out_dir).parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        return _dispatch(args)
    except OSError as e:
        log.error(f"I/O error on {e.filename or 'unknown file'}: {e.strerror or e}")
        return EXIT_FAILURE
    except (NvoError, ValidationError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        log.error(str(e))
        return EXIT_FAILURE

import json
import logging
import math
import os
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np
import pandas as pd

from .config import FORMAT_VERSION
from .errors import DatasetError
from .game import SolverTrace
from .mechanism import VariancePlan
from .pdp import PrivacyReport
from .preprocess import BinnedDataset, NormalizationParams, RawDataset

log = logging.getLogger(__name__)

T = TypeVar("T")

TRACE_COLUMNS = ["step", "instance", "scale_index", "payoff", "p_e", "p_u"]


def ensure_directory(directory: str) -> str:
    """Ensure directory exists and return its path."""
    os.makedirs(directory, exist_ok=True)
    return directory


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        ensure_directory(parent)


def read_column(path: str, column: str) -> RawDataset:
    """Load one numeric column of a CSV with a header row.

    Every unparseable or non-finite cell aborts the load; the error lists the
    CSV line numbers (the header is line 1).
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if column not in frame.columns:
        raise DatasetError(f"{path}: no column '{column}' (found {', '.join(frame.columns)})")
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce")
    bad = values.isna() | ~np.isfinite(values.to_numpy(dtype=float, na_value=np.nan))
    if bad.any():
        lines = [int(i) + 2 for i in np.flatnonzero(bad.to_numpy())]
        shown = ", ".join(f"line {line} ({raw.iloc[line - 2]!r})" for line in lines[:10])
        more = f" and {len(lines) - 10} more" if len(lines) > 10 else ""
        raise DatasetError(f"{path}: non-numeric values in column '{column}': {shown}{more}")
    log.info(f"Loaded {len(values)} values from {path} [{column}]")
    return RawDataset(values=values.astype(float).tolist(), label=column)


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, np.integer):
        return int(value)
    return value


NON_FINITE = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}
REPORT_FLOATS = ("epsilon_target", "p_u", "payoff", "b_min", "bound_main", "bound_appendix", "v_min_value")


def restore_float(value: Any) -> float:
    """Inverse of the string encoding `save_json` uses for non-finite floats."""
    if isinstance(value, str):
        if value not in NON_FINITE:
            raise DatasetError(f"expected a number, got {value!r}")
        return NON_FINITE[value]
    return float(value)


def save_json(doc: dict[str, Any], path: str) -> None:
    _ensure_parent(path)
    body = {"format_version": FORMAT_VERSION, **doc}
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(_clean(body), indent=2, allow_nan=False) + "\n")
    log.info(f"Wrote {path}")


def load_json(path: str) -> dict[str, Any]:
    """Read a document written by `save_json`.

    Non-finite floats stay encoded as strings; the `*_from_doc` readers
    decode them at the fields that hold floats.
    """
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict):
        raise DatasetError(f"{path}: expected a JSON object, got {type(doc).__name__}")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported format_version {version!r}")
    return doc


def histogram_to_doc(binned: BinnedDataset) -> dict[str, Any]:
    return {
        "label": binned.label,
        "k": binned.k,
        "bin_of": binned.bin_of,
        "representatives": binned.representatives,
        "counts": binned.counts,
        "normalization": binned.normalization.model_dump() if binned.normalization else None,
    }


def histogram_from_doc(doc: dict[str, Any]) -> BinnedDataset:
    normalization = doc.get("normalization")
    if normalization:
        normalization = NormalizationParams(**{key: restore_float(v) for key, v in normalization.items()})
    return BinnedDataset(
        k=doc["k"],
        bin_of=doc["bin_of"],
        representatives=[restore_float(v) for v in doc["representatives"]],
        counts=doc["counts"],
        normalization=normalization or None,
        label=doc.get("label", "value"),
    )


def plan_to_doc(plan: VariancePlan, method: str, trace: SolverTrace | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "method": method,
        "epsilon": plan.epsilon,
        "sensitivity": plan.sensitivity,
        "multipliers": plan.multipliers,
        "scales": plan.scales,
        "assignment": plan.assignment,
    }
    if trace is not None:
        doc["solver"] = {"outcome": trace.outcome, "iterations": trace.iterations}
    return doc


def plan_from_doc(doc: dict[str, Any]) -> VariancePlan:
    return VariancePlan(
        multipliers=[restore_float(v) for v in doc["multipliers"]],
        scales=[restore_float(v) for v in doc["scales"]],
        assignment=doc["assignment"],
        epsilon=restore_float(doc["epsilon"]),
        sensitivity=restore_float(doc.get("sensitivity", 1.0)),
    )


def report_to_doc(report: PrivacyReport) -> dict[str, Any]:
    return report.model_dump()


def report_from_doc(doc: dict[str, Any]) -> PrivacyReport:
    fields = {key: v for key, v in doc.items() if key != "format_version"}
    fields.update({key: restore_float(doc[key]) for key in REPORT_FLOATS})
    fields["metrics"] = {key: restore_float(v) for key, v in doc["metrics"].items()}
    fields["per_instance"] = [
        {
            **record,
            "scale": restore_float(record["scale"]),
            "epsilon_exact": restore_float(record["epsilon_exact"]),
            "epsilon_conservative": restore_float(record["epsilon_conservative"]),
        }
        for record in doc["per_instance"]
    ]
    return PrivacyReport(**fields)


def _read_document(path: str, reader: Callable[[dict[str, Any]], T]) -> T:
    doc = load_json(path)
    try:
        return reader(doc)
    except KeyError as e:
        raise DatasetError(f"{path}: missing key {e}") from e
    except (TypeError, AttributeError, ValueError) as e:
        raise DatasetError(f"{path}: {e}") from e


def load_histogram(path: str) -> BinnedDataset:
    return _read_document(path, histogram_from_doc)


def load_plan(path: str) -> VariancePlan:
    return _read_document(path, plan_from_doc)


def load_report(path: str) -> PrivacyReport:
    return _read_document(path, report_from_doc)


def _write_frame(frame: pd.DataFrame, path: str) -> None:
    _ensure_parent(path)
    frame.to_csv(path, index=False, lineterminator="\n")
    log.info(f"Wrote {path}")


def save_trace(trace: SolverTrace, path: str) -> None:
    rows = [step.model_dump() for step in trace.steps]
    _write_frame(pd.DataFrame(rows, columns=TRACE_COLUMNS), path)


def save_distributions(frame: pd.DataFrame, path: str) -> None:
    _write_frame(frame, path)


def save_samples(samples: Sequence[float] | np.ndarray, path: str) -> None:
    _write_frame(pd.DataFrame({"value": np.asarray(samples, dtype=float)}), path)


def save_sweep(rows: Iterable[dict[str, Any]], path: str) -> None:
    _write_frame(pd.DataFrame(list(rows)), path)

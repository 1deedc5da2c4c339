"""Report records and the plot-ready TSV outputs."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

import numpy as np

TASK_ROWS = (
    ("classify", "accuracy", None, "Node Classification"),
    ("links", "accuracy", None, "Link Prediction"),
    ("similarity", "power", "D1", "Concept Similarity (D1)"),
    ("similarity", "power", "D2", "Concept Similarity (D2)"),
    ("similarity", "power", "D3", "Concept Similarity (D3)"),
    ("similarity", "power", "D4", "Concept Similarity (D4)"),
    ("similarity", "power", "D5", "Concept Similarity (D5)"),
    ("patient", "all_diagnoses", None, "Patient State Prediction (All Diagnosis)"),
    ("patient", "frequent_top_k", None, "Patient State Prediction (Frequent k)"),
    ("patient", "rare_top_k", None, "Patient State Prediction (Rare k)"),
)


def record(task, method, dimension, metric, value, config=None, seed=None, **extra) -> dict:
    out = {"task": task, "method": method, "dimension": dimension, "metric": metric,
           "value": None if value is None else float(value), "config": config or {}, "seed": seed}
    out.update(extra)
    return out


def write_records(records: list[dict], path) -> None:
    Path(path).write_text(json.dumps(records, indent=2, sort_keys=True, default=_default) + "\n")


def read_records(path) -> list[dict]:
    return json.loads(Path(path).read_text())


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _fmt(v) -> str:
    return "NA" if v is None else f"{v:.4f}"


def _cosine_only(r: dict) -> bool:
    return r.get("similarity", "cosine") == "cosine"


def results_table(records: Iterable[dict]) -> str:
    """Task-by-method TSV; each cell takes the best value over dimensions."""
    records = [r for r in records if _cosine_only(r)]
    methods = sorted({r["method"] for r in records})
    lines = ["task\t" + "\t".join(methods)]
    for task, metric, dataset, label in TASK_ROWS:
        cells = []
        for m in methods:
            vals = [r["value"] for r in records
                    if r["task"] == task and r["metric"] == metric and r["method"] == m
                    and (dataset is None or r.get("dataset") == dataset) and r["value"] is not None]
            cells.append(_fmt(max(vals)) if vals else "NA")
        lines.append(label + "\t" + "\t".join(cells))
    return "\n".join(lines) + "\n"


def curves_table(records: Iterable[dict]) -> str:
    """Long-format metric-vs-dimension rows."""
    rows = sorted(
        (r["task"], r["metric"], r.get("dataset") or "", r.get("similarity", ""), r["method"],
         int(r["dimension"]), r["value"])
        for r in records)
    lines = ["task\tmetric\tdataset\tsimilarity\tmethod\tdimension\tvalue"]
    lines += ["\t".join([t, m, ds, sim, meth, str(d), _fmt(v)]) for t, m, ds, sim, meth, d, v in rows]
    return "\n".join(lines) + "\n"


def null_histogram_table(entries: Iterable[tuple[str, int, str, np.ndarray]], bins: int = 50) -> str:
    """Histogram rows of bootstrap null similarities per (method, dimension, dataset)."""
    lines = ["method\tdimension\tdataset\tbin_left\tbin_right\tdensity"]
    for method, dim, dataset, null in entries:
        if null is None or len(null) == 0:
            continue
        dens, edges = np.histogram(null, bins=bins, range=(-1.0, 1.0), density=True)
        for lo, hi, v in zip(edges[:-1], edges[1:], dens):
            lines.append(f"{method}\t{dim}\t{dataset}\t{lo:.4f}\t{hi:.4f}\t{v:.6f}")
    return "\n".join(lines) + "\n"

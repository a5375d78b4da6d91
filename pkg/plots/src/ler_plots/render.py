"""Render experiment CSVs into figures.

These scripts plot exactly what the CSVs contain; no statistic is recomputed
here. Output is deterministic for a given input: SVG ids are salted with a
fixed string and date metadata is suppressed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "ler-plots"

import matplotlib.pyplot as plt

KINDS = ("bounds", "qual-sweep", "detection", "traffic-counts", "traffic-durations")


class SchemaMismatch(ValueError):
    def __init__(self, path: str, column: str):
        self.path = path
        self.column = column
        super().__init__(f"{path}: missing or malformed column {column!r}")


class ContainmentError(ValueError):
    """The fitted series leaves the lower/upper band it must lie inside."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple[str, ...]
    output: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def _read_columns(path: str, required: list[str], numeric: list[str],
                  allow_na: set[str] = frozenset()) -> dict[str, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaMismatch(path, col)
        out: dict[str, list] = {col: [] for col in required}
        for row in reader:
            for col in required:
                raw = row.get(col)
                if raw is None:
                    raise SchemaMismatch(path, col)
                if col in numeric:
                    if raw == "NA" and col in allow_na:
                        out[col].append(None)
                        continue
                    try:
                        out[col].append(float(raw))
                    except ValueError:
                        raise SchemaMismatch(path, col) from None
                else:
                    out[col].append(raw)
    return out


def _finish(fig, spec: FigureSpec) -> str:
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    kwargs = {}
    if out.suffix.lower() == ".svg":
        kwargs["metadata"] = {"Date": None}
    fig.savefig(out, **kwargs)
    plt.close(fig)
    return str(out)


def _render_bounds(spec: FigureSpec):
    data = _read_columns(spec.inputs[0], ["index", "lower", "upper", "fitted"],
                         numeric=["index", "lower", "upper", "fitted"])
    idx, lower, upper, fitted = (data[c] for c in ("index", "lower", "upper", "fitted"))
    for i, lo, hi, w in zip(idx, lower, upper, fitted):
        if not (lo <= w <= hi):
            raise ContainmentError(
                f"fitted weight {w} at index {int(i)} outside band [{lo}, {hi}]"
            )
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(idx, lower, upper, alpha=0.3, label="weight bounds", color="tab:blue")
    ax.plot(idx, fitted, marker="o", markersize=3, color="tab:red", label="fitted weights")
    ax.set_xlabel(spec.xlabel or "window index (1 = most recent)")
    ax.set_ylabel(spec.ylabel or "weight")
    ax.set_title(spec.title or "optimized weight function and per-index bounds")
    ax.legend()
    return _finish(fig, spec)


def _render_qual_sweep(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in spec.inputs:
        with open(path, newline="", encoding="utf-8") as fh:
            header = (csv.reader(fh).__next__() or [])
        variable = "p" if "p" in header else "E" if "E" in header else None
        if variable is None or "qual" not in header:
            raise SchemaMismatch(path, "p|E, qual")
        data = _read_columns(path, [variable, "qual"], numeric=[variable, "qual"])
        ax.plot(data[variable], data["qual"], marker="o", label=Path(path).stem)
        ax.set_xlabel(spec.xlabel or variable)
    ax.set_ylabel(spec.ylabel or "true negative rate")
    ax.set_title(spec.title or "true negative rate")
    if len(spec.inputs) > 1:
        ax.legend()
    return _finish(fig, spec)


def _render_detection(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in spec.inputs:
        data = _read_columns(path, ["step", "prob"], numeric=["step", "prob"])
        ax.plot(data["step"], data["prob"], label=Path(path).stem)
    ax.set_xlabel(spec.xlabel or "verification steps")
    ax.set_ylabel(spec.ylabel or "detection probability")
    ax.set_ylim(0, 1.05)
    ax.set_title(spec.title or "spoofing detection probability by step")
    ax.legend()
    return _finish(fig, spec)


def _render_traffic_counts(spec: FigureSpec):
    data = _read_columns(spec.inputs[0], ["bin_start_s", "count"],
                         numeric=["bin_start_s", "count"])
    fig, ax = plt.subplots(figsize=(6, 4))
    starts = [s / 60.0 for s in data["bin_start_s"]]
    ax.bar(starts, data["count"], width=0.9, align="edge")
    ax.set_xlabel(spec.xlabel or "minute")
    ax.set_ylabel(spec.ylabel or "active vehicles")
    ax.set_title(spec.title or "active vehicles per minute")
    return _finish(fig, spec)


def _render_traffic_durations(spec: FigureSpec):
    data = _read_columns(
        spec.inputs[0],
        ["focal_id", "spoof_start_s", "detect_s", "encounters_used"],
        numeric=["spoof_start_s", "detect_s", "encounters_used"],
        allow_na={"detect_s"},
    )
    detected = sorted(d for d in data["detect_s"] if d is not None)
    fig, ax = plt.subplots(figsize=(6, 4))
    if detected:
        ax.hist(detected, bins=min(30, max(5, len(detected) // 3)))
    undetected = sum(1 for d in data["detect_s"] if d is None)
    ax.set_xlabel(spec.xlabel or "detection latency (s)")
    ax.set_ylabel(spec.ylabel or "focal entities")
    title = spec.title or "time to detection"
    if undetected:
        title += f" ({undetected} undetected)"
    ax.set_title(title)
    return _finish(fig, spec)


_RENDERERS = {
    "bounds": _render_bounds,
    "qual-sweep": _render_qual_sweep,
    "detection": _render_detection,
    "traffic-counts": _render_traffic_counts,
    "traffic-durations": _render_traffic_durations,
}


def render(spec: FigureSpec) -> str:
    """Render one figure; returns the written image path."""
    return _RENDERERS[spec.kind](spec)

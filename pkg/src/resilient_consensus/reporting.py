"""CSV and ``key = value`` writers for traces, summaries and reports."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import BatchSummary, ExperimentSummary, Trace

TRACE_HEADER = ("k", "node", "state", "eps", "eta", "pi", "isolated")
DETECTION_HEADER = ("k", "detector", "target", "eps1", "eps2", "bound", "violated")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {fmt(x)}" for k, x in sorted(v.items())) + "}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(fmt(x) for x in v) + "]"
    return str(v)


def write_trace_csv(trace: Trace, path: str | Path) -> None:
    """One row per active node per round."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for k in range(trace.rounds):
            for i in np.flatnonzero(trace.active[k]).tolist():
                w.writerow(
                    (
                        k,
                        i,
                        fmt(trace.states[k, i]),
                        fmt(trace.inputs[k, i]),
                        fmt(trace.ledgers[k, i]),
                        int(trace.flags[k, i]),
                        int(trace.isolated_counts[k, i]),
                    )
                )


def write_detections_csv(trace: Trace, path: str | Path) -> None:
    """Nonzero detections only."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for d in trace.detections:
            w.writerow((d.k, d.detector, d.target, fmt(d.eps1), fmt(d.eps2), fmt(d.bound), int(d.violated)))


def write_key_values(items: Iterable[tuple[str, object]], path: str | Path) -> None:
    Path(path).write_text("".join(f"{k} = {fmt(v)}\n" for k, v in items))


def read_key_values(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def summary_items(s: ExperimentSummary) -> list[tuple[str, object]]:
    items = [
        ("algorithm", s.algorithm),
        ("seed", s.seed),
        ("graph_seed", s.graph_seed if s.graph_seed is not None else "none"),
        ("horizon", s.horizon),
        ("run", s.run),
        ("retained", s.retained),
        ("target", s.target),
        ("final_value", s.final_value),
        ("error", s.error),
        ("max_node_deviation", s.max_deviation),
        ("isolation_rounds", s.isolation_rounds),
        ("residual_connected", s.residual_connected),
    ]
    for i, v in sorted(s.first_detections.items()):
        items.append((f"node{i}.first_detection", v))
    for i, v in sorted(s.detections_at_isolation.items()):
        items.append((f"node{i}.detections_at_isolation", v))
    for i, v in sorted(s.window_detections.items()):
        items.append((f"node{i}.window_detections", v))
    items.append(("initial", s.initial))
    items.append(("final_states", s.final_states))
    return items


def batch_items(b: BatchSummary) -> list[tuple[str, object]]:
    first = b.runs[0]
    iso: dict[int, list[int]] = {}
    for s in b.runs:
        for i, k in s.isolation_rounds.items():
            iso.setdefault(i, []).append(k)
    items = [
        ("algorithm", first.algorithm),
        ("seed", first.seed),
        ("horizon", first.horizon),
        ("runs", b.count),
        ("target", b.target),
        ("mean", b.mean),
        ("variance", b.variance),
        ("std", b.std),
        ("mean_error", abs(b.mean - b.target)),
    ]
    for i, ks in sorted(iso.items()):
        items.append((f"node{i}.isolated_runs", len(ks)))
        items.append((f"node{i}.mean_isolation_round", float(np.mean(ks))))
    items.append(("initial", first.initial))
    return items


def write_runs_csv(b: BatchSummary, path: str | Path, misbehaving: Sequence[int] = ()) -> None:
    cols = ["run", "final_value", "error", "residual_connected"]
    for i in misbehaving:
        cols += [f"iso_{i}", f"M_{i}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in b.runs:
            row = [s.run, fmt(s.final_value), fmt(s.error), int(s.residual_connected)]
            for i in misbehaving:
                counts = s.detections_at_isolation.get(i) or s.window_detections.get(i) or {}
                row += [s.isolation_rounds.get(i, ""), min(counts.values()) if counts else ""]
            w.writerow(row)


def write_comparison_csv(rows: Sequence[ExperimentSummary], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("algorithm", "final_value", "target", "error", "isolation_rounds"))
        for s in rows:
            iso = ";".join(f"{i}:{k}" for i, k in sorted(s.isolation_rounds.items()))
            w.writerow((s.algorithm, fmt(s.final_value), fmt(s.target), fmt(s.error), iso))


def write_cdf_grid(grid: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "F_error", "F_compensation"))
        for x, a, b in grid.tolist():
            w.writerow((fmt(x), fmt(a), fmt(b)))

"""Merge run outputs into one long-format table and draw static SVG charts.

Every input CSV becomes rows of ``(run_id, epoch, lambda, depth, metric, value)``:

* trace files (an ``epoch`` column) give one row per epoch and metric; layer
  files add ``/layer{i}`` to the metric name;
* sweep tables (a ``lambda`` column) give one row per lambda and metric, with
  ``epoch`` left blank;
* depth tables (a ``depth`` column) give one row per depth;
* long-format files pass through unchanged.

Nothing is recomputed: values are copied from the inputs.
"""
from __future__ import annotations

import csv
from pathlib import Path

from .errors import FormatError

LONG_COLUMNS = ("run_id", "epoch", "lambda", "depth", "metric", "value")
AXES = ("epoch", "lambda", "depth")
_LABELS = {"True": 1.0, "False": 0.0, "true": 1.0, "false": 0.0}


def _number(text):
    if text is None or text == "":
        return None
    if text in _LABELS:
        return _LABELS[text]
    try:
        return float(text)
    except ValueError:
        return None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_id(path: Path) -> str:
    return f"{path.parent.name}/{path.stem}" if path.parent.name else path.stem


def _rows_from(path: Path) -> list[dict]:
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = tuple(reader.fieldnames or ())
        records = list(reader)
    if header == LONG_COLUMNS:
        return [{"run_id": r["run_id"],
                 "epoch": int(r["epoch"]) if r["epoch"] else None,
                 "lambda": _number(r["lambda"]),
                 "depth": int(r["depth"]) if r["depth"] else None,
                 "metric": r["metric"],
                 "value": _number(r["value"])} for r in records]

    base = _run_id(path)
    out = []
    if "epoch" in header:
        skip = {"epoch", "layer"}
        for r in records:
            suffix = f"/layer{r['layer']}" if "layer" in header else ""
            for col in header:
                if col in skip:
                    continue
                out.append({"run_id": base, "epoch": int(r["epoch"]), "lambda": None, "depth": None,
                            "metric": col + suffix, "value": _number(r[col])})
    elif "lambda" in header or "depth" in header:
        axis = "lambda" if "lambda" in header else "depth"
        for r in records:
            x = float(r[axis]) if axis == "lambda" else int(r[axis])
            run = f"{base}/{axis}={x:.6g}" if axis == "lambda" else f"{base}/{axis}={x}"
            for col in header:
                if col == axis:
                    continue
                value = _number(r[col])
                if value is None and r[col] != "":
                    continue  # text columns such as gate names
                out.append({"run_id": run, "epoch": None,
                            "lambda": x if axis == "lambda" else None,
                            "depth": x if axis == "depth" else None,
                            "metric": col, "value": value})
    else:
        raise FormatError(f"{path}: unrecognised CSV header {list(header)}", 0)
    return out


def merge(paths) -> list[dict]:
    """Long-format rows from ``paths``; a repeated key keeps its first position, last value."""
    merged: dict[tuple, dict] = {}
    for p in paths:
        for row in _rows_from(Path(p)):
            key = (row["run_id"], row["epoch"], row["metric"])
            merged[key] = row
    return list(merged.values())


def write_long(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in LONG_COLUMNS])
    return path


def _axis(row):
    for a in AXES:
        if row[a] is not None:
            return a
    return None


def write_charts(rows, out_dir) -> list[Path]:
    """One SVG line chart per (metric, x axis); lines are grouped by run."""
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "gcreg"
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    series: dict[tuple[str, str], dict[str, list]] = {}
    for r in rows:
        axis = _axis(r)
        if axis is None or r["value"] is None:
            continue
        group = r["run_id"] if axis == "epoch" else r["run_id"].rsplit("/", 1)[0]
        series.setdefault((r["metric"], axis), {}).setdefault(group, []).append((r[axis], r["value"]))

    written = []
    for (metric, axis), lines in series.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, pts in lines.items():
            pts.sort()
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o" if axis != "epoch" else None,
                    label=name)
        if axis == "lambda" and all(p[0] > 0 for pts in lines.values() for p in pts):
            ax.set_xscale("log")
        ax.set_xlabel(axis)
        ax.set_ylabel(metric)
        if len(lines) <= 12:
            ax.legend(fontsize="x-small")
        fig.tight_layout()
        target = out_dir / f"{metric.replace('/', '_')}_vs_{axis}.svg"
        fig.savefig(target, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(target)
    return written


"""Training runs, metric traces, collapse detection, sparsity accounting and sweeps.

Output layout of :func:`train_run` (``out_dir``)::

    trace_seed<S>.csv          one row per epoch, columns TRACE_COLUMNS
    layers_seed<S>.csv         per-layer avg |dW| and avg |w| per epoch
    checkpoint_seed<S>.json    final network (see nn.save_checkpoint)
    summary.json               config echo, per-seed finals, mean +- CI, collapse flag
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, nn, optim
from . import regularization as reg
from .data import Dataset, SyntheticSpec, gen_synthetic, load_idx
from .errors import ConfigError, DomainError
from .regularization import Gate, RegKind, RegSchedule
from .tensor import Rng

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("epoch", "train_loss", "train_acc", "test_acc", "avg_abs_grad",
                 "avg_abs_w", "pi", "grad_fraction", "sparsity", "effective_lambda_mean")
LAYER_COLUMNS = ("epoch", "layer", "avg_abs_grad", "avg_abs_w")
COLLAPSE_MARGIN = 0.02
COLLAPSE_WINDOW = 3
MIN_COLLAPSE_EPOCHS = 5
PIXEL_SCALING = "idx bytes / 255, no mean subtraction"


@dataclass(frozen=True)
class ModelConfig:
    width: int = 128
    depth: int = 3
    dropout: float = 0.5
    dropout_layers: int | None = None
    init_gain: float = 1.0

    def architecture(self, input_dim: int, classes: int) -> nn.Architecture:
        return nn.Architecture.mlp(input_dim, self.width, self.depth, classes,
                                   self.dropout, self.dropout_layers, self.init_gain)


@dataclass(frozen=True)
class IdxPaths:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    data: SyntheticSpec | IdxPaths = field(default_factory=SyntheticSpec)
    opt: optim.OptimizerConfig = field(default_factory=optim.OptimizerConfig)
    reg: RegSchedule = field(default_factory=RegSchedule)
    epochs: int = 30
    eval_period: int = 1
    seeds: tuple[int, ...] = (0, 1, 2)
    batch_size: int = 128

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}", "run.epochs")
        if not self.seeds:
            raise ConfigError("at least one seed is required", "run.seeds")
        if self.eval_period < 1:
            raise ConfigError("eval_period must be >= 1", "run.eval_period")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "opt.batch_size")

    def with_reg(self, **changes) -> "RunConfig":
        return replace(self, reg=replace(self.reg, **changes))

    def with_model(self, **changes) -> "RunConfig":
        return replace(self, model=replace(self.model, **changes))

    def to_flat(self) -> dict:
        from .config import to_flat
        return to_flat(self)


@dataclass
class RunResult:
    config: RunConfig
    traces: dict[int, list[dict]]
    final_test_acc: dict[int, float]
    test_acc_mean: float
    test_acc_ci: float | None
    collapsed: bool | None
    out_dir: Path | None = None
    checkpoints: dict[int, str] = field(default_factory=dict)

    def mean_trace(self, column: str) -> list[float | None]:
        """Seed-average of one trace column (None where any seed lacks a value)."""
        rows = list(zip(*(self.traces[s] for s in sorted(self.traces))))
        out = []
        for per_seed in rows:
            vals = [r[column] for r in per_seed]
            out.append(None if any(v is None for v in vals) else float(np.mean(vals)))
        return out

    @property
    def final_sparsity(self) -> float:
        return float(np.mean([t[-1]["sparsity"] for t in self.traces.values()]))


@dataclass
class SweepResult:
    lambdas: list[float]
    runs: list[RunResult]
    tolerance_level: float | None
    gate: str = ""
    kind: str = ""

    def table(self) -> list[dict]:
        rows = []
        for lam, r in zip(self.lambdas, self.runs):
            rows.append({
                "lambda": lam,
                "gate": self.gate,
                "reg": self.kind,
                "test_acc_mean": r.test_acc_mean,
                "test_acc_ci": r.test_acc_ci,
                "sparsity_mean": r.final_sparsity,
                "collapsed": r.collapsed,
                "tolerance_level": self.tolerance_level,
            })
        return rows


def sparsity(net_or_weights) -> float:
    """Fraction of regularizable weights that are exactly zero."""
    if isinstance(net_or_weights, nn.Network):
        w = nn.gather_flat(nn.FlatParamView(net_or_weights), net_or_weights, "params")
    else:
        w = np.asarray(net_or_weights, dtype=np.float64).ravel()
    return float(np.count_nonzero(w == 0.0) / w.size)


def compression_rate(baseline_sparsity: float, ours_sparsity: float) -> float:
    """Ratio of non-zero counts, baseline over ours; ``inf`` when ours is fully sparse."""
    for s in (baseline_sparsity, ours_sparsity):
        if not 0.0 <= s <= 1.0:
            raise DomainError(f"sparsity must lie in [0, 1], got {s}")
    if ours_sparsity == 1.0:
        return math.inf
    return (1.0 - baseline_sparsity) / (1.0 - ours_sparsity)


def detect_collapse(test_acc_trace, classes: int, margin: float = COLLAPSE_MARGIN,
                    window: int = COLLAPSE_WINDOW) -> bool:
    evals = [a for a in test_acc_trace if a is not None]
    if len(evals) < MIN_COLLAPSE_EPOCHS:
        raise DomainError(f"collapse detection needs >= {MIN_COLLAPSE_EPOCHS} evaluations, got {len(evals)}")
    return float(np.mean(evals[-window:])) <= 1.0 / classes + margin


def confidence_interval(values, level: float = 0.95):
    """Two-sided t-interval; returns ``(mean, half_width)`` or None for fewer than 2 values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return None
    mean = float(np.mean(v))
    s = float(np.std(v, ddof=1))
    t = float(stats.t.ppf(0.5 + level / 2.0, v.size - 1))
    return mean, t * s / math.sqrt(v.size)


def load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    if isinstance(cfg.data, IdxPaths):
        train = load_idx(cfg.data.train_images, cfg.data.train_labels, split="train")
        test = load_idx(cfg.data.test_images, cfg.data.test_labels, split="test")
        classes = max(train.classes, test.classes)
        return (Dataset(train.features, train.labels, classes, "train"),
                Dataset(test.features, test.labels, classes, "test"))
    return gen_synthetic(cfg.data)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_trace_csv(path, rows, columns=TRACE_COLUMNS) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_trace_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({k: (None if v == "" else (int(v) if k in ("epoch", "layer") else float(v)))
                    for k, v in r.items()})
    return out


def train_seed(cfg: RunConfig, seed: int, train: Dataset, test: Dataset):
    """Train one network; returns ``(trace_rows, layer_rows, net, rng)``."""
    root = Rng(seed)
    net = nn.init_params(cfg.model.architecture(train.dim, train.classes), root.fork("init"))
    state = optim.OptimState.for_network(net)
    train_rng = root.fork("train")
    view = nn.FlatParamView(net)
    trace, layer_rows = [], []
    for epoch in range(cfg.epochs):
        m = optim.run_epoch(net, train, state, cfg.opt, cfg.reg, train_rng, cfg.batch_size)
        evaluate = (epoch + 1) % cfg.eval_period == 0 or epoch == cfg.epochs - 1
        stats_ = nn.layer_stats(net)
        trace.append({
            "epoch": epoch,
            "train_loss": m["train_loss"],
            "train_acc": nn.accuracy(net, train.features, train.labels) if evaluate else None,
            "test_acc": nn.accuracy(net, test.features, test.labels) if evaluate else None,
            "avg_abs_grad": m["avg_abs_grad"],
            "avg_abs_w": stats_["global"]["avg_abs_w"],
            "pi": m["pi"],
            "grad_fraction": m["grad_fraction"],
            "sparsity": sparsity(nn.gather_flat(view, net, "params")),
            "effective_lambda_mean": m["effective_lambda_mean"],
        })
        for k, (g, ls) in enumerate(zip(m["layer_avg_abs_grad"], stats_["layers"])):
            layer_rows.append({"epoch": epoch, "layer": k, "avg_abs_grad": g, "avg_abs_w": ls["avg_abs_w"]})
        log.debug("seed %d epoch %d: %s", seed, epoch, trace[-1])
    return trace, layer_rows, net, root


def train_run(cfg: RunConfig, out_dir=None) -> RunResult:
    """Train every seed of ``cfg`` and aggregate; writes outputs when ``out_dir`` is given."""
    train, test = load_datasets(cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    traces, finals, checkpoints, per_seed = {}, {}, {}, {}
    for seed in cfg.seeds:
        trace, layer_rows, net, root = train_seed(cfg, seed, train, test)
        traces[seed] = trace
        finals[seed] = trace[-1]["test_acc"]
        seed_collapsed = _collapsed([r["test_acc"] for r in trace], train.classes)
        per_seed[seed] = {
            "final_test_acc": trace[-1]["test_acc"],
            "final_train_acc": trace[-1]["train_acc"],
            "final_train_loss": trace[-1]["train_loss"],
            "final_sparsity": trace[-1]["sparsity"],
            "collapsed": seed_collapsed,
        }
        if out is not None:
            write_trace_csv(out / f"trace_seed{seed}.csv", trace)
            write_trace_csv(out / f"layers_seed{seed}.csv", layer_rows, LAYER_COLUMNS)
            ckpt = out / f"checkpoint_seed{seed}.json"
            nn.save_checkpoint(net, ckpt, root.label)
            checkpoints[seed] = ckpt.name
            per_seed[seed].update(trace=f"trace_seed{seed}.csv", checkpoint=ckpt.name)

    accs = [finals[s] for s in cfg.seeds]
    ci = confidence_interval(accs)
    result = RunResult(cfg, traces, finals, float(np.mean(accs)), ci[1] if ci else None,
                       None, out, checkpoints)
    result.collapsed = _collapsed(result.mean_trace("test_acc"), train.classes)

    if out is not None:
        summary = {
            "config": cfg.to_flat(),
            "rng_algorithm": Rng.ALGORITHM,
            "package_version": __version__,
            "classes": train.classes,
            "data_preprocessing": PIXEL_SCALING if isinstance(cfg.data, IdxPaths)
            else "synthetic, unit per-coordinate variance",
            "seeds": {str(s): per_seed[s] for s in cfg.seeds},
            "test_acc_mean": result.test_acc_mean,
            "test_acc_ci95_half_width": result.test_acc_ci,
            "collapsed": result.collapsed,
            "collapse_rule": f"mean of last {COLLAPSE_WINDOW} test evals <= 1/C + {COLLAPSE_MARGIN}",
        }
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return result


def _collapsed(test_trace, classes):
    try:
        return detect_collapse(test_trace, classes)
    except DomainError:
        return None


def tolerance_level(lambdas, runs) -> float | None:
    ok = [lam for lam, r in zip(lambdas, runs) if r.collapsed is False]
    return max(ok) if ok else None


def _run_job(args):
    cfg, out_dir = args
    return train_run(cfg, out_dir)


def _map_runs(cfgs, out_dirs, workers: int):
    jobs = list(zip(cfgs, out_dirs))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


def _check_increasing(values, what):
    values = [float(v) for v in values]
    if not values:
        raise ConfigError(f"empty {what} grid", what)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{what} grid must be strictly increasing: {values}", what)
    return values


def _sweep_dirs(base, lambdas):
    return [base / f"lambda_{lam:.6g}" if base is not None else None for lam in lambdas]


def _finish_sweep(template, lambdas, runs, base) -> SweepResult:
    result = SweepResult(lambdas, runs, tolerance_level(lambdas, runs),
                         template.reg.gate.value, template.reg.kind.value)
    if base is not None:
        write_table(base / "sweep.csv", result.table())
    return result


def lambda_sweep(template: RunConfig, lambdas, out_dir=None, workers: int = 1) -> SweepResult:
    """One :func:`train_run` per lambda under the template's regularizer and gate."""
    lambdas = _check_increasing(lambdas, "lambdas")
    base = Path(out_dir) if out_dir is not None else None
    runs = _map_runs([template.with_reg(lam=lam) for lam in lambdas], _sweep_dirs(base, lambdas), workers)
    return _finish_sweep(template, lambdas, runs, base)


def depth_sweep(template: RunConfig, depths, lambdas, out_dir=None, workers: int = 1) -> dict[int, SweepResult]:
    """Constant-gate lambda sweep at each depth on one shared lambda grid.

    All (depth, lambda) runs go through one worker pool.
    """
    depths = [int(d) for d in _check_increasing(depths, "depths")]
    if len(depths) < 2:
        raise ConfigError("a depth sweep needs at least two depths", "depths")
    lambdas = _check_increasing(lambdas, "lambdas")
    base = Path(out_dir) if out_dir is not None else None
    templates = {d: template.with_model(depth=d).with_reg(gate=Gate.CONSTANT) for d in depths}
    bases = {d: base / f"depth_{d}" if base is not None else None for d in depths}
    cfgs, dirs = [], []
    for d in depths:
        cfgs += [templates[d].with_reg(lam=lam) for lam in lambdas]
        dirs += _sweep_dirs(bases[d], lambdas)
    runs = _map_runs(cfgs, dirs, workers)
    n = len(lambdas)
    results = {d: _finish_sweep(templates[d], lambdas, runs[i * n:(i + 1) * n], bases[d])
               for i, d in enumerate(depths)}
    if base is not None:
        write_table(base / "depth_tolerance.csv",
                    [{"depth": d, "tolerance_level": r.tolerance_level} for d, r in results.items()])
    return results


def write_table(path, rows: list[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0].keys()) if rows else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path

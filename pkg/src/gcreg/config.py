"""Flat ``key = value`` configuration files with dotted keys.

Grammar, one entry per line::

    # comment
    section.key = value

Blank lines and ``#`` comments are ignored; whitespace around ``=`` is
stripped.  Lists (``run.seeds``) are comma separated; ``none`` means unset.
Unknown keys are errors.  :data:`SCHEMA` lists every accepted key.
"""
from __future__ import annotations

from pathlib import Path

from .data import SYNTHETIC_KINDS, SyntheticSpec
from .errors import ConfigError, GcregError
from .optim import OptimizerConfig
from .regularization import Gate, RegKind, RegSchedule


def _int(v):
    return int(v)


def _float(v):
    return float(v)


def _opt_int(v):
    return None if v is None or str(v).lower() == "none" else int(v)


def _str(v):
    return str(v)


def _seeds(v):
    if isinstance(v, (list, tuple)):
        return tuple(int(s) for s in v)
    return tuple(int(s) for s in str(v).split(",") if s.strip())


def _choice(*options):
    def parse(v):
        v = str(v).lower()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


SCHEMA = {
    "model.width": _int,
    "model.depth": _int,
    "model.dropout": _float,
    "model.dropout_layers": _opt_int,
    "model.init_gain": _float,
    "data.kind": _choice(*SYNTHETIC_KINDS, "idx"),
    "data.classes": _int,
    "data.per_class": _int,
    "data.test_per_class": _int,
    "data.dim": _int,
    "data.noise": _float,
    "data.seed": _int,
    "data.informative": _opt_int,
    "data.train_images": _str,
    "data.train_labels": _str,
    "data.test_images": _str,
    "data.test_labels": _str,
    "opt.lr": _float,
    "opt.momentum": _float,
    "opt.lr_halving_period": _int,
    "opt.batch_size": _int,
    "reg.kind": _choice(*(k.value for k in RegKind)),
    "reg.lambda": _float,
    "reg.gate": _choice(*(g.value for g in Gate)),
    "reg.gamma": _int,
    "reg.mu": _float,
    "run.epochs": _int,
    "run.eval_period": _int,
    "run.seeds": _seeds,
}

IDX_KEYS = ("data.train_images", "data.train_labels", "data.test_images", "data.test_labels")
SYNTHETIC_KEYS = ("data.classes", "data.per_class", "data.test_per_class", "data.dim", "data.noise", "data.seed",
                  "data.informative")


def parse_text(text: str, source: str = "<config>") -> dict:
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}", key)
        entries[key] = value
    return entries


def load_file(path) -> dict:
    path = Path(path)
    return parse_text(path.read_text(), str(path))


def to_flat(cfg) -> dict:
    from .experiment import IdxPaths

    m, o, r = cfg.model, cfg.opt, cfg.reg
    flat = {
        "model.width": m.width,
        "model.depth": m.depth,
        "model.dropout": m.dropout,
        "model.dropout_layers": m.dropout_layers,
        "model.init_gain": m.init_gain,
    }
    if isinstance(cfg.data, IdxPaths):
        flat["data.kind"] = "idx"
        flat.update({k: getattr(cfg.data, k.split(".")[1]) for k in IDX_KEYS})
    else:
        d = cfg.data
        flat.update({
            "data.kind": d.kind, "data.classes": d.classes, "data.per_class": d.per_class,
            "data.test_per_class": d.test_per_class, "data.dim": d.dim,
            "data.noise": d.noise, "data.seed": d.seed, "data.informative": d.informative,
        })
    flat.update({
        "opt.lr": o.lr,
        "opt.momentum": o.momentum,
        "opt.lr_halving_period": o.lr_halving_period,
        "opt.batch_size": cfg.batch_size,
        "reg.kind": r.kind.value,
        "reg.lambda": r.lam,
        "reg.gate": r.gate.value,
        "reg.gamma": r.gamma,
        "reg.mu": r.mu,
        "run.epochs": cfg.epochs,
        "run.eval_period": cfg.eval_period,
        "run.seeds": list(cfg.seeds),
    })
    return flat


def from_flat(entries: dict, base=None):
    """Build a RunConfig from ``entries`` layered over ``base`` (defaults if None)."""
    from .experiment import IdxPaths, ModelConfig, RunConfig

    defaults = to_flat(RunConfig())
    values = to_flat(base) if base is not None else dict(defaults)
    if str(entries.get("data.kind", values["data.kind"])).lower() == "idx":
        for k in SYNTHETIC_KEYS:
            values.pop(k, None)
    else:
        for k in SYNTHETIC_KEYS:
            values.setdefault(k, defaults[k])
    for key, raw in entries.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}", key)
        try:
            values[key] = SCHEMA[key](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {raw!r} for {key}: {exc}", key) from exc

    def build(key, fn):
        try:
            return fn()
        except ConfigError:
            raise
        except (GcregError, ValueError) as exc:
            raise ConfigError(f"invalid {key}: {exc}", key) from exc

    model = build("model", lambda: ModelConfig(values["model.width"], values["model.depth"],
                                               values["model.dropout"], values["model.dropout_layers"],
                                               values["model.init_gain"]))
    build("model", lambda: model.architecture(1, 2))
    if values["data.kind"] == "idx":
        missing = [k for k in IDX_KEYS if not values.get(k)]
        if missing:
            raise ConfigError(f"data.kind = idx requires {', '.join(missing)}", missing[0])
        data = IdxPaths(*(values[k] for k in IDX_KEYS))
    else:
        data = SyntheticSpec(values["data.kind"], values["data.classes"], values["data.per_class"],
                             values["data.test_per_class"], values["data.dim"],
                             values["data.noise"], values["data.seed"], values["data.informative"])
        data.validate()
    opt = build("opt", lambda: OptimizerConfig(values["opt.lr"], values["opt.momentum"],
                                               values["opt.lr_halving_period"]))
    sched = build("reg", lambda: RegSchedule(values["reg.kind"], values["reg.lambda"], values["reg.gate"],
                                             values["reg.gamma"], values["reg.mu"]))
    return build("run", lambda: RunConfig(model, data, opt, sched, values["run.epochs"],
                                          values["run.eval_period"], values["run.seeds"],
                                          values["opt.batch_size"]))


def dump_text(cfg) -> str:
    lines = []
    for k, v in to_flat(cfg).items():
        if isinstance(v, list):
            v = ",".join(str(x) for x in v)
        elif v is None:
            v = "none"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"

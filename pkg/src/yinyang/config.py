"""Run configuration: flat ``section.key=value`` text files.

Sections are ``data``, ``split``, ``prop``, ``train``, ``eval`` and ``out``.
Unknown keys are errors. Relative paths resolve against the config file's
directory. :func:`snapshot` writes every field, defaulted or not, so a run can
be repeated from it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .evaluation import VARIANTS, EvalProtocol
from .model import ENCODERS, TrainConfig
from .negsample import MODES
from .propagation import PropagationConfig


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (exit code 2)."""


class DataError(OSError):
    """Missing or unreadable input data (exit code 3)."""


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _strs(s: str) -> tuple:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def _seeds(s: str) -> tuple:
    # "0-9" is shorthand for 0,1,...,9
    s = s.strip()
    if "-" in s and "," not in s:
        lo, hi = (int(x) for x in s.split("-"))
        return tuple(range(lo, hi + 1))
    return _ints(s)


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_PARSERS = {bool: _bool, int: int, float: float, str: str}

# key -> (parser, default); prop.* and train.* come from the dataclasses
SCHEMA: dict = {
    "data.edges": (str, ""),
    "data.features": (str, ""),
    "data.num_nodes": (int, 0),
    "split.ratios": (_floats, (0.7, 0.1, 0.2)),
    "split.seed": (int, 0),
    "split.file": (str, ""),
    "split.pool_size": (int, 5000),
    "split.pool_seed": (int, 0),
    "train.seeds": (_seeds, (0,)),
    "eval.which": (str, "test"),
    "eval.k": (int, 100),
    "eval.metrics": (_strs, ("hits",)),
    "eval.pool": (str, "fixed"),
    "eval.seeds": (_seeds, (0,)),
    "eval.baselines": (_strs, ()),
    "eval.variants": (_strs, ("full",)),
    "eval.random_feature_scale": (float, 0.5),
    "out.dir": (str, "runs/out"),
}


def _dataclass_schema(cls, prefix: str, skip=()):
    out = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        default = f.default
        if f.name == "lambda_k":
            out[f"{prefix}.{f.name}"] = (_floats, tuple(default))
        else:
            out[f"{prefix}.{f.name}"] = (_PARSERS[type(default)], default)
    return out


SCHEMA.update(_dataclass_schema(PropagationConfig, "prop"))
SCHEMA.update(_dataclass_schema(TrainConfig, "train", skip=("seed", "k")))
_PATH_KEYS = ("data.edges", "data.features", "split.file")


@dataclass
class RunConfig:
    edges: str
    features: str
    num_nodes: int
    split_ratios: tuple
    split_seed: int
    split_file: str
    pool_size: int
    pool_seed: int
    prop: PropagationConfig
    train: TrainConfig
    train_seeds: tuple
    protocol: EvalProtocol
    eval_seeds: tuple
    baselines: tuple
    variants: tuple
    random_feature_scale: float
    out_dir: str
    values: dict = field(default_factory=dict)      # resolved key -> value
    defaulted: list = field(default_factory=list)   # keys that fell back to defaults
    source: str = ""


def parse_text(text: str, base_dir: str | os.PathLike = ".", source: str = "<string>") -> RunConfig:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            raw[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    values, defaulted = {}, []
    for key, (_, default) in SCHEMA.items():
        if key in raw:
            values[key] = raw[key]
        else:
            values[key] = default
            defaulted.append(key)
    for key in _PATH_KEYS:
        if values[key]:
            values[key] = str((Path(base_dir) / values[key]).resolve())
    return _build(values, defaulted, source)


def _section(values: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in values.items() if k.startswith(prefix + ".")}


def _build(values: dict, defaulted: list, source: str) -> RunConfig:
    try:
        prop_kw = _section(values, "prop")
        prop_kw["lambda_k"] = list(prop_kw["lambda_k"])
        prop = PropagationConfig(**prop_kw)
        train_kw = {k: v for k, v in _section(values, "train").items() if k != "seeds"}
        tc = TrainConfig(**train_kw, k=values["eval.k"], seed=values["train.seeds"][0] if values["train.seeds"] else 0)
        if tc.sampler not in MODES:
            raise ValueError(f"train.sampler must be one of {MODES}")
        if tc.encoder not in ENCODERS:
            raise ValueError(f"train.encoder must be one of {ENCODERS}")
        if tc.epochs < 1 or tc.N < 1:
            raise ValueError("train.epochs and train.N must be >= 1")
        protocol = EvalProtocol(which=values["eval.which"], k=values["eval.k"], metrics=values["eval.metrics"],
                                pool=values["eval.pool"], pool_size=values["split.pool_size"])
        if not values["train.seeds"] or not values["eval.seeds"]:
            raise ValueError("train.seeds and eval.seeds need at least one seed")
        unknown = [v for v in values["eval.variants"] if v not in VARIANTS]
        if unknown:
            raise ValueError(f"eval.variants: unknown {unknown}; choose from {VARIANTS}")
        bad = [b for b in values["eval.baselines"] if b.upper() not in ("CN", "AA", "RA")]
        if bad:
            raise ValueError(f"eval.baselines: unknown heuristics {bad}")
        if len(values["split.ratios"]) != 3:
            raise ValueError("split.ratios needs three values")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(values["data.edges"], values["data.features"], values["data.num_nodes"],
                     values["split.ratios"], values["split.seed"], values["split.file"], values["split.pool_size"],
                     values["split.pool_seed"], prop, tc, values["train.seeds"], protocol, values["eval.seeds"],
                     tuple(b.upper() for b in values["eval.baselines"]), values["eval.variants"],
                     values["eval.random_feature_scale"], values["out.dir"], values, defaulted, source)


def load(path, overrides=()) -> RunConfig:
    """Read a config file; ``overrides`` are extra ``key=value`` strings applied last."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    text = p.read_text(encoding="utf-8")
    if overrides:
        lines = [ln for ln in text.splitlines()]
        keys = {o.split("=", 1)[0].strip() for o in overrides}
        lines = [ln for ln in lines if ln.split("#", 1)[0].split("=", 1)[0].strip() not in keys]
        text = "\n".join(lines + list(overrides))
    return parse_text(text, p.parent, str(p))


def validate_paths(cfg: RunConfig) -> None:
    if not cfg.edges:
        raise ConfigError(f"{cfg.source}: data.edges is required")
    for key in _PATH_KEYS:
        path = cfg.values[key]
        if path and not Path(path).is_file():
            raise DataError(f"{key}: file not found: {path}")


def snapshot(cfg: RunConfig) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in cfg.values.items())


def preset_path(name: str) -> Path:
    """Location of a shipped preset (``toy``, ``cora``, ``citeseer``, ``pubmed``)."""
    p = Path(__file__).parent / "presets" / f"{name}.cfg"
    if not p.is_file():
        raise ConfigError(f"no preset named {name!r}")
    return p

"""Experiment configuration: nested dataclasses backed by a YAML file.

Every field has a default, so an empty file describes the reference setup:
7 clients, a 0.5 s uplink deadline, SNR 3, sketch rows clamped to [3, 10],
CV threshold 0.5 and 7 fixed rows for the SketchFL baseline.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

ALGORITHMS = ("adapcomfl", "sketchfl", "fedavg")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid config: " + "; ".join(errors))


@dataclass
class LinkConfig:
    deadline_s: float = 0.5
    snr: float = 3.0
    bits_per_value: int = 32


@dataclass
class SketchConfig:
    columns: int = 64
    row_min: int = 3
    row_max: int = 10
    cv_threshold: float = 0.5
    fixed_rows: int = 7
    hash_seed: int | None = None
    injective: bool = False


@dataclass
class PredictorConfig:
    kind: str = "mini_lstm"
    sequence_length: int = 6
    buffer_capacity: int = 60
    hidden: list[int] = field(default_factory=lambda: [16, 8])
    epochs: int = 5
    lr: float = 0.05


@dataclass
class ModelConfig:
    kind: str = "logreg"
    lr: float = 0.5
    local_epochs: int = 1
    batch_size: int | None = None
    hidden: int = 32


@dataclass
class DataConfig:
    samples: int = 2500
    dims: int = 19
    classes: int = 10
    class_separation: float = 5.0
    alpha: float = 0.5
    test_fraction: float = 0.2


@dataclass
class TraceConfig:
    path: str | None = None
    base_bw: float = 0.0015
    amplitude: float = 0.0005
    noise: float = 0.0001
    shift_prob: float = 0.002
    period_s: float = 600.0
    spread: float = 2.0


@dataclass
class ExperimentConfig:
    seed: int = 0
    algorithm: str = "adapcomfl"
    clients: int = 7
    rounds: int = 100
    train_seconds: int = 10
    link: LinkConfig = field(default_factory=LinkConfig)
    sketch: SketchConfig = field(default_factory=SketchConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    traces: TraceConfig = field(default_factory=TraceConfig)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return from_dict(_deep_update(self.to_dict(), changes))


def _deep_update(base: dict, changes: dict) -> dict:
    out = dict(base)
    for key, value in changes.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


def _build(cls, data: Any, prefix: str, errors: list[str]):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{prefix or 'config'}: expected a mapping")
        return cls()
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            errors.append(f"{prefix}{key}: unknown field")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        value = data[name]
        default = getattr(cls(), name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.", errors)
        elif isinstance(default, float) and isinstance(value, str):
            # PyYAML reads exponent-only literals such as 1e-3 as strings
            try:
                kwargs[name] = float(value)
            except ValueError:
                kwargs[name] = value
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate(cfg: ExperimentConfig) -> list[str]:
    errors = []

    def need(cond: bool, name: str, msg: str):
        if not cond:
            errors.append(f"{name}: {msg}")

    need(_is_int(cfg.seed) and cfg.seed >= 0, "seed", "must be a non-negative integer")
    need(cfg.algorithm in ALGORITHMS, "algorithm", f"must be one of {', '.join(ALGORITHMS)}")
    need(_is_int(cfg.clients) and cfg.clients >= 1, "clients", "must be an integer >= 1")
    need(_is_int(cfg.rounds) and cfg.rounds >= 1, "rounds", "must be an integer >= 1")
    need(_is_int(cfg.train_seconds) and cfg.train_seconds >= 1, "train_seconds", "must be an integer >= 1")

    ln = cfg.link
    need(_is_num(ln.deadline_s) and ln.deadline_s > 0, "link.deadline_s", "must be > 0")
    need(_is_num(ln.snr) and ln.snr >= 0, "link.snr", "must be >= 0")
    need(_is_int(ln.bits_per_value) and ln.bits_per_value >= 1, "link.bits_per_value", "must be an integer >= 1")

    sk = cfg.sketch
    need(_is_int(sk.columns) and sk.columns >= 1, "sketch.columns", "must be an integer >= 1")
    need(_is_int(sk.row_min) and sk.row_min >= 1, "sketch.row_min", "must be an integer >= 1")
    need(_is_int(sk.row_max) and sk.row_max >= 1, "sketch.row_max", "must be an integer >= 1")
    if _is_int(sk.row_min) and _is_int(sk.row_max):
        need(sk.row_min <= sk.row_max, "sketch.row_max", "must be >= sketch.row_min")
    need(_is_num(sk.cv_threshold) and sk.cv_threshold >= 0, "sketch.cv_threshold", "must be >= 0")
    need(_is_int(sk.fixed_rows) and sk.fixed_rows >= 1, "sketch.fixed_rows", "must be an integer >= 1")
    need(sk.hash_seed is None or (_is_int(sk.hash_seed) and sk.hash_seed >= 0),
         "sketch.hash_seed", "must be null or a non-negative integer")
    need(isinstance(sk.injective, bool), "sketch.injective", "must be a boolean")

    pr = cfg.predictor
    need(pr.kind in ("last_value", "window_ar", "mini_lstm"), "predictor.kind",
         "must be one of last_value, window_ar, mini_lstm")
    need(_is_int(pr.sequence_length) and pr.sequence_length >= 1, "predictor.sequence_length", "must be an integer >= 1")
    need(_is_int(pr.buffer_capacity) and pr.buffer_capacity >= 1, "predictor.buffer_capacity", "must be an integer >= 1")
    if _is_int(pr.sequence_length) and _is_int(pr.buffer_capacity):
        need(pr.sequence_length < pr.buffer_capacity, "predictor.sequence_length",
             "must be smaller than predictor.buffer_capacity")
    need(isinstance(pr.hidden, list) and len(pr.hidden) >= 1 and all(_is_int(h) and h >= 1 for h in pr.hidden),
         "predictor.hidden", "must be a non-empty list of positive integers")
    need(_is_int(pr.epochs) and pr.epochs >= 0, "predictor.epochs", "must be an integer >= 0")
    need(_is_num(pr.lr) and pr.lr > 0, "predictor.lr", "must be > 0")

    md = cfg.model
    need(md.kind in ("logreg", "mlp"), "model.kind", "must be logreg or mlp")
    need(_is_num(md.lr) and md.lr > 0, "model.lr", "must be > 0")
    need(_is_int(md.local_epochs) and md.local_epochs >= 1, "model.local_epochs", "must be an integer >= 1")
    need(md.batch_size is None or (_is_int(md.batch_size) and md.batch_size >= 1),
         "model.batch_size", "must be null or an integer >= 1")
    need(_is_int(md.hidden) and md.hidden >= 1, "model.hidden", "must be an integer >= 1")

    dt = cfg.data
    need(_is_int(dt.samples) and dt.samples >= 2, "data.samples", "must be an integer >= 2")
    need(_is_int(dt.dims) and dt.dims >= 1, "data.dims", "must be an integer >= 1")
    need(_is_int(dt.classes) and dt.classes >= 2, "data.classes", "must be an integer >= 2")
    need(_is_num(dt.class_separation) and dt.class_separation >= 0, "data.class_separation", "must be >= 0")
    need(_is_num(dt.alpha) and dt.alpha > 0, "data.alpha", "must be > 0")
    need(_is_num(dt.test_fraction) and 0 < dt.test_fraction < 1, "data.test_fraction", "must be in (0, 1)")

    tr = cfg.traces
    need(tr.path is None or isinstance(tr.path, str), "traces.path", "must be null or a file path")
    need(_is_num(tr.base_bw) and tr.base_bw > 0, "traces.base_bw", "must be > 0")
    need(_is_num(tr.amplitude) and tr.amplitude >= 0, "traces.amplitude", "must be >= 0")
    need(_is_num(tr.noise) and tr.noise >= 0, "traces.noise", "must be >= 0")
    need(_is_num(tr.shift_prob) and 0 <= tr.shift_prob <= 1, "traces.shift_prob", "must be in [0, 1]")
    need(_is_num(tr.period_s) and tr.period_s > 0, "traces.period_s", "must be > 0")
    need(_is_num(tr.spread) and tr.spread >= 1, "traces.spread", "must be >= 1")
    return errors


def from_dict(data: dict | None) -> ExperimentConfig:
    errors: list[str] = []
    cfg = _build(ExperimentConfig, data, "", errors)
    if not errors:
        errors = validate(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: not valid YAML ({exc})"]) from None
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)

"""Run configuration and its flat ``key: type = value`` text form."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import query as qd
from .errors import DataError, UsageError
from .model import ModelConfig

_TYPES = {"int": int, "float": float, "bool": bool, "str": str}


@dataclass
class RunConfig:
    dataset: str = ""
    depth_encoding: str = "none"  # none | single | per_level
    split_train: float = 0.75
    split_valid: float = 0.10
    split_test: float = 0.15
    split_coverage: str = "relaxed"  # relaxed | strict
    d: int = 16
    hidden: int = 0
    center_agg: str = "attention"
    center_combine: str = "tangent"
    limit_agg: str = "deepsets"
    share_f: bool = False
    gamma: float = 0.5
    combine_mode: str = "euclidean"
    distance_form: str = "elementwise"
    margin: float = 1.0
    negatives: int = 128
    query_mix: str = ",".join(qd.STRUCTURES)
    curvature: float = 1.0
    trainable_curvature: bool = False
    lr: float = 1e-2
    lr_schedule: str = "cosine"  # constant | cosine
    lr_floor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    constant_speed: bool = True
    epochs: int = 300
    batch_size: int = 128
    queries_per_structure: int = 1000
    eval_queries: int = 200
    sample_attempts: int = 20000
    seed: int = 0
    deterministic: bool = True
    threads: int = 1
    strict_algorithm1: bool = False
    eval_every: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise UsageError("d must be >= 1")
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.batch_size < 1 or self.threads < 1:
            raise UsageError("batch_size and threads must be >= 1")
        if self.depth_encoding not in ("none", "single", "per_level"):
            raise UsageError(f"unknown depth encoding {self.depth_encoding!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise UsageError(f"lr_schedule must be constant or cosine, got {self.lr_schedule!r}")
        if self.split_coverage not in ("relaxed", "strict"):
            raise UsageError(f"split_coverage must be relaxed or strict, got {self.split_coverage!r}")
        self.model_config()

    @property
    def structures(self) -> tuple:
        return tuple(t.strip() for t in self.query_mix.split(",") if t.strip())

    @property
    def ratios(self) -> tuple:
        return (self.split_train, self.split_valid, self.split_test)

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``; cosine decays to ``lr * lr_floor``."""
        if self.lr_schedule == "constant" or self.epochs <= 1:
            return self.lr
        frac = (epoch - 1) / (self.epochs - 1)
        return self.lr * (self.lr_floor + (1 - self.lr_floor) * 0.5 * (1 + math.cos(math.pi * frac)))

    def model_config(self) -> ModelConfig:
        names = {f.name for f in fields(ModelConfig)}
        kw = {k: v for k, v in asdict(self).items() if k in names}
        kw["query_mix"] = self.structures
        return ModelConfig(**kw)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            kind = type(v).__name__
            lines.append(f"{f.name}: {kind} = {_fmt(v)}")
        return "\n".join(lines) + "\n"

    def digest(self) -> bytes:
        return hashlib.sha256(self.to_text().encode("utf-8")).digest()

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                key, rest = line.split(":", 1)
                kind, value = rest.split("=", 1)
            except ValueError:
                raise UsageError(f"{source}:{lineno}: expected 'key: type = value'") from None
            key, kind, value = key.strip(), kind.strip(), value.strip()
            if key not in types:
                raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
            if kind not in _TYPES or kind != types[key]:
                raise UsageError(f"{source}:{lineno}: {key} has type {types[key]}, not {kind!r}")
            kw[key] = _parse(kind, value, f"{source}:{lineno}")
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from None
        cfg = cls.from_text(text, str(path))
        if cfg.dataset and not Path(cfg.dataset).exists():
            raise DataError(f"dataset {cfg.dataset} does not exist")
        return cfg

    def replace(self, **kw) -> "RunConfig":
        return RunConfig(**{**asdict(self), **kw})


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(kind: str, value: str, where: str):
    if kind == "bool":
        if value.lower() not in ("true", "false"):
            raise UsageError(f"{where}: bool must be true or false")
        return value.lower() == "true"
    try:
        return _TYPES[kind](value)
    except ValueError:
        raise UsageError(f"{where}: cannot read {value!r} as {kind}") from None

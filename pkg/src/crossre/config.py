"""Flat run configuration with key=value file loading."""

import dataclasses
from dataclasses import dataclass, fields
from typing import Optional

from .classifier import LossConfig
from .entity_filter import FilterConfig


@dataclass
class TrainConfig:
    # optimisation
    lr: float = 3e-5
    warmup: float = 0.1
    epochs: int = 50
    batch_size: int = 4
    seed: int = 0
    weight_decay: float = 0.01
    clip: float = 1.0
    workers: int = 1
    # model
    d: int = 64
    layers: int = 3
    heads: int = 0  # 0 -> d // 16
    ffn_mult: int = 4
    window: int = 2
    role_markers: bool = False
    dtype: str = "float32"
    # ablations
    no_ic: bool = False
    no_br: bool = False
    no_cp: bool = False
    no_th: bool = False
    snippet_window: int = 2
    # bag shaping
    max_paths: int = 8
    max_bridges: int = 8
    # loss
    loss_mode: str = "corrected"
    theta: float = 0.0
    # input construction
    K: int = 16
    alpha: float = 0.1
    beta: float = 0.01
    gamma: float = 0.001
    s3_exclude_own: bool = False
    max_tokens: int = 512
    similarity: str = "tfidf"

    def filter_config(self) -> FilterConfig:
        return FilterConfig(self.alpha, self.beta, self.gamma, self.K, self.s3_exclude_own)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.theta, self.loss_mode)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class RunConfig(TrainConfig):
    corpus: Optional[str] = None
    bags: Optional[str] = None
    schema: Optional[str] = None
    embeddings: Optional[str] = None
    dev_corpus: Optional[str] = None
    dev_bags: Optional[str] = None
    out: str = "runs/latest"


ABLATIONS = {"IC": "no_ic", "BR": "no_br", "CP": "no_cp", "TH": "no_th"}


def _coerce(value: str, typ):
    if typ is bool:
        v = value.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ is Optional[str]:
        return None if value.strip().lower() in ("", "none") else value.strip()
    return typ(value.strip())


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def apply_overrides(cfg, raw: dict[str, str]):
    types = {f.name: f.type for f in fields(cfg)}
    kw = {}
    for k, v in raw.items():
        if k not in types:
            raise ValueError(f"unknown config key {k!r}")
        kw[k] = _coerce(v, types[k])
    return dataclasses.replace(cfg, **kw)


def load_config(path, cls=RunConfig):
    with open(path, encoding="utf-8") as fh:
        return apply_overrides(cls(), parse_kv(fh.read()))


def dump_config(cfg) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)}\n" for f in fields(cfg))

"""Model and training configuration plus the ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 27
    joints: int = 17
    dim: int = 128
    layers: int = 26
    heads: int = 8
    gcn_k: int = 2
    limb_hidden: int = 16
    ffn_expansion: int = 4
    lambda_v: float = 20.0
    # regression head output is multiplied by this (head predicts decimetres, targets are mm)
    output_scale: float = 100.0
    # optional limb table override file ("name: b1,b2,..." per line); empty means built-in
    limb_table: str = ""

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.frames < 2:
            raise ValueError("frames must be >= 2")
        if not 1 <= self.gcn_k < self.frames:
            raise ValueError(f"gcn_k must satisfy 1 <= k < frames, got {self.gcn_k}")
        if min(self.joints, self.limb_hidden, self.ffn_expansion) < 1:
            raise ValueError("joints, limb_hidden and ffn_expansion must be positive")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 120
    batch_size: int = 32
    early_stop_patience: int = 10
    lr: float = 5e-4
    warmup_start_lr: float = 5e-6
    warmup_epochs: int = 10
    lr_decay: float = 0.9
    lr_patience: int = 2
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    flip_augment: bool = True
    flip_prob: float = 0.5
    # 0 means no cap on optimizer steps
    max_steps: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.early_stop_patience < 1:
            raise ValueError("epochs, batch_size and early_stop_patience must be >= 1")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must lie in [0, 1]")


def _coerce(field: dataclasses.Field, raw: str):
    typ = field.type if isinstance(field.type, str) else field.type.__name__
    if typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: expected a boolean, got {raw!r}")
    if typ == "int":
        return int(raw)
    if typ == "str":
        return raw
    return float(raw)


def parse_config(text: str) -> tuple[ModelConfig, TrainConfig]:
    """Parse ``key = value`` lines (``#`` comments allowed); unknown keys are rejected."""
    model_fields = {f.name: f for f in dataclasses.fields(ModelConfig)}
    train_fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    model_kw, train_kw = {}, {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in model_fields:
            model_kw[key] = _coerce(model_fields[key], raw)
        elif key in train_fields:
            train_kw[key] = _coerce(train_fields[key], raw)
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return ModelConfig(**model_kw), TrainConfig(**train_kw)


def load_config(path: str | Path) -> tuple[ModelConfig, TrainConfig]:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(model: ModelConfig, train: TrainConfig | None = None) -> str:
    lines = [f"{k} = {v}" for k, v in dataclasses.asdict(model).items()]
    if train is not None:
        lines += [f"{k} = {v}" for k, v in dataclasses.asdict(train).items()]
    return "\n".join(lines) + "\n"

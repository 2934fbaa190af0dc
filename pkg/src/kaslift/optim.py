"""Parameter storage, AdamW and the warm-up/plateau learning-rate rule."""

from __future__ import annotations

import math
from collections.abc import Iterator, Sequence

import numpy as np

from .autograd import Tensor

WARMUP_EPOCHS = 10
WARMUP_START_LR = 5e-6
BASE_LR = 5e-4
PLATEAU_FACTOR = 0.9
PLATEAU_PATIENCE = 2


class MissingGradientError(RuntimeError):
    pass


class ParameterStore:
    """Ordered name -> Tensor map with AdamW moment slots and a shared step count."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def scope(self, prefix: str) -> dict[str, Tensor]:
        """Parameters under ``prefix.`` keyed by the remainder of their name."""
        p = prefix + "."
        return {k[len(p):]: t for k, t in self._params.items() if k.startswith(p)}

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def count(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._params.items()}

    def copy(self) -> ParameterStore:
        out = ParameterStore()
        for k, t in self._params.items():
            out.add(k, t.data.copy())
        out.m = {k: v.copy() for k, v in self.m.items()}
        out.v = {k: v.copy() for k, v in self.v.items()}
        out.step = self.step
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> ParameterStore:
        out = cls()
        for k, v in arrays.items():
            out.add(k, v)
        return out


def adamw_step(store: ParameterStore, lr: float = BASE_LR, weight_decay: float = 0.01,
               betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> ParameterStore:
    """One in-place AdamW update with decoupled weight decay; returns ``store``."""
    for name, t in store.items():
        if t.grad is None:
            raise MissingGradientError(f"parameter {name!r} has no gradient")
    b1, b2 = betas
    store.step += 1
    c1 = 1.0 - b1 ** store.step
    c2 = 1.0 - b2 ** store.step
    for name, t in store.items():
        g = t.grad
        m = store.m.get(name)
        if m is None:
            m = store.m[name] = np.zeros_like(t.data)
            store.v[name] = np.zeros_like(t.data)
        v = store.v[name]
        t.data *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return store


def lr_schedule(epoch: int, eval_history: Sequence[float] = (), *,
                base_lr: float = BASE_LR, warmup_start: float = WARMUP_START_LR,
                warmup_epochs: int = WARMUP_EPOCHS, factor: float = PLATEAU_FACTOR,
                patience: int = PLATEAU_PATIENCE) -> float:
    """Learning rate for ``epoch`` given eval metrics of the epochs before it.

    Linear warm-up from ``warmup_start`` to ``base_lr`` over the first
    ``warmup_epochs`` epochs.  Afterwards the rate is multiplied by
    ``factor`` each time the metric has failed to improve for more than
    ``patience`` consecutive epochs (the counter then restarts).  Only
    post-warm-up evaluations take part in the plateau test.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if epoch < warmup_epochs:
        return warmup_start + (base_lr - warmup_start) * epoch / warmup_epochs
    lr = base_lr
    best = math.inf
    bad = 0
    for metric in eval_history[warmup_epochs:epoch]:
        if metric < best:
            best = metric
            bad = 0
        else:
            bad += 1
        if bad > patience:
            lr *= factor
            bad = 0
    return lr

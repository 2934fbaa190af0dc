"""Central finite-difference checks of the autograd gradients.

Relative error of one entry is ``|a - n| / max(|a|, |n|, floor)``.  The
floor is the larger of a tiny absolute value and ``REL_FLOOR`` times the
largest analytic gradient entry of the whole check, so entries whose true
gradient is zero (an attention key bias, for one) are not divided by
rounding noise.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from . import autograd as ag
from . import layers
from .config import ModelConfig
from .kinematics import extract_bones, fuse_limbs, init_composers, toy_limb_table
from .model import blend, embed_streams, forward_batch, init_params
from .optim import ParameterStore
from .skeleton import TOY5
from .training import total_loss

FLOOR = 1e-8
REL_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = FLOOR) -> float:
    a, n = np.asarray(analytic, float).ravel(), np.asarray(numeric, float).ravel()
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def _floor(grads, floor: float) -> float:
    scale = max((float(np.max(np.abs(g))) for g in grads if g is not None and g.size), default=0.0)
    return max(floor, REL_FLOOR * scale)


def check_store(loss_fn: Callable[[], ag.Tensor], store: ParameterStore, h: float = 1e-5,
                max_entries: int | None = None, rng: np.random.Generator | None = None,
                floor: float = FLOOR) -> dict[str, float]:
    """Max relative error per parameter between backprop and central differences.

    ``max_entries`` samples that many entries per tensor (all when None).
    """
    store.zero_grad()
    loss_fn().backward()
    analytic = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in store.items()}
    floor = _floor(analytic.values(), floor)
    rng = rng or np.random.default_rng(0)
    out = {}
    for name, t in store.items():
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, max_entries, replace=False)
        num = np.empty(len(idx))
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(loss_fn().data)
            flat[i] = orig - h
            fm = float(loss_fn().data)
            flat[i] = orig
            num[k] = (fp - fm) / (2 * h)
        out[name] = relative_error(analytic[name].reshape(-1)[idx], num, floor)
    return out


def check_inputs(fn: Callable[..., ag.Tensor], inputs: list[np.ndarray], h: float = 1e-5,
                 floor: float = FLOOR) -> list[float]:
    """Like :func:`check_store` but for plain input arrays of a scalar function."""
    ts = [ag.Tensor(x.copy(), requires_grad=True) for x in inputs]
    fn(*ts).backward()
    floor = _floor([t.grad for t in ts], floor)
    errs = []
    for t in ts:
        flat = t.data.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = float(fn(*ts).data)
            flat[i] = orig - h
            fm = float(fn(*ts).data)
            flat[i] = orig
            num[i] = (fp - fm) / (2 * h)
        errs.append(relative_error(t.grad, num, floor))
    return errs


def _projection_loss(rng, shape):
    # random linear functional keeps the loss smooth and every output entry relevant
    w = rng.normal(size=shape)
    return lambda y: ag.tsum(ag.mul(y, w))


def op_suite(seed: int) -> dict[str, float]:
    """Max relative error per parametric operation for one random seed."""
    rng = np.random.default_rng(seed)
    results = {}

    def run(name, build, forward, out_shape):
        store = ParameterStore()
        build(store)
        loss = _projection_loss(rng, out_shape)
        errs = check_store(lambda: loss(forward(store)), store)
        results[name] = max(errs.values())

    d, N, M = 8, 4, 3
    x = rng.normal(size=(2, N, d))
    kv = rng.normal(size=(2, M, d))

    run("linear", lambda s: layers.init_linear(s, "l", rng, d, 5),
        lambda s: layers.linear(x, s.scope("l")), (2, N, 5))
    run("layer_norm", lambda s: (s.add("n.g", rng.normal(size=d)), s.add("n.b", rng.normal(size=d))),
        lambda s: layers.norm(x, s.scope("n")), (2, N, d))
    run("ffn", lambda s: layers.init_ffn(s, "f", rng, d, 4),
        lambda s: layers.ffn(x, s.scope("f")), (2, N, d))
    run("mhsa", lambda s: layers.init_attention(s, "a", rng, d),
        lambda s: layers.mhsa(x, s.scope("a"), 2), (2, N, d))
    run("mhca", lambda s: layers.init_attention(s, "a", rng, d),
        lambda s: layers.mhca(x, kv, s.scope("a"), 2), (2, N, d))

    A = TOY5.adjacency()
    h5 = rng.normal(size=(2, 5, d))
    run("gcn_spatial", lambda s: layers.init_gcn(s, "g", rng, d),
        lambda s: layers.gcn_spatial(h5, A, s.scope("g")), (2, 5, d))
    h6 = rng.normal(size=(2, 6, d))
    run("gcn_temporal", lambda s: layers.init_gcn(s, "g", rng, d),
        lambda s: layers.gcn_temporal(h6, 2, s.scope("g")), (2, 6, d))

    table = toy_limb_table()
    pose = rng.normal(size=(3, 5, 3))
    bones = extract_bones(pose, TOY5).features
    run("fuse_limbs", lambda s: init_composers(s, table, rng, hid=4),
        lambda s: fuse_limbs(bones, table, s.scope("limbfus")), (3, 5, 3))

    outs = [rng.normal(size=(3, 5, d)) for _ in range(3)]
    run("blend", lambda s: layers.init_linear(s, "b", rng, 3 * d, 3),
        lambda s: blend(outs, s.scope("b")), (3, 5, d))

    xin = rng.normal(size=(3, 5, 3))

    def build_embed(s):
        for st in ("joint", "bone", "limb"):
            layers.init_linear(s, f"embed.{st}", rng, 3, d)
            s.add(f"embed.{st}.pos_s", rng.normal(size=(5, d)))
            s.add(f"embed.{st}.pos_t", rng.normal(size=(3, d)))

    def fwd_embed(s):
        st = embed_streams(xin, xin * 0.5, xin * 2.0, s)
        return ag.add(ag.add(st.joint, st.bone), st.limb)

    run("embed_streams", build_embed, fwd_embed, (3, 5, d))
    return results


def tiny_config() -> ModelConfig:
    return ModelConfig(frames=3, joints=5, dim=8, layers=2, heads=2, gcn_k=2, limb_hidden=4,
                       ffn_expansion=2, lambda_v=2.0, output_scale=1.0)


def model_check(seed: int, max_entries: int | None = 3) -> dict[str, float]:
    """Gradient check of the whole tiny model under the training loss."""
    cfg = tiny_config()
    table = toy_limb_table()
    rng = np.random.default_rng(seed)
    store = init_params(cfg, table, seed=seed)
    # perturb gains/biases away from their 1/0 init so every path carries signal
    for name, t in store.items():
        if name.endswith((".g", ".b")) and t.data.ndim == 1:
            t.data += rng.normal(scale=0.1, size=t.shape)
    x = rng.uniform(-1, 1, size=(2, cfg.frames, cfg.joints, 3))
    x[..., 2] = rng.uniform(0, 1, size=x.shape[:-1])
    gt = rng.normal(size=x.shape)
    loss = lambda: total_loss(forward_batch(x, store, cfg, TOY5, table), gt, cfg.lambda_v)
    return check_store(loss, store, max_entries=max_entries, rng=rng)


def group_of(name: str) -> str:
    parts = name.split(".")
    if parts[0] == "layers":
        return ".".join(parts[:3])
    return ".".join(parts[:2])


def grouped(errs: dict[str, float]) -> dict[str, float]:
    out: dict[str, float] = {}
    for k, v in errs.items():
        g = group_of(k)
        out[g] = max(out.get(g, 0.0), v)
    return out

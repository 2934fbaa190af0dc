"""The three-stream lifting transformer.

Streams are ``(B, T, J, d)`` tensors.  Each layer runs three mixers in
parallel and blends them per position:

* anatomy mixer: spatial then temporal cross-attention, queries from the
  bone stream, keys/values from the limb stream;
* attention branch: spatial then temporal self-attention on the joint stream;
* graph branch: skeleton GCN then top-k frame-similarity GCN on the joint stream.

Every attention sub-block is ``x + Attn(LN(x))`` followed by
``x + FFN(LN(x))``.  The blended output feeds both the joint and bone
streams of the next layer, while the limb stream is re-embedded from the
fixed limb features with that layer's own embedding weights.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autograd as ag
from . import container
from .autograd import ShapeError, Tensor
from .config import ModelConfig
from .kinematics import (LimbTable, default_limb_table, extract_bones, fuse_limbs, init_composers, load_limb_table,
                         toy_limb_table)
from .layers import (ffn, gcn_spatial, gcn_temporal, init_attention, init_ffn, init_gcn, init_linear,
                     init_norm, linear, mhca, mhsa, norm, sub, xavier)
from .optim import ParameterStore
from .skeleton import TOY5, Pose2DClip, Pose3DClip, SkeletonTopology, default_topology

STREAMS = ("joint", "bone", "limb")


@dataclass
class StreamState:
    joint: Tensor
    bone: Tensor
    limb: Tensor
    layer: int = 0


def default_tables(config: ModelConfig) -> tuple[SkeletonTopology, LimbTable]:
    """Built-in topology for ``config.joints``; the limb table comes from ``config.limb_table`` when set."""
    if config.joints == 17:
        topo = default_topology()
        table = default_limb_table(topo)
    elif config.joints == 5:
        topo, table = TOY5, toy_limb_table()
    else:
        raise ValueError(f"no built-in skeleton with {config.joints} joints; pass topology and limb table")
    if config.limb_table:
        table = load_limb_table(config.limb_table, config.joints)
    return topo, table


POS_STD = 0.02


def init_params(config: ModelConfig, table: LimbTable, seed: int = 0) -> ParameterStore:
    """Fresh parameters: Xavier-uniform weights, zero biases, unit layer-norm gains."""
    if table.limb_count != config.joints:
        raise ValueError(f"limb table has {table.limb_count} limbs, config expects {config.joints}")
    rng = np.random.default_rng(seed)
    d, J, T, e = config.dim, config.joints, config.frames, config.ffn_expansion
    store = ParameterStore()
    init_composers(store, table, rng, config.limb_hidden)
    for s in STREAMS:
        init_linear(store, f"embed.{s}", rng, 3, d)
        store.add(f"embed.{s}.pos_s", rng.normal(0.0, POS_STD, (J, d)))
        store.add(f"embed.{s}.pos_t", rng.normal(0.0, POS_STD, (T, d)))
    for i in range(config.layers):
        p = f"layers.{i}"
        if i > 0:
            init_linear(store, f"{p}.limb_embed", rng, 3, d)
        for axis in ("s", "t"):
            init_norm(store, f"{p}.ca_{axis}.norm_q", d)
            init_norm(store, f"{p}.ca_{axis}.norm_kv", d)
            init_attention(store, f"{p}.ca_{axis}.attn", rng, d)
            init_norm(store, f"{p}.ca_{axis}.norm_ffn", d)
            init_ffn(store, f"{p}.ca_{axis}.ffn", rng, d, e)
        for axis in ("s", "t"):
            init_norm(store, f"{p}.sa_{axis}.norm", d)
            init_attention(store, f"{p}.sa_{axis}.attn", rng, d)
            init_norm(store, f"{p}.sa_{axis}.norm_ffn", d)
            init_ffn(store, f"{p}.sa_{axis}.ffn", rng, d, e)
        for axis in ("s", "t"):
            init_gcn(store, f"{p}.gc_{axis}.gcn", rng, d)
            init_norm(store, f"{p}.gc_{axis}.norm_ffn", d)
            init_ffn(store, f"{p}.gc_{axis}.ffn", rng, d, e)
        init_linear(store, f"{p}.blend", rng, 3 * d, 3)
    init_norm(store, "final_norm", d)
    init_linear(store, "head.fc1", rng, d, d)
    init_linear(store, "head.fc2", rng, d, 3)
    return store


def parameter_count(config: ModelConfig, table: LimbTable | None = None) -> int:
    """Exact parameter count, computed without allocating the weights."""
    if table is None:
        table = default_tables(config)[1]
    d, J, T, e, hid = config.dim, config.joints, config.frames, config.ffn_expansion, config.limb_hidden
    limbfus = sum(3 * (m * hid + hid + hid + 1) for m in map(len, table.bones))
    embed = 3 * (3 * d + d + J * d + T * d)
    ln = 2 * d
    attn = 4 * (d * d + d)
    ff = d * e * d + e * d + e * d * d + d
    per_layer = (2 * (2 * ln + attn + ln + ff)       # anatomy mixer
                 + 2 * (ln + attn + ln + ff)         # attention branch
                 + 2 * (2 * d * d + ln + ln + ff)    # graph branch
                 + 3 * d * 3 + 3)                    # blend
    reembed = (config.layers - 1) * (3 * d + d)
    head = ln + d * d + d + d * 3 + 3
    return limbfus + embed + config.layers * per_layer + reembed + head


def _embed(x, p: dict[str, Tensor], frames: int, with_pos: bool = True) -> Tensor:
    h = linear(x, p)
    if with_pos:
        h = ag.add(h, p["pos_s"])
        pos_t = ag.getitem(p["pos_t"], slice(0, frames)) if p["pos_t"].shape[0] != frames else p["pos_t"]
        h = ag.add(h, ag.reshape(pos_t, (frames, 1, pos_t.shape[-1])))
    return h


def embed_streams(x, x_bone, x_limb, params: ParameterStore | dict[str, Tensor]) -> StreamState:
    """Linear 3 -> d embedding plus learned spatial and temporal positional terms, per stream."""
    scope = params.scope("embed") if isinstance(params, ParameterStore) else sub(params, "embed")
    x, x_bone, x_limb = ag.as_tensor(x), ag.as_tensor(x_bone), ag.as_tensor(x_limb)
    if not (x.shape == x_bone.shape == x_limb.shape) or x.shape[-1] != 3:
        raise ShapeError(f"stream inputs disagree: {x.shape}, {x_bone.shape}, {x_limb.shape}")
    T = x.shape[-3]
    if T > scope["joint.pos_t"].shape[0]:
        raise ShapeError(f"clip has {T} frames, model supports at most {scope['joint.pos_t'].shape[0]}")
    return StreamState(
        joint=_embed(x, sub(scope, "joint"), T),
        bone=_embed(x_bone, sub(scope, "bone"), T),
        limb=_embed(x_limb, sub(scope, "limb"), T),
    )


def _to_temporal(h: Tensor) -> Tensor:
    # (B, T, J, d) <-> (B, J, T, d)
    return ag.transpose(h, (0, 2, 1, 3))


def _ffn_block(x, p):
    return ag.add(x, ffn(norm(x, sub(p, "norm_ffn")), sub(p, "ffn")))


def anatomy_mixer(bone: Tensor, limb: Tensor, p: dict[str, Tensor], heads: int) -> Tensor:
    s = sub(p, "ca_s")
    x = ag.add(bone, mhca(norm(bone, sub(s, "norm_q")), norm(limb, sub(s, "norm_kv")), sub(s, "attn"), heads))
    x = _ffn_block(x, s)
    t = sub(p, "ca_t")
    xt, lt = _to_temporal(x), _to_temporal(limb)
    xt = ag.add(xt, mhca(norm(xt, sub(t, "norm_q")), norm(lt, sub(t, "norm_kv")), sub(t, "attn"), heads))
    return _to_temporal(_ffn_block(xt, t))


def attention_branch(joint: Tensor, p: dict[str, Tensor], heads: int) -> Tensor:
    s = sub(p, "sa_s")
    x = ag.add(joint, mhsa(norm(joint, sub(s, "norm")), sub(s, "attn"), heads))
    x = _ffn_block(x, s)
    t = sub(p, "sa_t")
    xt = _to_temporal(x)
    xt = ag.add(xt, mhsa(norm(xt, sub(t, "norm")), sub(t, "attn"), heads))
    return _to_temporal(_ffn_block(xt, t))


def graph_branch(joint: Tensor, adjacency: np.ndarray, k: int, p: dict[str, Tensor]) -> Tensor:
    s = sub(p, "gc_s")
    x = _ffn_block(gcn_spatial(joint, adjacency, sub(s, "gcn")), s)
    t = sub(p, "gc_t")
    xt = _ffn_block(gcn_temporal(_to_temporal(x), k, sub(t, "gcn")), t)
    return _to_temporal(xt)


def blend(outputs: list[Tensor], p: dict[str, Tensor], return_weights: bool = False):
    """Per-position softmax-weighted sum of the mixer outputs."""
    alpha = ag.softmax(linear(ag.concat(outputs, axis=-1), p), axis=-1)
    out = None
    for i, h in enumerate(outputs):
        term = ag.mul(ag.getitem(alpha, (Ellipsis, slice(i, i + 1))), h)
        out = term if out is None else ag.add(out, term)
    return (out, alpha.data) if return_weights else out


def layer_forward(state: StreamState, params: ParameterStore, config: ModelConfig,
                  topo: SkeletonTopology, x_limb, return_blend: bool = False):
    """One transformer layer; returns the next state (limb stream re-embedded for layer+1)."""
    i = state.layer
    p = params.scope(f"layers.{i}")
    h_ac = anatomy_mixer(state.bone, state.limb, p, config.heads)
    h_as = attention_branch(state.joint, p, config.heads)
    h_g = graph_branch(state.joint, topo.adjacency(), config.gcn_k, p)
    h, alpha = blend([h_ac, h_as, h_g], sub(p, "blend"), return_weights=True)
    nxt = i + 1
    if nxt < config.layers:
        limb = limb_stream(x_limb, params, nxt)
    else:
        limb = state.limb
    out = StreamState(joint=h, bone=h, limb=limb, layer=nxt)
    return (out, alpha) if return_blend else out


def limb_stream(x_limb, params: ParameterStore, layer: int) -> Tensor:
    """Limb tokens for ``layer``: layer 0 uses the input embedding, later layers their own
    linear map plus the shared limb positional terms."""
    x_limb = ag.as_tensor(x_limb)
    emb = params.scope("embed.limb")
    if layer == 0:
        return _embed(x_limb, emb, x_limb.shape[-3])
    lin = params.scope(f"layers.{layer}.limb_embed")
    return _embed(x_limb, {**lin, "pos_s": emb["pos_s"], "pos_t": emb["pos_t"]}, x_limb.shape[-3])


def input_features(x2d: np.ndarray, params: ParameterStore, topo: SkeletonTopology,
                   table: LimbTable) -> tuple[np.ndarray, Tensor]:
    """(X_bone, X_limb) for a batch of 2D inputs ``(B, T, J, 3)``."""
    x_bone = extract_bones(x2d, topo).features
    x_limb = fuse_limbs(x_bone, table, params.scope("limbfus"))
    return x_bone, x_limb


def forward_batch(x2d, params: ParameterStore, config: ModelConfig,
                  topo: SkeletonTopology, table: LimbTable) -> Tensor:
    """Predicted 3D poses ``(B, T, J, 3)`` in millimetres for 2D inputs ``(B, T, J, 3)``."""
    x2d = np.asarray(x2d, dtype=np.float64)
    if x2d.ndim != 4 or x2d.shape[2:] != (config.joints, 3):
        raise ShapeError(f"expected input (B, T, {config.joints}, 3), got {x2d.shape}")
    x_bone, x_limb = input_features(x2d, params, topo, table)
    state = embed_streams(x2d, x_bone, x_limb, params)
    for _ in range(config.layers):
        state = layer_forward(state, params, config, topo, x_limb)
    h = norm(state.joint, params.scope("final_norm"))
    h = ag.relu(linear(h, params.scope("head.fc1")))
    return ag.mul(linear(h, params.scope("head.fc2")), config.output_scale)


def model_forward(clip: Pose2DClip, params: ParameterStore, config: ModelConfig,
                  topo: SkeletonTopology | None = None, table: LimbTable | None = None) -> Pose3DClip:
    if topo is None or table is None:
        topo, table = default_tables(config)
    out = forward_batch(clip.data[None], params, config, topo, table)
    return Pose3DClip(out.data[0], clip.action)


def save_checkpoint(params: ParameterStore, path: str | Path) -> None:
    container.write(path, params.arrays())


def load_checkpoint(path: str | Path) -> ParameterStore:
    return ParameterStore.from_arrays({k: v.astype(np.float64) for k, v in container.read(path).items()})

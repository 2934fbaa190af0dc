"""Attention, graph convolution and feed-forward blocks built on the autograd kernel.

Parameters are passed as plain ``dict[str, Tensor]`` scopes (see
``ParameterStore.scope``); every weight matrix is stored ``(in, out)`` and
applied as ``x @ w + b``.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import ShapeError, Tensor
from .optim import ParameterStore


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))


def init_linear(store: ParameterStore, name: str, rng, d_in: int, d_out: int, bias: bool = True):
    store.add(f"{name}.w", xavier(rng, d_in, d_out))
    if bias:
        store.add(f"{name}.b", np.zeros(d_out))


def init_norm(store: ParameterStore, name: str, d: int):
    store.add(f"{name}.g", np.ones(d))
    store.add(f"{name}.b", np.zeros(d))


def init_attention(store: ParameterStore, name: str, rng, d: int):
    for proj in ("q", "k", "v", "o"):
        init_linear(store, f"{name}.{proj}", rng, d, d)


def init_ffn(store: ParameterStore, name: str, rng, d: int, expansion: int):
    init_linear(store, f"{name}.fc1", rng, d, expansion * d)
    init_linear(store, f"{name}.fc2", rng, expansion * d, d)


def init_gcn(store: ParameterStore, name: str, rng, d: int):
    init_linear(store, f"{name}.w1", rng, d, d, bias=False)
    init_linear(store, f"{name}.w2", rng, d, d, bias=False)
    init_norm(store, f"{name}.norm", d)


def sub(p: dict[str, Tensor], prefix: str) -> dict[str, Tensor]:
    pre = prefix + "."
    return {k[len(pre):]: v for k, v in p.items() if k.startswith(pre)}


def linear(x, p: dict[str, Tensor]) -> Tensor:
    y = ag.matmul(x, p["w"])
    return ag.add(y, p["b"]) if "b" in p else y


def norm(x, p: dict[str, Tensor]) -> Tensor:
    return ag.layer_norm(x, p["g"], p["b"])


def ffn(x, p: dict[str, Tensor]) -> Tensor:
    return linear(ag.relu(linear(x, sub(p, "fc1"))), sub(p, "fc2"))


def mhca(query_tokens, kv_tokens, p: dict[str, Tensor], heads: int,
         return_weights: bool = False):
    """Multi-head cross-attention: queries from ``query_tokens``, keys/values from ``kv_tokens``.

    Inputs are ``(..., N, d)`` and ``(..., M, d)`` with matching leading
    dimensions.  Returns ``(..., N, d)`` and optionally the attention
    weights ``(..., h, N, M)``.
    """
    q_in, kv_in = ag.as_tensor(query_tokens), ag.as_tensor(kv_tokens)
    d = q_in.shape[-1]
    if d % heads:
        raise ShapeError(f"feature dim {d} not divisible by heads {heads}")
    if kv_in.shape[-1] != d or q_in.shape[:-2] != kv_in.shape[:-2]:
        raise ShapeError(f"mhca: query {q_in.shape} and key/value {kv_in.shape} disagree")
    lead = q_in.shape[:-2]
    n, m = q_in.shape[-2], kv_in.shape[-2]
    dk = d // heads

    def split(x, length):
        x = ag.reshape(x, (-1, length, heads, dk))
        return ag.transpose(x, (0, 2, 1, 3))

    q = split(linear(q_in, sub(p, "q")), n)
    k = split(linear(kv_in, sub(p, "k")), m)
    v = split(linear(kv_in, sub(p, "v")), m)
    scores = ag.mul(ag.matmul(q, ag.swap_last(k, -1, -2)), 1.0 / np.sqrt(dk))
    weights = ag.softmax(scores, axis=-1)
    ctx = ag.transpose(ag.matmul(weights, v), (0, 2, 1, 3))
    out = linear(ag.reshape(ctx, lead + (n, d)), sub(p, "o"))
    if return_weights:
        return out, weights.data.reshape(lead + (heads, n, m))
    return out


def mhsa(tokens, p: dict[str, Tensor], heads: int, return_weights: bool = False):
    return mhca(tokens, tokens, p, heads, return_weights)


def normalized_adjacency(A: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the row-sum degree of ``A + I``; batched over leading dims."""
    A = np.asarray(A, dtype=np.float64)
    At = A + np.eye(A.shape[-1])
    dinv = 1.0 / np.sqrt(At.sum(axis=-1))
    return dinv[..., :, None] * At * dinv[..., None, :]


def graph_propagate(h, norm_adj: np.ndarray, p: dict[str, Tensor]) -> Tensor:
    """``relu(H + LN(Â H W1 + H W2))`` for a fixed normalized adjacency Â."""
    h = ag.as_tensor(h)
    mixed = ag.add(ag.matmul(ag.matmul(Tensor(norm_adj), h), p["w1.w"]),
                   ag.matmul(h, p["w2.w"]))
    return ag.relu(ag.add(h, norm(mixed, sub(p, "norm"))))


def gcn_spatial(tokens, adjacency: np.ndarray, p: dict[str, Tensor]) -> Tensor:
    """Graph convolution over joints, ``tokens`` shaped ``(..., J, d)``."""
    A = np.asarray(adjacency, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeError(f"adjacency must be square, got {A.shape}")
    if not np.array_equal(A, A.T):
        raise ValueError("spatial adjacency must be symmetric")
    if ag.as_tensor(tokens).shape[-2] != A.shape[0]:
        raise ShapeError(f"tokens {ag.as_tensor(tokens).shape} do not match adjacency {A.shape}")
    return graph_propagate(tokens, normalized_adjacency(A), p)


def topk_similarity_adjacency(features: np.ndarray, k: int) -> np.ndarray:
    """Symmetric 0/1 frame graph (no self-loops) from dot-product similarity.

    ``features`` is ``(..., T, d)``.  Each frame links to its ``k`` most
    similar other frames, ties going to the lower frame index; the edge set
    is then symmetrized.
    """
    T = features.shape[-2]
    if not 1 <= k < T:
        raise ValueError(f"temporal k must satisfy 1 <= k < T, got k={k}, T={T}")
    sim = features @ np.swapaxes(features, -1, -2)
    key = -sim
    idx = np.arange(T)
    key[..., idx, idx] = np.inf
    nearest = np.argsort(key, axis=-1, kind="stable")[..., :k]
    A = np.zeros(sim.shape)
    np.put_along_axis(A, nearest, 1.0, axis=-1)
    return np.maximum(A, np.swapaxes(A, -1, -2))


def gcn_temporal(tokens, k: int, p: dict[str, Tensor]) -> Tensor:
    """Graph convolution over frames; ``tokens`` is ``(..., T, d)`` per joint.

    The top-k graph is rebuilt from the current features and treated as a
    constant (the selection is piecewise constant in the inputs).
    """
    tokens = ag.as_tensor(tokens)
    A = topk_similarity_adjacency(tokens.data, k)
    return graph_propagate(tokens, normalized_adjacency(A), p)

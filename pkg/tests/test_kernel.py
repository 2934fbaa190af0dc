import math

import numpy as np
import pytest

from kaslift import autograd as ag
from kaslift import layers
from kaslift.autograd import ShapeError, Tensor
from kaslift.gradcheck import check_inputs, op_suite
from kaslift.optim import MissingGradientError, ParameterStore, adamw_step, lr_schedule
from kaslift.skeleton import H36M


# ---- core ops -------------------------------------------------------------

def test_softmax_uniform():
    np.testing.assert_array_equal(ag.softmax(Tensor(np.zeros(3))).data, np.full(3, 1 / 3))


def test_layer_norm_constant_vector():
    out = ag.layer_norm(Tensor(np.full((2, 5), 7.0)), np.ones(5), np.zeros(5))
    np.testing.assert_array_equal(out.data, np.zeros((2, 5)))


def test_layer_norm_moments():
    x = np.random.default_rng(0).normal(3, 5, size=(4, 16))
    y = ag.layer_norm(Tensor(x), np.ones(16), np.zeros(16)).data
    assert np.max(np.abs(y.mean(-1))) < 1e-6
    assert np.max(np.abs(y.var(-1) - 1)) < 1e-6


def test_shape_errors_name_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
        ag.add(Tensor(np.ones(2)), Tensor(np.ones(3)))


def test_broadcast_gradient_reduces():
    a = Tensor(np.ones((3, 4)), requires_grad=True)
    b = Tensor(np.ones(4), requires_grad=True)
    (a + b).sum().backward()
    np.testing.assert_array_equal(b.grad, np.full(4, 3.0))


@pytest.mark.parametrize("seed", range(5))
def test_chained_ops_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4))
    w = rng.normal(size=(4, 6))
    g = rng.normal(size=6)
    v = rng.normal(size=(6, 2))

    def f(x, w, g, v):
        h = ag.matmul(x, w)                                 # matmul
        h = ag.layer_norm(h, g, Tensor(np.zeros(6)))        # layer norm
        h = ag.relu(ag.add(h, 0.1))                         # add + relu
        h = ag.softmax(ag.concat([h, ag.mul(h, h)], axis=-1), axis=-1)  # concat, mul, softmax
        h = ag.transpose(ag.matmul(ag.getitem(h, (slice(None), slice(0, 6))), v))
        return ag.mean(h)

    errs = check_inputs(f, [x, w, g, v])
    assert max(errs) < 1e-4


# ---- attention -------------------------------------------------------------

def attn_params(seed, d=16):
    s = ParameterStore()
    rng = np.random.default_rng(seed)
    layers.init_attention(s, "a", rng, d)
    for _, t in s.items():
        t.data[...] = rng.normal(scale=0.4, size=t.shape)
    return s.scope("a")


def loop_attention(q_tok, kv_tok, p, heads):
    d = q_tok.shape[-1]
    dk = d // heads
    W = {k: p[f"{k}.w"].data for k in "qkvo"}
    B = {k: p[f"{k}.b"].data for k in "qkvo"}
    Q, K, V = q_tok @ W["q"] + B["q"], kv_tok @ W["k"] + B["k"], kv_tok @ W["v"] + B["v"]
    ctx = np.zeros((q_tok.shape[0], d))
    for h in range(heads):
        sl = slice(h * dk, (h + 1) * dk)
        for i in range(q_tok.shape[0]):
            scores = [float(Q[i, sl] @ K[j, sl]) / math.sqrt(dk) for j in range(kv_tok.shape[0])]
            m = max(scores)
            e = [math.exp(s - m) for s in scores]
            z = sum(e)
            for j in range(kv_tok.shape[0]):
                ctx[i, sl] += e[j] / z * V[j, sl]
    return ctx @ W["o"] + B["o"]


def test_mhsa_single_token():
    p = attn_params(0)
    x = np.random.default_rng(1).normal(size=(1, 16))
    out, w = layers.mhsa(x, p, 8, return_weights=True)
    expected = (x @ p["v.w"].data + p["v.b"].data) @ p["o.w"].data + p["o.b"].data
    np.testing.assert_allclose(out.data, expected, atol=1e-12)
    assert np.all(w == 1.0)


def test_mhsa_identical_tokens():
    p = attn_params(2)
    x = np.repeat(np.random.default_rng(3).normal(size=(1, 16)), 2, axis=0)
    out = layers.mhsa(x, p, 8).data
    np.testing.assert_array_equal(out[0], out[1])


def test_mhsa_loop_oracle():
    p = attn_params(4)
    x = np.random.default_rng(5).normal(size=(4, 16))
    out = layers.mhsa(x, p, 2).data
    assert np.max(np.abs(out - loop_attention(x, x, p, 2))) < 1e-10


def test_mhca_equals_mhsa_when_tied():
    p = attn_params(6)
    x = np.random.default_rng(7).normal(size=(3, 5, 16))
    np.testing.assert_array_equal(layers.mhca(x, x, p, 4).data, layers.mhsa(x, p, 4).data)


def test_mhca_single_kv_token():
    p = attn_params(8)
    rng = np.random.default_rng(9)
    _, w = layers.mhca(rng.normal(size=(5, 16)), rng.normal(size=(1, 16)), p, 8, return_weights=True)
    assert np.all(w == 1.0)


def test_mhca_loop_oracle():
    p = attn_params(10)
    rng = np.random.default_rng(11)
    q, kv = rng.normal(size=(5, 16)), rng.normal(size=(3, 16))
    out = layers.mhca(q, kv, p, 2).data
    assert np.max(np.abs(out - loop_attention(q, kv, p, 2))) < 1e-10


def test_attention_rows_sum_to_one():
    p = attn_params(12)
    rng = np.random.default_rng(13)
    _, w = layers.mhca(rng.normal(size=(2, 7, 16)) * 5, rng.normal(size=(2, 4, 16)), p, 4, return_weights=True)
    assert np.max(np.abs(w.sum(-1) - 1)) < 1e-9
    assert np.all(w >= 0)


def test_heads_must_divide_dim():
    with pytest.raises(ShapeError, match="divisible"):
        layers.mhsa(np.ones((2, 10)), attn_params(0), 3)


# ---- graph convolution -----------------------------------------------------

def gcn_params(seed, d, zero=False):
    s = ParameterStore()
    rng = np.random.default_rng(seed)
    layers.init_gcn(s, "g", rng, d)
    if not zero:
        for _, t in s.items():
            t.data[...] = rng.normal(scale=0.5, size=t.shape)
    else:
        s["g.w1.w"].data[...] = 0
        s["g.w2.w"].data[...] = 0
    return s.scope("g")


def dense_gcn(H, Ahat, p, eps=1e-5):
    M = Ahat @ H @ p["w1.w"].data + H @ p["w2.w"].data
    mu = M.mean(-1, keepdims=True)
    var = ((M - mu) ** 2).mean(-1, keepdims=True)
    N = (M - mu) / np.sqrt(var + eps) * p["norm.g"].data + p["norm.b"].data
    return np.maximum(H + N, 0)


def test_gcn_zero_collapse():
    H = np.random.default_rng(0).normal(size=(17, 8))
    out = layers.gcn_spatial(H, np.zeros((17, 17)), gcn_params(0, 8, zero=True)).data
    np.testing.assert_array_equal(out, np.maximum(H, 0))


def test_two_node_normalization():
    np.testing.assert_allclose(layers.normalized_adjacency(np.array([[0, 1], [1, 0]])), np.full((2, 2), 0.5))


def test_gcn_spatial_dense_oracle():
    A = H36M.adjacency()
    p = gcn_params(1, 8)
    H = np.random.default_rng(2).normal(size=(17, 8))
    At = A + np.eye(17)
    D = np.diag(1 / np.sqrt(At.sum(1)))
    out = layers.gcn_spatial(H, A, p).data
    assert np.max(np.abs(out - dense_gcn(H, D @ At @ D, p))) < 1e-10


def test_gcn_rejects_asymmetric():
    A = np.zeros((3, 3))
    A[0, 1] = 1
    with pytest.raises(ValueError, match="symmetric"):
        layers.gcn_spatial(np.ones((3, 4)), A, gcn_params(0, 4))


@pytest.mark.parametrize("seed", range(5))
def test_gcn_spatial_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    A = H36M.adjacency()
    p = gcn_params(seed, 8)
    H = rng.normal(size=(3, 17, 8))
    perm = rng.permutation(17)
    out = layers.gcn_spatial(H, A, p).data
    out_p = layers.gcn_spatial(H[:, perm], A[np.ix_(perm, perm)], p).data
    assert np.max(np.abs(out_p - out[:, perm])) < 1e-9
    # the left/right mirror is an automorphism of the skeleton itself
    m = list(H36M.mirror)
    assert np.array_equal(A[np.ix_(m, m)], A)
    assert np.max(np.abs(layers.gcn_spatial(H[:, m], A, p).data - out[:, m])) < 1e-9


def brute_topk(F, k):
    T = len(F)
    A = np.zeros((T, T))
    for i in range(T):
        cands = sorted((j for j in range(T) if j != i), key=lambda j: (-float(F[i] @ F[j]), j))
        for j in cands[:k]:
            A[i, j] = 1
    return np.maximum(A, A.T)


def test_temporal_two_frames():
    A = layers.topk_similarity_adjacency(np.random.default_rng(0).normal(size=(2, 4)), 1)
    np.testing.assert_array_equal(A + np.eye(2), np.ones((2, 2)))


def test_temporal_identical_frames():
    # k = T - 1: every tie-broken top-k set is the complete graph
    H = np.repeat(np.random.default_rng(1).normal(size=(1, 8)), 3, axis=0)
    out = layers.gcn_temporal(H, 2, gcn_params(2, 8)).data
    assert np.max(np.abs(out - out[0])) < 1e-12


def test_temporal_identical_frames_depend_only_on_degree():
    # with T > k + 1 the tie-broken graph is irregular; frames of equal degree still agree
    H = np.repeat(np.random.default_rng(1).normal(size=(1, 8)), 5, axis=0)
    A = layers.topk_similarity_adjacency(H, 2)
    deg = A.sum(1)
    out = layers.gcn_temporal(H, 2, gcn_params(2, 8)).data
    for i in range(5):
        for j in range(5):
            if deg[i] == deg[j]:
                assert np.max(np.abs(out[i] - out[j])) < 1e-12
    assert len(set(deg)) > 1


@pytest.mark.parametrize("seed", range(5))
def test_temporal_topk_oracle(seed):
    rng = np.random.default_rng(seed)
    F = rng.normal(size=(6, 8))
    A = layers.topk_similarity_adjacency(F, 2)
    np.testing.assert_array_equal(A, brute_topk(F, 2))
    p = gcn_params(seed, 8)
    At = A + np.eye(6)
    D = np.diag(1 / np.sqrt(At.sum(1)))
    out = layers.gcn_temporal(F, 2, p).data
    assert np.max(np.abs(out - dense_gcn(F, D @ At @ D, p))) < 1e-10


def test_temporal_ties_go_to_lower_index():
    F = np.array([[1.0, 0], [0, 1], [0, 1], [0, 1]])
    A = layers.topk_similarity_adjacency(F, 1)
    # frame 0 is equally (un)similar to 1, 2, 3 -> picks 1
    assert A[0, 1] == 1 and A[0, 2] == 0 and A[0, 3] == 0


def test_temporal_k_too_large():
    with pytest.raises(ValueError, match="k"):
        layers.gcn_temporal(np.ones((3, 4)), 3, gcn_params(0, 4))


# ---- optimizer and schedule ------------------------------------------------

def scalar_store(value, grad):
    s = ParameterStore()
    s.add("x", np.array([value]))
    s["x"].grad = np.array([grad])
    return s


def test_adamw_zero_gradient_zero_decay():
    s = scalar_store(1.5, 0.0)
    adamw_step(s, lr=5e-4, weight_decay=0.0)
    assert s["x"].data[0] == 1.5


def test_adamw_scalar_oracle():
    lr, wd, b1, b2, eps = 5e-4, 0.01, 0.9, 0.999, 1e-8
    p, g = 0.7, 1.0
    p_dec = p * (1 - lr * wd)
    m = (1 - b1) * g
    v = (1 - b2) * g * g
    mhat, vhat = m / (1 - b1), v / (1 - b2)
    expected = p_dec - lr * mhat / (math.sqrt(vhat) + eps)
    s = scalar_store(p, g)
    adamw_step(s, lr, wd, (b1, b2), eps)
    assert s["x"].data[0] == pytest.approx(expected, abs=1e-15)


def test_adamw_decay_only():
    s = scalar_store(2.0, 0.0)
    adamw_step(s, lr=5e-4, weight_decay=0.01)
    assert s["x"].data[0] == 2.0 * (1 - 5e-4 * 0.01)


def test_adamw_missing_gradient():
    s = ParameterStore()
    s.add("w", np.ones(2))
    with pytest.raises(MissingGradientError, match="'w'"):
        adamw_step(s)


def test_adamw_deterministic():
    rng = np.random.default_rng(0)
    stores = []
    for _ in range(2):
        s = ParameterStore()
        s.add("a", np.arange(6.0).reshape(2, 3))
        stores.append(s)
    grads = [rng.normal(size=(2, 3)) for _ in range(3)]
    for s in stores:
        for g in grads:
            s["a"].grad = g.copy()
            adamw_step(s)
    assert stores[0]["a"].data.tobytes() == stores[1]["a"].data.tobytes()


def test_lr_schedule_anchors():
    assert lr_schedule(0) == 5e-6
    assert lr_schedule(10) == 5e-4
    assert lr_schedule(10, [1.0] * 10) == 5e-4
    assert 5e-6 < lr_schedule(5) < 5e-4


def test_lr_plateau_trace():
    # warm-up evals are ignored; post-warm-up: improve, then three non-improving epochs
    hist = [9.0] * 10 + [5.0, 5.0, 6.0, 5.5, 4.0]
    # hand trace of the plateau rule (patience 2 -> reduce on the 3rd bad epoch)
    assert lr_schedule(11, hist) == 5e-4    # saw 5.0 (best)
    assert lr_schedule(12, hist) == 5e-4    # 5.0 -> bad 1
    assert lr_schedule(13, hist) == 5e-4    # 6.0 -> bad 2
    assert lr_schedule(14, hist) == 5e-4 * 0.9  # 5.5 -> bad 3 > 2: decay, reset
    assert lr_schedule(15, hist) == 5e-4 * 0.9  # 4.0 improves


def test_op_suite_small():
    res = op_suite(0)
    assert max(res.values()) < 1e-4, res

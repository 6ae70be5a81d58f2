"""Attention/MLP forward correctness and checkpoint round-trips.

The attention oracle is a direct scalar re-implementation (loops, no
broadcasting) evaluated on the same parameters; agreement is required to
1e-12. Gradient fidelity of full composites is covered in the acceptance
suite; a smaller composite is checked here.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resiform.autodiff import Tensor, concat
from resiform.nets import (
    Adam,
    ConfigError,
    GatParams,
    MlpParams,
    PolicyParams,
    attention_coefficients,
    gat_encode,
    init_gat,
    init_mlp,
    load_checkpoint,
    masked_softmax,
    mlp_forward,
    save_checkpoint,
)


def scalar_attention_oracle(h_i, h_nbr, mask, p: GatParams):
    """Naive per-neighbor attention, scalar loops only."""
    wq, wk = p.wq.data.T, p.wk.data.T  # (d_out, d_in)
    a = p.att.data.reshape(-1)
    n = h_nbr.shape[0]
    logits = np.full(n, -np.inf)
    for j in range(n):
        if not mask[j]:
            continue
        q = wq @ h_i
        k = wk @ h_nbr[j]
        z = float(np.concatenate([q, k]) @ a)
        logits[j] = z if z >= 0 else p.leaky_slope * z
    alive = [j for j in range(n) if mask[j]]
    alpha = np.zeros(n)
    if alive:
        mx = max(logits[j] for j in alive)
        exps = {j: np.exp(logits[j] - mx) for j in alive}
        total = sum(exps.values())
        for j in alive:
            alpha[j] = exps[j] / total
    return alpha


@pytest.fixture
def gat():
    return init_gat(np.random.default_rng(42), d_in=6, d_out=8)


def test_attention_matches_scalar_oracle(gat):
    rng = np.random.default_rng(7)
    for _ in range(20):
        h_i = rng.normal(size=6)
        h_nbr = rng.normal(size=(4, 6))
        mask = rng.random(4) < 0.7
        alpha = attention_coefficients(Tensor(h_i), Tensor(h_nbr), mask, gat)
        expected = scalar_attention_oracle(h_i, h_nbr, mask, gat)
        np.testing.assert_allclose(alpha.data, expected, atol=1e-12)


def test_single_neighbor_gets_full_weight(gat):
    rng = np.random.default_rng(0)
    alpha = attention_coefficients(
        Tensor(rng.normal(size=6)), Tensor(rng.normal(size=(1, 6))),
        np.array([True]), gat)
    np.testing.assert_allclose(alpha.data, [1.0], atol=1e-15)


def test_identical_neighbors_split_weight(gat):
    rng = np.random.default_rng(1)
    row = rng.normal(size=6)
    alpha = attention_coefficients(
        Tensor(rng.normal(size=6)), Tensor(np.stack([row, row])),
        np.array([True, True]), gat)
    np.testing.assert_allclose(alpha.data, [0.5, 0.5], atol=1e-15)


def test_masked_rows_get_exact_zero(gat):
    rng = np.random.default_rng(2)
    mask = np.array([True, False, True, False])
    alpha = attention_coefficients(
        Tensor(rng.normal(size=6)), Tensor(rng.normal(size=(4, 6))), mask, gat)
    assert alpha.data[1] == 0.0 and alpha.data[3] == 0.0
    assert abs(alpha.data.sum() - 1.0) < 1e-12


def test_all_masked_neutral_encoding(gat):
    rng = np.random.default_rng(3)
    mask = np.zeros(4, dtype=bool)
    alpha = attention_coefficients(
        Tensor(rng.normal(size=6)), Tensor(rng.normal(size=(4, 6))), mask, gat)
    np.testing.assert_array_equal(alpha.data, np.zeros(4))
    s = gat_encode(Tensor(rng.normal(size=6)), Tensor(rng.normal(size=(4, 6))),
                   mask, gat)
    np.testing.assert_allclose(s.data, np.full(8, 0.5), atol=1e-15)


def test_encoding_in_unit_interval(gat):
    rng = np.random.default_rng(4)
    s = gat_encode(Tensor(rng.normal(size=6) * 3), Tensor(rng.normal(size=(5, 6)) * 3),
                   np.ones(5, dtype=bool), gat)
    assert np.all(s.data > 0.0) and np.all(s.data < 1.0)


def test_permutation_equivariance(gat):
    rng = np.random.default_rng(5)
    h_i = rng.normal(size=6)
    h_nbr = rng.normal(size=(5, 6))
    mask = np.array([True, True, False, True, True])
    perm = np.array([3, 0, 4, 1, 2])
    a0 = attention_coefficients(Tensor(h_i), Tensor(h_nbr), mask, gat).data
    a1 = attention_coefficients(Tensor(h_i), Tensor(h_nbr[perm]), mask[perm], gat).data
    np.testing.assert_allclose(a1, a0[perm], atol=1e-14)
    s0 = gat_encode(Tensor(h_i), Tensor(h_nbr), mask, gat).data
    s1 = gat_encode(Tensor(h_i), Tensor(h_nbr[perm]), mask[perm], gat).data
    np.testing.assert_allclose(s1, s0, atol=1e-14)


@settings(deadline=None, max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_softmax_normalized_and_nonnegative(seed, n):
    rng = np.random.default_rng(seed)
    logits = Tensor(rng.normal(size=n) * 5)
    mask = rng.random(n) < 0.6
    alpha = masked_softmax(logits, mask)
    assert np.all(alpha.data >= 0.0)
    if mask.any():
        assert abs(alpha.data.sum() - 1.0) < 1e-12
    else:
        assert alpha.data.sum() == 0.0


def test_batched_matches_single(gat):
    rng = np.random.default_rng(6)
    h_i = rng.normal(size=(3, 6))
    h_nbr = rng.normal(size=(3, 4, 6))
    mask = rng.random((3, 4)) < 0.7
    batched = gat_encode(Tensor(h_i), Tensor(h_nbr), mask, gat).data
    for b in range(3):
        one = gat_encode(Tensor(h_i[b]), Tensor(h_nbr[b]), mask[b], gat).data
        np.testing.assert_allclose(batched[b], one, atol=1e-14)


# -- MLP -----------------------------------------------------------------------


def test_mlp_zero_weights_zero_tanh_output():
    p = MlpParams(
        weights=[Tensor(np.zeros((4, 8)), requires_grad=True),
                 Tensor(np.zeros((8, 2)), requires_grad=True)],
        biases=[Tensor(np.zeros(8), requires_grad=True),
                Tensor(np.zeros(2), requires_grad=True)],
    )
    out = mlp_forward(Tensor(np.ones(4)), p, out_activation="tanh")
    np.testing.assert_array_equal(out.data, np.zeros(2))


def test_mlp_identity_path():
    # Single 1-wide chain with identity weights: relu passes x>0 through, so
    # the output is tanh(x).
    p = MlpParams(
        weights=[Tensor(np.ones((1, 1)), requires_grad=True),
                 Tensor(np.ones((1, 1)), requires_grad=True)],
        biases=[Tensor(np.zeros(1), requires_grad=True),
                Tensor(np.zeros(1), requires_grad=True)],
    )
    x = 0.73
    out = mlp_forward(Tensor([x]), p, out_activation="tanh")
    np.testing.assert_allclose(out.data, [np.tanh(x)], rtol=1e-15)


def test_mlp_matches_loop_oracle():
    rng = np.random.default_rng(8)
    p = init_mlp(rng, [5, 7, 7, 3])
    x = rng.normal(size=5)
    h = x
    for w, b in zip(p.weights[:-1], p.biases[:-1]):
        h = np.maximum(h @ w.data + b.data, 0.0)
    expected = h @ p.weights[-1].data + p.biases[-1].data
    out = mlp_forward(Tensor(x), p, out_activation="identity")
    np.testing.assert_allclose(out.data, expected, atol=1e-12)


def test_dimension_mismatch_raises(gat):
    with pytest.raises(ConfigError):
        mlp_forward(Tensor(np.ones(3)), init_mlp(np.random.default_rng(0), [4, 4, 2]))
    with pytest.raises(ConfigError):
        attention_coefficients(Tensor(np.ones(5)), Tensor(np.ones((2, 5))),
                               np.ones(2, dtype=bool), gat)
    with pytest.raises(ConfigError):
        GatParams(wq=Tensor(np.ones((3, 4))), wk=Tensor(np.ones((3, 4))),
                  wv=Tensor(np.ones((3, 4))), att=Tensor(np.ones((8, 1))),
                  leaky_slope=1.5)


def test_leaky_relu_reference_points():
    t = Tensor(np.array([1.0, -1.0, 0.0]))
    out = t.leaky_relu(0.01)
    np.testing.assert_allclose(out.data, [1.0, -0.01, 0.0], atol=1e-15)


# -- composite gradient check ----------------------------------------------------


def composite_loss(params: PolicyParams, h_i, h_nbr, mask, probe):
    s = gat_encode(Tensor(h_i), Tensor(h_nbr), mask, params.actor_gat)
    x = concat([Tensor(h_i), s], axis=-1)
    out = mlp_forward(x, params.actor_mlp, out_activation="tanh")
    return (out * Tensor(probe)).sum() + params.log_std.square().sum()


def test_gat_mlp_composite_gradcheck():
    rng = np.random.default_rng(9)
    gat = init_gat(rng, 4, 5)
    mlp = init_mlp(rng, [9, 8, 8, 2])
    params = PolicyParams(actor_mlp=mlp, critic_mlp=init_mlp(rng, [9, 4, 1]),
                          log_std=Tensor(rng.normal(size=2) * 0.1, requires_grad=True),
                          actor_gat=gat)
    h_i = rng.normal(size=4)
    h_nbr = rng.normal(size=(3, 4))
    mask = np.array([True, False, True])
    probe = rng.normal(size=2)

    loss = composite_loss(params, h_i, h_nbr, mask, probe)
    loss.backward()
    eps = 1e-5
    for name, p in params.named().items():
        if name.startswith("critic"):
            continue
        assert p.grad is not None, name
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = composite_loss(params, h_i, h_nbr, mask, probe).item()
            flat[i] = orig - eps
            lo = composite_loss(params, h_i, h_nbr, mask, probe).item()
            flat[i] = orig
            fd = (hi - lo) / (2 * eps)
            denom = max(abs(fd), abs(gflat[i]), 1e-6)
            assert abs(fd - gflat[i]) / denom < 1e-4, f"{name}[{i}]"


def test_masked_neighbor_receives_no_gradient():
    rng = np.random.default_rng(10)
    gat = init_gat(rng, 4, 5)
    h_nbr = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    mask = np.array([True, False, True])
    s = gat_encode(Tensor(rng.normal(size=4)), h_nbr, mask, gat)
    s.sum().backward()
    np.testing.assert_array_equal(h_nbr.grad[1], np.zeros(4))
    assert np.any(h_nbr.grad[0] != 0.0)


# -- checkpoints -----------------------------------------------------------------


def make_policy_params(rng, with_gat=True):
    return PolicyParams(
        actor_mlp=init_mlp(rng, [22, 16, 16, 3]),
        critic_mlp=init_mlp(rng, [22, 16, 16, 1]),
        log_std=Tensor(rng.normal(size=3), requires_grad=True),
        actor_gat=init_gat(rng, 6, 16) if with_gat else None,
        critic_gat=init_gat(rng, 6, 16) if with_gat else None,
    )


@pytest.mark.parametrize("with_gat", [True, False])
def test_checkpoint_roundtrip_bit_exact(tmp_path, with_gat):
    rng = np.random.default_rng(11)
    params = make_policy_params(rng, with_gat)
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, params, meta={"seed": 3, "config_hash": "abc"})
    loaded, meta = load_checkpoint(path)
    assert meta == {"seed": 3, "config_hash": "abc"}
    orig = params.named()
    for name, t in loaded.named().items():
        assert np.array_equal(t.data, orig[name].data), name
        assert t.data.dtype == np.float64


def test_snapshot_restore():
    rng = np.random.default_rng(12)
    params = make_policy_params(rng)
    snap = params.snapshot()
    for t in params.all_tensors():
        t.data = t.data + 1.0
    params.restore(snap)
    for name, t in params.named().items():
        assert np.array_equal(t.data, snap[name])


def test_adam_first_step_is_sign_descent():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, -3.0])
    opt = Adam([p], lr=0.01)
    opt.step()
    # First Adam step moves each coordinate by ~lr against the gradient sign.
    np.testing.assert_allclose(p.data, [1.0 - 0.01, -2.0 + 0.01], rtol=1e-6)

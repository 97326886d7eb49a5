import numpy as np
import pytest

from conftest import randomize
from ditnano.arch_plan import DitConfig, count_params
from ditnano.errors import NumericError, ShapeError, StateError
from ditnano.tiny_dit.autograd import Tensor, no_grad
from ditnano.tiny_dit.model import (
    EmaState,
    backward,
    canonical_order,
    cfg_guide,
    decode_head,
    ema_update,
    embed,
    forward,
    init_model,
    param_specs,
    patchify,
    unpatchify,
)
from oracles import assert_gradients_close, finite_difference

CFG = DitConfig(depth=5, width=64, heads=8)


def test_init_output_is_exactly_zero():
    m = init_model(CFG, seed=3)
    rng = np.random.default_rng(0)
    out = forward(m, rng.standard_normal((2, 3, 32, 32)), [1, None]).image.data
    assert out.shape == (2, 3, 32, 32)
    assert not out.any()


def test_init_blocks_are_identity():
    cfg = DitConfig(3, 16, 4, image_size=8)
    m = init_model(cfg, seed=1)
    z = np.random.default_rng(1).standard_normal((3, 8, 8))
    trace = forward(m, z, 2)
    x0 = embed(m, Tensor(z[None].astype(np.float32))).data[0]
    for layer in range(1, 4):
        np.testing.assert_array_equal(trace.tap(layer).data, x0)


def test_init_deterministic_and_counted():
    a, b = init_model(CFG, 0), init_model(CFG, 0)
    assert all(np.array_equal(a[k].data, b[k].data) for k in a.params)
    assert a.num_scalars() == count_params(CFG).total
    assert not np.array_equal(a["pos_embed"].data, init_model(CFG, 1)["pos_embed"].data)


def test_init_scheme():
    m = init_model(CFG, 0, dtype=np.float64)
    for name, _, kind in param_specs(CFG):
        arr = m[name].data
        if kind == "zeros":
            assert not arr.any(), name
        else:
            assert np.abs(arr).max() <= 0.04 + 1e-12 and 0.01 < arr.std() < 0.03, name


def test_key_set_is_function_of_config():
    assert set(init_model(CFG, 0).params) == set(init_model(CFG, 9).params)
    assert [n for n, *_ in param_specs(CFG)] == list(init_model(CFG, 0).params)


def test_forward_is_bit_deterministic(tiny_model):
    z = np.random.default_rng(0).standard_normal((3, 8, 8))
    a, b = forward(tiny_model, z, 1), forward(tiny_model, z, 1)
    assert np.array_equal(a.image.data, b.image.data)
    assert all(np.array_equal(x.data, y.data) for x, y in zip(a.taps, b.taps))


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_permutation_equivariance_is_exact(dtype):
    cfg = DitConfig(3, 32, 4, image_size=8)
    m = randomize(init_model(cfg, 0, dtype=dtype), seed=5)
    m["pos_embed"].data[...] = 0
    rng = np.random.default_rng(11)
    z = rng.standard_normal((2, 3, 8, 8)).astype(dtype)
    for _ in range(5):
        perm = rng.permutation(cfg.num_tokens)
        zp = unpatchify(Tensor(patchify(Tensor(z), 2).data[:, perm]), 2, 3).data
        with no_grad():
            a, b = forward(m, z, [0, None]), forward(m, zp, [0, None])
        assert len(a.taps) == cfg.depth
        for ta, tb in zip(a.taps, b.taps):
            assert np.array_equal(ta.data[:, perm], tb.data)


def test_canonical_order_handles_ties():
    x = np.array([[[1.0, 2.0], [0.0, 5.0], [1.0, 2.0]]])
    order = canonical_order(x)
    assert sorted(order[0]) == [0, 1, 2] and order[0][0] == 1


def test_patchify_roundtrip_and_layout():
    x = np.arange(2 * 3 * 4 * 4, dtype=np.float64).reshape(2, 3, 4, 4)
    t = patchify(Tensor(x), 2).data
    assert t.shape == (2, 4, 12)
    # token 1 is the top-right patch; features are ordered (row, col, channel)
    np.testing.assert_array_equal(t[0, 1, :3], x[0, :, 0, 2])
    np.testing.assert_array_equal(unpatchify(Tensor(t), 2, 3).data, x)


def test_decode_head_of_last_tap_is_output(tiny_model):
    z = np.random.default_rng(2).standard_normal((3, 8, 8))
    tr = forward(tiny_model, z, 0)
    img = decode_head(tiny_model, tr.tap(tiny_model.cfg.depth), tr.cond)
    assert img.shape == (3, 8, 8)
    np.testing.assert_array_equal(img.data, tr.image.data)


def test_decode_head_zero_init_and_shape_error(tiny_cfg):
    m = init_model(tiny_cfg, 0)
    tr = forward(m, np.ones((3, 8, 8)), None)
    tokens = Tensor(np.random.default_rng(0).standard_normal((tiny_cfg.num_tokens, tiny_cfg.width)))
    assert not decode_head(m, tokens, tr.cond).data.any()
    with pytest.raises(ShapeError):
        decode_head(m, Tensor(np.ones((3, tiny_cfg.width))), tr.cond)


def test_forward_shape_and_class_errors(tiny_model):
    with pytest.raises(ShapeError):
        forward(tiny_model, np.ones((3, 4, 4)))
    with pytest.raises(ShapeError):
        forward(tiny_model, np.ones((3, 8, 8)), 3)


def test_null_class_differs_from_class(tiny_model):
    z = np.ones((3, 8, 8))
    assert not np.array_equal(forward(tiny_model, z, 0).image.data, forward(tiny_model, z, None).image.data)
    assert np.array_equal(forward(tiny_model, z, -1).image.data, forward(tiny_model, z, None).image.data)


def test_backward_at_init_matches_zero_gate_pattern(tiny_cfg):
    m = init_model(tiny_cfg, 0, dtype=np.float64)
    z = np.random.default_rng(0).standard_normal((3, 8, 8))
    grads = backward(forward(m, z, 1).image.sum(), m)
    np.testing.assert_array_equal(grads["final.linear.bias"], np.full(tiny_cfg.patch_dim, tiny_cfg.num_tokens))
    assert grads["final.linear.weight"].any()
    for name, g in grads.items():
        if name.startswith(("blocks.", "x_embed", "pos_embed", "t_embed", "y_embed", "final.adaLN")):
            assert not g.any(), name


def test_backward_constant_and_nonfinite(tiny_model):
    grads = backward(Tensor(np.array(3.0)), tiny_model)
    assert set(grads) == set(tiny_model.params) and not any(g.any() for g in grads.values())
    with pytest.raises(NumericError):
        backward(Tensor(np.array(np.nan)), tiny_model)


def test_backward_matches_finite_differences(tiny_model):
    """Every weight of a randomized float64 model, central differences, rtol 1e-3."""
    assert tiny_model.num_scalars() <= 10_000
    z = np.random.default_rng(4).standard_normal((2, 3, 8, 8))
    target = np.random.default_rng(5).standard_normal((2, 3, 8, 8))

    def loss():
        return ((forward(tiny_model, z, [0, None]).image - target).square().mean() + forward(tiny_model, z, [2, 1]).tap(1).mean())

    analytic = backward(loss(), tiny_model)
    numeric = finite_difference(lambda: loss().item(), tiny_model.arrays())
    assert_gradients_close(analytic, numeric)


def test_cfg_guide():
    c, u = np.array([2.0, -1.0, 0.3]), np.array([1.0, 4.0, 0.7])
    assert np.array_equal(cfg_guide(c, u, 1.0), c)
    assert np.array_equal(cfg_guide(c, u, 0.0), u)
    assert cfg_guide(2.0, 1.0, 1.5) == 2.5
    np.testing.assert_allclose(cfg_guide(c, u, 1.5), u + 1.5 * (c - u), rtol=1e-15)
    with pytest.raises(ShapeError):
        cfg_guide(c, u[:2], 1.5)


def test_ema_update_cases(tiny_cfg):
    m = init_model(tiny_cfg, 0, dtype=np.float64)
    live = {k: np.full(v.shape, 2.0) for k, v in m.params.items()}
    m = m.with_weights(live)
    zero = EmaState({k: np.zeros(v.shape) for k, v in live.items()}, 0.0)
    assert all(np.array_equal(v, live[k]) for k, v in ema_update(zero, m).shadow.items())
    one = EmaState({k: np.zeros(v.shape) for k, v in live.items()}, 1.0)
    assert all(not v.any() for v in ema_update(one, m).shadow.values())
    half = EmaState({k: np.zeros(v.shape) for k, v in live.items()}, 0.5)
    assert all(np.all(v == 1.0) for v in ema_update(half, m).shadow.values())
    broken = EmaState({"nope": np.zeros(1)}, 0.5)
    with pytest.raises(StateError):
        ema_update(broken, m)

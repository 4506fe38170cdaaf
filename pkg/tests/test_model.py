import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from epls.errors import NumericalError, ShapeError
from epls.model import (
    LOGISTIC,
    ModelParams,
    check_finite,
    forward,
    gradient,
    init_params,
    l2_loss,
    limit_unit_norm,
    logistic,
    onehot_gradient,
    onehot_loss,
    project_norm_gradient_,
)
from epls.target import remap_target

H_EXAMPLE = np.array([[0.9, 0.3], [0.8, 0.1]])


def test_forward_zero_data_gives_half():
    p = init_params(5, 3, seed=0)
    H = forward(np.zeros((4, 5)), ModelParams(p.W, np.zeros(3)))
    assert np.array_equal(H, np.full((4, 3), 0.5))


def test_forward_hand_value():
    H = forward([[1.0, 0.0]], ModelParams([[2.0, 0.0], [0.0, 2.0]], [0.0, 0.0]))
    np.testing.assert_allclose(H, [[0.8807970779778823, 0.5]], rtol=0, atol=1e-15)


def test_forward_matches_loop_oracle(rng):
    D, W, b = rng.normal(size=(4, 6)), rng.normal(size=(6, 3)), rng.normal(size=3)
    expected = oracles.forward(D.tolist(), W.tolist(), b.tolist())
    np.testing.assert_allclose(forward(D, ModelParams(W, b)), expected, rtol=1e-13)


def test_forward_shape_mismatch():
    with pytest.raises(ShapeError):
        forward(np.zeros((2, 4)), init_params(3, 2))


def test_logistic_extreme_inputs_stay_finite():
    out = logistic(np.array([-1e4, -50.0, 0.0, 50.0, 1e4]))
    assert np.isfinite(out).all()
    assert out[0] == 0.0 and out[-1] == 1.0 and out[2] == 0.5


@pytest.mark.parametrize("T, expected", [
    ([[1, 0], [0, 1]], 1.55),
    ([[0, 1], [1, 0]], 1.35),
])
def test_l2_loss_hand_values(T, expected):
    assert l2_loss(H_EXAMPLE, T) == pytest.approx(expected, abs=1e-15)


def test_l2_loss_identity_and_shape_error():
    assert l2_loss(H_EXAMPLE, H_EXAMPLE) == 0.0
    with pytest.raises(ShapeError):
        l2_loss(H_EXAMPLE, np.zeros((2, 3)))


def test_onehot_loss_identity(rng):
    H = rng.random((7, 4))
    w = rng.integers(0, 4, 7)
    direct = l2_loss(H, remap_target(w, 4))
    rows = np.arange(7)
    identity = float((H ** 2).sum() + 7 - 2 * H[rows, w].sum())
    assert onehot_loss(H, w) == pytest.approx(direct, rel=1e-13)
    assert identity == pytest.approx(direct, rel=1e-13)


def test_gradient_zero_residual():
    H = np.full((3, 2), 0.3)
    g = gradient(np.ones((3, 4)), H, H)
    assert not g.dW.any() and not g.db.any()


def test_gradient_matches_central_differences(rng):
    D, W, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 3)) * 0.5, rng.normal(size=3) * 0.5
    T = remap_target(rng.integers(0, 3, 3), 3)
    g = gradient(D, forward(D, ModelParams(W, b)), T)
    dW, db = oracles.numeric_gradient(D.tolist(), W.tolist(), b.tolist(), T.tolist())
    np.testing.assert_allclose(g.dW, dW, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(g.db, db, rtol=1e-6, atol=1e-9)


def test_onehot_gradient_equals_dense(rng):
    D = rng.normal(size=(6, 5))
    p = init_params(5, 4, seed=3)
    H = forward(D, p)
    w = rng.integers(0, 4, 6)
    dense = gradient(D, H, remap_target(w, 4))
    sparse = onehot_gradient(D, H.copy(), w, overwrite_h=True)
    np.testing.assert_allclose(sparse.dW, dense.dW, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(sparse.db, dense.db, rtol=1e-13, atol=1e-15)


def test_gradient_shape_error():
    with pytest.raises(ShapeError):
        gradient(np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((3, 2)))


@pytest.mark.parametrize("column, expected", [
    ([2.0, 0.0], [1.0, 0.0]),
    ([0.3, 0.4], [0.3, 0.4]),
    ([0.0, 0.0], [0.0, 0.0]),
])
def test_limit_unit_norm_examples(column, expected):
    p = ModelParams(np.array(column)[:, None], [5.0])
    out = limit_unit_norm(p)
    np.testing.assert_array_equal(out.W[:, 0], expected)
    assert out.b[0] == 5.0
    assert p.W[0, 0] == column[0]  # input untouched


def test_limit_unit_norm_always_mode():
    out = limit_unit_norm(ModelParams([[0.3, 0.0], [0.4, 0.0]], [0, 0]), always=True)
    np.testing.assert_allclose(out.W, [[0.6, 0.0], [0.8, 0.0]])


def test_projection_removes_only_outward_radial_part():
    W = np.array([[1.0, 0.5], [0.0, 0.0]])
    p = ModelParams(W, [0.0, 0.0])
    g = onehot_gradient(np.eye(2), np.full((2, 2), 0.5), [0, 1])  # any shapes
    g.dW[:] = [[-2.0, -2.0], [1.0, 1.0]]
    project_norm_gradient_(p, g)
    # column 0 is on the limit and -dW points outward: radial part removed
    np.testing.assert_allclose(g.dW[:, 0], [0.0, 1.0])
    # column 1 is inside the ball: untouched
    np.testing.assert_allclose(g.dW[:, 1], [-2.0, 1.0])


def test_init_params_contract():
    a, b = init_params(100, 7, seed=5), init_params(100, 7, seed=5)
    assert np.array_equal(a.W, b.W) and not a.b.any()
    assert np.abs(a.W).max() <= 0.1
    assert not np.array_equal(a.W, init_params(100, 7, seed=6).W)
    assert a.activation is LOGISTIC
    with pytest.raises(ShapeError):
        init_params(0, 3)


def test_check_finite():
    p = init_params(2, 2)
    check_finite(p)
    p.W[0, 0] = np.nan
    with pytest.raises(NumericalError):
        check_finite(p)


def test_params_shape_validation():
    with pytest.raises(ShapeError):
        ModelParams(np.zeros((3, 2)), np.zeros(3))


finite = st.floats(-5, 5, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_property_forward_in_open_unit_interval(n, d, h, seed):
    r = np.random.default_rng(seed)
    H = forward(r.normal(size=(n, d)), ModelParams(r.normal(size=(d, h)), r.normal(size=h)))
    assert ((H > 0) & (H < 1)).all()


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (4, 3), elements=finite))
def test_property_limit_unit_norm_idempotent(W):
    p = ModelParams(W, np.zeros(3))
    once = limit_unit_norm(p)
    twice = limit_unit_norm(once)
    assert np.array_equal(once.W, twice.W)
    assert (np.linalg.norm(once.W, axis=0) <= 1 + 1e-12).all()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_property_onehot_loss_identity(n, h, seed):
    r = np.random.default_rng(seed)
    H = r.random((n, h))
    w = r.integers(0, h, n)
    expected = float((H ** 2).sum()) + n - 2 * float(H[np.arange(n), w].sum())
    assert l2_loss(H, remap_target(w, h)) == pytest.approx(expected, rel=1e-12, abs=1e-12)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cabin_slu.errors import EmptyInputError, NumericError, ShapeError
from cabin_slu.numerics import (
    AdamState,
    LstmCellParams,
    adam_step,
    bilstm_forward,
    cross_entropy,
    glorot_init,
    grad_check,
    grad_check_detail,
    lstm_cell,
    relative_error,
    softmax,
    softmax_ce,
)

from gradcases import CASES

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


# --- glorot_init ---------------------------------------------------------

def test_glorot_bound_and_shape():
    W = glorot_init(3, 4, seed=7)
    assert W.shape == (3, 4)
    assert np.all(np.abs(W) <= math.sqrt(6 / 7))


def test_glorot_deterministic():
    assert np.array_equal(glorot_init(3, 4, seed=7), glorot_init(3, 4, seed=7))


def test_glorot_seeds_differ():
    assert not np.array_equal(glorot_init(2, 2, seed=1), glorot_init(2, 2, seed=2))


@pytest.mark.parametrize("shape", [(0, 3), (3, 0)])
def test_glorot_zero_dim(shape):
    with pytest.raises(ShapeError):
        glorot_init(*shape, seed=0)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(0, 2 ** 31))
def test_glorot_bound_property(r, c, seed):
    assert np.all(np.abs(glorot_init(r, c, seed)) <= math.sqrt(6 / (r + c)))


# --- softmax / cross-entropy ----------------------------------------------

def test_softmax_examples():
    assert np.allclose(softmax(np.array([0.0, 0.0])), [0.5, 0.5], rtol=0, atol=1e-15)
    assert np.allclose(softmax(np.array([0.0, math.log(3)])), [0.25, 0.75], rtol=0, atol=1e-15)


@given(arrays(np.float64, st.integers(1, 12), elements=finite), st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(x, c):
    p = softmax(x)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.allclose(softmax(x + c), p, rtol=1e-9, atol=1e-12)


def test_softmax_large_logits_stable():
    p = softmax(np.array([1000.0, 1000.0, -1000.0]))
    assert np.all(np.isfinite(p))
    assert p[0] == pytest.approx(0.5)


def test_cross_entropy_examples():
    assert cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0
    for gold in range(4):
        assert cross_entropy(np.full(4, 0.25), gold) == pytest.approx(1.386294, abs=1e-6)
    assert cross_entropy(np.array([1.0, 0.0]), 1) == pytest.approx(27.631, abs=1e-3)
    assert cross_entropy(np.array([1.0, 0.0]), 1) == -math.log(1e-12)


@pytest.mark.parametrize("gold", [-1, 3])
def test_cross_entropy_out_of_range(gold):
    with pytest.raises(IndexError):
        cross_entropy(np.full(3, 1 / 3), gold)


@given(arrays(np.float64, st.integers(1, 10), elements=finite), st.data())
def test_softmax_ce_gradient_closed_form(z, data):
    gold = data.draw(st.integers(0, z.size - 1))
    loss, probs, d = softmax_ce(z, gold)
    onehot = np.zeros(z.size)
    onehot[gold] = 1.0
    assert np.array_equal(d, probs - onehot)
    assert loss >= 0


# --- LSTM / Bi-LSTM --------------------------------------------------------

def test_bilstm_zero_weights_give_zero_outputs(rng):
    X = rng.normal(size=(5, 3))
    out = bilstm_forward(X, LstmCellParams.zeros(3, 4), LstmCellParams.zeros(3, 4))
    assert np.array_equal(out, np.zeros((5, 8)))


def test_bilstm_shape(rng):
    out = bilstm_forward(rng.normal(size=(5, 6)), LstmCellParams.init(6, 8, 0), LstmCellParams.init(6, 8, 1))
    assert out.shape == (5, 16)


def _cell_oracle(p, x):
    # independent one-step LSTM from zero state, gate by gate
    H = p.hidden_dim
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    z = {g: p.W[k * H:(k + 1) * H] @ x + p.b[k * H:(k + 1) * H] for k, g in enumerate("ifog")}
    c = sig(z["i"]) * np.tanh(z["g"])
    return sig(z["o"]) * np.tanh(c)


def test_bilstm_single_token_matches_cell(rng):
    fwd, bwd = LstmCellParams.init(3, 5, 2), LstmCellParams.init(3, 5, 3)
    x = rng.normal(size=3)
    out = bilstm_forward(x[None, :], fwd, bwd)
    h, _ = lstm_cell(fwd, x, np.zeros(5), np.zeros(5))
    assert np.allclose(out[0, :5], _cell_oracle(fwd, x), rtol=1e-12, atol=1e-14)
    assert np.array_equal(out[0, :5], h)
    assert np.allclose(out[0, 5:], _cell_oracle(bwd, x), rtol=1e-12, atol=1e-14)


def test_bilstm_errors(rng):
    p = LstmCellParams.init(3, 2, 0)
    with pytest.raises(EmptyInputError):
        bilstm_forward(np.zeros((0, 3)), p, p)
    with pytest.raises(ShapeError):
        bilstm_forward(rng.normal(size=(2, 4)), p, p)


def test_lstm_params_gate_view():
    p = LstmCellParams.init(3, 2, 0)
    W_f, U_f, b_f = p.gate("f")
    assert W_f.shape == (2, 3) and U_f.shape == (2, 2)
    assert np.array_equal(b_f, np.ones(2))
    assert np.array_equal(p.gate("i")[2], np.zeros(2))
    with pytest.raises(ShapeError):
        LstmCellParams(np.zeros((8, 3)), np.zeros((8, 3)), np.zeros(8))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_bilstm_time_reversal(T, D, H, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(T, D))
    f, b = LstmCellParams.init(D, H, r), LstmCellParams.init(D, H, r)
    # running the reversed sequence with the cells swapped mirrors the output halves
    out = bilstm_forward(X, f, b)
    rev = bilstm_forward(X[::-1], b, f)
    assert rev.shape[0] == T
    assert np.array_equal(rev[:, H:], out[::-1, :H])
    assert np.array_equal(rev[:, :H], out[::-1, H:])


def test_bilstm_pure(rng):
    X = rng.normal(size=(4, 3))
    f, b = LstmCellParams.init(3, 4, 0), LstmCellParams.init(3, 4, 1)
    a = bilstm_forward(X, f, b)
    assert np.array_equal(a, bilstm_forward(X.copy(), f, b))


# --- gradient checks -------------------------------------------------------

@pytest.mark.parametrize("name", list(CASES))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_grad_check_cases(name, seed):
    make, tol = CASES[name]
    assert grad_check(*make(seed)) <= tol


def test_grad_check_catches_wrong_gradient():
    def fn(p):
        return float((p["x"] ** 2).sum()), {"x": 3 * p["x"]}

    assert grad_check(fn, {"x": np.array([1.0, -2.0])}) > 0.1


def test_grad_check_detail_keys():
    fn, params = CASES["dense"][0](0)
    assert set(grad_check_detail(fn, params)) == {"W", "b", "X"}


def test_grad_check_eps_range():
    fn, params = CASES["softmax_ce"][0](0)
    with pytest.raises(ValueError):
        grad_check(fn, params, eps=1e-2)
    with pytest.raises(ValueError):
        grad_check(fn, params, eps=1e-9)


def test_grad_check_nonfinite_loss():
    with pytest.raises(NumericError):
        grad_check(lambda p: (float("nan"), {"x": p["x"]}), {"x": np.ones(2)})


def test_relative_error_zero_vectors():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.ones(2), -np.ones(2)) == 1.0


# --- Adam ------------------------------------------------------------------

def test_adam_zero_grad_keeps_params():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.fresh(params)
    new, st_ = adam_step(params, {"w": np.zeros(2)}, state)
    assert np.array_equal(new["w"], params["w"])
    assert st_.t == 1


def test_adam_first_step_is_sign_step():
    params = {"w": np.array([0.5])}
    new, _ = adam_step(params, {"w": np.array([3.0])}, AdamState.fresh(params, lr=0.001))
    assert params["w"][0] - new["w"][0] == pytest.approx(0.001 * 3.0 / (3.0 + 1e-8), rel=1e-9)


def test_adam_deterministic_and_pure(rng):
    params = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=2)}
    grads = [{k: rng.normal(size=v.shape) for k, v in params.items()} for _ in range(5)]

    def run():
        p, s = dict(params), AdamState.fresh(params)
        for g in grads:
            p, s = adam_step(p, g, s)
        return p, s

    (p1, s1), (p2, s2) = run(), run()
    for k in params:
        assert np.array_equal(p1[k], p2[k])
    assert s1.t == 5
    assert not np.array_equal(p1["a"], params["a"])


def test_adam_shape_mismatch():
    params = {"w": np.zeros(2)}
    state = AdamState.fresh(params)
    with pytest.raises(ShapeError):
        adam_step(params, {"w": np.zeros(3)}, state)
    with pytest.raises(ShapeError):
        adam_step(params, {"v": np.zeros(2)}, state)


def test_adam_state_fresh_zeros():
    s = AdamState.fresh({"w": np.ones((2, 2))})
    assert s.t == 0 and not s.m["w"].any() and not s.v["w"].any()
    assert (s.lr, s.beta1, s.beta2, s.epsilon) == (1e-3, 0.9, 0.999, 1e-8)

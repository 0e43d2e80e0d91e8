"""LSTM tests: gate-by-gate oracle, saturation limits, BiLSTM composition."""

import numpy as np
import pytest

import fastforecast.tensor as T
from fastforecast.errors import ShapeError
from fastforecast.lstm import (
    LstmState,
    LstmWeights,
    bilstm_forward,
    init_lstm_weights,
    lstm_cell,
    lstm_forward,
    zero_state,
)
from fastforecast.tensor import Tensor

from conftest import check_gradients


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def cell_oracle(x, h_prev, c_prev, w):
    """Independent gate-by-gate recomputation from plain numpy arrays."""
    z = np.concatenate([h_prev, x])
    f = sigmoid(w["w_f"] @ z + w["b_f"])
    i = sigmoid(w["w_i"] @ z + w["b_i"])
    c_tilde = np.tanh(w["w_c"] @ z + w["b_c"])
    o = sigmoid(w["w_o"] @ z + w["b_o"])
    c = f * c_prev + i * c_tilde
    h = o * np.tanh(c)
    return h, c


def random_weights(input_size, hidden, seed, forget_bias=None):
    rng = np.random.default_rng(seed)
    w = init_lstm_weights(input_size, hidden, rng)
    if forget_bias is not None:
        w.b_f = Tensor(np.full((1, hidden), forget_bias), requires_grad=True)
    return w


def as_dict(w):
    return {
        "w_f": w.w_f.data, "w_i": w.w_i.data, "w_c": w.w_c.data, "w_o": w.w_o.data,
        "b_f": w.b_f.data[0], "b_i": w.b_i.data[0], "b_c": w.b_c.data[0], "b_o": w.b_o.data[0],
    }


class TestLstmCell:
    def test_all_zero_weights_and_state(self):
        hidden, inp = 3, 2
        zeros = lambda shape: Tensor(np.zeros(shape))
        w = LstmWeights(zeros((hidden, hidden + inp)), zeros((hidden, hidden + inp)),
                        zeros((hidden, hidden + inp)), zeros((hidden, hidden + inp)),
                        zeros((1, hidden)), zeros((1, hidden)), zeros((1, hidden)),
                        zeros((1, hidden)))
        state = lstm_cell(Tensor(np.zeros((1, inp))), zero_state(1, hidden), w)
        # gates sit at sigmoid(0)=0.5, candidate tanh(0)=0 => c=0, h=0
        np.testing.assert_array_equal(state.c.data, np.zeros((1, hidden)))
        np.testing.assert_array_equal(state.h.data, np.zeros((1, hidden)))

    def test_saturated_forget_gate_remembers(self, rng):
        """With b_f = 50 the forget gate saturates at 1, so the new cell is
        C_prev plus the input-gate term to within 1e-9."""
        w = random_weights(2, 4, seed=1, forget_bias=50.0)
        x = rng.standard_normal((1, 2))
        h_prev = rng.standard_normal((1, 4)) * 0.3
        c_prev = rng.standard_normal((1, 4))
        prev = LstmState(Tensor(h_prev), Tensor(c_prev))
        state = lstm_cell(Tensor(x), prev, w)
        d = as_dict(w)
        z = np.concatenate([h_prev[0], x[0]])
        i = sigmoid(d["w_i"] @ z + d["b_i"])
        c_tilde = np.tanh(d["w_c"] @ z + d["b_c"])
        np.testing.assert_allclose(state.c.data[0] - i * c_tilde, c_prev[0], atol=1e-9)

    def test_matches_gate_by_gate_oracle(self, rng):
        w = random_weights(3, 5, seed=2)
        x = rng.standard_normal((1, 3))
        h_prev = rng.standard_normal((1, 5)) * 0.5
        c_prev = rng.standard_normal((1, 5))
        state = lstm_cell(Tensor(x), LstmState(Tensor(h_prev), Tensor(c_prev)), w)
        h, c = cell_oracle(x[0], h_prev[0], c_prev[0], as_dict(w))
        np.testing.assert_allclose(state.h.data[0], h, atol=1e-12)
        np.testing.assert_allclose(state.c.data[0], c, atol=1e-12)

    def test_gate_ranges_and_hidden_bound(self, rng):
        w = random_weights(2, 4, seed=3)
        state = zero_state(1, 4)
        for t in range(10):
            state = lstm_cell(Tensor(rng.standard_normal((1, 2)) * 3), state, w)
            assert np.all(np.abs(state.h.data) < 1.0)

    def test_dimension_mismatch(self, rng):
        w = random_weights(2, 4, seed=4)
        with pytest.raises(ShapeError):
            lstm_cell(Tensor(np.ones((1, 3))), zero_state(1, 4), w)


class TestLstmForward:
    def test_single_step_equals_cell(self, rng):
        w = random_weights(3, 4, seed=5)
        x = rng.standard_normal((1, 3))
        seq_out = lstm_forward(Tensor(x), w)
        cell_out = lstm_cell(Tensor(x), zero_state(1, 4), w)
        np.testing.assert_array_equal(seq_out.data, cell_out.h.data)

    def test_zero_weights_zero_outputs(self, rng):
        hidden, inp = 3, 2
        zeros = lambda shape: Tensor(np.zeros(shape))
        w = LstmWeights(zeros((hidden, hidden + inp)), zeros((hidden, hidden + inp)),
                        zeros((hidden, hidden + inp)), zeros((hidden, hidden + inp)),
                        zeros((1, hidden)), zeros((1, hidden)), zeros((1, hidden)),
                        zeros((1, hidden)))
        out = lstm_forward(Tensor(rng.standard_normal((6, inp))), w)
        np.testing.assert_array_equal(out.data, np.zeros((6, hidden)))

    def test_truncation_consistency(self, rng):
        w = random_weights(2, 3, seed=6)
        xs = rng.standard_normal((9, 2))
        full = lstm_forward(Tensor(xs), w).data
        for t in (1, 4, 7):
            prefix = lstm_forward(Tensor(xs[:t]), w).data
            np.testing.assert_array_equal(full[:t], prefix)


class TestBilstmForward:
    def test_output_width_is_twice_hidden(self, rng):
        wf = random_weights(2, 5, seed=7)
        wb = random_weights(2, 5, seed=8)
        out = bilstm_forward(Tensor(rng.standard_normal((6, 2))), wf, wb)
        assert out.shape == (6, 10)

    def test_halves_match_directional_runs(self, rng):
        wf = random_weights(3, 4, seed=9)
        wb = random_weights(3, 4, seed=10)
        xs = rng.standard_normal((8, 3))
        out = bilstm_forward(Tensor(xs), wf, wb).data
        fwd = lstm_forward(Tensor(xs), wf).data
        bwd = lstm_forward(Tensor(xs[::-1].copy()), wb).data[::-1]
        np.testing.assert_allclose(out[:, :4], fwd, atol=1e-12)
        np.testing.assert_allclose(out[:, 4:], bwd, atol=1e-12)

    def test_palindrome_with_shared_weights_mirrors(self, rng):
        w = random_weights(2, 3, seed=11)
        half = rng.standard_normal((4, 2))
        xs = np.concatenate([half, half[::-1]])  # palindromic sequence
        out = bilstm_forward(Tensor(xs), w, w).data
        length = len(xs)
        fwd, bwd = out[:, :3], out[:, 3:]
        for t in range(length):
            np.testing.assert_allclose(fwd[t], bwd[length - 1 - t], atol=1e-12)

    def test_single_step(self, rng):
        wf = random_weights(2, 3, seed=12)
        wb = random_weights(2, 3, seed=13)
        x = rng.standard_normal((1, 2))
        out = bilstm_forward(Tensor(x), wf, wb).data
        f = lstm_cell(Tensor(x), zero_state(1, 3), wf).h.data
        b = lstm_cell(Tensor(x), zero_state(1, 3), wb).h.data
        np.testing.assert_array_equal(out, np.concatenate([f, b], axis=1))

    def test_forward_half_ignores_future_backward_half_ignores_past(self, rng):
        wf = random_weights(2, 3, seed=14)
        wb = random_weights(2, 3, seed=15)
        xs = rng.standard_normal((7, 2))
        base = bilstm_forward(Tensor(xs), wf, wb).data
        s = 3
        bumped = xs.copy()
        bumped[s + 1:] += 1.0  # future change: forward half at s unaffected
        out = bilstm_forward(Tensor(bumped), wf, wb).data
        np.testing.assert_array_equal(out[s, :3], base[s, :3])
        bumped = xs.copy()
        bumped[:s] -= 2.0  # past change: backward half at s unaffected
        out = bilstm_forward(Tensor(bumped), wf, wb).data
        np.testing.assert_array_equal(out[s, 3:], base[s, 3:])


class TestLstmGradients:
    """Recurrent stacks pass finite-difference checks through >= 5 steps."""

    def test_lstm_forward_gradients(self, rng):
        xs = rng.standard_normal((5, 2)) * 0.5
        w0 = random_weights(2, 3, seed=16)

        def build(xs_t, wf, wi, wc, wo, bf, bi, bc, bo):
            w = LstmWeights(wf, wi, wc, wo, bf, bi, bc, bo)
            out = lstm_forward(xs_t, w)
            return T.tsum(T.mul(out, out))

        arrays = [xs, w0.w_f.data, w0.w_i.data, w0.w_c.data, w0.w_o.data,
                  w0.b_f.data, w0.b_i.data, w0.b_c.data, w0.b_o.data]
        check_gradients(build, arrays, tol=1e-5)

    def test_bilstm_forward_gradients(self, rng):
        xs = rng.standard_normal((5, 2)) * 0.5
        wf0 = random_weights(2, 2, seed=17)
        wb0 = random_weights(2, 2, seed=18)

        def build(xs_t, *flat):
            wf = LstmWeights(*flat[:8])
            wb = LstmWeights(*flat[8:])
            out = bilstm_forward(xs_t, wf, wb)
            return T.tsum(T.mul(out, out))

        arrays = [xs]
        for w in (wf0, wb0):
            arrays += [w.w_f.data, w.w_i.data, w.w_c.data, w.w_o.data,
                       w.b_f.data, w.b_i.data, w.b_c.data, w.b_o.data]
        check_gradients(build, arrays, tol=1e-5)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geokan import autodiff as ad
from geokan.autodiff import (Gradient, Jet, NumericError, Tape, TapeError,
                             fd_check, jcos, jexp, jgauss, jharmonic, jlog,
                             jmexhat, jreciprocal, jsigmoid, jsilu, jsin,
                             jsoftplus, jsqrt, jtanh, param_gradient,
                             seed_inputs)


def jet_scalar(y):
    """Unpack a (C, 1)-shaped jet into floats (v, g, H)."""
    return y.value[0], y.grad[0], y.hess[0]


class TestSeeding:
    def test_two_coordinate_seed(self):
        tape, xy = seed_inputs(np.array([[2.0, 3.0]]))
        assert tape.input_dim == 2
        assert np.allclose(xy.value, [[2.0, 3.0]])
        assert np.allclose(xy.grad[0, 0], [1.0, 0.0])
        assert np.allclose(xy.grad[0, 1], [0.0, 1.0])
        assert np.allclose(xy.hess, 0.0)

    def test_chain_scales(self):
        tape, x = seed_inputs(np.array([[0.3]]), scales=[2.0])
        y = x.col(0) * x.col(0)
        # y = x^2 in model coords, but gradient channel reports d/d(raw)
        assert np.isclose(y.grad[0, 0], 2 * 0.3 * 2.0)

    def test_bad_dimension(self):
        with pytest.raises(TapeError):
            seed_inputs(np.zeros((4, 3)))

    def test_zero_dim_tape_seeds_value_only(self):
        tape = Tape(input_dim=0)
        x = tape.seed_inputs(np.full((4, 2), 0.5))
        assert tape.channels == 1
        assert x.node.val.shape == (1, 4, 2)
        assert np.allclose(x.value, 0.5)

    def test_partial_hessian_tracking(self):
        # track only d2/dx0^2: mixed and (1,1) channels are dropped
        tape = Tape(input_dim=2, hess_pairs=((0, 0),))
        assert tape.channels == 4
        xy = tape.seed_inputs(np.array([[2.0, 3.0]]))
        f = xy.col(0) * xy.col(0) * xy.col(1)
        assert np.isclose(f.value[0], 12.0)
        assert np.allclose(f.grad[0], [12.0, 4.0])
        assert np.isclose(f.node.val[tape.hess_ch[(0, 0)]][0], 6.0)
        with pytest.raises(TapeError):
            Tape(input_dim=2, hess_pairs=((0, 2),))


class TestJetForward:
    def test_polynomial_mixed_partials(self):
        # f(x, t) = x^2 t at (2, 3): f=12, fx=12, ft=4, fxx=6, fxt=4, ftt=0
        tape, xt = seed_inputs(np.array([[2.0, 3.0]]))
        x, t = xt.col(0), xt.col(1)
        f = x * x * t
        v, g, h = jet_scalar(f)
        assert np.isclose(v, 12.0)
        assert np.allclose(g, [12.0, 4.0])
        assert np.allclose(h, [[6.0, 4.0], [4.0, 0.0]])

    def test_quotient(self):
        tape, xt = seed_inputs(np.array([[2.0, 3.0]]))
        f = xt.col(0) / xt.col(1)
        v, g, h = jet_scalar(f)
        assert np.isclose(v, 2.0 / 3.0)
        assert np.allclose(g, [1.0 / 3.0, -2.0 / 9.0])
        assert np.allclose(h, [[0.0, -1.0 / 9.0], [-1.0 / 9.0, 4.0 / 27.0]])

    @pytest.mark.parametrize("fn,truth", [
        (jexp, np.exp), (jsin, np.sin), (jcos, np.cos), (jtanh, np.tanh),
    ])
    def test_unary_second_derivative_against_fd(self, fn, truth):
        pts = np.linspace(-1.3, 1.3, 9).reshape(-1, 1)
        tape, x = seed_inputs(pts)
        y = fn(x.col(0))
        h = 1e-4
        fd2 = (truth(pts[:, 0] + h) - 2 * truth(pts[:, 0]) + truth(pts[:, 0] - h)) / h**2
        assert np.allclose(y.hess[:, 0, 0], fd2, atol=1e-6)
        fd1 = (truth(pts[:, 0] + h) - truth(pts[:, 0] - h)) / (2 * h)
        assert np.allclose(y.grad[:, 0], fd1, atol=1e-7)

    def test_silu_matches_composition(self):
        pts = np.linspace(-2, 2, 7).reshape(-1, 1)
        tape, x = seed_inputs(pts)
        a = jsilu(x.col(0))
        b = x.col(0) * jsigmoid(x.col(0))
        assert np.allclose(a.node.val, b.node.val, atol=1e-14)

    def test_sqrt_log_reciprocal_chain(self):
        # f(x) = 1 / sqrt(x) compared against log route exp(-0.5 log x)
        pts = np.linspace(0.5, 3.0, 6).reshape(-1, 1)
        tape, x = seed_inputs(pts)
        a = jreciprocal(jsqrt(x.col(0)))
        b = jexp(jlog(x.col(0)) * (-0.5))
        assert np.allclose(a.node.val, b.node.val, atol=1e-12)

    def test_mexhat_landmarks(self):
        # psi(0)=1, psi(+-1)=0, negative in 1<|r|<sqrt(large), even in r
        pts = np.array([[-2.0], [-1.0], [0.0], [1.0], [2.0]])
        tape, x = seed_inputs(pts)
        y = jmexhat(x.col(0))
        v = y.value
        assert np.isclose(v[2], 1.0)
        assert np.allclose([v[1], v[3]], 0.0, atol=1e-15)
        assert v[0] < 0 and v[4] < 0
        assert np.isclose(v[0], v[4])
        # second derivative at 0 of (1-r^2)exp(-r^2/2) is -3
        assert np.isclose(y.hess[2, 0, 0], -3.0)

    def test_gauss_against_exp_route(self):
        pts = np.linspace(-1.5, 1.5, 7).reshape(-1, 1)
        tape, x = seed_inputs(pts)
        a = jgauss(x.col(0), 0.7)
        b = jexp(x.col(0) * x.col(0) * (-0.7))
        assert np.allclose(a.node.val, b.node.val, atol=1e-13)

    def test_harmonic_against_sin_route(self):
        pts = np.linspace(-1, 1, 5).reshape(-1, 1)
        tape, x = seed_inputs(pts)
        a = jharmonic(x.col(0), 3.0, "sin")
        b = jsin(x.col(0) * 3.0)
        assert np.allclose(a.node.val, b.node.val, atol=1e-13)

    def test_softplus_extreme_arguments_finite(self):
        pts = np.array([[-800.0], [800.0]])
        tape, x = seed_inputs(pts)
        y = jsoftplus(x.col(0))
        assert np.isfinite(y.node.val).all()
        assert np.isclose(y.value[1], 800.0)
        assert np.isclose(y.value[0], 0.0)

    def test_clamp_kills_derivatives_outside(self):
        tape, x = seed_inputs(np.array([[0.5], [2.0]]))
        y = tape.jet_clamp(x.col(0), -1.0, 1.0)
        assert np.allclose(y.value, [0.5, 1.0])
        assert np.isclose(y.grad[0, 0], 1.0)
        assert np.isclose(y.grad[1, 0], 0.0)


class FlatParams:
    def __init__(self, flat):
        self.flat = np.asarray(flat, dtype=np.float64)


class TestReverse:
    def test_weighted_square_loss(self):
        # L(w) = (w*x - y)^2 at w=1, x=3, y=6 -> dL/dw = 2*3*(3-6) = -18
        def f(p):
            tape = Tape(input_dim=0, n_params=1)
            w = tape.param(p.flat[0:1], slice(0, 1))
            pred = tape.mul(w, tape.leaf(np.array([3.0])))
            err = tape.sub(pred, tape.leaf(np.array([6.0])))
            return tape, tape.psum(tape.square(err))

        p = FlatParams([1.0])
        tape, loss = f(p)
        g = param_gradient(tape, loss)
        assert isinstance(g, Gradient)
        assert np.isclose(g.values[0], -18.0)
        assert fd_check(f, p) < 1e-8

    def test_gradient_through_all_jet_channels(self):
        # loss touches value, gradient and Hessian channels of a jet
        def f(p):
            tape = Tape(input_dim=2, n_params=2)
            x = tape.seed_inputs(np.array([[0.4, -0.3], [1.1, 0.2]]))
            w = tape.param(p.flat[0:1], slice(0, 1))
            c = tape.param(p.flat[1:2], slice(1, 2))
            h = tape.jet_shift(tape.jet_scale(jtanh(x.col(0) * x.col(1)), w), c)
            y = jsigmoid(h) * jmexhat(x.col(1))
            parts = [tape.jet_channel(y, ch) for ch in range(6)]
            total = parts[0]
            for part in parts[1:]:
                total = tape.add(total, part)
            return tape, tape.psum(tape.square(total))

        p = FlatParams([0.7, -0.2])
        assert fd_check(f, p, step=1e-6) < 1e-7

    def test_einsum_linear_vjp(self):
        def f(p):
            tape = Tape(input_dim=1, n_params=6)
            x = tape.seed_inputs(np.array([[0.5], [-0.2], [0.9]]))
            w = tape.param(p.flat[:3].reshape(3, 1), slice(0, 3))
            b = tape.param(p.flat[3:6], slice(3, 6))
            feats = tape.jet_reshape(jsin(x.col(0)), (3, 3, 1))
            y = tape.jet_bias(tape.jet_linear(Jet(feats.node), w), b)
            out = tape.jet_channel(y, 2)  # second-derivative channel
            return tape, tape.psum(tape.square(out))

        rng = np.random.default_rng(0)
        p = FlatParams(rng.normal(size=6))
        assert fd_check(f, p, step=1e-6) < 1e-7

    def test_concat_rows_broadcast_roundtrip(self):
        def f(p):
            tape = Tape(input_dim=1, n_params=2)
            x = tape.seed_inputs(np.array([[0.1], [0.6], [-0.4], [0.8]]))
            w = tape.param(p.flat[0:2], slice(0, 2))
            a = jexp(tape.jet_rows(x.col(0), slice(0, 2)))
            b = jcos(tape.jet_rows(x.col(0), slice(2, 4)))
            both = tape.jet_concat([a, b], axis=-1)
            scaled = tape.jet_scale(tape.jet_broadcast(
                tape.jet_reshape(both, (3, 4, 1)), (3, 4, 2)), w)
            return tape, tape.psum(tape.square(tape.jet_channel(scaled, 1)))

        p = FlatParams([0.3, -1.2])
        assert fd_check(f, p, step=1e-6) < 1e-7

    def test_replay_is_exact(self):
        tape = Tape(input_dim=2)
        x = tape.seed_inputs(np.array([[0.2, 0.8], [-0.5, 0.1]]))
        y = jtanh(x.col(0) * x.col(1)) * jgauss(x.col(0), 1.3)
        loss = tape.psum(tape.square(tape.jet_channel(y, 0)))
        assert tape.replay() == 0.0

    def test_loss_on_wrong_tape_rejected(self):
        t1 = Tape(input_dim=0)
        t2 = Tape(input_dim=0)
        loss = t1.psum(t1.leaf(np.ones(3)))
        with pytest.raises(TapeError):
            t2.backward(loss)

    def test_fd_check_rejects_bad_step(self):
        with pytest.raises(ValueError):
            fd_check(lambda p: None, FlatParams([1.0]), step=0.0)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-2, 2), t=st.floats(-2, 2))
def test_product_rule_property(x, t):
    # jet of sin(x)*cos(t) must match closed-form partials
    tape, xt = seed_inputs(np.array([[x, t]]))
    f = jsin(xt.col(0)) * jcos(xt.col(1))
    v, g, h = jet_scalar(f)
    assert np.isclose(v, np.sin(x) * np.cos(t), atol=1e-12)
    assert np.allclose(g, [np.cos(x) * np.cos(t), -np.sin(x) * np.sin(t)],
                       atol=1e-12)
    assert np.allclose(h, [[-np.sin(x) * np.cos(t), -np.cos(x) * np.sin(t)],
                           [-np.cos(x) * np.sin(t), -np.sin(x) * np.cos(t)]],
                       atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=4))
def test_reverse_matches_fd_property(ws):
    ws = np.asarray(ws)

    def f(p):
        tape = Tape(input_dim=1, n_params=ws.size)
        x = tape.seed_inputs(np.array([[0.37], [-0.81]]))
        total = None
        for i in range(ws.size):
            w = tape.param(p.flat[i:i + 1], slice(i, i + 1))
            term = tape.jet_scale(jtanh(x.col(0) + 0.1 * i), w)
            chan = tape.jet_channel(term, 2)
            total = chan if total is None else tape.add(total, chan)
        return tape, tape.pmean(tape.square(total))

    assert fd_check(f, FlatParams(ws.copy()), step=1e-6) < 1e-6

"""Tape-based differentiation engine.

Two jobs, one tape:

* second-order derivatives of network outputs with respect to the 1-2
  input coordinates, carried forward as "jets" (value, gradient, Hessian
  packed along a leading channel axis of every array), and
* exact reverse-mode gradients of a scalar loss with respect to all
  parameters, by walking the recorded operation list backwards.

Node values are plain numpy arrays.  A jet-valued quantity is stored as a
single array whose leading axis enumerates the Taylor channels:

    d = 0:  [v]                                  (no input derivatives)
    d = 1:  [v, g0, h00]
    d = 2:  [v, g0, g1, h00, h01, h11]           (Hessian stored symmetric)

All arithmetic is float64.
"""

from __future__ import annotations

import numpy as np


class TapeError(RuntimeError):
    pass


class NumericError(RuntimeError):
    pass


def _full_pairs(d):
    return tuple((a, b) for a in range(d) for b in range(a, d))


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Node:
    """One recorded operation (or leaf) on the tape."""

    __slots__ = ("tape", "idx", "val", "parents", "vjp", "fwd", "param_slice")

    def __init__(self, tape, val, parents=(), vjp=None, fwd=None):
        self.tape = tape
        self.val = val
        self.parents = parents
        self.vjp = vjp
        self.fwd = fwd
        self.param_slice = None
        self.idx = len(tape.nodes)
        tape.nodes.append(self)


class Tape:
    """Ordered operation list; parents always precede their node.

    The jet channel layout is fixed per tape: one value channel, one
    gradient channel per input, one channel per tracked Hessian pair.
    `hess_pairs` defaults to every pair (a <= b); passing a subset (e.g.
    only ((0, 0),) when a residual never needs mixed or second-input
    second derivatives) shrinks every jet array and its arithmetic.
    """

    def __init__(self, input_dim=0, n_params=0, hess_pairs=None):
        if input_dim not in (0, 1, 2):
            raise TapeError(
                f"input dimension must be 0, 1 or 2, got {input_dim}")
        self.input_dim = input_dim
        if hess_pairs is None:
            hess_pairs = _full_pairs(input_dim)
        hess_pairs = tuple(tuple(sorted(p)) for p in hess_pairs)
        for a, b in hess_pairs:
            if not (0 <= a <= b < input_dim):
                raise TapeError(f"bad hessian pair {(a, b)}")
        self.grad_ch = list(range(1, 1 + input_dim))
        self.hess_ch = {p: 1 + input_dim + i
                        for i, p in enumerate(hess_pairs)}
        self.channels = 1 + input_dim + len(hess_pairs)
        self.n_params = n_params
        self.nodes = []

    # ------------------------------------------------------------------ leaves

    def leaf(self, val):
        return Node(self, np.asarray(val, dtype=np.float64))

    def param(self, val, flat_slice):
        """Leaf tied to a slice of the flat parameter vector."""
        node = Node(self, np.asarray(val, dtype=np.float64))
        node.param_slice = flat_slice
        return node

    # ------------------------------------------------------------- plain ops

    def add(self, a, b):
        return self._binary(a, b, np.add, lambda g, av, bv: (g, g))

    def sub(self, a, b):
        return self._binary(a, b, np.subtract, lambda g, av, bv: (g, -g))

    def mul(self, a, b):
        return self._binary(a, b, np.multiply,
                            lambda g, av, bv: (g * bv, g * av))

    def _binary(self, a, b, f, dfn):
        av = a.val if isinstance(a, Node) else np.asarray(a, float)
        bv = b.val if isinstance(b, Node) else np.asarray(b, float)
        out = f(av, bv)
        parents = tuple(x for x in (a, b) if isinstance(x, Node))

        def vjp(g):
            da, db = dfn(g, av, bv)
            res = []
            if isinstance(a, Node):
                res.append(_unbroadcast(da, av.shape))
            if isinstance(b, Node):
                res.append(_unbroadcast(db, bv.shape))
            return tuple(res)

        def fwd(*pv):
            vals = list(pv)
            xa = vals.pop(0) if isinstance(a, Node) else av
            xb = vals.pop(0) if isinstance(b, Node) else bv
            return f(xa, xb)

        return Node(self, out, parents, vjp, fwd)

    def scale(self, a, c):
        c = float(c)
        return Node(self, a.val * c, (a,), lambda g: (g * c,),
                    lambda av: av * c)

    def square(self, a):
        av = a.val
        return Node(self, av * av, (a,), lambda g: (2.0 * g * av,),
                    lambda v: v * v)

    def punary(self, a, f, df):
        av = a.val
        return Node(self, f(av), (a,), lambda g: (g * df(av),), f)

    def psum(self, a, axis=None):
        av = a.val

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g, av.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis), av.shape).copy(),)

        return Node(self, av.sum(axis=axis), (a,), vjp,
                    lambda v: v.sum(axis=axis))

    def pmean(self, a, axis=None):
        av = a.val
        n = av.size if axis is None else av.shape[axis]

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g / n, av.shape).copy(),)
            return (np.broadcast_to(np.expand_dims(g, axis) / n, av.shape).copy(),)

        return Node(self, av.mean(axis=axis), (a,), vjp,
                    lambda v: v.mean(axis=axis))

    def reshape(self, a, shape):
        av = a.val
        return Node(self, av.reshape(shape), (a,),
                    lambda g: (g.reshape(av.shape),),
                    lambda v: v.reshape(shape))

    def rows(self, a, sl, axis=0):
        """Slice along an axis (used to split batch roles)."""
        av = a.val
        index = [slice(None)] * av.ndim
        index[axis] = sl
        index = tuple(index)

        def vjp(g):
            out = np.zeros_like(av)
            out[index] = g
            return (out,)

        return Node(self, av[index], (a,), vjp, lambda v: v[index])

    def einsum2(self, spec, a, b):
        """einsum over two operands.

        Every index of each operand must appear in the output or in the
        other operand (true of all contractions used by the layers), which
        makes the vector-Jacobian products plain einsums as well.
        """
        ins, outs = spec.split("->")
        sa, sb = ins.split(",")
        av, bv = a.val, b.val
        out = np.einsum(spec, av, bv, optimize=True)

        def vjp(g):
            da = np.einsum(f"{outs},{sb}->{sa}", g, bv, optimize=True)
            db = np.einsum(f"{outs},{sa}->{sb}", g, av, optimize=True)
            return (da, db)

        return Node(self, out, (a, b), vjp,
                    lambda x, y: np.einsum(spec, x, y, optimize=True))

    # --------------------------------------------------------------- jet ops

    def seed_inputs(self, x, scales=None):
        """Make the constant input jet for a batch of points.

        x: (N, d) raw coordinates already mapped to model coordinates;
        scales: per-coordinate d(model coord)/d(raw coord) chain factors,
        so downstream derivative channels are with respect to the raw
        coordinates.  Returns a Jet with trailing shape (N, d).
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        d = self.input_dim
        if d == 0:
            # derivative-free evaluation: value channel only
            return Jet(self.leaf(x[None]))
        if x.shape[1] != d:
            raise TapeError(f"expected {d} coordinates, got {x.shape[1]}")
        if scales is None:
            scales = np.ones(d)
        n = x.shape[0]
        packed = np.zeros((self.channels, n, d))
        packed[0] = x
        for i, ch in enumerate(self.grad_ch):
            packed[ch, :, i] = scales[i]
        return Jet(self.leaf(packed))

    def jet_const(self, packed):
        return Jet(self.leaf(packed))

    def jet_unary(self, x, fused):
        """Elementwise f through the jet channels.

        fused: callable evaluating (f, f', f'', f''') on the value channel
        in one pass, so shared inner quantities (exp, sigmoid, tanh) are
        computed once.  f''' appears only in the reverse sweep.
        """
        node = x.node
        xv = node.val
        y0, y1, y2, y3 = fused(xv[0])
        out = np.empty((self.channels,) + xv.shape[1:])
        out[0] = y0
        G, H = self.grad_ch, self.hess_ch
        for ch in G:
            out[ch] = y1 * xv[ch]
        for (a, b), ch in H.items():
            out[ch] = y1 * xv[ch] + y2 * xv[G[a]] * xv[G[b]]

        def vjp(g):
            dx = np.empty_like(out)
            acc = g[0] * y1
            for ch in G:
                acc += g[ch] * y2 * xv[ch]
            for (a, b), ch in H.items():
                acc += g[ch] * (y2 * xv[ch] + y3 * xv[G[a]] * xv[G[b]])
            dx[0] = acc
            for a, ch in enumerate(G):
                da = g[ch] * y1
                for (i, j), hch in H.items():
                    if i == j == a:
                        da = da + 2.0 * g[hch] * y2 * xv[ch]
                    elif i == a:
                        da = da + g[hch] * y2 * xv[G[j]]
                    elif j == a:
                        da = da + g[hch] * y2 * xv[G[i]]
                dx[ch] = da
            for ch in H.values():
                dx[ch] = g[ch] * y1
            return (dx,)

        def fwd(pv):
            o = np.empty((self.channels,) + pv.shape[1:])
            w0, w1, w2, _ = fused(pv[0])
            o[0] = w0
            for ch in G:
                o[ch] = w1 * pv[ch]
            for (a, b), ch in H.items():
                o[ch] = w1 * pv[ch] + w2 * pv[G[a]] * pv[G[b]]
            return o

        return Jet(Node(self, out, (node,), vjp, fwd))

    def jet_mul(self, x, y):
        G, H = self.grad_ch, self.hess_ch
        xv, yv = x.node.val, y.node.val

        def product(a, b):
            out = np.empty(np.broadcast_shapes(a.shape, b.shape))
            out[0] = a[0] * b[0]
            for ch in G:
                out[ch] = a[0] * b[ch] + a[ch] * b[0]
            for (i, j), ch in H.items():
                out[ch] = (a[0] * b[ch] + a[ch] * b[0]
                           + a[G[i]] * b[G[j]] + a[G[j]] * b[G[i]])
            return out

        def side(g, other, shape):
            """Adjoint of jet multiplication with respect to one factor."""
            dx = np.empty(np.broadcast_shapes(g.shape, other.shape))
            acc = g[0] * other[0]
            for ch in G:
                acc = acc + g[ch] * other[ch]
            for (i, j), ch in H.items():
                acc = acc + g[ch] * other[ch]
            dx[0] = acc
            for a, ch in enumerate(G):
                da = g[ch] * other[0]
                for (i, j), hch in H.items():
                    if i == j == a:
                        da = da + 2.0 * g[hch] * other[ch]
                    elif i == a:
                        da = da + g[hch] * other[G[j]]
                    elif j == a:
                        da = da + g[hch] * other[G[i]]
                dx[ch] = da
            for ch in H.values():
                dx[ch] = g[ch] * other[0]
            return _unbroadcast(dx, shape)

        def vjp(g):
            return (side(g, yv, xv.shape), side(g, xv, yv.shape))

        return Jet(Node(self, product(xv, yv), (x.node, y.node), vjp,
                        lambda a, b: product(a, b)))

    def jet_scale(self, x, w):
        """Jet times a plain (derivative-free) factor, e.g. a parameter."""
        xv = x.node.val
        if isinstance(w, Node):
            wv = w.val

            def vjp(g):
                return (_unbroadcast(g * wv, xv.shape),
                        _unbroadcast((g * xv).sum(axis=0), wv.shape))

            return Jet(Node(self, xv * wv, (x.node, w), vjp,
                            lambda a, b: a * b))
        wv = np.asarray(w, float)
        return Jet(Node(self, xv * wv, (x.node,),
                        lambda g: (_unbroadcast(g * wv, xv.shape),),
                        lambda a: a * wv))

    def jet_shift(self, x, c, sign=1.0):
        """Add sign*c to the value channel only (c plain array or Node)."""
        xv = x.node.val
        if isinstance(c, Node):
            cv = c.val
            out = xv.copy()
            out[0] = xv[0] + sign * cv

            def vjp(g):
                return (g, _unbroadcast(sign * g[0], cv.shape))

            def fwd(a, b):
                o = a.copy()
                o[0] = a[0] + sign * b
                return o

            return Jet(Node(self, out, (x.node, c), vjp, fwd))
        cv = np.asarray(c, float)
        out = xv.copy()
        out[0] = xv[0] + sign * cv

        def fwd(a):
            o = a.copy()
            o[0] = a[0] + sign * cv
            return o

        return Jet(Node(self, out, (x.node,), lambda g: (g,), fwd))

    def jet_affine(self, x, c, s_inv):
        """Fused (x - c) * s_inv with plain shift and scale factors."""
        xv = x.node.val
        cv = c.val if isinstance(c, Node) else np.asarray(c, float)
        sv = s_inv.val if isinstance(s_inv, Node) else np.asarray(s_inv, float)
        cs = cv * sv

        def run(v):
            o = v * sv
            o[0] -= cs
            return o

        out = run(xv)
        parents = [x.node]
        if isinstance(c, Node):
            parents.append(c)
        if isinstance(s_inv, Node):
            parents.append(s_inv)

        def vjp(g):
            res = [_unbroadcast(g * sv, xv.shape)]
            if isinstance(c, Node):
                res.append(_unbroadcast(-g[0] * sv, cv.shape))
            if isinstance(s_inv, Node):
                res.append(_unbroadcast((g * xv).sum(axis=0) - g[0] * cv,
                                        sv.shape))
            return tuple(res)

        def fwd(*pv):
            vals = list(pv)
            xval = vals.pop(0)
            cc = vals.pop(0) if isinstance(c, Node) else cv
            ss = vals.pop(0) if isinstance(s_inv, Node) else sv
            o = xval * ss
            o[0] -= cc * ss
            return o

        return Jet(Node(self, out, tuple(parents), vjp, fwd))

    def jet_add(self, x, y):
        return Jet(self.add(x.node, y.node))

    def jet_linear(self, feats, w):
        """Mix a jet feature vector (C, N, M) with a weight matrix (m, M)."""
        return Jet(self.einsum2("cnM,jM->cnj", feats.node, w))

    def jet_bias(self, x, b):
        return self.jet_shift(x, b)

    def jet_concat(self, jets, axis=-1):
        vals = [j.node.val for j in jets]
        ax = axis if axis >= 0 else vals[0].ndim + axis
        sizes = [v.shape[ax] for v in vals]
        splits = np.cumsum(sizes)[:-1]

        def vjp(g):
            return tuple(np.split(g, splits, axis=ax))

        return Jet(Node(self, np.concatenate(vals, axis=ax),
                        tuple(j.node for j in jets), vjp,
                        lambda *vs: np.concatenate(vs, axis=ax)))

    def jet_reshape(self, x, shape):
        xv = x.node.val
        return Jet(Node(self, xv.reshape(shape), (x.node,),
                        lambda g: (g.reshape(xv.shape),),
                        lambda v: v.reshape(shape)))

    def jet_broadcast(self, x, shape):
        # read-only view: no downstream op mutates node values
        xv = x.node.val
        return Jet(Node(self, np.broadcast_to(xv, shape), (x.node,),
                        lambda g: (_unbroadcast(g, xv.shape),),
                        lambda v: np.broadcast_to(v, shape)))

    def jet_channel(self, x, ch):
        """Extract one Taylor channel as a plain node."""
        xv = x.node.val

        def vjp(g):
            out = np.zeros_like(xv)
            out[ch] = g
            return (out,)

        return Node(self, xv[ch], (x.node,), vjp, lambda v: v[ch])

    def jet_rows(self, x, sl):
        """Slice the batch axis (axis 1 of the packed array)."""
        return Jet(self.rows(x.node, sl, axis=1))

    def jet_col(self, x, i):
        """Select coordinate i from a (C, N, d) jet -> (C, N)."""
        xv = x.node.val

        def vjp(g):
            out = np.zeros_like(xv)
            out[:, :, i] = g
            return (out,)

        return Jet(Node(self, xv[:, :, i], (x.node,), vjp,
                        lambda v: v[:, :, i]))

    def jet_clamp(self, x, lo, hi):
        """Clip the value channel; derivative channels vanish outside."""
        xv = x.node.val
        inside = ((xv[0] >= lo) & (xv[0] <= hi)).astype(float)
        out = xv * inside
        out[0] = np.clip(xv[0], lo, hi)

        def vjp(g):
            dx = g * inside
            return (dx,)

        def fwd(v):
            ins = ((v[0] >= lo) & (v[0] <= hi)).astype(float)
            o = v * ins
            o[0] = np.clip(v[0], lo, hi)
            return o

        return Jet(Node(self, out, (x.node,), vjp, fwd))

    # ------------------------------------------------------------- reverse

    def backward(self, loss):
        """Reverse sweep; returns the flat parameter gradient."""
        if loss.tape is not self:
            raise TapeError("loss node does not belong to this tape")
        grad = np.zeros(self.n_params)
        adjoints = {loss.idx: np.ones_like(loss.val)}
        for node in reversed(self.nodes):
            g = adjoints.pop(node.idx, None)
            if g is None:
                continue
            if node.param_slice is not None:
                grad[node.param_slice] += np.asarray(g).ravel()
            if node.vjp is None:
                continue
            for parent, pg in zip(node.parents, node.vjp(g)):
                acc = adjoints.get(parent.idx)
                # never accumulate in place: vjps may alias one array to
                # several parents (add returns (g, g))
                adjoints[parent.idx] = pg if acc is None else acc + pg
        return grad

    def replay(self):
        """Recompute every node from its parents; returns max |diff|."""
        vals = {}
        worst = 0.0
        for node in self.nodes:
            if node.fwd is None or not node.parents:
                vals[node.idx] = node.val
                continue
            new = node.fwd(*(vals[p.idx] for p in node.parents))
            worst = max(worst, float(np.max(np.abs(new - node.val), initial=0.0)))
            vals[node.idx] = new
        return worst


class Jet:
    """A jet-valued quantity: wrapper over one packed tape node."""

    __slots__ = ("node",)

    def __init__(self, node):
        self.node = node

    @property
    def tape(self):
        return self.node.tape

    @property
    def value(self):
        return self.node.val[0]

    @property
    def grad(self):
        return np.stack([self.node.val[ch] for ch in self.tape.grad_ch],
                        axis=-1)

    @property
    def hess(self):
        """Symmetric Hessian; untracked pairs read as zero."""
        d = self.tape.input_dim
        v = self.node.val
        H = np.zeros(v.shape[1:] + (d, d))
        for (a, b), ch in self.tape.hess_ch.items():
            H[..., a, b] = v[ch]
            H[..., b, a] = v[ch]
        return H

    def col(self, i):
        return self.tape.jet_col(self, i)

    # operator sugar -------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return self.tape.jet_add(self, other)
        return self.tape.jet_shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return self.tape.jet_add(self, other.tape.jet_scale(other, -1.0))
        return self.tape.jet_shift(self, other, sign=-1.0)

    def __rsub__(self, other):
        return self.tape.jet_shift(self.tape.jet_scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return self.tape.jet_mul(self, other)
        return self.tape.jet_scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self.tape.jet_mul(self, jreciprocal(other))
        return self.tape.jet_scale(self, 1.0 / other)

    def __neg__(self):
        return self.tape.jet_scale(self, -1.0)


# ---------------------------------------------------------------- unaries

def _sigmoid(x):
    out = np.empty_like(np.asarray(x, float))
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[neg])
    out[neg] = e / (1.0 + e)
    return out


def _softplus(x):
    # overflow-safe: max(x, 0) + log1p(exp(-|x|))
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _tanh_fused(x):
    t = np.tanh(x)
    d = 1.0 - t * t
    return t, d, -2.0 * t * d, d * (6.0 * t * t - 2.0)


def _sigmoid_parts(x):
    s = _sigmoid(x)
    d = s * (1.0 - s)
    return s, d, d * (1.0 - 2.0 * s), d * (1.0 - 6.0 * s * (1.0 - s))


def _softplus_fused(x):
    s, d, d2, _ = _sigmoid_parts(x)
    return _softplus(x), s, d, d2


def _silu_fused(x):
    s, d, d2, d3 = _sigmoid_parts(x)
    return x * s, s + x * d, 2.0 * d + x * d2, 3.0 * d2 + x * d3


def _exp_fused(x):
    e = np.exp(x)
    return e, e, e, e


def _sin_fused(x):
    s, c = np.sin(x), np.cos(x)
    return s, c, -s, -c


def _cos_fused(x):
    s, c = np.sin(x), np.cos(x)
    return c, -s, -c, s


def _sqrt_fused(x):
    r = np.sqrt(x)
    i = 1.0 / x
    return r, 0.5 * r * i, -0.25 * r * i * i, 0.375 * r * i * i * i


def _log_fused(x):
    i = 1.0 / x
    return np.log(x), i, -i * i, 2.0 * i * i * i


def _reciprocal_fused(x):
    i = 1.0 / x
    i2 = i * i
    return i, -i2, 2.0 * i2 * i, -6.0 * i2 * i2


_TABLES = {
    "tanh": _tanh_fused,
    "sigmoid": _sigmoid_parts,
    "softplus": _softplus_fused,
    "silu": _silu_fused,
    "exp": _exp_fused,
    "sin": _sin_fused,
    "cos": _cos_fused,
    "sqrt": _sqrt_fused,
    "log": _log_fused,
    "reciprocal": _reciprocal_fused,
}


def _jet_apply(x, name):
    return x.tape.jet_unary(x, _TABLES[name])


def jtanh(x):
    return _jet_apply(x, "tanh")


def jsigmoid(x):
    return _jet_apply(x, "sigmoid")


def jsilu(x):
    return _jet_apply(x, "silu")


def jsoftplus(x):
    return _jet_apply(x, "softplus")


def jexp(x):
    return _jet_apply(x, "exp")


def jsin(x):
    return _jet_apply(x, "sin")


def jcos(x):
    return _jet_apply(x, "cos")


def jsqrt(x):
    return _jet_apply(x, "sqrt")


def jlog(x):
    return _jet_apply(x, "log")


def jreciprocal(x):
    return _jet_apply(x, "reciprocal")


def jmexhat(x):
    """Mexican-hat wavelet (1 - r^2) exp(-r^2 / 2) as one fused unary."""

    def fused(r):
        r2 = r * r
        e = np.exp(-0.5 * r2)
        return ((1.0 - r2) * e,
                r * (r2 - 3.0) * e,
                (6.0 * r2 - r2 * r2 - 3.0) * e,
                r * (r2 * r2 - 10.0 * r2 + 15.0) * e)

    return x.tape.jet_unary(x, fused)


def jgauss(x, gamma):
    """Gaussian bump exp(-gamma r^2) as one fused unary."""
    g = gamma

    def fused(r):
        e = np.exp(-g * r * r)
        d1 = -2.0 * g * r * e
        return (e, d1,
                (4.0 * g * g * r * r - 2.0 * g) * e,
                (12.0 * g * g * r - 8.0 * g ** 3 * r ** 3) * e)

    return x.tape.jet_unary(x, fused)


def jharmonic(x, freq, kind):
    """cos(freq*r) or sin(freq*r); freq may broadcast over trailing axes."""
    a = np.asarray(freq, float)
    a2 = a * a

    def fused_cos(r):
        s, c = np.sin(a * r), np.cos(a * r)
        return c, -a * s, -a2 * c, a2 * a * s

    def fused_sin(r):
        s, c = np.sin(a * r), np.cos(a * r)
        return s, a * c, -a2 * s, -a2 * a * c

    return x.tape.jet_unary(x, fused_cos if kind == "cos" else fused_sin)


# ------------------------------------------------------------ public API

def seed_inputs(x, scales=None, n_params=0, hess_pairs=None):
    """Fresh tape + seeded input jet for a batch of points x (N, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    tape = Tape(input_dim=x.shape[1], n_params=n_params,
                hess_pairs=hess_pairs)
    return tape, tape.seed_inputs(x, scales)


class Gradient:
    """Flat gradient aligned with ParamStore indexing."""

    __slots__ = ("values",)

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def __len__(self):
        return len(self.values)


def param_gradient(tape, loss_node):
    """Exact reverse-mode gradient of loss value w.r.t. every parameter."""
    if isinstance(loss_node, Jet):
        loss_node = tape.jet_channel(loss_node, 0)
    return Gradient(tape.backward(loss_node))


def fd_check(f, p, step=1e-5):
    """Max relative error between reverse-mode and central differences.

    f: ParamStore-like (anything with a .flat ndarray) -> (tape, loss node).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    tape, loss = f(p)
    if not np.isfinite(loss.val).all():
        raise NumericError("non-finite loss in fd_check")
    analytic = param_gradient(tape, loss).values
    flat = p.flat
    worst = 0.0
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        _, lp = f(p)
        flat[i] = keep - step
        _, lm = f(p)
        flat[i] = keep
        if not (np.isfinite(lp.val) and np.isfinite(lm.val)):
            raise NumericError("non-finite loss in fd_check perturbation")
        fd = (float(lp.val) - float(lm.val)) / (2.0 * step)
        err = abs(analytic[i] - fd) / max(1.0, abs(analytic[i]))
        worst = max(worst, err)
    return worst

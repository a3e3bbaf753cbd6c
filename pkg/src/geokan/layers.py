"""Layer kinds, model assembly, parameter storage and accounting.

Six layer kinds share one calling convention: a jet of hidden features in,
a jet of pre-activations out.  Models stack layers with tanh between
hidden layers; the readout (when present) is a plain linear map.

Parameters for a whole model live in one flat float64 vector; each layer
owns named slices of it.  Strictly positive quantities (atom scales,
metric widths) are stored as pre-softplus logits so positivity survives
any gradient step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import basis, geometry
from .autodiff import Jet, jsilu, jsoftplus, jsqrt, jtanh, _softplus, _sigmoid

KINDS = ("mlp", "effkan", "wavkan", "nnmetric", "gamma", "lmkan")


class SpecError(ValueError):
    pass


@dataclass
class LayerSpec:
    kind: str
    d_in: int
    d_out: int
    n_atoms: int = 0          # dictionary size K per input coordinate
    metric_hidden: int = 0    # hidden width of the coupled metric net
    basis: str = "mexhat"     # lmkan dictionary family
    grid_size: int = 5        # effkan spline grid
    order: int = 3            # effkan spline order
    rbf_gamma: float = 1.0    # shape of Gaussian dictionary atoms
    omega: float = math.pi    # base frequency of Fourier atoms

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.d_in < 1 or self.d_out < 1:
            raise SpecError("layer dimensions must be >= 1")
        if self.kind in ("nnmetric", "lmkan", "gamma") and self.n_atoms < 1:
            raise SpecError(f"{self.kind} layer needs n_atoms >= 1")
        if self.kind in ("nnmetric", "lmkan") and self.metric_hidden < 1:
            raise SpecError(f"{self.kind} layer needs metric_hidden >= 1")
        if self.kind == "lmkan" and self.basis not in ("mexhat", "rbf",
                                                       "fourier"):
            raise SpecError(f"unknown lmkan basis {self.basis!r}")


@dataclass
class ModelSpec:
    layers: list
    readout_dim: int | None = None   # None: last layer is the output

    def __post_init__(self):
        if not self.layers:
            if self.readout_dim is None:
                raise SpecError("empty model")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.d_out != b.d_in:
                raise SpecError(
                    f"dimension chain broken: {a.d_out} -> {b.d_in}")

    @property
    def d_in(self):
        return self.layers[0].d_in if self.layers else 1

    @property
    def d_out(self):
        if self.readout_dim is not None:
            return self.readout_dim
        return self.layers[-1].d_out

    def to_dict(self):
        return {"layers": [asdict(l) for l in self.layers],
                "readout_dim": self.readout_dim}

    @staticmethod
    def from_dict(d):
        return ModelSpec([LayerSpec(**l) for l in d["layers"]],
                         d.get("readout_dim"))


# ------------------------------------------------------------ param layout

def _n_features(spec):
    """Mixed feature count of a geometry layer (dictionary + volume)."""
    per_atom = 2 if (spec.kind == "lmkan" and spec.basis == "fourier") else 1
    return per_atom * spec.d_in * spec.n_atoms + 1


def layer_layout(spec):
    """Ordered (name, shape) parameter entries for one layer."""
    i, o = spec.d_in, spec.d_out
    if spec.kind == "mlp":
        return [("W", (o, i)), ("b", (o,))]
    if spec.kind == "effkan":
        nb = spec.grid_size + spec.order
        return [("base_w", (o, i)), ("scaler", (o, i)),
                ("coeff", (o, i, nb))]
    if spec.kind == "wavkan":
        return [("w", (o, i)), ("tau", (o, i)), ("s_logit", (o, i)),
                ("b", (o,))]
    if spec.kind == "gamma":
        k = spec.n_atoms
        return [("coef", (i, k)), ("mu", (i, k)), ("w_logit", (i, k)),
                ("alpha", (i,)), ("beta", (i,)), ("delta", (i,)),
                ("W", (o, 2 * i)), ("b", (o,))]
    # nnmetric / lmkan: coupled metric net + atom bank + mixing
    m = spec.metric_hidden
    k = spec.n_atoms
    return [("met_w0", (m, i)), ("met_b0", (m,)),
            ("met_w1", (m, m)), ("met_b1", (m,)),
            ("met_w2", (i, m)), ("met_b2", (i,)),
            ("centers", (i, k)), ("s_logit", (i, k)),
            ("W", (o, _n_features(spec))), ("b", (o,))]


def model_layout(spec):
    out = []
    for li, layer in enumerate(spec.layers):
        for name, shape in layer_layout(layer):
            out.append((f"L{li}.{name}", shape))
    if spec.readout_dim is not None:
        d_last = spec.layers[-1].d_out if spec.layers else spec.d_in
        out.append(("out.W", (spec.readout_dim, d_last)))
        out.append(("out.b", (spec.readout_dim,)))
    return out


def count_params(spec):
    return sum(int(np.prod(shape)) for _, shape in model_layout(spec))


class ParamStore:
    """Flat parameter vector with a named-slice index."""

    def __init__(self, spec, flat=None):
        self.spec = spec
        self.index = {}
        off = 0
        for name, shape in model_layout(spec):
            size = int(np.prod(shape))
            self.index[name] = (off, shape)
            off += size
        self.flat = np.zeros(off) if flat is None else np.asarray(flat, float)
        if self.flat.size != off:
            raise SpecError(f"flat vector has {self.flat.size} entries, "
                            f"layout needs {off}")

    def __len__(self):
        return self.flat.size

    def get(self, name):
        off, shape = self.index[name]
        return self.flat[off:off + int(np.prod(shape))].reshape(shape)

    def set(self, name, value):
        self.get(name)[...] = value

    def node(self, tape, name):
        """Register the named slice as a parameter leaf on a tape."""
        off, shape = self.index[name]
        size = int(np.prod(shape))
        return tape.param(self.flat[off:off + size].reshape(shape),
                          slice(off, off + size))

    def copy(self):
        return ParamStore(self.spec, self.flat.copy())


def _softplus_inv(y):
    return float(y + np.log(-np.expm1(-y)))


def init_params(spec, seed):
    """Deterministic initialization; see the layer docstrings for intent."""
    rng = np.random.default_rng(seed)
    p = ParamStore(spec)

    def glorot(shape, fan_in, fan_out):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=shape)

    for li, layer in enumerate(spec.layers):
        pre = f"L{li}."
        i, o = layer.d_in, layer.d_out
        if layer.kind == "mlp":
            p.set(pre + "W", glorot((o, i), i, o))
        elif layer.kind == "effkan":
            nb = layer.grid_size + layer.order
            p.set(pre + "base_w", glorot((o, i), i, o))
            p.set(pre + "scaler", glorot((o, i), i, o))
            # small spline perturbation so edges start near the base path
            p.set(pre + "coeff", 0.1 * glorot((o, i, nb), i * nb, o))
        elif layer.kind == "wavkan":
            p.set(pre + "w", glorot((o, i), i, o))
            p.set(pre + "s_logit", _softplus_inv(1.0))
        elif layer.kind == "gamma":
            k = layer.n_atoms
            p.set(pre + "mu", np.tile(np.linspace(-2.0, 2.0, k), (i, 1)))
            spacing = 4.0 / max(k - 1, 1)
            p.set(pre + "w_logit", _softplus_inv(spacing))
            p.set(pre + "alpha", 1.0)
            p.set(pre + "W", glorot((o, 2 * i), 2 * i, o))
        else:  # nnmetric / lmkan
            m, k = layer.metric_hidden, layer.n_atoms
            p.set(pre + "met_w0", glorot((m, i), i, m))
            p.set(pre + "met_w1", glorot((m, m), m, m))
            # met_w2 / met_b2 stay zero: the metric starts near-identity
            if layer.kind == "lmkan" and layer.basis == "fourier":
                # harmonics of the bare warped coordinate at the start
                p.set(pre + "s_logit", _softplus_inv(1.0))
            else:
                p.set(pre + "centers",
                      np.tile(basis.atom_grid(k), (i, 1)))
                p.set(pre + "s_logit", _softplus_inv(2.0 / k))
            nf = _n_features(layer)
            p.set(pre + "W", glorot((o, nf), nf, o))
    if spec.readout_dim is not None:
        d_last = spec.layers[-1].d_out if spec.layers else spec.d_in
        p.set("out.W", glorot((spec.readout_dim, d_last), d_last,
                              spec.readout_dim))
    return p


# ---------------------------------------------------------------- forward

def _positive(tape, logit_node):
    """softplus of a plain parameter node, with its exact derivative."""
    return tape.punary(logit_node, _softplus, _sigmoid)


def _inv_positive(tape, logit_node):
    s = _positive(tape, logit_node)
    return tape.punary(s, lambda v: 1.0 / v, lambda v: -1.0 / (v * v))


def layer_forward(tape, spec, params, prefix, h):
    """Pre-activation output of one layer; h is a jet (C, N, d_in)."""
    if h.node.val.shape[-1] != spec.d_in:
        raise SpecError(f"layer expects {spec.d_in} inputs, "
                        f"got {h.node.val.shape[-1]}")
    P = lambda name: params.node(tape, prefix + name)

    if spec.kind == "mlp":
        return tape.jet_bias(tape.jet_linear(h, P("W")), P("b"))

    if spec.kind == "effkan":
        base = tape.jet_linear(jsilu(h), P("base_w"))
        bank = basis.bspline_bank(tape, h, spec.grid_size, spec.order)
        scaler = tape.reshape(P("scaler"), (spec.d_out, spec.d_in, 1))
        w_eff = tape.mul(P("coeff"), scaler)
        spline = Jet(tape.einsum2("cnjb,ijb->cni", bank.node, w_eff))
        return base + spline

    if spec.kind == "wavkan":
        C = tape.channels
        n = h.node.val.shape[1]
        hb = tape.jet_broadcast(
            tape.jet_reshape(h, (C, n, 1, spec.d_in)),
            (C, n, spec.d_out, spec.d_in))
        r = tape.jet_affine(hb, P("tau"), _inv_positive(tape, P("s_logit")))
        atoms = basis.jmexhat(r)
        mixed = Jet(tape.einsum2("cnij,ij->cni", atoms.node, P("w")))
        return tape.jet_bias(mixed, P("b"))

    if spec.kind == "gamma":
        g, gam = geometry.separable_metric(
            tape, h, P("coef"), P("mu"), _inv_positive(tape, P("w_logit")))
        xi = h * jsqrt(g)
        q = jsqrt(g)
        geo = (tape.jet_scale(xi, P("alpha"))
               + tape.jet_scale(gam, P("beta"))
               + tape.jet_scale(q, P("delta")))
        feats = tape.jet_concat([jsilu(h), geo], axis=-1)
        return tape.jet_bias(tape.jet_linear(feats, P("W")), P("b"))

    # nnmetric / lmkan
    g = geometry.neural_metric(tape, h, P("met_w0"), P("met_b0"),
                               P("met_w1"), P("met_b1"),
                               P("met_w2"), P("met_b2"))
    xi, vol = geometry.warp_and_volume(tape, h, g)
    kind = "mexhat" if spec.kind == "nnmetric" else spec.basis
    bank = basis.atom_bank(tape, xi, P("centers"),
                           _inv_positive(tape, P("s_logit")), kind,
                           gamma=spec.rbf_gamma, omega=spec.omega)
    C = tape.channels
    n = h.node.val.shape[1]
    flat = tape.jet_reshape(bank, (C, n, _n_features(spec) - 1))
    feats = tape.jet_concat([flat, vol], axis=-1)
    return tape.jet_bias(tape.jet_linear(feats, P("W")), P("b"))


def model_forward(tape, spec, params, x):
    """Full model on a jet of inputs; tanh between hidden layers."""
    h = x
    last = len(spec.layers) - 1
    for li, layer in enumerate(spec.layers):
        h = layer_forward(tape, layer, params, f"L{li}.", h)
        hidden = li < last or spec.readout_dim is not None
        if hidden:
            h = jtanh(h)
    if spec.readout_dim is not None:
        h = tape.jet_bias(tape.jet_linear(h, params.node(tape, "out.W")),
                          params.node(tape, "out.b"))
    return h


# ------------------------------------------------------- stock model specs

def mlp_spec(d_in, width, depth, d_out):
    layers = [LayerSpec("mlp", d_in, width)]
    layers += [LayerSpec("mlp", width, width) for _ in range(depth - 1)]
    return ModelSpec(layers, readout_dim=d_out)


def effkan_spec(widths, grid_size, order):
    layers = [LayerSpec("effkan", a, b, grid_size=grid_size, order=order)
              for a, b in zip(widths, widths[1:])]
    return ModelSpec(layers, readout_dim=None)


def geo_spec(kind, d_in, width, depth, d_out, n_atoms, metric_hidden=0,
             basis_kind="mexhat", rbf_gamma=1.0, omega=math.pi):
    dims = [d_in] + [width] * depth
    layers = [LayerSpec(kind, a, b, n_atoms=n_atoms,
                        metric_hidden=metric_hidden, basis=basis_kind,
                        rbf_gamma=rbf_gamma, omega=omega)
              for a, b in zip(dims, dims[1:])]
    return ModelSpec(layers, readout_dim=d_out)


def lmkan_spec(widths, d_out, n_atoms, metric_hidden, basis_kind,
               rbf_gamma=1.0, omega=math.pi):
    layers = [LayerSpec("lmkan", a, b, n_atoms=n_atoms,
                        metric_hidden=metric_hidden, basis=basis_kind,
                        rbf_gamma=rbf_gamma, omega=omega)
              for a, b in zip(widths, widths[1:])]
    return ModelSpec(layers, readout_dim=d_out)

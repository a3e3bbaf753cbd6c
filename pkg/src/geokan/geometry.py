"""Learned diagonal metrics and the geometric quantities derived from them.

A metric assigns each coordinate a positive local scale g_i(u).  Layers
use three derived quantities:

* the warped coordinate  xi_i = u_i * sqrt(g_i),
* the volume feature     v = sum_i log g_i  (log det of the diagonal metric),
* for the separable variant, the log-derivative feature
  gamma_i = (1/2) d(log g_i)/du_i, available in closed form.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Jet, jexp, jgauss, jlog, jsilu, jsoftplus, jsqrt
from .basis import shifted_arg

METRIC_FLOOR = 1e-4


def neural_metric(tape, x, w0, b0, w1, b1, w2, b2, floor=METRIC_FLOOR):
    """Coupled metric: a small SiLU network of the full input vector.

    x: jet (C, N, d_in).  Weights are plain tape nodes; the hidden width is
    w0.rows.  Returns the positive metric jet g (C, N, d_in).
    """
    h = jsilu(tape.jet_bias(tape.jet_linear(x, w0), b0))
    h = jsilu(tape.jet_bias(tape.jet_linear(h, w1), b1))
    raw = tape.jet_bias(tape.jet_linear(h, w2), b2)
    return tape.jet_shift(jsoftplus(raw), floor)


def separable_metric(tape, x, coeffs, centers, inv_widths):
    """Per-coordinate metric g_i = exp(sum_k c_ik rho_k(u_i)).

    rho_k are Gaussian bumps exp(-((u - mu_ik) / w_ik)^2) with their own
    centers and widths.  coeffs/centers/inv_widths: plain nodes or arrays
    shaped (d_in, K).  Returns (g, gamma), both jets (C, N, d_in), where
    gamma_i = (1/2) d(log g_i)/du_i evaluated in closed form:

        gamma_i = -sum_k c_ik t_ik rho_k / w_ik,   t_ik = (u_i - mu_ik)/w_ik
    """
    t = shifted_arg(tape, x, centers, inv_widths)
    rho = jgauss(t, 1.0)
    log_g = Jet(tape.einsum2("cnik,ik->cni", rho.node, _node(tape, coeffs)))
    term = t * rho
    coef = tape.scale(tape.mul(_node(tape, coeffs), _node(tape, inv_widths)),
                      -1.0)
    gamma = Jet(tape.einsum2("cnik,ik->cni", term.node, coef))
    return jexp(log_g), gamma


def _node(tape, x):
    return x if hasattr(x, "val") else tape.leaf(np.asarray(x, float))


def warp_and_volume(tape, x, g):
    """Warped coordinates and the log-volume summary of a metric jet.

    Returns (xi, vol) with xi = x * sqrt(g) shaped like x and vol the
    scalar-per-point jet sum_i log g_i, shaped (C, N, 1) for easy
    concatenation onto feature banks.
    """
    xi = x * jsqrt(g)
    vol = Jet(tape.psum(jlog(g).node, axis=-1))
    C = vol.node.val.shape[0]
    n = vol.node.val.shape[1]
    return xi, tape.jet_reshape(vol, (C, n, 1))

"""Basis banks for edge functions: shifted atoms and B-splines.

Everything here is evaluated in jet arithmetic so that second derivatives
with respect to the model inputs ride along automatically.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Jet, jgauss, jharmonic, jmexhat

DOMAIN = (-1.0, 1.0)


def atom_grid(n_atoms, lo=-1.0, hi=1.0):
    """Default atom centers: uniform grid over the working interval."""
    if n_atoms < 1:
        raise ValueError("need at least one atom")
    if n_atoms == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n_atoms)


def shifted_arg(tape, x, centers, inv_scales):
    """r = (x - c) / s for a bank of atoms.

    x: jet with trailing shape (N, n); centers/inv_scales: arrays or plain
    tape nodes broadcastable to (n, K).  Returns a jet (C, N, n, K).
    """
    C = tape.channels
    tail = x.node.val.shape[1:]
    k = (centers.val if hasattr(centers, "val") else np.asarray(centers)).shape[-1]
    xb = tape.jet_broadcast(tape.jet_reshape(x, (C,) + tail + (1,)),
                            (C,) + tail + (k,))
    return tape.jet_affine(xb, centers, inv_scales)


def atom_bank(tape, x, centers, inv_scales, kind, gamma=1.0, omega=np.pi):
    """Evaluate a bank of K atoms of one family at shifted arguments.

    kind: 'mexhat' | 'rbf' | 'fourier'.  For 'fourier' the bank holds K
    cosine and K sine components (2K features) at frequencies omega * k,
    k = 1..K, of the shifted argument.
    """
    r = shifted_arg(tape, x, centers, inv_scales)
    if kind == "mexhat":
        return jmexhat(r)
    if kind == "rbf":
        return jgauss(r, gamma)
    if kind == "fourier":
        k = r.node.val.shape[-1]
        freqs = omega * np.arange(1, k + 1)
        cosb = jharmonic(r, freqs, "cos")
        sinb = jharmonic(r, freqs, "sin")
        return tape.jet_concat([cosb, sinb], axis=-1)
    raise ValueError(f"unknown atom kind {kind!r}")


# ----------------------------------------------------------------- B-splines

def bspline_knots(grid_size, order):
    """Uniform knot vector on [-1, 1] extended `order` steps on each side."""
    if grid_size < 1 or order < 1:
        raise ValueError("grid_size and order must be positive")
    h = (DOMAIN[1] - DOMAIN[0]) / grid_size
    return DOMAIN[0] + h * np.arange(-order, grid_size + order + 1)


def bspline_bank(tape, x, grid_size, order):
    """All grid_size + order B-spline bases through the jet channels.

    x: jet with trailing shape (N, n).  The argument is clamped to the
    working interval first, so derivative channels vanish outside it.
    Returns a jet (C, N, n, grid_size + order).
    """
    knots = bspline_knots(grid_size, order)
    xc = tape.jet_clamp(x, DOMAIN[0], DOMAIN[1])
    C = tape.channels
    tail = x.node.val.shape[1:]
    xv = xc.node.val[0]

    # degree 0: indicator of each knot interval, right-closed at the top of
    # the working domain so x = 1 lands in exactly one interval
    n0 = len(knots) - 1
    left = knots[:n0]
    right = knots[1:]
    masks = ((xv[..., None] >= left) & (xv[..., None] < right)).astype(float)
    at_top = xv == DOMAIN[1]
    if at_top.any():
        masks[at_top] = ((left < DOMAIN[1])
                         & np.isclose(right, DOMAIN[1])).astype(float)

    level = None  # jet (C, N, n, R) once degree >= 1
    for k in range(1, order + 1):
        r_out = n0 - k
        xb = tape.jet_broadcast(tape.jet_reshape(xc, (C,) + tail + (1,)),
                                (C,) + tail + (r_out,))
        i = np.arange(r_out)
        wl = tape.jet_affine(xb, knots[i], 1.0 / (knots[i + k] - knots[i]))
        wr = tape.jet_affine(xb, knots[i + k + 1],
                             -1.0 / (knots[i + k + 1] - knots[i + 1]))
        if level is None:
            lo = tape.jet_scale(wl, masks[..., :r_out])
            hi = tape.jet_scale(wr, masks[..., 1:r_out + 1])
        else:
            lo = wl * Jet(tape.rows(level.node, slice(0, r_out), axis=-1))
            hi = wr * Jet(tape.rows(level.node, slice(1, r_out + 1), axis=-1))
        level = tape.jet_add(lo, hi)
    return level


def bspline_naive(x, grid_size, order):
    """Reference Cox-de Boor recursion on plain values (oracle use only)."""
    knots = bspline_knots(grid_size, order)
    x = np.clip(np.asarray(x, float), *DOMAIN)

    def basis(i, k, t):
        if k == 0:
            at_top = t == DOMAIN[1]
            hit = (t >= knots[i]) & (t < knots[i + 1]) & ~at_top
            if np.isclose(knots[i + 1], DOMAIN[1]) and knots[i] < DOMAIN[1]:
                hit = hit | at_top
            return hit.astype(float)
        a = (t - knots[i]) / (knots[i + k] - knots[i]) * basis(i, k - 1, t)
        b = ((knots[i + k + 1] - t) / (knots[i + k + 1] - knots[i + 1])
             * basis(i + 1, k - 1, t))
        return a + b

    return np.stack([basis(i, order, x) for i in range(grid_size + order)],
                    axis=-1)

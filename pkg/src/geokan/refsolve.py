"""Classical reference solvers for the case-study problems.

Ground truth comes from standard numerics: an adaptive Dormand-Prince
5(4) integrator for ODE systems, method-of-lines and implicit-explicit
finite differences for the two parabolic PDEs, and an exact transfer
matrix construction for 1-D scattering through a piecewise-constant
permittivity profile.  Fields are cached to disk as a .npy payload plus
a JSON sidecar so long training runs can reuse them.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import NumericError


# ------------------------------------------------------------ field types

def _check_grid(g, name):
    g = np.asarray(g, float)
    if g.ndim != 1 or g.size < 2 or not (np.diff(g) > 0).all():
        raise ValueError(f"{name} grid must be 1-D strictly increasing")
    return g


@dataclass
class Field1D:
    """Values sampled on one strictly increasing grid.

    values may carry trailing component axes, e.g. (n, 3) for an ODE
    trajectory or complex (n,) for a wavefield.
    """
    grid: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = _check_grid(self.grid, "coordinate")
        self.values = np.asarray(self.values)
        if self.values.shape[0] != self.grid.size:
            raise ValueError("value array does not match the grid")


@dataclass
class Field2D:
    """Values on a tensor grid, values[i, j] at (x[i], t[j])."""
    x: np.ndarray
    t: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = _check_grid(self.x, "x")
        self.t = _check_grid(self.t, "t")
        self.values = np.asarray(self.values)
        if self.values.shape != (self.x.size, self.t.size):
            raise ValueError("value array does not match the grids")


# ---------------------------------------------------------------- caching

def cache_dir():
    root = os.environ.get("GEOKAN_CACHE")
    if root:
        return Path(root)
    return Path.home() / ".cache" / "geokan"


def save_field(fld, stem):
    """Write <stem>.npy plus <stem>.json under the cache directory."""
    d = cache_dir()
    d.mkdir(parents=True, exist_ok=True)
    np.save(d / f"{stem}.npy", fld.values)
    if isinstance(fld, Field1D):
        side = {"kind": "field1d", "grid": fld.grid.tolist(),
                "meta": fld.meta}
    else:
        side = {"kind": "field2d", "x": fld.x.tolist(),
                "t": fld.t.tolist(), "meta": fld.meta}
    (d / f"{stem}.json").write_text(json.dumps(side))


def load_field(stem):
    d = cache_dir()
    side = json.loads((d / f"{stem}.json").read_text())
    values = np.load(d / f"{stem}.npy")
    if side["kind"] == "field1d":
        return Field1D(np.array(side["grid"]), values, side["meta"])
    return Field2D(np.array(side["x"]), np.array(side["t"]), values,
                   side["meta"])


# --------------------------------------------------- Dormand-Prince 5(4)

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
# quartic dense-output weights for the same stages (Shampine)
_DP_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608,
     -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933,
     87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304,
     -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408,
     701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883,
     -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423,
     69997945 / 29380423]])


def _dp_stages(f, t, y, h):
    k = np.empty((7, y.size))
    k[0] = f(t, y)
    for s in range(1, 7):
        acc = y + h * np.tensordot(_DP_A[s], k[:s], axes=1)
        k[s] = f(t + _DP_C[s] * h, acc)
    return k


def integrate_rk45(f, y0, t_span, rtol=1e-8, atol=1e-10, t_eval=None,
                   fixed_step=None, max_steps=10_000_000):
    """Dormand-Prince 5(4) with quartic dense output.

    Returns (times, states) with states[i] the solution at times[i].
    With t_eval=None the accepted step points are returned.  fixed_step
    disables the error controller (used by the order-of-accuracy checks).
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    t0, t1 = map(float, t_span)
    if t1 <= t0:
        raise ValueError("need t_span with t1 > t0")
    y = np.array(y0, float).ravel()
    if t_eval is not None:
        t_eval = np.asarray(t_eval, float)
        if (t_eval < t0 - 1e-12).any() or (t_eval > t1 + 1e-12).any():
            raise ValueError("t_eval outside t_span")
        out = np.empty((t_eval.size, y.size))
        if (pos0 := np.flatnonzero(np.isclose(t_eval, t0))).size:
            out[pos0] = y
        next_eval = int(np.searchsorted(t_eval, t0 + 1e-300))
    else:
        ts, ys = [t0], [y.copy()]

    h = fixed_step if fixed_step is not None else min(
        1e-3 * (t1 - t0), 1.0)
    t = t0
    for _ in range(max_steps):
        if t >= t1:
            break
        h = min(h, t1 - t)
        if h < 16 * np.finfo(float).eps * max(abs(t), 1.0):
            raise NumericError("step size underflow (stiff problem?)")
        k = _dp_stages(f, t, y, h)
        y5 = y + h * (_DP_B5 @ k)
        if not np.isfinite(y5).all():
            raise NumericError("non-finite state in integration")
        if fixed_step is None:
            err = h * ((_DP_B5 - _DP_B4) @ k)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            enorm = math.sqrt(float(np.mean((err / scale) ** 2)))
            if enorm > 1.0:
                h *= max(0.2, 0.9 * enorm ** -0.2)
                continue
        if t_eval is not None:
            hi = int(np.searchsorted(t_eval, t + h, side="right"))
            if hi > next_eval:
                theta = (t_eval[next_eval:hi, None] - t) / h
                powers = theta ** np.arange(1, 5)
                out[next_eval:hi] = y + h * powers @ (_DP_P.T @ k)
                next_eval = hi
        t += h
        y = y5
        if t_eval is None:
            ts.append(t)
            ys.append(y.copy())
        if fixed_step is None and enorm > 0:
            h *= min(5.0, 0.9 * enorm ** -0.2)
        elif fixed_step is None:
            h *= 5.0
    else:
        raise NumericError("step budget exhausted")

    if t_eval is not None:
        if next_eval < t_eval.size:      # points exactly at t1
            out[next_eval:] = y
        return t_eval, out
    return np.array(ts), np.array(ys)


# ------------------------------------------------------------------ Lorenz

def lorenz_rhs(sigma=10.0, rho=15.0, beta=8.0 / 3.0):
    def f(t, y):
        x, yy, z = y
        return np.array([sigma * (yy - x),
                         x * (rho - z) - yy,
                         x * yy - beta * z])
    return f


def solve_lorenz(y0=(1.0, 1.0, 1.0), t_span=(0.0, 20.0), n=2000,
                 sigma=10.0, rho=15.0, beta=8.0 / 3.0, rtol=1e-10,
                 atol=1e-12):
    ts = np.linspace(*t_span, n)
    _, traj = integrate_rk45(lorenz_rhs(sigma, rho, beta), y0, t_span,
                             rtol=rtol, atol=atol, t_eval=ts)
    return Field1D(ts, traj, {"problem": "lorenz", "sigma": sigma,
                              "rho": rho, "beta": beta, "y0": list(y0)})


# -------------------------------------------------------------- Allen-Cahn

def solve_allen_cahn(case=1, nx=512, nt=2000, ic=None, bc=(-1.0, 1.0)):
    """Implicit diffusion, explicit reaction, Dirichlet endpoints.

    Case 1: nu=1e-3, reaction u - u^3, ic 0.53x + 0.47 sin(-1.5 pi x).
    Case 2: nu=1e-4, reaction 5(u - u^3), ic x^2 cos(pi x).  Both cases
    pin u(-1,t)=-1, u(1,t)=1 for t>0 as stated with the equations.
    """
    if case not in (1, 2):
        raise ValueError("case must be 1 or 2")
    if nx < 64 or nt < 64:
        raise ValueError("need nx, nt >= 64")
    nu = 1e-3 if case == 1 else 1e-4
    gain = 1.0 if case == 1 else 5.0
    if ic is None:
        ic = ((lambda x: 0.53 * x + 0.47 * np.sin(-1.5 * np.pi * x))
              if case == 1 else (lambda x: x ** 2 * np.cos(np.pi * x)))
    x = np.linspace(-1.0, 1.0, nx)
    t = np.linspace(0.0, 1.0, nt)
    dx, dt = x[1] - x[0], t[1] - t[0]
    r = nu * dt / dx ** 2

    m = nx - 2
    lap = (np.diag(-2.0 * np.ones(m)) + np.diag(np.ones(m - 1), 1)
           + np.diag(np.ones(m - 1), -1))
    minv = np.linalg.inv(np.eye(m) - r * lap)

    u = np.empty((nx, nt))
    u[:, 0] = ic(x)
    cur = u[1:-1, 0].copy()
    bvec = np.zeros(m)
    bvec[0], bvec[-1] = bc[0], bc[1]
    for j in range(1, nt):
        rhs = cur + dt * gain * (cur - cur ** 3) + r * bvec
        cur = minv @ rhs
        u[1:-1, j] = cur
        u[0, j], u[-1, j] = bc
    if not np.isfinite(u).all():
        raise NumericError("Allen-Cahn stepping diverged; refine nt")
    return Field2D(x, t, u, {"problem": f"allen{case}", "nu": nu,
                             "nx": nx, "nt": nt})


# ----------------------------------------------------------------- Burgers

def solve_burgers(nx=512, nt=2000, nu=0.1, rtol=1e-8, atol=1e-10):
    """Method of lines on [0,1]^2, ic sin(pi x), Dirichlet zeros."""
    if nx < 64 or nt < 64:
        raise ValueError("need nx, nt >= 64")
    x = np.linspace(0.0, 1.0, nx)
    t = np.linspace(0.0, 1.0, nt)
    dx = x[1] - x[0]

    def rhs(_, u):
        du = np.zeros_like(u)
        ux = (u[2:] - u[:-2]) / (2 * dx)
        uxx = (u[2:] - 2 * u[1:-1] + u[:-2]) / dx ** 2
        du[1:-1] = -u[1:-1] * ux + nu * uxx
        return du

    _, traj = integrate_rk45(rhs, np.sin(np.pi * x), (0.0, 1.0),
                             rtol=rtol, atol=atol, t_eval=t)
    return Field2D(x, t, traj.T, {"problem": "burgers", "nu": nu,
                                  "nx": nx, "nt": nt})


# --------------------------------------------------------------- Helmholtz

@dataclass
class PermittivityProfile:
    """Piecewise-constant segments (z_lo, z_hi, eps) covering [0,1]."""
    segments: list

    def __post_init__(self):
        segs = [(float(a), float(b), complex(e))
                for a, b, e in self.segments]
        if not segs or not math.isclose(segs[0][0], 0.0) \
                or not math.isclose(segs[-1][1], 1.0):
            raise ValueError("segments must cover [0, 1]")
        for (a, b, e), (c, _, _) in zip(segs, segs[1:] + [(1.0,) * 3]):
            if b <= a or not math.isclose(b, c):
                raise ValueError("segments must partition [0, 1]")
            if e.real <= 0:
                raise ValueError("permittivity must have positive real part")
        self.segments = segs

    def eps_at(self, z):
        z = np.asarray(z, float)
        edges = np.array([s[1] for s in self.segments[:-1]])
        idx = np.searchsorted(edges, z, side="right")
        eps = np.array([s[2] for s in self.segments])
        return eps[idx]


def default_profile():
    """A lossy dielectric slab in vacuum."""
    return PermittivityProfile([(0.0, 0.3, 1.0),
                                (0.3, 0.7, 2.25 + 0.05j),
                                (0.7, 1.0, 1.0)])


def _propagator(k, d):
    """2x2 map of (u, u_z) across a homogeneous slab of thickness d."""
    kd = k * d
    c, s = np.cos(kd), np.sin(kd)
    return np.array([[c, s / k], [-k * s, c]])


def solve_helmholtz_tmm(profile=None, lam=1.0 / 15, A_inc=1.0,
                        k_minus=None, k_plus=None, n=2048):
    """Exact sampled wavefield for the 1-D scattering problem.

    Left boundary u_z + i k- u = 2 i k- A_inc, right u_z - i k+ u = 0.
    """
    if lam <= 0:
        raise ValueError("wavelength must be positive")
    profile = default_profile() if profile is None else profile
    k0 = 2 * np.pi / lam
    k_minus = k0 if k_minus is None else k_minus
    k_plus = k0 if k_plus is None else k_plus
    ks = [np.sqrt(e) * k0 for _, _, e in profile.segments]

    total = np.eye(2, dtype=complex)
    for (a, b, _), k in zip(profile.segments, ks):
        total = _propagator(k, b - a) @ total
    # unknown state v0 = (u, u_z) at z=0 from the two Robin rows
    lhs = np.array([[1j * k_minus, 1.0],
                    [total[1, 0] - 1j * k_plus * total[0, 0],
                     total[1, 1] - 1j * k_plus * total[0, 1]]])
    rhs = np.array([2j * k_minus * A_inc, 0.0])
    try:
        v0 = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"degenerate scattering system: {exc}")

    z = np.linspace(0.0, 1.0, n)
    u = np.empty(n, dtype=complex)
    v = v0
    for (a, b, _), k in zip(profile.segments, ks):
        sel = (z >= a) & (z <= b) if b == 1.0 else (z >= a) & (z < b)
        kd = k * (z[sel] - a)
        u[sel] = np.cos(kd) * v[0] + np.sin(kd) / k * v[1]
        v = _propagator(k, b - a) @ v
    return Field1D(z, u, {"problem": "helmholtz", "lam": lam,
                          "A_inc": A_inc})


def scattering_coefficients(profile=None, lam=1.0 / 15, A_inc=1.0):
    """Reflectance and transmittance of the profile at one wavelength."""
    fld = solve_helmholtz_tmm(profile, lam, A_inc, n=2)
    refl = fld.values[0] - A_inc
    tran = fld.values[-1]
    return abs(refl) ** 2 / abs(A_inc) ** 2, \
        abs(tran) ** 2 / abs(A_inc) ** 2


def _thomas(lower, diag, upper, rhs):
    """Tridiagonal solve, complex-safe; overwrites nothing."""
    n = diag.size
    cp = np.empty(n - 1, dtype=complex)
    dp = np.empty(n, dtype=complex)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i - 1] * cp[i - 1]
        if den == 0:
            raise NumericError("singular tridiagonal system")
        if i < n - 1:
            cp[i] = upper[i] / den
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / den
    out = np.empty(n, dtype=complex)
    out[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def solve_helmholtz_fd(profile=None, lam=1.0 / 15, A_inc=1.0,
                       k_minus=None, k_plus=None, n=4096):
    """Second-order finite-difference solve with ghost-node Robin rows.

    Entirely independent of the transfer matrix construction; used as
    the cross-method oracle.
    """
    profile = default_profile() if profile is None else profile
    k0 = 2 * np.pi / lam
    k_minus = k0 if k_minus is None else k_minus
    k_plus = k0 if k_plus is None else k_plus
    z = np.linspace(0.0, 1.0, n)
    h = z[1] - z[0]
    k2 = profile.eps_at(z) * k0 ** 2

    diag = (-2.0 + h ** 2 * k2).astype(complex)
    lower = np.ones(n - 1, dtype=complex)
    upper = np.ones(n - 1, dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    diag[0] += 2j * h * k_minus
    upper[0] = 2.0
    rhs[0] = 4j * h * k_minus * A_inc
    diag[-1] += 2j * h * k_plus
    lower[-1] = 2.0
    u = _thomas(lower, diag, upper, rhs)
    return Field1D(z, u, {"problem": "helmholtz_fd", "lam": lam,
                          "A_inc": A_inc})


# ------------------------------------------------------ reference registry

def _build_reference(problem):
    if problem in ("allen1", "allen2"):
        return solve_allen_cahn(case=int(problem[-1]))
    if problem == "burgers":
        return solve_burgers()
    if problem == "lorenz":
        return solve_lorenz()
    if problem == "helmholtz":
        lams = np.linspace(1.0 / 30, 1.0 / 10, 64)
        cols = [solve_helmholtz_tmm(lam=l, n=2048).values for l in lams]
        return Field2D(np.linspace(0.0, 1.0, 2048), lams,
                       np.stack(cols, axis=1),
                       {"problem": "helmholtz", "lams": lams.tolist()})
    raise ValueError(f"unknown reference problem {problem!r}")


def reference_field(problem):
    """Load the cached reference for a named problem, building if absent."""
    stem = f"ref_{problem}"
    d = cache_dir()
    if (d / f"{stem}.json").exists() and (d / f"{stem}.npy").exists():
        return load_field(stem)
    fld = _build_reference(problem)
    save_field(fld, stem)
    return fld

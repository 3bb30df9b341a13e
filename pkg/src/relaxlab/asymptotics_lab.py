"""Comparison solutions for the large-time behaviour.

Three approximations of a nonlinear trajectory are built here:

* the linearized evolution ``u_l = Gamma(t) u(0)``;
* its conservative diffusive part ``K00(t) L0 u(0)``;
* the Chapman-Enskog parabolic problem for the conservative variables,

    w_t + sum_alpha (A_alpha,11 w + Q(w, w))_{x_alpha} = sum_{alpha beta} V_{alpha beta} w_{x_alpha x_beta},

  with ``V_{alpha beta} = -A_alpha,12 D^{-1} A_beta,21`` and the quadratic
  term ``Q`` present only in one space dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cd_transform import CDSystem, default_directions, projectors, to_cd_form
from .decay import DecayReport, DecayRow
from .fourier_solver import expm, gradient_norm, propagate_linear, split_low_high
from .grid import Grid, GridField
from .nonlinear_sim import BlowUpError, Trajectory, bump_data, simulate
from .system_model import RawSystem

HESS_STEP = 1e-4


@dataclass(frozen=True)
class ChapmanEnskogOperators:
    m: int
    n1: int
    drift: np.ndarray            # (m, n1, n1)
    viscosity: np.ndarray        # (m, m, n1, n1)
    Dinv: np.ndarray
    quadratic: Optional[np.ndarray] = None   # (n1, n1, n1), m = 1 only

    def symbol(self, xi: np.ndarray) -> np.ndarray:
        """Fourier symbol ``-i sum xi_a A_a,11 - sum xi_a xi_b V_ab`` for ``xi`` of shape ``(K, m)``."""
        xi = np.atleast_2d(xi)
        drift = np.einsum("ka,aij->kij", xi, self.drift)
        visc = np.einsum("ka,kb,abij->kij", xi, xi, self.viscosity)
        return -1j * drift - visc

    def directional_viscosity(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, float)
        return np.einsum("a,b,abij->ij", zeta, zeta, self.viscosity)

    def quadratic_form(self, w: np.ndarray) -> np.ndarray:
        """``Q(w, w)`` for ``w`` of shape ``(n1, ...)``."""
        if self.quadratic is None:
            raise ValueError("no quadratic term available")
        return np.einsum("iab,a...,b...->i...", self.quadratic, w, w)

    def to_dict(self) -> dict:
        out = {"drift": self.drift.tolist(), "viscosity": self.viscosity.tolist()}
        if self.quadratic is not None:
            out["quadratic"] = self.quadratic.tolist()
        return out


def _hessian_tensor(fun, n: int, idx: Sequence[int], h: float = HESS_STEP) -> np.ndarray:
    """Second derivatives at 0 of a vector map along coordinates ``idx``.

    Returns ``H[i, a, b] = d^2 fun_i / du_{idx[a]} du_{idx[b]}`` from the
    four-point central formula.
    """
    k = len(idx)
    f0 = np.asarray(fun(np.zeros(n)))
    H = np.zeros((f0.size, k, k))

    def e(i, s):
        v = np.zeros(n)
        v[idx[i]] += s
        return v

    for a in range(k):
        for b in range(a, k):
            pp = np.asarray(fun(e(a, h) + e(b, h))).ravel()
            pm = np.asarray(fun(e(a, h) + e(b, -h))).ravel()
            mp = np.asarray(fun(e(a, -h) + e(b, h))).ravel()
            mm = np.asarray(fun(e(a, -h) + e(b, -h))).ravel()
            H[:, a, b] = H[:, b, a] = (pp - pm - mp + mm) / (4 * h * h)
    return H


def build_chapman_enskog(system, with_quadratic: Optional[bool] = None) -> ChapmanEnskogOperators:
    """Assemble drift, viscosity and (for ``m = 1``) the quadratic term."""
    cd = to_cd_form(system)[1] if isinstance(system, RawSystem) else system
    m, n1, n = cd.m, cd.n1, cd.n
    Di = np.linalg.inv(cd.D)
    drift = np.stack([a[:n1, :n1] for a in cd.A_alpha])
    visc = np.zeros((m, m, n1, n1))
    for a in range(m):
        for b in range(m):
            visc[a, b] = -cd.A_alpha[a][:n1, n1:] @ Di @ cd.A_alpha[b][n1:, :n1]
    if with_quadratic is None:
        with_quadratic = m == 1 and cd.has_nonlinearity
    Q = None
    if with_quadratic:
        if m != 1:
            raise ValueError("the quadratic term is only defined for m = 1")
        if not cd.has_nonlinearity:
            raise ValueError("quadratic term requested but the system has no nonlinearity")
        idx = list(range(n1))
        Hf = _hessian_tensor(lambda w: cd.flux(w)[0], n, idx)      # (n, n1, n1)
        Hq = _hessian_tensor(lambda w: cd.source(w), n, idx)       # (n, n1, n1)
        A12 = cd.A_alpha[0][:n1, n1:]
        Q = 0.5 * (Hf[:n1] - np.einsum("ij,jab->iab", A12 @ Di, Hq[n1:]))
    return ChapmanEnskogOperators(m, n1, drift, visc, Di, Q)


def _parabolic_multiplier(ops: ChapmanEnskogOperators, grid: Grid, t: float) -> np.ndarray:
    return grid.symmetrize_multiplier(expm(ops.symbol(grid.xi_flat) * t))


def _apply(mult, grid, w):
    spec = grid.fft(w).reshape(w.shape[0], -1)
    out = np.einsum("kij,jk->ik", mult, spec).reshape(w.shape)
    return grid.ifft(out).real


def parabolic_trajectory(ops: ChapmanEnskogOperators, w0: GridField, times: Sequence[float],
                         nonlinear: bool = False, dt: Optional[float] = None) -> list:
    """Fields at the requested (nondecreasing) times."""
    if w0.n != ops.n1:
        raise ValueError("parabolic data must have n1 components")
    if nonlinear and ops.m != 1:
        raise ValueError("the nonlinear parabolic problem is one-dimensional")
    if nonlinear and ops.quadratic is None:
        raise ValueError("operators carry no quadratic term")
    grid = w0.grid
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be nonnegative and nondecreasing")
    w = np.array(w0.to_physical().data, float)
    if not nonlinear:
        return [GridField(grid, _apply(_parabolic_multiplier(ops, grid, t), grid, w))
                if t > 0 else GridField(grid, w.copy()) for t in times]

    h_max = 0.5 * grid.dx if dt is None else dt
    k = grid.deriv_wavenumbers[0]
    mask = grid.dealias_mask

    def N(v):
        spec = grid.fft(ops.quadratic_form(v))
        return grid.ifft(-1j * k[None] * spec * mask).real

    out, t_now = [], 0.0
    for target in times:
        span = target - t_now
        if span > 0:
            steps = int(np.ceil(span / h_max - 1e-9))
            h = span / steps
            half = _parabolic_multiplier(ops, grid, 0.5 * h)
            for _ in range(steps):
                w = _apply(half, grid, w)
                k1 = N(w)
                k2 = N(w + 0.5 * h * k1)
                k3 = N(w + 0.5 * h * k2)
                k4 = N(w + h * k3)
                w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                w = _apply(half, grid, w)
            t_now = target
        out.append(GridField(grid, w.copy()))
    return out


def solve_parabolic(ops: ChapmanEnskogOperators, w0: GridField, t: float,
                    nonlinear: bool = False, dt: Optional[float] = None) -> GridField:
    """Chapman-Enskog solution at time ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return parabolic_trajectory(ops, w0, [t], nonlinear, dt)[0]


def _window(traj: Trajectory, window):
    T = float(traj.times.max())
    return (T / 4.0, T) if window is None else tuple(window)


def compare_to_linear(traj: Trajectory, cd: Optional[CDSystem] = None, norms=(2, np.inf),
                      beta_max: int = 0, window=None, cutoff: Optional[float] = None,
                      tolerance: float = 0.2) -> DecayReport:
    """Decay of ``u - u_l`` and ``u_c - K00 L0 u(0)`` against the extra half power."""
    cd = traj.system if cd is None else cd
    m = traj.grid.m
    if m < 2:
        raise ValueError("comparison with the linear solution is stated for m >= 2")
    window = _window(traj, window)
    ps = projectors(cd)
    u0 = traj.field(traj.index_of(0.0))
    cons0 = GridField(traj.grid, np.tensordot(ps.Q0, u0.data, axes=(1, 0)))
    sel = [k for k, t in enumerate(traj.times) if t > 0]
    times = traj.times[sel]
    hist = {}
    for k in sel:
        t = traj.times[k]
        u = traj.field(k)
        ul = propagate_linear(cd, u0, t)
        kp = split_low_high(cd, cons0, t, cutoff).kpart
        diff_l = u - ul
        diff_k = GridField(traj.grid, u.data[: cd.n1] - kp.data[: cd.n1])
        for b in range(beta_max + 1):
            for p in norms:
                hist.setdefault(("u-u_l", b, p), []).append(gradient_norm(diff_l, b, p))
                hist.setdefault(("u_c-K00", b, p), []).append(gradient_norm(diff_k, b, p))
                hist.setdefault(("u", b, p), []).append(gradient_norm(u, b, p))
    rep = DecayReport(provenance={"operation": "compare_to_linear", "window": list(window)})
    for (var, b, p), vals in hist.items():
        th = -(m / 2.0) * (1 - 1.0 / p) - b / 2.0 - 0.5
        if var == "u":
            rep.add(DecayRow(var, b, float(p), times, vals, th + 0.5, tolerance, "info", window))
        else:
            rep.add(DecayRow(var, b, float(p), times, vals, th, tolerance, "upper", window))
    for p in norms:
        d = rep.row(f"u-u_l|beta=0|p={'inf' if np.isinf(p) else f'{p:g}'}")
        u = rep.row(f"u|beta=0|p={'inf' if np.isinf(p) else f'{p:g}'}")
        if d.fitted is not None and u.fitted is not None:
            rep.checks[f"faster_than_u|p={d.p:g}"] = bool(d.fitted <= u.fitted - 0.3)
    return rep


def compare_chapman_enskog(traj: Trajectory, ops: ChapmanEnskogOperators, mu: float = 0.3,
                           norms=None, beta_max: int = 0, window=None,
                           nonlinear: Optional[bool] = None,
                           dt: Optional[float] = None) -> DecayReport:
    """Decay of ``u_c - u_p`` where ``u_p`` solves the parabolic problem from ``L0 u(0)``."""
    m = traj.grid.m
    if m == 1 and not 0 <= mu < 0.5:
        raise ValueError("mu must lie in [0, 1/2)")
    nonlinear = (m == 1) if nonlinear is None else nonlinear
    norms = ((1, 2, np.inf) if m == 1 else (2, np.inf)) if norms is None else norms
    window = _window(traj, window)
    n1 = ops.n1
    k0 = traj.index_of(0.0)
    if abs(traj.times[k0]) > 0:
        raise ValueError("trajectory must contain t = 0")
    up0 = traj.uc(k0)
    sel = [k for k, t in enumerate(traj.times) if t > 0]
    times = traj.times[sel]
    ups = parabolic_trajectory(ops, up0, times, nonlinear, dt)
    hist = {}
    for k, up in zip(sel, ups):
        uc = traj.uc(k)
        diff = uc - up
        for b in range(beta_max + 1):
            for p in norms:
                hist.setdefault(("u_c-u_p", b, p), []).append(gradient_norm(diff, b, p))
                hist.setdefault(("u_c", b, p), []).append(gradient_norm(uc, b, p))
    rep = DecayReport(provenance={"operation": "compare_chapman_enskog", "mu": mu,
                                  "nonlinear": bool(nonlinear), "window": list(window)})
    tol = 0.15 if m == 1 else 0.2
    for (var, b, p), vals in hist.items():
        base = 0.0 if p == 1 else -(m / 2.0) * (1 - 1.0 / p)
        if var == "u_c":
            rep.add(DecayRow(var, b, float(p), times, vals, base - b / 2.0, tol, "info", window))
            continue
        th = base - b / 2.0 - (mu if m == 1 else 0.5)
        rep.add(DecayRow(var, b, float(p), times, vals, th, tol, "upper", window))
    for p in norms:
        ps = "inf" if np.isinf(p) else f"{p:g}"
        d, u = rep.row(f"u_c-u_p|beta=0|p={ps}"), rep.row(f"u_c|beta=0|p={ps}")
        if d.fitted is not None and u.fitted is not None:
            rep.checks[f"steeper_than_u_c|p={ps}"] = bool(d.fitted <= u.fitted - 0.25)
    return rep


def chapman_enskog_study(system, grid: Grid, T: float, dt: float, delta: float = 0.05,
                         mu: float = 0.3, max_halvings: int = 4, window=None,
                         sample_times=None):
    """Simulate and compare with the parabolic problem, halving the amplitude on failure.

    Returns ``(trajectory, report, delta_used)``.  A failing report after
    the last halving is returned as inconclusive rather than raised.
    """
    cd = to_cd_form(system)[1] if isinstance(system, RawSystem) else system
    ops = build_chapman_enskog(cd)
    d = delta
    traj = rep = None
    for attempt in range(max_halvings + 1):
        try:
            traj = simulate(cd, bump_data(cd, grid, d), T, dt, sample_times)
            rep = compare_chapman_enskog(traj, ops, mu, window=window)
        except BlowUpError:
            rep = None
        if rep is not None and rep.passed:
            break
        if attempt < max_halvings:
            d = d / 2.0
    if rep is not None:
        rep.provenance["delta"] = d
        rep.provenance["halvings"] = attempt
    return traj, rep, d

"""Nonlinear balance laws on periodic grids.

The scheme mirrors the Duhamel form of the equation: each step applies the
exact linear propagator for half a step, integrates the nonlinear residual

    N(w) = -sum_alpha d_alpha (f_alpha(w) - A_alpha w) + (g(w) - B w)

with classical RK4 and 2/3-rule dealiasing, then applies the second linear
half step (Strang splitting).  Everything runs in C-D variables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cd_transform import CDSystem, projectors, to_cd_form
from .decay import DecayReport, DecayRow
from .fourier_solver import apply_multiplier, gradient_norm, mode_exponentials
from .grid import Grid, GridField
from .system_model import RawSystem


class BlowUpError(RuntimeError):
    """The solution left the small-data regime."""


def _dealias(grid: Grid, spec: np.ndarray, on: bool) -> np.ndarray:
    return spec * grid.dealias_mask if on else spec


def nonlinear_residual(cd: CDSystem, grid: Grid, w: np.ndarray,
                       dealias: bool = True) -> np.ndarray:
    """``N(w)`` in physical space; zero for systems without nonlinear maps."""
    if not cd.has_nonlinearity:
        return np.zeros_like(w)
    n = cd.n
    A = np.stack(cd.A_alpha)
    F = np.asarray(cd.flux(w)) - np.tensordot(A, w, axes=([2], [0]))
    G = np.asarray(cd.source(w)) - np.tensordot(cd.B, w, axes=([1], [0]))
    k = grid.deriv_wavenumbers
    spec = grid.fft(G)
    Fs = grid.fft(F)  # (m, n, ...)
    for alpha in range(cd.m):
        spec = spec - 1j * k[alpha][None] * Fs[alpha]
    spec = _dealias(grid, spec, dealias)
    return grid.ifft(spec).real.reshape((n,) + grid.N)


def full_rhs(cd: CDSystem, grid: Grid, w: np.ndarray) -> np.ndarray:
    """``w_t = -sum_alpha d_alpha f_alpha(w) + g(w)`` (linear if no maps)."""
    A = np.stack(cd.A_alpha)
    if cd.has_nonlinearity:
        F = np.asarray(cd.flux(w))
        G = np.asarray(cd.source(w))
    else:
        F = np.tensordot(A, w, axes=([2], [0]))
        G = np.tensordot(cd.B, w, axes=([1], [0]))
    k = grid.deriv_wavenumbers
    spec = grid.fft(G)
    Fs = grid.fft(F)
    for alpha in range(cd.m):
        spec = spec - 1j * k[alpha][None] * Fs[alpha]
    return grid.ifft(spec).real


@dataclass
class Trajectory:
    """Sampled solution in C-D variables."""

    system: CDSystem
    grid: Grid
    times: np.ndarray
    fields: list
    scheme: dict = field(default_factory=dict)

    def field(self, k: int) -> GridField:
        return GridField(self.grid, self.fields[k])

    def uc(self, k: int) -> GridField:
        return GridField(self.grid, self.fields[k][: self.system.n1])

    def ud(self, k: int) -> GridField:
        return GridField(self.grid, self.fields[k][self.system.n1:])

    def raw(self, k: int) -> GridField:
        return GridField(self.grid, np.tensordot(self.system.Minv, self.fields[k], axes=(1, 0)))

    def ut(self, k: int) -> GridField:
        return GridField(self.grid, full_rhs(self.system, self.grid, self.fields[k]))

    def mass(self, k: int) -> np.ndarray:
        return self.uc(k).integral()

    def index_of(self, t: float) -> int:
        return int(np.argmin(np.abs(self.times - t)))

    def save(self, directory) -> Path:
        """Store snapshots as binary grid fields plus a JSON manifest."""
        d = Path(directory)
        (d / "fields").mkdir(parents=True, exist_ok=True)
        names = []
        for k, arr in enumerate(self.fields):
            name = f"fields/w_{k:04d}.bin"
            GridField(self.grid, arr).save(d / name)
            names.append(name)
        manifest = {"times": [float(t) for t in self.times], "snapshots": names,
                    "scheme": self.scheme, "grid": {"m": self.grid.m, "N": list(self.grid.N),
                                                    "L": self.grid.L}}
        path = d / "trajectory.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory, system: CDSystem) -> "Trajectory":
        d = Path(directory)
        man = json.loads((d / "trajectory.json").read_text())
        fields = [GridField.load(d / name).data for name in man["snapshots"]]
        g = man["grid"]
        return cls(system, Grid(g["m"], tuple(g["N"]), g["L"]), np.array(man["times"]),
                   fields, man["scheme"])


def cfl_limit(cd: CDSystem, grid: Grid) -> float:
    return 0.5 * grid.dx / cd.max_speed()


def simulate(system, u0: GridField, T: float, dt: float,
             sample_times: Optional[Sequence[float]] = None, dealias: bool = True,
             max_amplitude: float = 0.5, guard: float = 10.0) -> Trajectory:
    """Evolve the nonlinear system from ``u0`` up to ``T``.

    A :class:`RawSystem` is first put in C-D form and ``u0`` is read in the
    original variables; a :class:`CDSystem` takes ``u0`` in C-D variables.
    The step is shortened so that ``T`` is an integer number of steps.
    """
    if isinstance(system, RawSystem):
        M, cd = to_cd_form(system)
        w = np.tensordot(M, u0.to_physical().data, axes=(1, 0))
    else:
        cd = system
        w = np.array(u0.to_physical().data, dtype=float)
    grid = u0.grid
    if grid.m > 2 and cd.has_nonlinearity:
        raise ValueError("nonlinear runs are limited to m <= 2")
    if w.shape[0] != cd.n:
        raise ValueError("initial data has the wrong number of components")
    amp0 = float(np.max(np.abs(u0.to_physical().data)))
    if amp0 > max_amplitude:
        raise ValueError(f"initial amplitude {amp0} outside the small-data regime")
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    limit = cfl_limit(cd, grid)
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the CFL bound {limit:.4g}")
    nsteps = int(np.ceil(T / dt - 1e-9))
    h = T / nsteps
    if sample_times is None:
        sample_times = np.concatenate([[0.0], np.geomspace(min(1.0, T), T, 40)])
    steps = sorted({int(round(s / h)) for s in sample_times if 0 <= s <= T + 1e-9})
    wanted = set(steps)

    half = mode_exponentials(cd, grid, 0.5 * h)
    wmax = max(np.max(np.abs(w)), 1e-300)

    def lin_half(v):
        return grid.ifft(apply_multiplier(half, grid.fft(v))).real

    def N(v):
        return nonlinear_residual(cd, grid, v, dealias)

    times, fields = [], []
    if 0 in wanted:
        times.append(0.0)
        fields.append(w.copy())
    for step in range(1, nsteps + 1):
        w = lin_half(w)
        if cd.has_nonlinearity:
            k1 = N(w)
            k2 = N(w + 0.5 * h * k1)
            k3 = N(w + 0.5 * h * k2)
            k4 = N(w + h * k3)
            w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        w = lin_half(w)
        amp = np.max(np.abs(w))
        if not np.isfinite(amp) or amp > guard * wmax:
            raise BlowUpError(
                f"|w|_inf = {amp:.3e} exceeds {guard} x initial at t = {step * h:.4g}")
        if step in wanted:
            times.append(step * h)
            fields.append(w.copy())
    scheme = {"dt": h, "steps": nsteps, "order": 2, "substep": "rk4",
              "dealias": "2/3" if dealias else "none", "T": float(T)}
    return Trajectory(cd, grid, np.array(times), fields, scheme)


def bump_data(cd: CDSystem, grid: Grid, delta: float = 0.05, width: float = 1.0) -> GridField:
    """C-D data with a Gaussian bump in every conservative component."""
    d = np.zeros((cd.n,) + grid.N)
    d[: cd.n1] = grid.gaussian(delta, width)[None]
    return GridField(grid, d)


# ---------------------------------------------------------------------------
# decay measurement

DEFAULT_TOLERANCES = {
    ("u", 2): 0.1, ("u_c", 2): 0.1, ("u_d", 2): 0.15, ("u", np.inf): 0.1,
    ("u_c", np.inf): 0.15, ("u_d", np.inf): 0.2,
}


def theoretical_exponent(var: str, m: int, p: float, beta: int) -> float:
    """Decay exponents for the nonlinear solution and its time derivative."""
    base = 0.0 if p == 1 else -(m / 2.0) * (1.0 - 1.0 / p)
    if var in ("u", "u_c"):
        return base - beta / 2.0
    if var == "u_d":
        return base - beta / 2.0 - 0.5
    if var == "u_t":
        if p == 1:
            return -0.5 - beta / 2.0
        return base - 1.0 - beta / 2.0
    if var == "u_dt":
        return base - 1.0 - beta / 2.0
    raise ValueError(f"unknown variable {var!r}")


def _tolerance(var, p, beta):
    if p == 1:
        return 0.15
    tol = DEFAULT_TOLERANCES.get((var, p), 0.2)
    return tol + (0.05 if beta else 0.0)


def measure_solution_decay(traj: Trajectory, norms=(1, 2, np.inf), beta_max: int = 1,
                           window: Optional[Sequence[float]] = None,
                           variables=("u", "u_c", "u_d", "u_t", "u_dt")) -> DecayReport:
    """Fit decay exponents of the solution, its parts and its time derivative."""
    T = float(traj.times.max())
    window = (T / 4.0, T) if window is None else tuple(window)
    if np.log10(window[1] / window[0]) < 0.5:
        raise ValueError("fit window shorter than half a decade")
    m = traj.grid.m
    norms = [p for p in norms if not (p == 1 and m != 1)]
    sel = [k for k, t in enumerate(traj.times) if t > 0]
    times = traj.times[sel]
    n1 = traj.system.n1
    hist = {}
    for k in sel:
        w = traj.field(k)
        wt = traj.ut(k)
        pieces = {"u": w, "u_c": traj.uc(k), "u_d": traj.ud(k), "u_t": wt,
                  "u_dt": GridField(traj.grid, wt.data[n1:])}
        for var in variables:
            for b in range(beta_max + 1):
                for p in norms:
                    hist.setdefault((var, b, p), []).append(gradient_norm(pieces[var], b, p))
    rep = DecayReport(provenance={"operation": "measure_solution_decay",
                                  "scheme": traj.scheme, "window": list(window)})
    for (var, b, p), vals in hist.items():
        # time-derivative rates are upper bounds; symmetric systems beat them
        bound = "upper" if var in ("u_t", "u_dt") else "band"
        rep.add(DecayRow(var, b, float(p), times, vals, theoretical_exponent(var, m, p, b),
                         _tolerance(var, p, b), bound, window))
    return rep


def dissipative_ratio(traj: Trajectory) -> np.ndarray:
    """``||u_d||_2 / ||u_c||_2`` at every sample."""
    return np.array([traj.ud(k).norm(2) / max(traj.uc(k).norm(2), 1e-300)
                     for k in range(len(traj.times))])


def sobolev_norm(f: GridField, s: int = 2) -> float:
    """Spectral ``H^s`` norm."""
    spec = f.to_spectral().data
    k2 = np.sum(f.grid.wavenumbers**2, axis=0)
    weight = (1.0 + k2) ** s
    return float(np.sqrt(f.grid.cell_volume / f.grid.size * np.sum(weight * np.abs(spec) ** 2)))

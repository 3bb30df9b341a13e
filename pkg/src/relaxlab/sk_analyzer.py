"""SK coupling condition and the uniform dissipation constant.

The condition asks that no eigenvector of ``A(zeta)`` lies in the kernel of
``B~``.  Equivalently every eigenvalue of ``E(i xi)`` obeys

    Re lambda(i xi) <= -c |xi|^2 / (1 + |xi|^2)

for some ``c > 0``, and the largest such ``c`` is estimated on a grid.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cd_transform import CDSystem, default_directions
from .system_model import symbol_batch

TOL_KER = 1e-8
TOL_C = 1e-10
CLUSTER_REL = 1e-8
ANGLE_TOL = 1e-6


def max_workers() -> int:
    """Worker cap from ``RELAXLAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("RELAXLAB_THREADS", "1")))
    except ValueError:
        return 1


def cluster_sorted(values: np.ndarray, tol: float) -> list:
    """Group sorted real values whose consecutive gaps are ``<= tol``."""
    groups = [[0]]
    for i in range(1, len(values)):
        if values[i] - values[i - 1] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def sk_holds_at(cd: CDSystem, zeta, tol_ker: float = TOL_KER):
    """Check the SK condition in direction ``zeta``.

    Returns ``(holds, witness)`` where ``witness`` is a unit vector in an
    eigenspace of ``A(zeta)`` that (numerically) lies in ``Ker B~``.
    """
    zeta = np.atleast_1d(np.asarray(zeta, float))
    if abs(np.linalg.norm(zeta) - 1.0) > 1e-12:
        raise ValueError("zeta must be a unit vector")
    A = cd.A_of(zeta)
    w, V = np.linalg.eigh(A)
    tol = CLUSTER_REL * max(np.linalg.norm(A), 1e-300)
    Bt = cd.B
    n1 = cd.n1
    for idx in cluster_sorted(w, tol):
        basis = V[:, idx]
        # sines of the principal angles to span(e_1..e_n1) are the singular
        # values of the dissipative block of an orthonormal basis
        _, s, vh = np.linalg.svd(basis[n1:, :])
        if s.size < len(idx):
            s = np.concatenate([s, np.zeros(len(idx) - s.size)])
        k = int(np.argmin(s))
        coef = vh[k] if k < vh.shape[0] else np.eye(len(idx))[k]
        v = basis @ coef.conj()
        v = v / np.linalg.norm(v)
        if s[k] < ANGLE_TOL or np.linalg.norm(Bt @ v) <= tol_ker:
            sign = np.sign(v[np.argmax(np.abs(v))])
            return False, v * sign
    return True, None


@dataclass
class SKReport:
    holds: bool
    c_estimate: float
    worst_xi: np.ndarray
    eigen_traces: np.ndarray
    violation: Optional[tuple] = None
    rho_grid: Optional[np.ndarray] = None
    zeta_samples: Optional[np.ndarray] = None

    def per_direction_c(self) -> np.ndarray:
        """Dissipation constant restricted to each sampled direction."""
        rho = self.rho_grid
        lam_max = self.eigen_traces.real.max(axis=-1)
        vals = -lam_max * (1 + rho**2) / rho**2
        return np.maximum(vals.min(axis=1), 0.0)

    def to_dict(self) -> dict:
        out = {
            "holds": self.holds,
            "c_estimate": float(self.c_estimate),
            "worst_xi": [float(x) for x in self.worst_xi],
            "note": "grid estimate of the infimum; heuristic",
        }
        if self.violation is not None:
            out["violation"] = {
                "zeta": [float(x) for x in self.violation[0]],
                "eigenvector": [float(x.real) for x in self.violation[1]],
            }
        return out


def estimate_dissipation_constant(cd: CDSystem, rho_grid=None,
                                  zeta_samples=None) -> SKReport:
    """Scan ``E(i rho zeta)`` and estimate the uniform dissipation constant."""
    rho = np.geomspace(1e-3, 1e3, 256) if rho_grid is None else np.asarray(rho_grid, float)
    if np.any(rho <= 0):
        raise ValueError("rho grid must be positive")
    zetas = default_directions(cd.m) if zeta_samples is None else np.atleast_2d(
        np.asarray(zeta_samples, float))

    def scan(zeta):
        xis = rho[:, None] * zeta[None, :]
        return np.linalg.eigvals(symbol_batch(cd.A_alpha, cd.B, xis))

    workers = max_workers()
    if workers > 1 and len(zetas) > 1:
        with ThreadPoolExecutor(workers) as ex:
            traces = list(ex.map(scan, zetas))
    else:
        traces = [scan(z) for z in zetas]
    traces = np.stack(traces)  # (n_zeta, n_rho, n)
    # order each spectrum by real part for reproducible output
    order = np.argsort(-traces.real, axis=-1, kind="stable")
    traces = np.take_along_axis(traces, order, axis=-1)

    lam_max = traces.real[..., 0]
    vals = -lam_max * (1 + rho**2) / rho**2
    iz, ir = np.unravel_index(np.argmin(vals), vals.shape)
    c = float(max(vals[iz, ir], 0.0))
    worst = rho[ir] * zetas[iz]

    violation = None
    for z in zetas:
        ok, wit = sk_holds_at(cd, z)
        if not ok:
            violation = (z.copy(), wit)
            c = 0.0
            break
    holds = bool(c > TOL_C and violation is None)
    if not holds and violation is None:
        violation = (zetas[iz].copy(), np.full(cd.n, np.nan))
    return SKReport(holds, c, worst, traces, violation, rho, zetas)

"""Perturbation expansions of ``E(z) = B~ - z A(zeta)`` near zero and infinity.

Near ``z = 0`` the ``n1`` small eigenvalues split into families

    lambda_jk(z) = -z lambda1_j - z^2 c_jk + O(z^3),

where ``lambda1_j`` are eigenvalues of ``A11(zeta)`` with eigenbasis ``r_j``
and ``c_jk`` are eigenvalues of the reduced matrix
``(A21 r_j)^T D^{-1} (A21 r_j)``.  Near infinity

    lambda_jk(z) = -z lambda_j + b_jk + O(1/z),

with ``lambda_j`` eigenvalues of ``A(zeta)`` (eigenbasis ``R_j``) and
``b_jk`` eigenvalues of ``R_j^T B~ R_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment

from .cd_transform import CDSystem, projectors
from .sk_analyzer import cluster_sorted

FAMILY_REL = 1e-7
SUBFAMILY_REL = 1e-7


@dataclass(frozen=True)
class SpectralPart:
    """One eigenvalue cluster of a (possibly defective) matrix."""

    value: complex
    projector: np.ndarray
    nilpotent: np.ndarray
    multiplicity: int


def _cluster_complex(vals: np.ndarray, tol: float) -> list:
    """Single-linkage clustering of complex values."""
    n = len(vals)
    label = list(range(n))

    def find(i):
        while label[i] != i:
            label[i] = label[label[i]]
            i = label[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(vals[i] - vals[j]) <= tol:
                label[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    out = list(groups.values())
    out.sort(key=lambda g: (np.mean(vals[g]).real, np.mean(vals[g]).imag))
    return out


def spectral_decomposition(X: np.ndarray, rel_tol: float = SUBFAMILY_REL) -> list:
    """Spectral projectors and nilpotent parts of a square matrix.

    For every eigenvalue cluster the complex Schur form is reordered so
    that the cluster leads; the invariant-subspace split is then completed
    with a Sylvester solve.  No diagonalizability is assumed, so Jordan
    blocks produce a nonzero nilpotent part.
    """
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    n = X.shape[0]
    vals = np.linalg.eigvals(X)
    scale = max(np.linalg.norm(X), 1e-300)
    tol = rel_tol * scale
    parts = []
    for grp in _cluster_complex(vals, tol):
        k = len(grp)
        centre = complex(np.mean(vals[grp]))
        radius = tol + max(abs(vals[g] - centre) for g in grp)
        if k == n:
            P = np.eye(n, dtype=complex)
        else:
            T, Z, sdim = sla.schur(X, output="complex",
                                   sort=lambda z, c=centre, r=radius: abs(z - c) <= r)
            if sdim != k:
                raise np.linalg.LinAlgError("Schur reordering lost the cluster")
            Y = sla.solve_sylvester(T[:k, :k], -T[k:, k:], -T[:k, k:])
            Ph = np.zeros((n, n), dtype=complex)
            Ph[:k, :k] = np.eye(k)
            Ph[:k, k:] = -Y
            P = Z @ Ph @ Z.conj().T
        N = (X - centre * np.eye(n)) @ P
        parts.append(SpectralPart(centre, P, N, k))
    return parts


def _realify(a: np.ndarray, tol: float = 1e-13):
    if np.iscomplexobj(a) and np.max(np.abs(a.imag), initial=0.0) <= tol * max(
            np.max(np.abs(a), initial=0.0), 1.0):
        return a.real.copy()
    return a


@dataclass(frozen=True)
class ZeroSubfamily:
    c: complex
    p: np.ndarray
    d: np.ndarray
    multiplicity: int


@dataclass(frozen=True)
class ZeroFamily:
    lambda1: float
    r: np.ndarray
    subfamilies: tuple

    @property
    def multiplicity(self) -> int:
        return self.r.shape[1]


@dataclass(frozen=True)
class ZeroExpansion:
    zeta: np.ndarray
    families: tuple
    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    L1: np.ndarray
    R1: np.ndarray
    L2: np.ndarray
    R2: np.ndarray
    Lminus1: np.ndarray
    Rminus1: np.ndarray
    Fminus0: np.ndarray
    merges: tuple = field(default_factory=tuple)

    def leading_projector(self, j: int, k: int) -> np.ndarray:
        """Full-space ``P_jk(0)`` built from ``r_j p_jk r_j^T``."""
        fam = self.families[j]
        n1 = fam.r.shape[0]
        n = self.P0.shape[0]
        P = np.zeros((n, n), dtype=complex)
        P[:n1, :n1] = fam.r @ fam.subfamilies[k].p @ fam.r.T
        return _realify(P)

    def predicted_eigenvalues(self, z: complex) -> list:
        """``(j, k, lambda)`` triples with multiplicity, to second order."""
        out = []
        for j, fam in enumerate(self.families):
            for k, sub in enumerate(fam.subfamilies):
                lam = -z * fam.lambda1 - z**2 * sub.c
                out.extend([(j, k, lam)] * sub.multiplicity)
        return out

    def summary(self) -> dict:
        return {
            "zeta": [float(x) for x in self.zeta],
            "families": [
                {"lambda1": float(f.lambda1), "multiplicity": f.multiplicity,
                 "c": [[float(s.c.real), float(s.c.imag)] for s in f.subfamilies],
                 "defective": [bool(np.max(np.abs(s.d), initial=0) > 1e-10)
                               for s in f.subfamilies]}
                for f in self.families],
            "merges": [[[a.real, a.imag], [b.real, b.imag]] for a, b in self.merges],
        }


@dataclass(frozen=True)
class InfinitySubfamily:
    b: complex
    ptilde: np.ndarray
    dtilde: np.ndarray
    multiplicity: int


@dataclass(frozen=True)
class InfinityFamily:
    lam: float
    R: np.ndarray
    subfamilies: tuple

    def projector(self, k: int) -> np.ndarray:
        """Full-space ``P_jk(inf) = R_j p~_jk R_j^T``."""
        return _realify(self.R @ self.subfamilies[k].ptilde @ self.R.T)

    def nilpotent(self, k: int) -> np.ndarray:
        return _realify(self.R @ self.subfamilies[k].dtilde @ self.R.T)


@dataclass(frozen=True)
class InfinityExpansion:
    zeta: np.ndarray
    families: tuple

    def predicted_eigenvalues(self, z: complex) -> list:
        out = []
        for j, fam in enumerate(self.families):
            for k, sub in enumerate(fam.subfamilies):
                out.extend([(j, k, -z * fam.lam + sub.b)] * sub.multiplicity)
        return out

    def summary(self) -> dict:
        return {
            "zeta": [float(x) for x in self.zeta],
            "families": [
                {"lambda": float(f.lam), "multiplicity": f.R.shape[1],
                 "b": [[float(s.b.real), float(s.b.imag)] for s in f.subfamilies]}
                for f in self.families],
        }


def _symmetric_families(A: np.ndarray):
    w, V = np.linalg.eigh(A)
    tol = FAMILY_REL * np.linalg.norm(A)
    out = []
    for idx in cluster_sorted(w, tol):
        out.append((float(np.mean(w[idx])), V[:, idx]))
    return out


def _subfamilies(red: np.ndarray):
    parts = spectral_decomposition(red)
    merges = []
    vals = [p.value for p in parts]
    scale = max(np.linalg.norm(red), 1e-300)
    for i in range(len(vals)):
        for j in range(i + 1, len(vals)):
            if abs(vals[i] - vals[j]) < 1e-6 * scale:
                merges.append((complex(vals[i]), complex(vals[j])))
    return parts, merges


def expand_zero(cd: CDSystem, zeta) -> ZeroExpansion:
    """Second-order expansion of the small eigenvalues and their projectors."""
    zeta = np.atleast_1d(np.asarray(zeta, float))
    A11, A12, A21, A22 = cd.blocks(zeta)
    D = cd.D
    Di = np.linalg.inv(D)
    n1, n2, n = cd.n1, cd.n2, cd.n

    families, merges = [], []
    for lam1, r in _symmetric_families(A11):
        red = (A21 @ r).T @ Di @ (A21 @ r)
        parts, mg = _subfamilies(red)
        merges.extend(mg)
        subs = tuple(ZeroSubfamily(complex(p.value), _realify(p.projector),
                                   _realify(p.nilpotent), p.multiplicity) for p in parts)
        families.append(ZeroFamily(lam1, r, subs))

    ps = projectors(cd)
    P0 = ps.Q0.copy()
    P1 = np.zeros((n, n))
    P1[:n1, n1:] = A12 @ Di
    P1[n1:, :n1] = Di @ A21
    Di2 = Di @ Di
    P2 = np.zeros((n, n))
    P2[:n1, :n1] = -A12 @ Di2 @ A21
    P2[:n1, n1:] = A12 @ Di @ A22 @ Di - A11 @ A12 @ Di2
    P2[n1:, :n1] = Di @ A22 @ Di @ A21 - Di2 @ A21 @ A11
    P2[n1:, n1:] = Di @ A21 @ A12 @ Di

    L1 = np.hstack([np.zeros((n1, n1)), A12 @ Di])
    R1 = np.vstack([np.zeros((n1, n1)), Di @ A21])
    L2 = np.hstack([-0.5 * A12 @ Di2 @ A21, A12 @ Di @ A22 @ Di - A11 @ A12 @ Di2])
    R2 = np.vstack([-0.5 * A12 @ Di2 @ A21, Di @ A22 @ Di @ A21 - Di2 @ A21 @ A11])
    Lm1 = np.hstack([-Di @ A21, np.zeros((n2, n2))])
    Rm1 = np.vstack([-A12 @ Di, np.zeros((n2, n2))])
    return ZeroExpansion(zeta, tuple(families), P0, P1, P2, L1, R1, L2, R2,
                         Lm1, Rm1, D.copy(), tuple(merges))


def expand_infinity(cd: CDSystem, zeta) -> InfinityExpansion:
    """Zeroth-order expansion of the eigenvalues for large ``|z|``."""
    zeta = np.atleast_1d(np.asarray(zeta, float))
    A = cd.A_of(zeta)
    Bt = cd.B
    families = []
    for lam, R in _symmetric_families(A):
        red = R.T @ Bt @ R
        parts = spectral_decomposition(red)
        subs = tuple(InfinitySubfamily(complex(p.value), p.projector, p.nilpotent,
                                       p.multiplicity) for p in parts)
        families.append(InfinityFamily(lam, R, subs))
    return InfinityExpansion(zeta, tuple(families))


@dataclass
class ResidualFit:
    side: str
    rho: np.ndarray
    families: list
    ambiguous: bool
    passes: bool

    def slopes(self) -> dict:
        return {(f["j"], f["k"]): f["slope"] for f in self.families}

    def to_dict(self) -> dict:
        return {
            "side": self.side,
            "rho": [float(r) for r in self.rho],
            "families": [{"j": f["j"], "k": f["k"],
                          "slope": None if f["slope"] is None else float(f["slope"]),
                          "exact": f["exact"],
                          "errors": [float(e) for e in f["errors"]]}
                         for f in self.families],
            "ambiguous": self.ambiguous,
            "passes": self.passes,
        }


def check_expansion_residuals(cd: CDSystem, zeta, z_list, side: str = "zero",
                              expansion=None) -> ResidualFit:
    """Fit the order of the eigenvalue error of the truncated expansions.

    Near zero the slope of ``log|error|`` against ``log rho`` must be at
    least ``2.7``; near infinity at most ``-0.7``.  Families whose error is
    at roundoff level on every sample are reported as exact and pass.
    """
    rho = np.asarray(z_list, float)
    if rho.ndim != 1 or rho.size < 4:
        raise ValueError("need at least four sample points")
    if np.any(rho <= 0):
        raise ValueError("sample points must be positive")
    zeta = np.atleast_1d(np.asarray(zeta, float))
    if side == "zero":
        exp = expansion if expansion is not None else expand_zero(cd, zeta)
    elif side == "infinity":
        exp = expansion if expansion is not None else expand_infinity(cd, zeta)
    else:
        raise ValueError("side must be 'zero' or 'infinity'")

    A = cd.A_of(zeta)
    Bt = cd.B
    labels = [(j, k) for j, k, _ in exp.predicted_eigenvalues(0.0)]
    keys = sorted(set(labels))
    errs = {key: [] for key in keys}
    floors = {key: [] for key in keys}
    ambiguous = False
    for r in rho:
        z = 1j * r
        exact = np.linalg.eigvals(Bt - z * A)
        pred = np.array([lam for _, _, lam in exp.predicted_eigenvalues(z)])
        if side == "zero":
            exact = exact[np.argsort(np.abs(exact))[: len(pred)]]
        cost = np.abs(exact[:, None] - pred[None, :])
        ri, ci = linear_sum_assignment(cost)
        worst = cost[ri, ci].max()
        for a in range(len(pred)):
            for b in range(a + 1, len(pred)):
                if labels[a] != labels[b] and abs(pred[a] - pred[b]) <= 2 * worst:
                    ambiguous = True
        scale = np.finfo(float).eps * 100 * (np.linalg.norm(Bt) + r * np.linalg.norm(A))
        for a, b in zip(ri, ci):
            key = labels[b]
            errs[key].append(cost[a, b])
            floors[key].append(scale)
    fams = []
    passes = True
    for key in keys:
        e = np.array(errs[key]).reshape(len(rho), -1).max(axis=1)
        fl = np.array(floors[key]).reshape(len(rho), -1).max(axis=1)
        if np.all(e <= fl):
            fams.append({"j": key[0], "k": key[1], "slope": None, "exact": True,
                         "errors": e})
            continue
        good = e > fl
        if good.sum() < 2:
            fams.append({"j": key[0], "k": key[1], "slope": None, "exact": True,
                         "errors": e})
            continue
        slope = float(np.polyfit(np.log(rho[good]), np.log(e[good]), 1)[0])
        if side == "zero":
            passes &= slope >= 3.0 - 0.3
        else:
            passes &= slope <= -1.0 + 0.3
        fams.append({"j": key[0], "k": key[1], "slope": slope, "exact": False,
                     "errors": e})
    return ResidualFit(side, rho, fams, ambiguous, bool(passes))

"""Change of variables into Conservative-Dissipative (C-D) form.

Given (H1) with symmetrizer ``A0`` the block lower triangular matrix

    M = [[ (A0_11)^{-1/2},                          0                 ],
         [ ((A0^{-1})_22)^{-1/2} (A0^{-1})_21,  ((A0^{-1})_22)^{1/2} ]]

satisfies ``M^T M = A0^{-1}`` and turns the system into ``w = M u`` with
symmetric ``M A_alpha M^{-1}`` and ``M B M^{-1} = diag(0, D~)``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .system_model import RawSystem, validate_h1

COND_GUARD = 1e12
TOL_CD = 1e-10


def _spd_eig(S: np.ndarray):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.linalg.norm(S), 1.0)
    if np.linalg.norm(S - S.T) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w[0] <= 0:
        raise ValueError(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    return w, V


def spd_power(S: np.ndarray, p: float) -> np.ndarray:
    """``S**p`` for symmetric positive definite ``S`` via its eigendecomposition."""
    w, V = _spd_eig(S)
    T = (V * w**p) @ V.T
    return 0.5 * (T + T.T)


def spd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric positive definite square root."""
    return spd_power(S, 0.5)


@dataclass(frozen=True)
class CDSystem:
    """A system in C-D form: symmetric ``A_alpha`` and ``B = diag(0, D)``.

    ``flux`` and ``source`` are the nonlinear maps in the new variables,
    ``w -> M f(M^{-1} w)`` and ``w -> M g(M^{-1} w)``.
    """

    m: int
    n1: int
    n2: int
    A_alpha: tuple
    D: np.ndarray
    M: np.ndarray
    Minv: np.ndarray
    origin: Optional[RawSystem] = None
    flux: Optional[Callable] = None
    source: Optional[Callable] = None
    key: str = field(default="", compare=False)

    def __post_init__(self):
        A = tuple(np.array(a, dtype=float) for a in self.A_alpha)
        object.__setattr__(self, "A_alpha", A)
        object.__setattr__(self, "D", np.array(self.D, dtype=float))
        n = self.n1 + self.n2
        if len(A) != self.m:
            raise ValueError("wrong number of flux matrices")
        for a in A:
            if a.shape != (n, n):
                raise ValueError("flux matrix of wrong shape")
            if np.linalg.norm(a - a.T) > TOL_CD * max(np.linalg.norm(a), 1.0):
                raise ValueError("C-D flux matrices must be symmetric")
        if self.D.shape != (self.n2, self.n2):
            raise ValueError("D has wrong shape")
        if np.any(np.linalg.eigvals(self.D).real >= 0):
            raise ValueError("D must have spectrum in the open left half-plane")
        if not self.key:
            h = hashlib.sha256()
            for a in A + (self.D, np.asarray(self.M, float)):
                h.update(np.ascontiguousarray(a).tobytes())
            object.__setattr__(self, "key", h.hexdigest()[:16])

    @classmethod
    def from_matrices(cls, A_alpha: Sequence[np.ndarray], D: np.ndarray,
                      flux=None, source=None) -> "CDSystem":
        """Wrap matrices that are already in C-D form (``M = I``)."""
        A_alpha = [np.asarray(a, float) for a in A_alpha]
        D = np.atleast_2d(np.asarray(D, float))
        n2 = D.shape[0]
        n = A_alpha[0].shape[0]
        eye = np.eye(n)
        return cls(len(A_alpha), n - n2, n2, tuple(A_alpha), D, eye, eye,
                   None, flux, source)

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def B(self) -> np.ndarray:
        B = np.zeros((self.n, self.n))
        B[self.n1:, self.n1:] = self.D
        return B

    @property
    def has_nonlinearity(self) -> bool:
        return self.flux is not None and self.source is not None

    def A_of(self, zeta: Sequence[float]) -> np.ndarray:
        """``A(zeta) = sum_alpha zeta_alpha A_alpha``."""
        zeta = np.atleast_1d(np.asarray(zeta, float))
        return np.tensordot(zeta, np.stack(self.A_alpha), axes=(0, 0))

    def blocks(self, zeta: Sequence[float]):
        """Return ``(A11, A12, A21, A22)`` of ``A(zeta)``."""
        A = self.A_of(zeta)
        k = self.n1
        return A[:k, :k], A[:k, k:], A[k:, :k], A[k:, k:]

    def max_speed(self, zetas: Optional[np.ndarray] = None) -> float:
        """Largest characteristic speed over the sampled directions."""
        if zetas is None:
            zetas = default_directions(self.m)
        return float(max(np.max(np.abs(np.linalg.eigvalsh(self.A_of(z)))) for z in zetas))

    def to_dict(self) -> dict:
        return {
            "m": self.m, "n1": self.n1, "n2": self.n2,
            "M": self.M.tolist(),
            "Atilde": [a.tolist() for a in self.A_alpha],
            "Dtilde": self.D.tolist(),
        }


def default_directions(m: int, count: Optional[int] = None) -> np.ndarray:
    """Quasi-uniform unit vectors: ``{+-1}``, equi-angular circle, or Fibonacci sphere."""
    if m == 1:
        return np.array([[1.0], [-1.0]])
    if m == 2:
        k = 64 if count is None else count
        th = 2 * np.pi * np.arange(k) / k
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if m == 3:
        k = 242 if count is None else count
        i = np.arange(k) + 0.5
        z = 1 - 2 * i / k
        r = np.sqrt(1 - z**2)
        phi = np.pi * (3 - np.sqrt(5)) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError("m must be 1, 2 or 3")


@dataclass(frozen=True)
class ProjectorSet:
    L0: np.ndarray
    R0: np.ndarray
    Lminus: np.ndarray
    Rminus: np.ndarray
    Q0: np.ndarray
    Qminus: np.ndarray


def projectors(cd) -> ProjectorSet:
    """Block selection and injection matrices of the C-D coordinates."""
    n1, n2 = cd.n1, cd.n2
    n = n1 + n2
    eye = np.eye(n)
    L0, Lm = eye[:n1], eye[n1:]
    R0, Rm = L0.T.copy(), Lm.T.copy()
    return ProjectorSet(L0, R0, Lm, Rm, R0 @ L0, Rm @ Lm)


def _conjugate_maps(sys: RawSystem, M: np.ndarray, Minv: np.ndarray):
    if not sys.has_nonlinearity:
        return None, None
    f, g = sys.flux, sys.source

    def flux(w):
        u = np.tensordot(Minv, np.asarray(w, float), axes=(1, 0))
        fu = np.asarray(f(u))
        return np.moveaxis(np.tensordot(M, fu, axes=(1, 1)), 0, 1)

    def source(w):
        u = np.tensordot(Minv, np.asarray(w, float), axes=(1, 0))
        return np.tensordot(M, np.asarray(g(u)), axes=(1, 0))

    return flux, source


def cd_matrix(A0: np.ndarray, n1: int) -> np.ndarray:
    """The block lower triangular transform built from ``A0``."""
    A0 = np.asarray(A0, float)
    lu = sla.lu_factor(A0)
    A0inv = sla.lu_solve(lu, np.eye(A0.shape[0]))
    A0inv = 0.5 * (A0inv + A0inv.T)
    n = A0.shape[0]
    M = np.zeros((n, n))
    M[:n1, :n1] = spd_power(A0[:n1, :n1], -0.5)
    S22 = A0inv[n1:, n1:]
    M[n1:, :n1] = spd_power(S22, -0.5) @ A0inv[n1:, :n1]
    M[n1:, n1:] = spd_power(S22, 0.5)
    return M


def cd_matrix_inverse(M: np.ndarray, n1: int) -> np.ndarray:
    """Inverse of a block lower triangular ``M`` from its diagonal blocks."""
    n = M.shape[0]
    M11i = np.linalg.inv(M[:n1, :n1])
    M22i = np.linalg.inv(M[n1:, n1:])
    out = np.zeros((n, n))
    out[:n1, :n1] = M11i
    out[n1:, n1:] = M22i
    out[n1:, :n1] = -M22i @ M[n1:, :n1] @ M11i
    return out


def to_cd_form(sys: RawSystem):
    """Return ``(M, CDSystem)`` for a system satisfying (H1)."""
    rep = validate_h1(sys)
    if not rep.passes:
        raise ValueError(f"hypothesis (H1) fails: {rep.to_dict()}")
    if np.linalg.cond(sys.A0) > COND_GUARD:
        raise ValueError("symmetrizer A0 is nearly singular")
    n1 = sys.n1
    M = cd_matrix(sys.A0, n1)
    Minv = cd_matrix_inverse(M, n1)

    At = []
    for a in sys.A_alpha:
        t = M @ a @ Minv
        if np.linalg.norm(t - t.T) > TOL_CD * max(np.linalg.norm(t), 1.0):
            raise ValueError("conjugated flux matrix is not symmetric")
        At.append(0.5 * (t + t.T))
    Bt = M @ sys.B @ Minv
    off = max(np.max(np.abs(Bt[:n1])), np.max(np.abs(Bt[n1:, :n1])))
    if off > TOL_CD * max(np.linalg.norm(Bt), 1.0):
        raise ValueError("conjugated source matrix is not block diagonal")
    D = Bt[n1:, n1:]
    flux, source = _conjugate_maps(sys, M, Minv)
    cd = CDSystem(sys.m, n1, sys.n2, tuple(At), D, M, Minv, sys, flux, source)
    return M, cd

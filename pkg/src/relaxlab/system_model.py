"""System data model for partially dissipative balance laws.

A linearized system reads

    u_t + sum_alpha A_alpha u_{x_alpha} = B u,

where the first ``n1`` rows of ``B`` vanish (conservation laws) and the
remaining ``n2`` rows carry the damping.  Hypothesis (H1) asks for a
symmetric positive definite ``A0`` such that every ``A_alpha A0`` is
symmetric and ``B A0 = diag(0, D)`` with ``D`` negative definite.

Nonlinear systems additionally carry a flux ``f_alpha(u)`` and a source
``g(u)``.  Callbacks act on arrays of shape ``(n, ...)`` so that they can be
evaluated pointwise or on a whole grid at once:

* ``flux(u)`` returns an array of shape ``(m, n, ...)``;
* ``source(u)`` returns an array of shape ``(n, ...)``;
* ``flux_jacobian(u)`` (optional, pointwise) returns ``(m, n, n)``;
* ``source_jacobian(u)`` (optional, pointwise) returns ``(n, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

TOL_SYM = 1e-10
TOL_LIN = 1e-10
TOL_NEG = 1e-12
FD_REL_STEP = 1e-5

FluxFn = Callable[[np.ndarray], np.ndarray]
SourceFn = Callable[[np.ndarray], np.ndarray]

BUILTIN_NAMES = ("p_system", "euler_damping", "euler_relaxation", "jin_xin")


def _rel(defect: float, scale: float) -> float:
    return defect / max(scale, 1.0)


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], u: np.ndarray,
                rel_step: float = FD_REL_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``fun`` at the point ``u``.

    The output of ``fun`` may have any leading shape ``S``; the result has
    shape ``S + (n,)`` where the last axis indexes the differentiation
    variable.
    """
    u = np.asarray(u, dtype=float)
    cols = []
    for i in range(u.size):
        h = rel_step * (1.0 + abs(u[i]))
        e = np.zeros_like(u)
        e[i] = h
        cols.append((np.asarray(fun(u + e)) - np.asarray(fun(u - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class RawSystem:
    """Linearization data plus optional nonlinear maps.

    Construction checks the block structure of ``B`` and, when nonlinear
    maps are attached, that their Jacobians at the origin reproduce the
    stored matrices.  Positive definiteness of ``A0`` and the rest of (H1)
    are reported by :func:`validate_h1` rather than enforced here, so that
    broken inputs can still be inspected.
    """

    m: int
    n1: int
    n2: int
    A_alpha: tuple
    B: np.ndarray
    A0: np.ndarray
    flux: Optional[FluxFn] = None
    source: Optional[SourceFn] = None
    flux_jacobian: Optional[Callable] = None
    source_jacobian: Optional[Callable] = None
    name: Optional[str] = None
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        A = tuple(np.array(a, dtype=float) for a in self.A_alpha)
        B = np.array(self.B, dtype=float)
        A0 = np.array(self.A0, dtype=float)
        object.__setattr__(self, "A_alpha", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "A0", A0)
        n = self.n1 + self.n2
        if self.m not in (1, 2, 3):
            raise ValueError(f"space dimension m must be 1, 2 or 3, got {self.m}")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("both n1 and n2 must be positive")
        if len(A) != self.m:
            raise ValueError(f"expected {self.m} matrices A_alpha, got {len(A)}")
        for a in A + (B, A0):
            if a.shape != (n, n):
                raise ValueError(f"matrix of shape {a.shape}, expected {(n, n)}")
        if np.any(B[: self.n1] != 0.0):
            raise ValueError("the first n1 rows of B must vanish")
        if self.flux is not None or self.source is not None:
            self._check_linearization()

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def has_nonlinearity(self) -> bool:
        return self.flux is not None and self.source is not None

    def flux_jac_at(self, u: np.ndarray) -> np.ndarray:
        """Jacobian ``(m, n, n)`` of the flux at a point."""
        if self.flux_jacobian is not None:
            return np.asarray(self.flux_jacobian(np.asarray(u, float)), dtype=float)
        return fd_jacobian(self.flux, u)

    def source_jac_at(self, u: np.ndarray) -> np.ndarray:
        """Jacobian ``(n, n)`` of the source at a point."""
        if self.source_jacobian is not None:
            return np.asarray(self.source_jacobian(np.asarray(u, float)), dtype=float)
        return fd_jacobian(self.source, u)

    def _check_linearization(self):
        if self.flux is None or self.source is None:
            raise ValueError("flux and source must be supplied together")
        zero = np.zeros(self.n)
        analytic = self.flux_jacobian is not None and self.source_jacobian is not None
        tol = TOL_LIN if analytic else 1e-6
        f0 = np.asarray(self.flux(zero))
        g0 = np.asarray(self.source(zero))
        if np.max(np.abs(f0)) > tol or np.max(np.abs(g0)) > tol:
            raise ValueError("flux and source must vanish at u = 0")
        jf = self.flux_jac_at(zero)
        jg = self.source_jac_at(zero)
        for alpha in range(self.m):
            d = np.linalg.norm(jf[alpha] - self.A_alpha[alpha])
            if _rel(d, np.linalg.norm(self.A_alpha[alpha])) > tol:
                raise ValueError(f"Df_{alpha}(0) differs from A_{alpha} by {d:.3e}")
        d = np.linalg.norm(jg - self.B)
        if _rel(d, np.linalg.norm(self.B)) > tol:
            raise ValueError(f"Dg(0) differs from B by {d:.3e}")


@dataclass(frozen=True)
class H1Report:
    a0_spd: bool
    symmetry_defects: tuple
    ba0_block_ok: bool
    d_spectrum: np.ndarray
    passes: bool

    def to_dict(self) -> dict:
        return {
            "a0_spd": self.a0_spd,
            "symmetry_defects": [float(s) for s in self.symmetry_defects],
            "ba0_block_ok": self.ba0_block_ok,
            "d_spectrum": [[float(z.real), float(z.imag)] for z in self.d_spectrum],
            "passes": self.passes,
        }


def validate_h1(sys: RawSystem) -> H1Report:
    """Report on hypothesis (H1); failures are reported, never raised."""
    A0 = sys.A0
    scale = np.linalg.norm(A0)
    sym_ok = _rel(np.linalg.norm(A0 - A0.T), scale) <= TOL_SYM
    try:
        eig_min = np.linalg.eigvalsh(0.5 * (A0 + A0.T))[0]
    except np.linalg.LinAlgError:
        eig_min = -np.inf
    a0_spd = bool(sym_ok and eig_min > TOL_NEG * max(scale, 1.0))

    defects = []
    for a in sys.A_alpha:
        s = a @ A0
        defects.append(float(_rel(np.linalg.norm(s - s.T), np.linalg.norm(s))))
    sym_pass = all(d <= TOL_SYM for d in defects)

    ba0 = sys.B @ A0
    n1 = sys.n1
    off = max(np.max(np.abs(ba0[:n1, :])), np.max(np.abs(ba0[n1:, :n1])))
    block_ok = bool(_rel(off, np.linalg.norm(ba0)) <= TOL_SYM)
    d_spec = np.linalg.eigvals(ba0[n1:, n1:])
    d_ok = bool(np.all(d_spec.real < -TOL_NEG))

    passes = bool(a0_spd and sym_pass and block_ok and d_ok)
    return H1Report(a0_spd, tuple(defects), block_ok, d_spec, passes)


def assemble_symbol(sys, xi: Sequence[float]) -> np.ndarray:
    """Return ``E(i xi) = B - i sum_alpha xi_alpha A_alpha``.

    Works for any object exposing ``A_alpha`` and ``B``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (len(sys.A_alpha),):
        raise ValueError(f"xi must have {len(sys.A_alpha)} components")
    E = np.array(sys.B, dtype=complex)
    for x, a in zip(xi, sys.A_alpha):
        E = E - 1j * x * a
    return E


def symbol_batch(A_alpha: Sequence[np.ndarray], B: np.ndarray,
                 xis: np.ndarray) -> np.ndarray:
    """Vectorized ``E(i xi)`` for ``xis`` of shape ``(K, m)``; returns ``(K, n, n)``."""
    xis = np.asarray(xis, dtype=float)
    A = np.stack(A_alpha)
    return B[None].astype(complex) - 1j * np.einsum("ka,aij->kij", xis, A)


# ---------------------------------------------------------------------------
# builtin systems


def _p_system(params, sigma=None, h=None) -> RawSystem:
    if len(params) != 2:
        raise ValueError("p_system takes parameters (lambda, a)")
    lam, a = float(params[0]), float(params[1])
    if not lam > abs(a):
        raise ValueError(
            f"subcharacteristic condition lambda > |a| violated (lambda={lam}, a={a})")
    A = np.array([[0.0, 1.0], [lam**2, 0.0]])
    B = np.array([[0.0, 0.0], [a, -1.0]])
    A0 = np.array([[1.0, a], [a, lam**2]])

    analytic = sigma is None and h is None
    if sigma is None:
        sigma = lambda u: lam**2 * u + u**2  # noqa: E731
    if h is None:
        h = lambda u: a * u + u**2  # noqa: E731

    def flux(w):
        w = np.asarray(w, dtype=float)
        return np.stack([w[1], sigma(w[0])])[None]

    def source(w):
        w = np.asarray(w, dtype=float)
        return np.stack([np.zeros_like(w[0]), h(w[0]) - w[1]])

    fj = sj = None
    if analytic:
        def fj(w):
            return np.array([[[0.0, 1.0], [lam**2 + 2.0 * w[0], 0.0]]])

        def sj(w):
            return np.array([[0.0, 0.0], [a + 2.0 * w[0], -1.0]])

    return RawSystem(1, 1, 1, (A,), B, A0, flux, source, fj, sj,
                     name="p_system", params=(lam, a))


def _euler_damping(params, gamma=None) -> RawSystem:
    if len(params) not in (1, 2):
        raise ValueError("euler_damping takes parameters (m[, gamma])")
    m = int(params[0])
    if m != params[0] or m not in (1, 2, 3):
        raise ValueError("euler_damping dimension must be 1, 2 or 3")
    g = float(params[1]) if len(params) == 2 else (2.0 if gamma is None else float(gamma))
    if g < 1.0:
        raise ValueError("adiabatic exponent must be >= 1")
    n = 1 + m
    A = []
    for alpha in range(m):
        a = np.zeros((n, n))
        a[0, 1 + alpha] = 1.0
        a[1 + alpha, 0] = 1.0
        A.append(a)
    B = np.diag([0.0] + [-1.0] * m)

    # variables (r, q) with density rho = 1 + r and momentum q = rho v
    def flux(w):
        w = np.asarray(w, dtype=float)
        r, q = w[0], w[1:]
        rho = 1.0 + r
        p = (rho**g - 1.0) / g
        out = np.zeros((m,) + w.shape)
        for alpha in range(m):
            out[alpha, 0] = q[alpha]
            out[alpha, 1:] = q[alpha] * q / rho
            out[alpha, 1 + alpha] += p
        return out

    def source(w):
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        out[1:] = -w[1:] / (1.0 + w[0])
        return out

    def fj(w):
        r, q = w[0], w[1:]
        rho = 1.0 + r
        J = np.zeros((m, n, n))
        for alpha in range(m):
            J[alpha, 0, 1 + alpha] = 1.0
            for i in range(m):
                J[alpha, 1 + i, 0] = -q[alpha] * q[i] / rho**2
                if i == alpha:
                    J[alpha, 1 + i, 0] += rho ** (g - 1.0)
                for b in range(m):
                    J[alpha, 1 + i, 1 + b] = ((alpha == b) * q[i] + q[alpha] * (i == b)) / rho
        return J

    def sj(w):
        rho = 1.0 + w[0]
        J = np.zeros((n, n))
        J[1:, 0] = w[1:] / rho**2
        J[1:, 1:] = -np.eye(m) / rho
        return J

    return RawSystem(m, 1, m, tuple(A), B, np.eye(n), flux, source, fj, sj,
                     name="euler_damping", params=(m, g))


def _euler_relaxation(params) -> RawSystem:
    if len(params) != 1:
        raise ValueError("euler_relaxation takes parameter (m)")
    m = int(params[0])
    if m != params[0] or m not in (1, 2, 3):
        raise ValueError("euler_relaxation dimension must be 1, 2 or 3")
    n1, n2 = 1 + m, m * m
    n = n1 + n2

    def p_index(i, j):
        return n1 + i * m + j

    A = []
    for alpha in range(m):
        a = np.zeros((n, n))
        a[0, 1 + alpha] = 1.0
        a[1 + alpha, 0] = 1.0
        for i in range(m):
            # momentum equation i carries d_alpha P_{i alpha}
            a[1 + i, p_index(i, alpha)] = 1.0
            # stress equation (i, alpha) carries d_alpha q_i
            a[p_index(i, alpha), 1 + i] = 1.0
        A.append(a)
    B = np.zeros((n, n))
    B[n1:, n1:] = -np.eye(n2)

    # variables (r, q, P) with rho = 1 + r, q = rho v, P = rho R; the flux is
    # linear and the source carries rho v (x) v - rho R
    A_stack = np.stack(A)

    def flux(w):
        w = np.asarray(w, dtype=float)
        return np.tensordot(A_stack, w, axes=([2], [0]))

    def source(w):
        w = np.asarray(w, dtype=float)
        rho = 1.0 + w[0]
        q = w[1:n1]
        out = np.zeros_like(w)
        for i in range(m):
            for j in range(m):
                out[p_index(i, j)] = q[i] * q[j] / rho - w[p_index(i, j)]
        return out

    def fj(w):
        return A_stack.copy()

    def sj(w):
        rho = 1.0 + w[0]
        q = w[1:n1]
        J = np.zeros((n, n))
        for i in range(m):
            for j in range(m):
                k = p_index(i, j)
                J[k, 0] = -q[i] * q[j] / rho**2
                J[k, 1 + i] += q[j] / rho
                J[k, 1 + j] += q[i] / rho
                J[k, k] = -1.0
        return J

    return RawSystem(m, n1, n2, tuple(A), B, np.eye(n), flux, source, fj, sj,
                     name="euler_relaxation", params=(m,))


def _jin_xin(params) -> RawSystem:
    """Two-dimensional Jin-Xin relaxation with a rotated relaxation matrix.

    ``u_t + div v = 0`` and ``v_t + lambda^2 grad u = -(I + kappa J)(v - F(u))``
    with ``J`` the quarter rotation and ``F(u) = (u^2/2, u^2/2)``.  For
    ``kappa != 0`` the damping block is not symmetric, which exercises the
    non-symmetric code paths that no other builtin reaches.
    """
    if len(params) not in (1, 2):
        raise ValueError("jin_xin takes parameters (lambda[, kappa])")
    lam = float(params[0])
    kappa = float(params[1]) if len(params) == 2 else 0.5
    if lam <= 0:
        raise ValueError("jin_xin requires lambda > 0")
    relax = np.eye(2) + kappa * np.array([[0.0, -1.0], [1.0, 0.0]])
    A = []
    for alpha in range(2):
        a = np.zeros((3, 3))
        a[0, 1 + alpha] = 1.0
        a[1 + alpha, 0] = lam**2
        A.append(a)
    B = np.zeros((3, 3))
    B[1:, 1:] = -relax
    A0 = np.diag([1.0, lam**2, lam**2])
    A_stack = np.stack(A)

    def flux(w):
        w = np.asarray(w, dtype=float)
        return np.tensordot(A_stack, w, axes=([2], [0]))

    def source(w):
        w = np.asarray(w, dtype=float)
        F = 0.5 * w[0] ** 2
        dv = np.stack([w[1] - F, w[2] - F])
        out = np.zeros_like(w)
        out[1:] = -np.tensordot(relax, dv, axes=([1], [0]))
        return out

    def fj(w):
        return A_stack.copy()

    def sj(w):
        J = np.zeros((3, 3))
        J[1:, 1:] = -relax
        J[1:, 0] = relax @ np.array([w[0], w[0]])
        return J

    return RawSystem(2, 1, 2, tuple(A), B, A0, flux, source, fj, sj,
                     name="jin_xin", params=(lam, kappa))


def make_builtin(name: str, params: Sequence[float] = (), **overrides) -> RawSystem:
    """Build one of the worked example systems.

    ``p_system`` accepts ``sigma=`` and ``h=`` callbacks replacing the
    default quadratic pressure and relaxation target; ``euler_damping``
    accepts ``gamma=``.
    """
    params = tuple(float(p) for p in params)
    if name == "p_system":
        return _p_system(params, **overrides)
    if name == "euler_damping":
        return _euler_damping(params, **overrides)
    if overrides:
        raise TypeError(f"{name} accepts no overrides")
    if name == "euler_relaxation":
        return _euler_relaxation(params)
    if name == "jin_xin":
        return _jin_xin(params)
    raise ValueError(f"unknown builtin system {name!r}; choose from {BUILTIN_NAMES}")

"""Periodic grids and sampled fields.

A grid covers ``[-L, L)^m`` with ``N`` points per dimension.  Fields are
stored component-major, ``data[component, i_1, ..., i_m]``; spectral data
uses the unnormalized FFT convention of :mod:`numpy.fft`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"RLXGRID1"


@dataclass(frozen=True)
class Grid:
    m: int
    N: tuple
    L: float

    def __post_init__(self):
        N = tuple(int(k) for k in np.atleast_1d(self.N))
        if len(N) == 1 and self.m > 1:
            N = N * self.m
        if len(N) != self.m:
            raise ValueError("N must have one entry per dimension")
        for k in N:
            if k < 4 or k & (k - 1):
                raise ValueError(f"grid size {k} is not a power of two >= 4")
        if self.L <= 0:
            raise ValueError("half-length L must be positive")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", float(self.L))

    @property
    def key(self) -> tuple:
        return (self.m, self.N, self.L)

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N[0]

    @property
    def cell_volume(self) -> float:
        return float(np.prod([2.0 * self.L / k for k in self.N]))

    @property
    def size(self) -> int:
        return int(np.prod(self.N))

    @property
    def axes(self) -> tuple:
        return tuple(range(-self.m, 0))

    def x1d(self, axis: int = 0) -> np.ndarray:
        k = self.N[axis]
        return -self.L + 2.0 * self.L * np.arange(k) / k

    def k1d(self, axis: int = 0) -> np.ndarray:
        k = self.N[axis]
        return 2.0 * np.pi * np.fft.fftfreq(k, d=2.0 * self.L / k)

    @cached_property
    def coords(self) -> np.ndarray:
        """Array ``(m, N_1, ..., N_m)`` of physical coordinates."""
        return np.stack(np.meshgrid(*[self.x1d(a) for a in range(self.m)], indexing="ij"))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Array ``(m, N_1, ..., N_m)`` of angular wavenumbers."""
        return np.stack(np.meshgrid(*[self.k1d(a) for a in range(self.m)], indexing="ij"))

    @cached_property
    def xi_flat(self) -> np.ndarray:
        """Wavenumbers as a ``(N_total, m)`` list of mode vectors."""
        return self.wavenumbers.reshape(self.m, -1).T.copy()

    @cached_property
    def nyquist_flat(self) -> np.ndarray:
        """Flat boolean mask of modes sitting on a Nyquist plane."""
        mask = np.zeros(self.N, dtype=bool)
        for a in range(self.m):
            k = self.N[a]
            shape = [1] * self.m
            shape[a] = k
            line = np.zeros(k, dtype=bool)
            line[k // 2] = True
            mask |= line.reshape(shape)
        return mask.reshape(-1)

    @cached_property
    def partner_flat(self) -> np.ndarray:
        """Flat index of the mode ``-k`` (mod N) paired with each mode ``k``."""
        idx = np.indices(self.N)
        neg = tuple((-idx[a]) % self.N[a] for a in range(self.m))
        return np.ravel_multi_index(neg, self.N).reshape(-1)

    def symmetrize_multiplier(self, mult: np.ndarray) -> np.ndarray:
        """Restore Hermitian pairing of a flat multiplier on Nyquist planes.

        A mode on a Nyquist plane pairs with a partner whose Nyquist
        wavenumber has the same sign, so the sampled symbol is not
        conjugate-symmetric there.  Each such multiplier is replaced by the
        average of itself and the conjugate of its partner's.  In one
        dimension this is the real part.
        """
        out = np.array(mult, dtype=complex, copy=True)
        nyq = self.nyquist_flat
        partner = self.partner_flat[nyq]
        out[nyq] = 0.5 * (mult[nyq] + np.conj(mult[partner]))
        return out

    @cached_property
    def deriv_wavenumbers(self) -> np.ndarray:
        """Wavenumbers with the Nyquist entry zeroed (odd derivatives stay real)."""
        out = []
        for a in range(self.m):
            k = self.k1d(a)
            k[self.N[a] // 2] = 0.0
            out.append(k)
        return np.stack(np.meshgrid(*out, indexing="ij"))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean mask of modes kept by the 2/3 rule."""
        mask = np.ones(self.N, dtype=bool)
        for a in range(self.m):
            k = self.N[a]
            idx = np.abs(np.fft.fftfreq(k) * k)
            keep = idx < k / 3.0
            shape = [1] * self.m
            shape[a] = k
            mask &= keep.reshape(shape)
        return mask

    def fft(self, data: np.ndarray) -> np.ndarray:
        return np.fft.fftn(data, axes=self.axes)

    def ifft(self, data: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(data, axes=self.axes)

    def gaussian(self, amplitude: float = 1.0, width: float = 1.0,
                 centre: Sequence[float] | None = None) -> np.ndarray:
        """``amplitude * exp(-|x - centre|^2 / (2 width^2))``."""
        c = np.zeros(self.m) if centre is None else np.asarray(centre, float)
        r2 = sum((self.coords[a] - c[a]) ** 2 for a in range(self.m))
        return amplitude * np.exp(-r2 / (2.0 * width**2))


@dataclass(frozen=True)
class GridField:
    """An ``n``-component field on a :class:`Grid`."""

    grid: Grid
    data: np.ndarray
    spectral: bool = False

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim == self.grid.m:
            d = d[None]
        if d.shape[1:] != self.grid.N:
            raise ValueError(f"data shape {d.shape} does not match grid {self.grid.N}")
        object.__setattr__(self, "data", d)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.grid.m

    def to_spectral(self) -> "GridField":
        if self.spectral:
            return self
        return GridField(self.grid, self.grid.fft(self.data), True)

    def to_physical(self, real: bool = True) -> "GridField":
        if not self.spectral:
            return self
        d = self.grid.ifft(self.data)
        if real:
            scale = max(np.max(np.abs(d)), 1e-300)
            if np.max(np.abs(d.imag)) > 1e-8 * scale:
                raise ValueError("field is not real; spectrum is not Hermitian")
            d = d.real
        return GridField(self.grid, d, False)

    def components(self, idx) -> "GridField":
        return GridField(self.grid, self.data[idx], self.spectral)

    def __add__(self, other: "GridField") -> "GridField":
        self._check(other)
        return GridField(self.grid, self.data + other.data, self.spectral)

    def __sub__(self, other: "GridField") -> "GridField":
        self._check(other)
        return GridField(self.grid, self.data - other.data, self.spectral)

    def _check(self, other):
        if other.grid != self.grid or other.spectral != self.spectral:
            raise ValueError("fields live on different grids or representations")

    def derivative(self, beta: Sequence[int]) -> "GridField":
        """Spectral derivative ``D^beta``; returns a physical field."""
        spec = self.to_spectral().data
        mult = np.ones(self.grid.N, dtype=complex)
        for a, b in enumerate(beta):
            if b:
                mult = mult * (1j * self.grid.deriv_wavenumbers[a]) ** b
        return GridField(self.grid, spec * mult, True).to_physical()

    def norm(self, p: float = 2) -> float:
        """Discrete ``L^p`` norm over all components (Euclidean in components)."""
        if self.spectral:
            if p != 2:
                return self.to_physical().norm(p)
            return float(np.sqrt(self.grid.cell_volume / self.grid.size
                                 * np.sum(np.abs(self.data) ** 2)))
        mag = np.sqrt(np.sum(np.abs(self.data) ** 2, axis=0))
        if np.isinf(p):
            return float(mag.max())
        return float((self.grid.cell_volume * np.sum(mag**p)) ** (1.0 / p))

    def integral(self) -> np.ndarray:
        """Per-component spatial integral."""
        d = self.to_physical().data
        return d.reshape(self.n, -1).sum(axis=1) * self.grid.cell_volume

    # -- persistence -----------------------------------------------------

    def save(self, path) -> Path:
        """Write the little-endian binary container."""
        path = Path(path)
        g = self.grid
        head = MAGIC + struct.pack("<II", g.m, self.n)
        head += struct.pack("<" + "I" * g.m, *g.N)
        head += struct.pack("<dB", g.L, 1 if self.spectral else 0)
        if self.spectral:
            body = np.stack([self.data.real, self.data.imag], axis=-1)
        else:
            body = np.asarray(self.data, dtype=float)
        path.write_bytes(head + np.ascontiguousarray(body, dtype="<f8").tobytes())
        return path

    @classmethod
    def load(cls, path) -> "GridField":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise ValueError(f"{path}: not a grid field container")
        m, n = struct.unpack_from("<II", raw, 8)
        off = 16
        N = struct.unpack_from("<" + "I" * m, raw, off)
        off += 4 * m
        L, flag = struct.unpack_from("<dB", raw, off)
        off += 9
        body = np.frombuffer(raw, dtype="<f8", offset=off)
        grid = Grid(m, N, L)
        if flag:
            body = body.reshape((n,) + tuple(N) + (2,))
            data = body[..., 0] + 1j * body[..., 1]
        else:
            data = body.reshape((n,) + tuple(N)).copy()
        return cls(grid, data, bool(flag))

    def to_csv(self, path, axis_index: Sequence[int] | None = None) -> Path:
        """Export a 1-D slice along the first axis (other indices at the centre)."""
        f = self.to_physical()
        g = f.grid
        idx = [slice(None)] + [k // 2 for k in g.N[1:]] if axis_index is None else \
            [slice(None)] + list(axis_index)
        x = g.x1d(0)
        cols = f.data[(slice(None),) + tuple(idx)]
        lines = ["x," + ",".join(f"w{i}" for i in range(f.n))]
        for i in range(len(x)):
            lines.append(",".join(f"{v:.17g}" for v in [x[i]] + list(cols[:, i])))
        path = Path(path)
        path.write_text("\n".join(lines) + "\n")
        return path

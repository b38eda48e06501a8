"""Periodic spectral discretization of the box [-L, L)^n.

Fields are plain complex or real numpy arrays of shape ``grid.shape``
(row-major, axis 0 first).  All derivatives are Fourier-spectral and all
integrals use the rectangle rule, which is spectrally accurate for smooth
data that has decayed to (numerically) zero at the box boundary.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

NLSF_MAGIC = b"NLSF"
NLSF_VERSION = 1

BOUNDARY_TOL = 1e-10


def _workers() -> int:
    raw = os.environ.get("THGNLS_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class GridError(ValueError):
    pass


class BoundaryDecayWarning(UserWarning):
    """Field has non-negligible amplitude on the box boundary."""


@dataclass(frozen=True)
class GridSpec:
    n: int
    points: int
    half_width: float
    spacing: float = field(init=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise GridError(f"n must be 1, 2 or 3, got {self.n}")
        p = self.points
        if not isinstance(p, (int, np.integer)) or p < 16 or p & (p - 1):
            raise GridError(f"points must be a power of two >= 16, got {p}")
        if not self.half_width > 0:
            raise GridError(f"half_width must be positive, got {self.half_width}")
        object.__setattr__(self, "points", int(p))
        object.__setattr__(self, "half_width", float(self.half_width))
        # exact: points is a power of two
        object.__setattr__(self, "spacing", 2.0 * self.half_width / self.points)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.n

    @property
    def size(self) -> int:
        return self.points**self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    @cached_property
    def x1d(self) -> np.ndarray:
        """Axis coordinates, exactly antisymmetric about the centre index."""
        return (np.arange(self.points) - self.points // 2) * self.spacing

    @cached_property
    def k1d(self) -> np.ndarray:
        """Wavenumbers pi*m/L in FFT order, Nyquist on the negative side."""
        m = np.fft.fftfreq(self.points, d=1.0 / self.points)
        return np.pi * m / self.half_width

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x1d] * self.n), indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.k1d] * self.n), indexing="ij", sparse=True))

    @cached_property
    def r2(self) -> np.ndarray:
        return sum(c**2 for c in self.coords) * np.ones(self.shape)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers) * np.ones(self.shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = np.pi * (self.points // 2) / self.half_width
        mask = np.ones(self.shape, dtype=bool)
        for k in self.wavenumbers:
            mask = mask & (np.abs(k) < (2.0 / 3.0) * kmax)
        return mask

    def zeros(self, dtype=float) -> np.ndarray:
        return np.zeros(self.shape, dtype=dtype)

    def describe(self) -> dict:
        return {"n": self.n, "points": self.points, "half_width": self.half_width}


def make_grid(n: int, points: int, half_width: float) -> GridSpec:
    return GridSpec(n, points, half_width)


def check_field(grid: GridSpec, f, name: str = "field") -> np.ndarray:
    arr = np.asarray(f)
    if arr.shape != grid.shape:
        raise GridError(f"{name} has shape {arr.shape}, grid expects {grid.shape}")
    if not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains non-finite samples")
    return arr


def same_grid(grid: GridSpec, *fields) -> None:
    for i, f in enumerate(fields):
        if np.shape(f) != grid.shape:
            raise GridError(f"field {i} has shape {np.shape(f)}, grid expects {grid.shape}")


def fft(f: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT over all axes."""
    return sfft.fftn(f, workers=_workers())


def ifft(fh: np.ndarray) -> np.ndarray:
    """Inverse DFT, scaled by 1/points^n."""
    return sfft.ifftn(fh, workers=_workers())


def spectral_transform(f: np.ndarray, direction: str = "forward") -> np.ndarray:
    if direction == "forward":
        return fft(f)
    if direction == "inverse":
        return ifft(f)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def integrate(grid: GridSpec, f: np.ndarray):
    return grid.cell_volume * np.sum(f)


def grad_norm_sq(grid: GridSpec, f: np.ndarray) -> float:
    """Integral of |grad f|^2 evaluated in Fourier space."""
    fh = fft(f)
    return float(grid.cell_volume / grid.size * np.sum(grid.k2 * np.abs(fh) ** 2))


def gradient(grid: GridSpec, f: np.ndarray) -> list[np.ndarray]:
    fh = fft(f)
    out = [ifft(1j * k * fh) for k in grid.wavenumbers]
    if np.isrealobj(f):
        out = [g.real for g in out]
    return out


def laplacian(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    out = ifft(-grid.k2 * fft(f))
    return out.real if np.isrealobj(f) else out


def x_dot_grad(grid: GridSpec, f: np.ndarray) -> np.ndarray:
    """x . grad f with box coordinates."""
    return sum(x * g for x, g in zip(grid.coords, gradient(grid, f)))


def boundary_max(grid: GridSpec, f: np.ndarray) -> float:
    a = np.abs(np.asarray(f))
    edge = 0.0
    for ax in range(grid.n):
        edge = max(edge, float(np.take(a, 0, axis=ax).max()))
    return edge


def spectral_tail_fraction(grid: GridSpec, *fields, fraction: float = 2.0 / 3.0) -> float:
    """Share of the spectral power sitting at |k| > fraction * k_max.

    A cheap resolution indicator: it grows as a collapsing profile outruns
    the grid. Returns 0 for identically zero input.
    """
    kmax = np.pi / grid.spacing
    outer = np.sqrt(grid.k2) > fraction * kmax
    total = tail = 0.0
    for f in fields:
        power = np.abs(fft(np.asarray(f, dtype=complex))) ** 2
        total += float(power.sum())
        tail += float(power[outer].sum())
    return tail / total if total > 0 else 0.0


def warn_boundary(grid: GridSpec, *fields, tol: float = BOUNDARY_TOL) -> bool:
    """Warn (and return False) when any field exceeds ``tol`` on the box edge."""
    worst = max(boundary_max(grid, f) for f in fields)
    if worst > tol:
        warnings.warn(
            f"boundary amplitude {worst:.3e} exceeds {tol:.0e}; enlarge half_width",
            BoundaryDecayWarning,
            stacklevel=3,
        )
        return False
    return True


def _interp_matrix(grid: GridSpec, targets: np.ndarray) -> np.ndarray:
    """Matrix evaluating the trigonometric interpolant at ``targets``.

    Rows for targets outside [-L, L) are zero (no periodic wrap-around).
    The Nyquist mode is split symmetrically so real data stays real.
    """
    N = grid.points
    k = grid.k1d.copy()
    x0 = grid.x1d
    # E[t, j] = (1/N) sum_m exp(i k_m (t - x_j))
    phase = np.exp(1j * np.outer(targets, k))
    back = np.exp(-1j * np.outer(k, x0))
    w = np.ones(N)
    nyq = N // 2
    # cos(k_nyq (t - x_j)) instead of exp(-i ...)
    phase_nyq = np.cos(k[nyq] * (targets[:, None] - x0[None, :]))
    E = (phase * w) @ back
    E = E - np.outer(phase[:, nyq], back[nyq]) + phase_nyq
    E = E.real / N
    inside = (targets >= -grid.half_width) & (targets < grid.half_width)
    E[~inside] = 0.0
    return E


def dilate(grid: GridSpec, f: np.ndarray, scale: float) -> np.ndarray:
    """Return g(x) = f(scale * x) by tensor-product spectral interpolation."""
    E = _interp_matrix(grid, scale * grid.x1d)
    out = np.asarray(f)
    for ax in range(grid.n):
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [ax])), 0, ax)
    return out


def shift(grid: GridSpec, f: np.ndarray, offset) -> np.ndarray:
    """Return g(x) = f(x + offset) (periodic, spectral)."""
    offset = np.broadcast_to(np.asarray(offset, dtype=float), (grid.n,))
    ph = sum(k * a for k, a in zip(grid.wavenumbers, offset))
    fh = fft(f)
    if grid.points % 2 == 0:
        # drop Nyquist so the shift is real-preserving
        for ax in range(grid.n):
            idx = [slice(None)] * grid.n
            idx[ax] = grid.points // 2
            fh[tuple(idx)] = 0.0
    out = ifft(fh * np.exp(1j * ph))
    return out.real if np.isrealobj(f) else out


def centroid(grid: GridSpec, density: np.ndarray) -> np.ndarray:
    total = np.sum(density)
    if total <= 0:
        return np.zeros(grid.n)
    return np.array([float(np.sum(x * density) / total) for x in grid.coords])


# --- NLSF snapshot format -------------------------------------------------

_HEADER = struct.Struct("<4sIIIdI")


def write_nlsf(path, grid: GridSpec, components) -> None:
    """Write complex components as an NLSF snapshot.

    Layout (little-endian): magic ``NLSF``, u32 version, u32 n, u32 points,
    f64 half_width, u32 component count, then each component as row-major
    (re, im) float64 pairs.
    """
    comps = [np.asarray(c, dtype=np.complex128) for c in components]
    same_grid(grid, *comps)
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(NLSF_MAGIC, NLSF_VERSION, grid.n, grid.points, grid.half_width, len(comps))
        )
        for c in comps:
            fh.write(np.ascontiguousarray(c).astype("<c16").tobytes())


def read_nlsf(path) -> tuple[GridSpec, list[np.ndarray]]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise GridError("truncated NLSF header")
        magic, version, n, points, half_width, count = _HEADER.unpack(head)
        if magic != NLSF_MAGIC:
            raise GridError(f"bad magic {magic!r}")
        if version != NLSF_VERSION:
            raise GridError(f"unsupported NLSF version {version}")
        grid = GridSpec(n, points, half_width)
        comps = []
        nbytes = grid.size * 16
        for _ in range(count):
            raw = fh.read(nbytes)
            if len(raw) != nbytes:
                raise GridError("truncated NLSF payload")
            comps.append(np.frombuffer(raw, dtype="<c16").astype(np.complex128).reshape(grid.shape))
        if fh.read(1):
            raise GridError("trailing bytes after NLSF payload")
    return grid, comps

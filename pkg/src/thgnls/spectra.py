"""Linearized operators around the semitrivial state in one dimension.

The operators are -d^2/dx^2 + c - v(x), discretized by Fourier collocation:
the second-derivative matrix is the real symmetric circulant whose symbol is
k^2 (Nyquist included), so eigenpairs of sech^2 wells converge spectrally.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import functionals as fn
from .grid import GridSpec, gradient, ifft, integrate, laplacian
from .groundstate import GroundStatePair, scalar_ground_state_1d

NEG_RTOL = 1e-6


@dataclass(frozen=True)
class SchrodingerOp1D:
    grid: GridSpec
    shift: float
    potential: np.ndarray
    name: str = ""

    def __post_init__(self):
        if self.grid.n != 1:
            raise fn.ParameterError("operators are built on one-dimensional grids only")
        v = np.asarray(self.potential, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"potential has shape {v.shape}, grid expects {self.grid.shape}")
        object.__setattr__(self, "potential", v)

    def apply(self, f: np.ndarray) -> np.ndarray:
        return -laplacian(self.grid, f) + (self.shift - self.potential) * f

    def matrix(self) -> np.ndarray:
        N = self.grid.points
        col = ifft(self.grid.k2.astype(complex)).real
        idx = (np.arange(N)[:, None] - np.arange(N)[None, :]) % N
        H = col[idx]
        H[np.diag_indices(N)] += self.shift - self.potential
        return H


def build_operators(grid: GridSpec, Q, p: fn.PhysParams):
    """(L1, L2, L3) around (0, Q): wells 27Q^2, 9Q^2 with shift kappa and 2Q^2 with shift omega+1."""
    if grid.n != 1 or p.n != 1:
        raise fn.ParameterError("spectral analysis is implemented for n = 1 only")
    if not p.kappa > 0:
        raise fn.ParameterError(f"kappa = mu + 3 sigma omega must be positive, got {p.kappa}")
    Q = np.asarray(Q, dtype=float)
    q2 = Q * Q
    return (
        SchrodingerOp1D(grid, p.kappa, 27.0 * q2, "L1"),
        SchrodingerOp1D(grid, p.kappa, 9.0 * q2, "L2"),
        SchrodingerOp1D(grid, p.omega + 1.0, 2.0 * q2, "L3"),
    )


def eigenpairs(op: SchrodingerOp1D, count: int) -> list[tuple[float, np.ndarray]]:
    """The ``count`` smallest eigenpairs; eigenvectors unit in L^2, largest entry positive."""
    N = op.grid.points
    if not 1 <= count <= N:
        raise ValueError(f"count must be in [1, {N}], got {count}")
    try:
        vals, vecs = sla.eigh(op.matrix(), subset_by_index=[0, count - 1])
    except sla.LinAlgError as exc:
        raise ArithmeticError(f"eigensolver failed: {exc}") from exc
    out = []
    h = op.grid.spacing
    for lam, v in zip(vals, vecs.T):
        v = v / math.sqrt(h * float(v @ v))
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        out.append((float(lam), v))
    return out


def d_second(p: fn.PhysParams, grid: GridSpec | None = None, n: int | None = None) -> float:
    """(3 sigma / 2)(1 - n/2)(omega + 1)^(-n/2) * int Q0^2, Q0 the omega = 0 profile with kappa = 1.

    In one dimension int Q0^2 = 4/9 exactly; with a grid the integral is taken
    numerically from the sampled closed form instead.
    """
    n = p.n if n is None else n
    if grid is not None:
        Q0 = scalar_ground_state_1d(fn.PhysParams(1.0, 1.0, 0.0, 1), grid)
        q0 = float(integrate(grid, Q0 * Q0))
    else:
        q0 = 4.0 / 9.0
    return 1.5 * p.sigma * (1.0 - n / 2.0) * (p.omega + 1.0) ** (-n / 2.0) * q0


class Verdict:
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    OUT_OF_SCOPE = "OutOfScope"


@dataclass
class SpectralReport:
    negative_count: int
    eigenvalues: dict
    kernel_matches: dict
    kernel_residuals: dict
    d_second: float
    verdict: str
    eigenvectors: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "negative_count": self.negative_count,
            "eigenvalues": self.eigenvalues,
            "kernel_matches": self.kernel_matches,
            "kernel_residuals": self.kernel_residuals,
            "d_second": self.d_second,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _count(vals, tol):
    neg = sum(1 for v in vals if v < -tol)
    ker = sum(1 for v in vals if abs(v) <= tol)
    return neg, ker


def _overlap(grid: GridSpec, pairs, f, tol) -> float:
    """|<v0, f/|f|>| for the first kernel eigenvector v0 (0 if there is none)."""
    for lam, v in pairs:
        if abs(lam) <= tol:
            fn_ = f / math.sqrt(float(integrate(grid, f * f)))
            return abs(float(integrate(grid, v * fn_)))
    return 0.0


def stability_report(p: fn.PhysParams, grid: GridSpec, count: int = 6) -> SpectralReport:
    """Spectral facts for (0, Q) plus the sign of d'' in the regime omega + 1 = kappa."""
    if p.n != 1 or grid.n != 1:
        raise fn.ParameterError("stability analysis is one-dimensional")
    p.require_admissible()
    if not math.isclose(p.omega + 1.0, p.kappa, rel_tol=1e-12):
        raise fn.ParameterError(f"need omega + 1 = mu + 3 sigma omega (got {p.omega + 1.0} vs {p.kappa})")
    Q = scalar_ground_state_1d(p, grid)
    L1, L2, L3 = build_operators(grid, Q, p)
    tol = NEG_RTOL * p.kappa
    e1, e2, e3 = (eigenpairs(op, count) for op in (L1, L2, L3))
    v1, v2, v3 = ([lam for lam, _ in e] for e in (e1, e2, e3))

    neg1, ker1 = _count(v1, tol)
    neg2, ker2 = _count(v2, tol)
    neg3, ker3 = _count(v3, tol)

    dQ = gradient(grid, Q)[0]
    res1 = float(np.max(np.abs(L1.apply(dQ))))
    res2 = float(np.max(np.abs(L2.apply(Q))))
    # kernel membership is decided by eigenvector overlap; the L-infinity
    # residuals are reported too but depend on how far the tails have decayed
    overlap1 = _overlap(grid, e1, dQ, tol)
    overlap2 = _overlap(grid, e2, Q, tol)

    kernel = {
        "L1_one_negative": neg1 == 1,
        "L1_kernel_is_dQ": ker1 == 1 and overlap1 > 1 - 1e-6,
        "L2_nonnegative_simple_zero": neg2 == 0 and ker2 == 1,
        "L2_kernel_is_Q": overlap2 > 1 - 1e-6,
        "L3_positive": neg3 == 0 and ker3 == 0 and v3[0] > tol,
    }
    dd = d_second(p, grid)
    if all(kernel.values()):
        verdict = Verdict.STABLE if dd > 0 else (Verdict.UNSTABLE if dd < 0 else Verdict.OUT_OF_SCOPE)
    else:
        verdict = Verdict.OUT_OF_SCOPE
    return SpectralReport(
        negative_count=neg1,
        eigenvalues={"L1": v1, "L2": v2, "L3": v3},
        kernel_matches=kernel,
        kernel_residuals={"L1_dQ": res1, "L2_Q": res2, "L1_overlap": overlap1, "L2_overlap": overlap2},
        d_second=dd,
        verdict=verdict,
        eigenvectors={"L1": [v for _, v in e1], "L2": [v for _, v in e2], "L3": [v for _, v in e3]},
    )


# --- instability quadratic form ------------------------------------------


@dataclass(frozen=True)
class QuadraticForm:
    A0: float
    B0: float
    C0: float
    D: float
    semitrivial: bool
    directional_01: float | None = None

    def value(self, alpha0: float, lambda0: float) -> float:
        return self.A0 * alpha0**2 + 2.0 * self.B0 * alpha0 * lambda0 + self.C0 * lambda0**2


def instability_quadratic_form(gs: GroundStatePair, p: fn.PhysParams | None = None) -> QuadraticForm:
    """Coefficients of the second derivative of E along the mass-preserving dilation curve.

    For a semitrivial state (P = 0) the ratio k = int P^2 / (3 sigma int Q^2)
    vanishes and only the pure-Q integrals are kept.
    """
    p = gs.params if p is None else p
    if not gs.converged:
        raise ValueError("ground state is not converged")
    grid, P, Q = gs.grid, gs.P, gs.Q
    n, s, mu = grid.n, p.sigma, p.mu

    def I(f):
        return float(integrate(grid, f))

    Q2, Q4 = I(Q * Q), I(Q**4)
    semi = gs.semitrivial or not np.any(P)
    if semi:
        A0 = -18.0 * Q4
        B0 = 2.0 * (3 * s - mu) * Q2 + (n - 2) * (-9.0 * Q4)
        C0 = n * (2 - n) / 4.0 * 9.0 * Q4
    else:
        P2, P4, P2Q2, P3Q = I(P * P), I(P**4), I(P * P * Q * Q), I(P**3 * Q)
        k = P2 / (3.0 * s * Q2)
        A0 = -2.0 / k**2 * P4 + 8.0 / k * P2Q2 - 18.0 * Q4 + (2 / (3 * k) + 1 / 9 - 1 / (3 * k * k)) * P3Q
        B0 = 2.0 * (3 * s - mu) * Q2 + (n - 2) * (
            P4 / (9 * k) - 9 * Q4 + (2 / k - 2) * P2Q2 + (1 / (3 * k) - 1 / 9) * P3Q
        )
        C0 = n * (2 - n) / 4.0 * (P4 / 9 + 9 * Q4 + 4 * P2Q2 + 4 * P3Q / 9)
    D = A0 * C0 - B0 * B0
    return QuadraticForm(A0, B0, C0, D, semi, C0 if n == 3 else None)

"""Scalar functionals of the coupled third-harmonic Schrodinger system.

Conventions: ``u`` is the fundamental component, ``w`` the third harmonic.
Mass, energy and the virial quantities accept complex fields.  The quartic
functional N (and Ntilde = 4N, I, tau, J, Pohozaev residuals) is meant for real
pairs; on complex input the cubic coupling is replaced by its modulus
|u|^3 |w|, the form that appears in the Gagliardo-Nirenberg bound.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .grid import GridSpec, gradient, grad_norm_sq, integrate, laplacian, same_grid, warn_boundary


class ParameterError(ValueError):
    pass


class OutsideDomainError(ValueError):
    """Functional undefined for the given pair (e.g. N <= 0 for the quotient J)."""


@dataclass(frozen=True)
class PhysParams:
    sigma: float
    mu: float
    omega: float = 0.0
    n: int = 1

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not self.mu > 0:
            raise ParameterError(f"mu must be positive, got {self.mu}")
        if self.n not in (1, 2, 3):
            raise ParameterError(f"n must be 1, 2 or 3, got {self.n}")

    @property
    def kappa(self) -> float:
        """Linear coefficient mu + 3 sigma omega of the w equation."""
        return self.mu + 3.0 * self.sigma * self.omega

    @property
    def admissible(self) -> bool:
        return self.omega > max(-1.0, -self.mu / (3.0 * self.sigma))

    @property
    def resonant(self) -> bool:
        return math.isclose(self.mu, 3.0 * self.sigma, rel_tol=1e-12)

    def require_admissible(self) -> None:
        if not self.admissible:
            raise ParameterError(
                f"omega={self.omega} not admissible: need omega > max(-1, -mu/(3 sigma))"
            )


def _check(grid: GridSpec, p: PhysParams | None, *f):
    same_grid(grid, *f)
    if p is not None and p.n != grid.n:
        raise ParameterError(f"params n={p.n} but grid n={grid.n}")


def _abs2(f):
    return (f * np.conj(f)).real if np.iscomplexobj(f) else f * f


def kinetic(grid: GridSpec, u, w) -> float:
    same_grid(grid, u, w)
    return grad_norm_sq(grid, u) + grad_norm_sq(grid, w)


def mass(grid: GridSpec, u, w, p: PhysParams) -> float:
    _check(grid, p, u, w)
    return float(integrate(grid, _abs2(u) + 3.0 * p.sigma * _abs2(w)))


def quartic_density(u, w) -> np.ndarray:
    """Integrand of the energy's quartic part (uses Re(conj(u)^3 w))."""
    au, aw = _abs2(u), _abs2(w)
    cross = (np.conj(u) ** 3 * w).real if np.iscomplexobj(u) or np.iscomplexobj(w) else u**3 * w
    return au * au / 36.0 + 2.25 * aw * aw + au * aw + cross / 9.0


def energy(grid: GridSpec, u, w, p: PhysParams) -> float:
    _check(grid, p, u, w)
    quad = kinetic(grid, u, w) + integrate(grid, _abs2(u) + p.mu * _abs2(w)).real
    return float(0.5 * quad - integrate(grid, quartic_density(u, w)).real)


def quartic_N(grid: GridSpec, u, w) -> float:
    same_grid(grid, u, w)
    if np.iscomplexobj(u) or np.iscomplexobj(w):
        au, aw = np.abs(u), np.abs(w)
        dens = au**4 / 36.0 + 2.25 * aw**4 + au**2 * aw**2 + au**3 * aw / 9.0
    else:
        dens = quartic_density(u, w)
    return float(integrate(grid, dens).real)


def quartic_tilde(grid: GridSpec, u, w) -> float:
    """Ntilde = 4 N: the quartic term in the Nehari functional."""
    return 4.0 * quartic_N(grid, u, w)


def quadratic_I(grid: GridSpec, u, w, p: PhysParams) -> float:
    _check(grid, p, u, w)
    lin = integrate(grid, (p.omega + 1.0) * _abs2(u) + p.kappa * _abs2(w)).real
    return float(kinetic(grid, u, w) + lin)


def action(grid: GridSpec, u, w, p: PhysParams) -> float:
    return energy(grid, u, w, p) + 0.5 * p.omega * mass(grid, u, w, p)


def action_nehari(grid: GridSpec, u, w, p: PhysParams) -> tuple[float, float, float]:
    """Return (S, tau, I) with S = E + omega M / 2 and tau = I - Ntilde."""
    p.require_admissible()
    I = quadratic_I(grid, u, w, p)
    tau = I - quartic_tilde(grid, u, w)
    return action(grid, u, w, p), tau, I


def weinstein_J(grid: GridSpec, u, w, p: PhysParams) -> float:
    N = quartic_N(grid, u, w)
    if not N > 0:
        raise OutsideDomainError(f"N(u,w) = {N:.3e} <= 0; pair outside the domain of J")
    n = grid.n
    K = kinetic(grid, u, w)
    M = mass(grid, u, w, p)
    return K ** (n / 2) * M ** (2 - n / 2) / N


def momentum_integral(grid: GridSpec, u, w) -> float:
    """Im int (conj(u) x.grad u + 3 conj(w) x.grad w)."""
    same_grid(grid, u, w)
    total = 0.0
    for f, c in ((u, 1.0), (w, 3.0)):
        if not np.iscomplexobj(f):
            continue
        g = gradient(grid, f)
        xg = sum(x * gi for x, gi in zip(grid.coords, g))
        total += c * float(integrate(grid, np.conj(f) * xg).imag)
    return total


@dataclass(frozen=True)
class Virial:
    V: float
    Vp: float
    Vpp: float
    Vpp_resonant: float | None = None


def virial(grid: GridSpec, u, w, p: PhysParams, check_boundary: bool = True) -> Virial:
    """Variance V = int |x|^2 (|u|^2 + 3 sigma |w|^2) and its first two time derivatives.

    The second derivative is evaluated from the general-sigma formula; when
    sigma = 3 the simplified resonant form is also returned and the two are
    cross-checked.
    """
    _check(grid, p, u, w)
    if check_boundary:
        warn_boundary(grid, u, w)
    s = p.sigma
    n = grid.n
    au, aw = _abs2(u), _abs2(w)
    V = float(integrate(grid, grid.r2 * (au + 3.0 * s * aw)).real)
    Vp = 4.0 * momentum_integral(grid, u, w)

    Ku = grad_norm_sq(grid, u)
    Kw = grad_norm_sq(grid, w)
    uc = np.conj(u)
    xgu = sum(x * g for x, g in zip(grid.coords, gradient(grid, u)))
    xguc = np.conj(xgu)
    c = 24.0 / s - 8.0
    terms = (
        8.0 * Ku
        + (24.0 / s) * Kw
        - integrate(grid, (2 * n / 9.0) * au * au + (54.0 * n / s) * aw * aw + 8 * n * au * aw).real
        + 2.0 * c * integrate(grid, uc * aw * xgu).real
        + (12.0 / s - 12.0) * n / 9.0 * integrate(grid, uc**3 * w).real
        + c / 9.0 * integrate(grid, 3.0 * uc**2 * w * xguc).real
    )
    Vpp = float(terms)
    Vpp_res = None
    if math.isclose(s, 3.0, rel_tol=1e-12):
        E = energy(grid, u, w, p)
        L = float(integrate(grid, au + p.mu * aw).real)
        Vpp_res = 8 * n * E + 4 * (2 - n) * (Ku + Kw) - 4 * n * L
        scale = max(1.0, abs(8 * (Ku + Kw)), abs(4 * n * L))
        if abs(Vpp - Vpp_res) > 1e-8 * scale:
            warnings.warn(
                f"virial V'' mismatch: general {Vpp:.12e} vs resonant {Vpp_res:.12e}",
                RuntimeWarning,
                stacklevel=2,
            )
    return Virial(V, Vp, Vpp, Vpp_res)


def stationary_residuals(grid: GridSpec, P, Q, p: PhysParams) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise residuals of both stationary equations for real (P, Q)."""
    _check(grid, p, P, Q)
    rP = laplacian(grid, P) - (p.omega + 1.0) * P + (P * P / 9.0 + 2.0 * Q * Q) * P + P * P * Q / 3.0
    rQ = laplacian(grid, Q) - p.kappa * Q + (9.0 * Q * Q + 2.0 * P * P) * Q + P**3 / 9.0
    return rP, rQ


def equation_residual(grid: GridSpec, P, Q, p: PhysParams) -> float:
    rP, rQ = stationary_residuals(grid, P, Q, p)
    return float(max(np.max(np.abs(rP)), np.max(np.abs(rQ))))


def pohozaev_residuals(grid: GridSpec, P, Q, p: PhysParams) -> tuple[float, float, float]:
    """Left sides of the three integral identities satisfied by bound states."""
    _check(grid, p, P, Q)
    n = grid.n
    KP, KQ = grad_norm_sq(grid, P), grad_norm_sq(grid, Q)
    P2 = float(integrate(grid, P * P))
    Q2 = float(integrate(grid, Q * Q))
    P4 = float(integrate(grid, P**4))
    Q4 = float(integrate(grid, Q**4))
    P2Q2 = float(integrate(grid, P * P * Q * Q))
    P3Q = float(integrate(grid, P**3 * Q))
    r1 = -KP - (p.omega + 1.0) * P2 + P4 / 9.0 + 2.0 * P2Q2 + P3Q / 3.0
    r2 = -KQ - p.kappa * Q2 + 9.0 * Q4 + 2.0 * P2Q2 + P3Q / 9.0
    r3 = (n - 4) * (KP + KQ) + n * (p.omega + 1.0) * P2 + n * p.kappa * Q2
    return r1, r2, r3


# --- diagnostics rows ----------------------------------------------------

CSV_COLUMNS = ("t", "M", "E", "K", "N", "I", "S", "tau", "J", "V", "Vp", "Vpp")


@dataclass
class DiagnosticSet:
    t: float | None = None
    M: float | None = None
    E: float | None = None
    K: float | None = None
    N: float | None = None
    I: float | None = None
    S: float | None = None
    tau: float | None = None
    J: float | None = None
    V: float | None = None
    Vp: float | None = None
    Vpp: float | None = None

    def row(self) -> list[str]:
        return ["" if getattr(self, c) is None else repr(float(getattr(self, c))) for c in CSV_COLUMNS]

    def as_dict(self) -> dict:
        return asdict(self)


def diagnostics(
    grid: GridSpec, u, w, p: PhysParams, t: float | None = None, with_virial: bool = True
) -> DiagnosticSet:
    """Evaluate every functional on (u, w); undefined entries are left empty."""
    M = mass(grid, u, w, p)
    E = energy(grid, u, w, p)
    K = kinetic(grid, u, w)
    N = quartic_N(grid, u, w)
    I = quadratic_I(grid, u, w, p)
    S = E + 0.5 * p.omega * M
    J = K ** (grid.n / 2) * M ** (2 - grid.n / 2) / N if N > 0 else None
    d = DiagnosticSet(t=t, M=M, E=E, K=K, N=N, I=I, S=S, tau=I - 4.0 * N, J=J)
    if with_virial:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vir = virial(grid, u, w, p, check_boundary=False)
        d.V, d.Vp, d.Vpp = vir.V, vir.Vp, vir.Vpp
    return d


class CsvSink:
    """Collects diagnostics rows; writes the header once."""

    def __init__(self, stream=None):
        self.stream = stream if stream is not None else io.StringIO()
        self._writer = csv.writer(self.stream, lineterminator="\n")
        self._writer.writerow(CSV_COLUMNS)
        self.rows: list[DiagnosticSet] = []

    def __call__(self, d: DiagnosticSet) -> None:
        self.rows.append(d)
        self._writer.writerow(d.row())

    def getvalue(self) -> str:
        return self.stream.getvalue()


def read_csv(text: str) -> list[DiagnosticSet]:
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for rec in reader:
        out.append(DiagnosticSet(**{k: (float(v) if v != "" else None) for k, v in rec.items()}))
    return out


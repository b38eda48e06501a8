"""Bound and ground states of the stationary system

    dP - (omega+1) P + (P^2/9 + 2 Q^2) P + P^2 Q / 3 = 0
    dQ - kappa Q + (9 Q^2 + 2 P^2) Q + P^3 / 9 = 0,     kappa = mu + 3 sigma omega.

Ground states are computed by minimizing the action over the Nehari manifold
with a preconditioned gradient flow: each step moves along the Sobolev
gradient (the L2 gradient divided by the positive linear symbols) and then
rescales back onto the manifold.  On the manifold the action equals
I^2 / (4 Ntilde), which is what the backtracking line search decreases.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize, special
from scipy.integrate import solve_ivp

from . import functionals as fn
from .functionals import PhysParams
from .grid import GridSpec, centroid, check_field, dilate, fft, ifft, shift, write_nlsf

log = logging.getLogger(__name__)

ZERO_AMPLITUDE = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass
class GroundStatePair:
    P: np.ndarray
    Q: np.ndarray
    params: PhysParams
    grid: GridSpec
    action: float
    nehari_residual: float
    pohozaev_residuals: tuple[float, float, float]
    equation_residual: float
    iterations: int = 0
    converged: bool = False
    action_history: list[float] = field(default_factory=list, repr=False)

    @classmethod
    def from_profiles(cls, grid, P, Q, p: PhysParams, tol=1e-8, iterations=0, history=None):
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        if np.max(np.abs(P)) < ZERO_AMPLITUDE:
            P = np.zeros_like(P)
        S = fn.action(grid, P, Q, p)
        I = fn.quadratic_I(grid, P, Q, p)
        tau = I - fn.quartic_tilde(grid, P, Q)
        res = fn.equation_residual(grid, P, Q, p)
        ok = res < tol and abs(tau) < tol * max(1.0, I)
        return cls(
            P=P,
            Q=Q,
            params=p,
            grid=grid,
            action=S,
            nehari_residual=abs(tau),
            pohozaev_residuals=fn.pohozaev_residuals(grid, P, Q, p),
            equation_residual=res,
            iterations=iterations,
            converged=bool(ok),
            action_history=list(history or []),
        )

    @property
    def semitrivial(self) -> bool:
        return not np.any(self.P)

    def mass(self) -> float:
        return fn.mass(self.grid, self.P, self.Q, self.params)

    def kinetic(self) -> float:
        return fn.kinetic(self.grid, self.P, self.Q)

    def energy(self) -> float:
        return fn.energy(self.grid, self.P, self.Q, self.params)

    def quartic_N(self) -> float:
        return fn.quartic_N(self.grid, self.P, self.Q)

    def summary(self) -> dict:
        p = self.params
        return {
            "params": {"sigma": p.sigma, "mu": p.mu, "omega": p.omega, "n": p.n},
            "grid": self.grid.describe(),
            "action": self.action,
            "mass": self.mass(),
            "kinetic": self.kinetic(),
            "quartic_N": self.quartic_N(),
            "nehari_residual": self.nehari_residual,
            "pohozaev_residuals": list(self.pohozaev_residuals),
            "equation_residual": self.equation_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "semitrivial": self.semitrivial,
        }

    def save(self, stem) -> None:
        """Write ``<stem>.nlsf`` (P, Q as complex) and ``<stem>.json``."""
        write_nlsf(f"{stem}.nlsf", self.grid, [self.P, self.Q])
        with open(f"{stem}.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# --- scalar states --------------------------------------------------------


def _sech(x):
    return 1.0 / np.cosh(x)


def scalar_ground_state_1d(p: PhysParams, grid: GridSpec) -> np.ndarray:
    """Closed-form ground state of w'' - kappa w + 9 w^3 = 0."""
    if grid.n != 1:
        raise ValueError("closed-form scalar state needs n = 1")
    kappa = p.kappa
    if not kappa > 0:
        raise fn.ParameterError(f"kappa = mu + 3 sigma omega must be positive, got {kappa}")
    return math.sqrt(2.0 * kappa) / 3.0 * _sech(math.sqrt(kappa) * grid.x1d)


def _petviashvili(grid: GridSpec, kappa: float, coeff: float, tol: float, max_iter: int):
    """Solve dQ - kappa Q + coeff Q^3 = 0 for the positive radial state."""
    r2 = grid.r2
    Q = math.sqrt(2.0 * kappa / coeff) * np.exp(-kappa * r2 / 2.0)
    symbol = grid.k2 + kappa
    for it in range(1, max_iter + 1):
        Qh = fft(Q)
        Nh = fft(coeff * Q**3)
        num = np.sum(symbol * np.abs(Qh) ** 2)
        den = np.sum((np.conj(Qh) * Nh).real)
        stab = (num / den) ** 1.5
        Q = ifft(stab * Nh / symbol).real
        res = np.max(np.abs(ifft(-symbol * fft(Q)).real + coeff * Q**3))
        if res < tol:
            return Q, it, res
    raise ConvergenceError(f"scalar solver stalled at residual {res:.3e} after {max_iter} iterations")


def scalar_ground_state_nd(p: PhysParams, grid: GridSpec, tol: float = 1e-10, max_iter: int = 2000):
    """Positive radial ground state of dw - kappa w + 9 w^3 = 0 on the grid.

    For n = 1 the closed form is returned.
    """
    kappa = p.kappa
    if not kappa > 0:
        raise fn.ParameterError(f"kappa must be positive, got {kappa}")
    if grid.n == 1:
        return scalar_ground_state_1d(p, grid)
    Q, _, _ = _petviashvili(grid, kappa, 9.0, tol, max_iter)
    return Q


_MATCH_RADIUS = 8.0


@lru_cache(maxsize=4)
def _radial_profile(n: int):
    """Shoot for the kappa = 1 radial state R'' + (n-1)/r R' - R + 9 R^3 = 0.

    Bisection on R(0) separates trajectories that cross zero from those that
    turn back up.  Returns (R(0), dense solution on (0, _MATCH_RADIUS]).
    """

    def rhs(r, y):
        return [y[1], -(n - 1) / r * y[1] + y[0] - 9.0 * y[0] ** 3]

    def start(a, eps=1e-4):
        c = (a - 9.0 * a**3) / (2.0 * n)  # R = a + c r^2 + O(r^4)
        return eps, [a + c * eps * eps, 2.0 * c * eps]

    def crosses(r, y):
        return y[0]

    def turns(r, y):
        return y[1]

    crosses.terminal, crosses.direction = True, -1
    turns.terminal, turns.direction = True, 1

    def overshoots(a):
        r0, y0 = start(a)
        sol = solve_ivp(
            rhs, (r0, 3 * _MATCH_RADIUS), y0, method="DOP853", rtol=1e-13, atol=1e-18, events=(crosses, turns)
        )
        return sol.t_events[0].size > 0

    lo, hi = 1.0 / 3.0 + 1e-9, 5.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if overshoots(mid):
            hi = mid
        else:
            lo = mid
    r0, y0 = start(mid)
    sol = solve_ivp(rhs, (r0, _MATCH_RADIUS), y0, method="DOP853", rtol=1e-13, atol=1e-18, dense_output=True)
    return mid, sol


def _linear_tail(n: int, r):
    """Decaying solution of the linearized radial equation, up to a constant."""
    if n == 2:
        return special.k0e(r) * np.exp(-r)
    return np.exp(-r) / r


def scalar_ground_state_radial(p: PhysParams, grid: GridSpec) -> np.ndarray:
    """Scalar ground state sampled from a high-accuracy radial solve.

    Unlike ``scalar_ground_state_nd`` this is not the discrete solution on the
    grid; it is the continuum profile evaluated at grid points, so integrals of
    it converge spectrally in the spacing.  Beyond r = 8 (kappa = 1 units) the
    profile is continued by the linear tail, where 9 R^2 is below 1e-7.
    """
    kappa = p.kappa
    if not kappa > 0:
        raise fn.ParameterError(f"kappa must be positive, got {kappa}")
    if grid.n == 1:
        return scalar_ground_state_1d(p, grid)
    n = grid.n
    a, sol = _radial_profile(n)
    rk = math.sqrt(kappa) * np.sqrt(grid.r2).ravel()
    out = np.empty_like(rk)
    inner = rk <= _MATCH_RADIUS
    r_min = sol.t[0]
    core = rk[inner]
    vals = sol.sol(np.maximum(core, r_min))[0]
    # below the series start point use R(0) + c r^2
    c = (a - 9.0 * a**3) / (2.0 * n)
    out[inner] = np.where(core < r_min, a + c * core * core, vals)
    edge = sol.y[0, -1]
    out[~inner] = edge * _linear_tail(n, rk[~inner]) / _linear_tail(n, _MATCH_RADIUS)
    return math.sqrt(kappa) * out.reshape(grid.shape)


def semitrivial_state(p: PhysParams, grid: GridSpec, tol: float = 1e-10, radial: bool = False) -> GroundStatePair:
    """(0, Q) as a GroundStatePair; ``radial=True`` samples the radial solve instead of the grid solve."""
    Q = scalar_ground_state_radial(p, grid) if radial else scalar_ground_state_nd(p, grid, tol=tol)
    return GroundStatePair.from_profiles(grid, np.zeros_like(Q), Q, p, tol=max(tol, 1e-8))


# --- Nehari machinery -----------------------------------------------------


def nehari_project(grid: GridSpec, u, w, p: PhysParams) -> float:
    """Scale t > 0 with tau(t u, t w) = 0, i.e. t^2 = I / Ntilde."""
    Nt = fn.quartic_tilde(grid, u, w)
    if not Nt > 0:
        raise fn.OutsideDomainError(f"Ntilde = {Nt:.3e} <= 0: the ray never meets the Nehari manifold")
    return math.sqrt(fn.quadratic_I(grid, u, w, p) / Nt)


def default_init(grid: GridSpec, amp_P: float = 0.5, amp_Q: float = 1.0, width: float = 1.0):
    g = np.exp(-grid.r2 / (2.0 * width**2))
    return amp_P * g, amp_Q * g


def _nonlinear_terms(P, Q):
    gP = P**3 / 9.0 + 2.0 * Q * Q * P + P * P * Q / 3.0
    gQ = 9.0 * Q**3 + 2.0 * P * P * Q + P**3 / 9.0
    return gP, gQ


def recenter(grid: GridSpec, P, Q, p: PhysParams, exact: bool = False):
    """Move the mass centroid to the origin.

    With ``exact`` the shift is rounded to whole grid cells (a roll), which
    commutes with the pointwise nonlinearity and so preserves a converged
    residual; otherwise a spectral sub-cell shift is used.
    """
    c = centroid(grid, P * P + 3.0 * p.sigma * Q * Q)
    if exact:
        cells = tuple(int(v) for v in np.rint(c / grid.spacing))
        if not any(cells):
            return P, Q
        axes = tuple(range(grid.n))
        return np.roll(P, [-m for m in cells], axes), np.roll(Q, [-m for m in cells], axes)
    if np.max(np.abs(c)) <= 1e-12 * grid.spacing:
        return P, Q
    return shift(grid, P, c), shift(grid, Q, c)


def _newton_polish(grid: GridSpec, p: PhysParams, P, Q, tol: float):
    """Newton-Krylov on the preconditioned fixed-point form, or None on failure."""
    aP = grid.k2 + (p.omega + 1.0)
    aQ = grid.k2 + p.kappa
    shape = grid.shape
    m = grid.size

    def F(z):
        P_, Q_ = z[:m].reshape(shape), z[m:].reshape(shape)
        gP, gQ = _nonlinear_terms(P_, Q_)
        rP = P_ - ifft(fft(gP) / aP).real
        rQ = Q_ - ifft(fft(gQ) / aQ).real
        return np.concatenate([rP.ravel(), rQ.ravel()])

    z0 = np.concatenate([np.ravel(P), np.ravel(Q)])
    # the preconditioned residual is at most residual / min(a); aim well below tol
    ftol = 0.01 * tol * min(1.0, p.omega + 1.0, p.kappa)
    try:
        with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"):
            z = optimize.newton_krylov(F, z0, f_tol=ftol, maxiter=60, method="lgmres")
    except (optimize.NoConvergence, FloatingPointError, ValueError) as exc:
        log.debug("Newton polish failed: %s", exc)
        return None
    return z[:m].reshape(shape), z[m:].reshape(shape)


def solve_ground_state(
    p: PhysParams,
    grid: GridSpec,
    init=None,
    tol: float = 1e-8,
    max_iter: int = 50_000,
    raise_on_failure: bool = True,
) -> GroundStatePair:
    """Minimize the action on the Nehari manifold.

    Convergence requires the L-infinity residual of both stationary
    equations below ``tol`` and |tau| < tol * I.

    Preconditioned steepest descent does the global work; once the residual
    is small the iterate is handed to a Newton-Krylov solve of the
    stationary equations, which removes the slow linear tail of descent.
    """
    p.require_admissible()
    if p.n != grid.n:
        raise fn.ParameterError(f"params n={p.n} but grid n={grid.n}")
    if init is None:
        P, Q = default_init(grid)
    else:
        P = np.array(check_field(grid, init[0], "P").real, dtype=float)
        Q = np.array(check_field(grid, init[1], "Q").real, dtype=float)
    if not fn.quartic_tilde(grid, P, Q) > 0:
        # rearrangement-style recovery: moduli can only raise Ntilde
        P, Q = np.abs(P), np.abs(Q)
        if not fn.quartic_tilde(grid, P, Q) > 0:
            raise fn.OutsideDomainError("initial pair has Ntilde <= 0 and cannot be recovered")

    P, Q = recenter(grid, P, Q, p)
    vol = grid.cell_volume / grid.size
    aP = grid.k2 + (p.omega + 1.0)
    aQ = grid.k2 + p.kappa

    def quad(Ph, Qh):
        return vol * float(np.sum(aP * np.abs(Ph) ** 2) + np.sum(aQ * np.abs(Qh) ** 2))

    t = nehari_project(grid, P, Q, p)
    P, Q = t * P, t * Q
    Ph, Qh = fft(P), fft(Q)
    I = quad(Ph, Qh)
    Nt = fn.quartic_tilde(grid, P, Q)
    F = I * I / (4.0 * Nt)
    history = [F]
    alpha = 1.0
    res = math.inf
    it = 0
    polish_below = 1.0
    for it in range(max_iter + 1):
        gP, gQ = _nonlinear_terms(P, Q)
        GPh = aP * Ph - fft(gP)
        GQh = aQ * Qh - fft(gQ)
        res = max(np.max(np.abs(ifft(GPh).real)), np.max(np.abs(ifft(GQh).real)))
        if res < tol and abs(I - Nt) < tol * I:
            break
        if it == max_iter:
            break
        if res < polish_below:
            polished = _newton_polish(grid, p, P, Q, tol)
            if polished is not None:
                # Newton converges to whatever critical point is nearest; keep it
                # only if it did not climb above the descent iterate
                pS = fn.action_nehari(grid, *polished, p)[0]
                if pS <= F + 1e-6 * abs(F):
                    P, Q = polished
                    history.append(pS)
                    break
                log.debug("Newton polish reached a higher critical point (%.10g > %.10g)", pS, F)
            polish_below = res / 10.0
        DPh, DQh = GPh / aP, GQh / aQ
        DP, DQ = ifft(DPh).real, ifft(DQh).real
        slope = vol * float(np.sum((np.conj(GPh) * DPh).real) + np.sum((np.conj(GQh) * DQh).real))
        if slope <= 0:
            break
        alpha = min(2.0 * alpha, 4.0)
        while True:
            tP, tQ = P - alpha * DP, Q - alpha * DQ
            tNt = fn.quartic_tilde(grid, tP, tQ)
            if tNt > 0:
                tPh, tQh = Ph - alpha * DPh, Qh - alpha * DQh
                tI = quad(tPh, tQh)
                tF = tI * tI / (4.0 * tNt)
                if tF <= F - 1e-4 * alpha * slope:
                    break
            alpha *= 0.5
            if alpha < 1e-14:
                break
        if alpha < 1e-14:
            log.debug("line search exhausted at iteration %d (residual %.3e)", it, res)
            break
        s = math.sqrt(tI / tNt)
        P, Q, Ph, Qh = s * tP, s * tQ, s * tPh, s * tQh
        I, Nt = s * s * tI, s**4 * tNt
        if tF > F + 1e-12 * abs(F):
            raise AssertionError(f"action increased at iteration {it}: {F!r} -> {tF!r}")
        F = tF
        history.append(F)
        if it % 500 == 0:
            log.debug("iter %d  S=%.15g  residual=%.3e  alpha=%.3g", it, F, res, alpha)

    P, Q = recenter(grid, P, Q, p, exact=True)
    result = GroundStatePair.from_profiles(grid, P, Q, p, tol=tol, iterations=it, history=history)
    if raise_on_failure and not result.converged:
        raise ConvergenceError(
            f"ground state not converged after {it} iterations "
            f"(residual {result.equation_residual:.3e}, tol {tol:.1e})",
            result,
        )
    return result


# --- special families ------------------------------------------------------


def proportional_cubic(b: float) -> float:
    """63 b^3 - 3 b^2 + 17 b + 1, from clearing b in the proportionality condition."""
    return ((63.0 * b - 3.0) * b + 17.0) * b + 1.0


def proportional_pair(p: PhysParams, grid: GridSpec, tol: float = 1e-8) -> tuple[GroundStatePair, float]:
    """Bound state (P_b, b P_b) with b the negative root of the proportionality condition."""
    if grid.n != 1:
        raise ValueError("proportional pair is built in closed form for n = 1 only")
    if not math.isclose(p.omega + 1.0, p.kappa, rel_tol=1e-12):
        raise fn.ParameterError("proportional pair requires omega + 1 = mu + 3 sigma omega")
    lo, hi = -10.0, -1e-12
    if proportional_cubic(lo) * proportional_cubic(hi) > 0:
        raise ArithmeticError("no negative root of the proportionality cubic in [-10, 0)")
    b = optimize.bisect(proportional_cubic, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)
    c = 2.0 * b * b + b / 3.0 + 1.0 / 9.0
    if not c > 0:
        raise ArithmeticError(f"cubic coefficient {c} is not positive")
    kappa = p.kappa
    Pb = math.sqrt(2.0 * kappa / c) * _sech(math.sqrt(kappa) * grid.x1d)
    return GroundStatePair.from_profiles(grid, Pb, b * Pb, p, tol=tol), b


@dataclass
class SemitrivialComparison:
    beats_semitrivial: bool
    witness_action: float | None
    f_min: float
    lambda0: float
    semitrivial_action: float | None = None
    theta: float | None = None


def semitrivial_comparison(p: PhysParams, grid: GridSpec | None = None) -> SemitrivialComparison:
    """Decide whether (0, Q) can be beaten on the Nehari manifold.

    ``f_min = 1 - mu lambda0^2`` with ``lambda0 = 9^(-2/(4-n))``; the flag
    uses the closed condition mu >= 9^(4/(4-n)).  When f_min < 0 strictly and
    a grid is supplied, the witness (t theta W, t Q), W(x) = Q(lambda0 x), is
    built and its projected action returned.
    """
    if not p.resonant:
        raise fn.ParameterError("comparison requires mu = 3 sigma")
    p.require_admissible()
    n = p.n
    lam0 = 9.0 ** (-2.0 / (4 - n))
    f_min = 1.0 - p.mu * lam0**2
    beats = f_min <= 1e-12
    out = SemitrivialComparison(beats, None, f_min, lam0)
    if grid is None or not f_min < -1e-12:
        return out
    Q = scalar_ground_state_nd(p, grid)
    zero = np.zeros_like(Q)
    S0 = fn.action(grid, zero, Q, p)
    W = dilate(grid, Q, lam0)
    best = (math.inf, None)
    for theta in np.geomspace(1.0, 1e4, 161):
        u = theta * W
        Nt = fn.quartic_tilde(grid, u, Q)
        I = fn.quadratic_I(grid, u, Q, p)
        S = I * I / (4.0 * Nt)
        if S < best[0]:
            best = (S, float(theta))
    out.semitrivial_action = S0
    out.witness_action, out.theta = best
    if not best[0] < S0:
        raise AssertionError(f"witness action {best[0]} does not beat S(0,Q) = {S0}")
    return out

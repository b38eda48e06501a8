"""Strang-split spectral integrator for the Cauchy problem.

One step is L(dt/2) N(dt) L(dt/2), where L is the exact linear flow in Fourier
space and N is one classical RK4 step of the pointwise cubic ODE.  Inside
:func:`evolve` adjacent linear half steps are fused into one full step, so
each time step costs two forward and two inverse transforms per component;
the state is brought back to a synchronized time whenever a diagnostics row
is emitted.

The module also carries the exact pseudoconformal blow-up solution for the
resonant two-dimensional case and the gauge that links the system with
linear terms to the one without them.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import functionals as fn
from .grid import GridSpec, check_field, dilate, fft, ifft, same_grid

log = logging.getLogger(__name__)


class NonFiniteStateError(ArithmeticError):
    """A field acquired NaN or Inf values."""


class MassDriftError(ArithmeticError):
    """The relative mass drift of a run exceeded its configured bound."""


class Outcome(str, enum.Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowupDetected"


@dataclass(frozen=True)
class SimState:
    t: float
    u: np.ndarray
    w: np.ndarray
    params: fn.PhysParams
    grid: GridSpec

    def __post_init__(self):
        if self.params.n != self.grid.n:
            raise fn.ParameterError(f"params n={self.params.n} but grid n={self.grid.n}")
        object.__setattr__(self, "u", np.asarray(check_field(self.grid, self.u, "u"), dtype=complex))
        object.__setattr__(self, "w", np.asarray(check_field(self.grid, self.w, "w"), dtype=complex))

    def with_fields(self, t, u, w) -> "SimState":
        return replace(self, t=float(t), u=u, w=w)

    def mass(self) -> float:
        return fn.mass(self.grid, self.u, self.w, self.params)


@dataclass(frozen=True)
class StepperConfig:
    """Fixed-step settings.

    ``dealias=None`` picks the default (on for n >= 2, off for n = 1) and
    ``blowup_K_threshold=None`` means 1e6 times the initial kinetic term.
    ``mass_drift_bound``, when given, aborts a run whose relative mass drift
    exceeds it with ``MassDriftError`` (blow-up detection takes precedence).
    """

    dt: float
    t_end: float
    dealias: bool | None = None
    blowup_K_threshold: float | None = None
    output_stride: int = 1
    with_virial: bool = True
    mass_drift_bound: float | None = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not math.isfinite(self.t_end):
            raise ValueError("t_end must be finite")
        if self.blowup_K_threshold is not None and not self.blowup_K_threshold > 0:
            raise ValueError("blowup_K_threshold must be positive")
        if int(self.output_stride) < 1:
            raise ValueError("output_stride must be >= 1")

    def use_dealias(self, n: int) -> bool:
        return n >= 2 if self.dealias is None else bool(self.dealias)


# --- elementary substeps --------------------------------------------------


def _linear_symbols(grid: GridSpec, p: fn.PhysParams, h: float):
    return np.exp(-1j * (grid.k2 + 1.0) * h), np.exp(-1j * (grid.k2 + p.mu) * (h / p.sigma))


def linear_halfstep(s: SimState, h: float) -> SimState:
    """Exact flow of the linear part over time ``h`` (does not advance t)."""
    if h == 0:
        return s
    eu, ew = _linear_symbols(s.grid, s.params, h)
    return s.with_fields(s.t, ifft(eu * fft(s.u)), ifft(ew * fft(s.w)))


def _rhs(u, w, inv_sigma):
    au, aw = (u * np.conj(u)).real, (w * np.conj(w)).real
    du = 1j * ((au / 9.0 + 2.0 * aw) * u + np.conj(u) ** 2 * w / 3.0)
    dw = (1j * inv_sigma) * ((9.0 * aw + 2.0 * au) * w + u**3 / 9.0)
    return du, dw


def _rk4_increment_w(w, h, inv_sigma):
    """RK4 increment for u = 0, where the flow reduces to w' = (9i/sigma)|w|^2 w."""
    c9 = 9j * inv_sigma

    def f(z):
        return c9 * (z * np.conj(z)).real * z

    k1 = f(w)
    k2 = f(w + 0.5 * h * k1)
    k3 = f(w + 0.5 * h * k2)
    k4 = f(w + h * k3)
    return (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _rk4_increment(u, w, h, inv_sigma):
    k1u, k1w = _rhs(u, w, inv_sigma)
    k2u, k2w = _rhs(u + 0.5 * h * k1u, w + 0.5 * h * k1w, inv_sigma)
    k3u, k3w = _rhs(u + 0.5 * h * k2u, w + 0.5 * h * k2w, inv_sigma)
    k4u, k4w = _rhs(u + h * k3u, w + h * k3w, inv_sigma)
    c = h / 6.0
    return c * (k1u + 2.0 * (k2u + k3u) + k4u), c * (k1w + 2.0 * (k2w + k3w) + k4w)


def nonlinear_step(s: SimState, h: float, dealias: bool = False) -> SimState:
    """One RK4 step of the pointwise cubic flow (t is not advanced)."""
    if h == 0:
        return s
    du, dw = _rk4_increment(s.u, s.w, h, 1.0 / s.params.sigma)
    if dealias:
        mask = s.grid.dealias_mask
        du, dw = ifft(mask * fft(du)), ifft(mask * fft(dw))
    u, w = s.u + du, s.w + dw
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
        raise NonFiniteStateError(f"non-finite values after nonlinear step at t={s.t}")
    return s.with_fields(s.t, u, w)


def step(s: SimState, cfg: StepperConfig) -> SimState:
    dt = cfg.dt
    out = linear_halfstep(s, 0.5 * dt)
    out = nonlinear_step(out, dt, cfg.use_dealias(s.grid.n))
    out = linear_halfstep(out, 0.5 * dt)
    return out.with_fields(s.t + dt, out.u, out.w)


# --- driver ---------------------------------------------------------------


@dataclass
class EvolveResult:
    final: SimState
    outcome: Outcome
    detection_time: float | None
    steps: int
    K0: float
    K_threshold: float
    max_mass_drift: float
    reason: str = ""

    @property
    def blew_up(self) -> bool:
        return self.outcome is Outcome.BLOWUP


def _spectral_K_M(grid: GridSpec, uh, wh, sigma):
    """Kinetic term and mass from Fourier coefficients (both phase-blind)."""
    c = grid.cell_volume / grid.size
    au, aw = np.abs(uh) ** 2, np.abs(wh) ** 2
    K = c * float(np.sum(grid.k2 * (au + aw)))
    M = c * float(np.sum(au) + 3.0 * sigma * np.sum(aw))
    return K, M


Sink = Callable[[fn.DiagnosticSet], None]


def evolve(
    s0: SimState,
    cfg: StepperConfig,
    sink: Sink | None = None,
    snapshot: Callable[[SimState], None] | None = None,
    snapshot_stride: int | None = None,
) -> EvolveResult:
    """Integrate from ``s0.t`` to ``cfg.t_end`` with fixed ``cfg.dt``.

    ``sink`` receives a diagnostics row at the initial time, every
    ``output_stride`` steps and at the final time.  Halts with
    ``BlowupDetected`` as soon as the kinetic term exceeds the threshold or a
    non-finite value appears; the detection time is the time of the step on
    which that happened.
    """
    grid, p = s0.grid, s0.params
    dt = cfg.dt
    nsteps = max(0, int(math.ceil((cfg.t_end - s0.t) / dt - 1e-9)))
    dealias = cfg.use_dealias(grid.n)
    mask = grid.dealias_mask if dealias else None
    inv_sigma = 1.0 / p.sigma
    half_u, half_w = _linear_symbols(grid, p, 0.5 * dt)
    full_u, full_w = half_u * half_u, half_w * half_w

    uh, wh = fft(s0.u), fft(s0.w)
    K0, M0 = _spectral_K_M(grid, uh, wh, p.sigma)
    K_thr = cfg.blowup_K_threshold if cfg.blowup_K_threshold is not None else 1e6 * K0
    stride = int(cfg.output_stride)
    snap_stride = int(snapshot_stride) if snapshot_stride else None

    def emit(t, u, w):
        if sink is not None:
            sink(fn.diagnostics(grid, u, w, p, t=t, with_virial=cfg.with_virial))

    emit(s0.t, s0.u, s0.w)
    if snapshot is not None:
        snapshot(s0)

    drift = 0.0
    t = s0.t
    u, w = s0.u, s0.w
    # uh, wh hold the spectrum of the synchronized state; "open" marks that a
    # leading half step has been applied and not yet closed
    open_ = False
    outcome, t_detect, reason = Outcome.COMPLETED, None, ""
    done = 0
    # u = 0 is invariant (its forcing is conj(u)^2 w); skip its transforms then
    u_zero = not np.any(s0.u)
    zero = np.zeros(grid.shape, dtype=complex)
    for i in range(1, nsteps + 1):
        if open_:
            wh = full_w * wh
            if not u_zero:
                uh = full_u * uh
        else:
            wh = half_w * wh
            if not u_zero:
                uh = half_u * uh
            open_ = True
        w = ifft(wh)
        with np.errstate(over="ignore", invalid="ignore"):
            if u_zero:
                dw = _rk4_increment_w(w, dt, inv_sigma)
                wh = wh + mask * fft(dw) if dealias else fft(w + dw)
            else:
                u = ifft(uh)
                du, dw = _rk4_increment(u, w, dt, inv_sigma)
                if dealias:
                    uh, wh = uh + mask * fft(du), wh + mask * fft(dw)
                else:
                    uh, wh = fft(u + du), fft(w + dw)
            K, M = _spectral_K_M(grid, uh, wh, p.sigma)
        t = s0.t + i * dt
        done = i
        if not (math.isfinite(K) and math.isfinite(M)):
            outcome, t_detect, reason = Outcome.BLOWUP, t, "non-finite field values"
            break
        if K > K_thr:
            outcome, t_detect, reason = Outcome.BLOWUP, t, f"K={K:.6e} exceeded {K_thr:.6e}"
            break
        if M0 > 0:
            drift = max(drift, abs(M - M0) / M0)
            if cfg.mass_drift_bound is not None and drift > cfg.mass_drift_bound:
                raise MassDriftError(
                    f"relative mass drift {drift:.3e} exceeds bound {cfg.mass_drift_bound:.1e} at t={t}"
                )
        want_row = i % stride == 0 or i == nsteps
        want_snap = snapshot is not None and snap_stride and i % snap_stride == 0
        if want_row or want_snap:
            wh = half_w * wh
            if not u_zero:
                uh = half_u * uh
            open_ = False
            u = zero if u_zero else ifft(uh)
            w = ifft(wh)
            if want_row:
                emit(t, u, w)
            if want_snap:
                snapshot(s0.with_fields(t, u, w))

    if open_:
        wh = half_w * wh
        if not u_zero:
            uh = half_u * uh
    with np.errstate(all="ignore"):
        u = zero if u_zero else ifft(uh)
        w = ifft(wh)
    if outcome is Outcome.BLOWUP:
        log.info("blow-up detected at t=%.6g (%s)", t_detect, reason)
        final = SimState.__new__(SimState)
        object.__setattr__(final, "t", t)
        object.__setattr__(final, "u", u)
        object.__setattr__(final, "w", w)
        object.__setattr__(final, "params", p)
        object.__setattr__(final, "grid", grid)
        if sink is not None and math.isfinite(K):
            emit(t, u, w)
    else:
        final = s0.with_fields(t, u, w)
    return EvolveResult(final, outcome, t_detect, done, K0, K_thr, drift, reason)


# --- exact solutions and gauge -------------------------------------------


def gauge_transform(s: SimState, direction: str = "forward") -> SimState:
    """Multiply (u, w) by (e^{it}, e^{3it}) ("forward") or the conjugates ("inverse").

    Forward maps a solution of the system with linear terms to one of the
    system without them; valid only when mu = 3 sigma.
    """
    if not s.params.resonant:
        raise fn.ParameterError("gauge transform requires mu = 3 sigma")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    sgn = 1.0 if direction == "forward" else -1.0
    ph = np.exp(1j * sgn * s.t)
    return s.with_fields(s.t, ph * s.u, ph**3 * s.w)


def pseudoconformal_exact(
    grid: GridSpec, P, Q, t: float, p: fn.PhysParams | None = None, frame: str = "gauged"
) -> tuple[np.ndarray, np.ndarray]:
    """Explicit blow-up solution built from a resonant ground state (P, Q).

    With L = 1 - t the gauged-frame solution (no linear terms) is
    u = e^{-i|x|^2/(4L)} e^{it/L} P(x/L) / L and w the same with 3 in both
    phases.  ``frame="original"`` undoes the gauge, giving the solution of
    the system with linear terms that starts from the same data at t = 0.
    """
    if p is not None:
        if not (p.n == 2 and math.isclose(p.sigma, 3.0) and math.isclose(p.mu, 9.0)):
            raise fn.ParameterError("pseudoconformal solution needs n = 2, sigma = 3, mu = 9")
        if p.omega != 0:
            raise fn.ParameterError("pseudoconformal solution needs an omega = 0 ground state")
    if grid.n != 2:
        raise fn.ParameterError("pseudoconformal solution is two-dimensional")
    if not t < 1.0:
        raise ValueError(f"the solution exists only for t < 1, got t={t}")
    if frame not in ("gauged", "original"):
        raise ValueError(f"frame must be 'gauged' or 'original', got {frame!r}")
    same_grid(grid, P, Q)
    L = 1.0 - t
    Ps = dilate(grid, np.asarray(P, dtype=float), 1.0 / L) if np.any(P) else np.zeros(grid.shape)
    Qs = dilate(grid, np.asarray(Q, dtype=float), 1.0 / L)
    chirp = np.exp(-1j * grid.r2 / (4.0 * L))
    rot = np.exp(1j * t / L)
    u = chirp * rot * Ps / L
    w = chirp**3 * rot**3 * Qs / L
    if frame == "original":
        u = u * np.exp(-1j * t)
        w = w * np.exp(-3j * t)
    return u, w

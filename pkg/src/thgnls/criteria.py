"""Global-existence thresholds and blow-up catalogs as decision procedures.

Every decision returns a :class:`ThresholdReport`.  The criteria use
strict inequalities, so a quantity within ``EQ_RTOL`` (relative to the size
of the terms being compared) of its threshold is treated as an equality and
never decides anything on its own.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import functionals as fn
from .grid import GridSpec, warn_boundary
from .groundstate import GroundStatePair

EQ_RTOL = 1e-10


class Verdict(str, enum.Enum):
    GLOBAL = "Global"
    FORWARD = "BlowupForward"
    BACKWARD = "BlowupBackward"
    BOTH = "BlowupBoth"
    INDETERMINATE = "Indeterminate"


@dataclass
class ThresholdReport:
    id: str
    verdict: Verdict
    margin: float
    inputs: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"id": self.id, "verdict": self.verdict.value, "margin": self.margin, "inputs": self.inputs},
            sort_keys=True,
        )


def _sign(x: float, scale: float) -> int:
    """-1, 0 or +1, with |x| <= EQ_RTOL * scale counted as zero."""
    if abs(x) <= EQ_RTOL * max(scale, 1e-300):
        return 0
    return 1 if x > 0 else -1


# --- Gagliardo-Nirenberg --------------------------------------------------


def _require_resonant_gs(gs: GroundStatePair) -> None:
    q = gs.params
    if q.omega != 0 or not q.resonant:
        raise fn.ParameterError(
            f"need a ground state with omega = 0 and mu = 3 sigma (got omega={q.omega}, mu={q.mu}, sigma={q.sigma})"
        )


def gn_constant_forms(gs: GroundStatePair) -> tuple[float, float]:
    """The two closed forms of the sharp constant: via the action and via the mass."""
    _require_resonant_gs(gs)
    if not gs.converged:
        raise ValueError("ground state is not converged")
    n = gs.grid.n
    c_S = (4 - n) ** (n / 2 - 2) / (n ** (n / 2) * gs.action)
    c_M = (4 - n) ** (n / 2 - 1) / (n ** (n / 2) * gs.mass())
    return c_S, c_M


def gn_constant(gs: GroundStatePair, rtol: float = 1e-8) -> float:
    c_S, c_M = gn_constant_forms(gs)
    if abs(c_S - c_M) > rtol * abs(c_S):
        raise ArithmeticError(f"GN constant forms disagree: {c_S!r} (action) vs {c_M!r} (mass)")
    return c_S


def gn_ratio(grid: GridSpec, u, w, p: fn.PhysParams, C: float) -> float:
    """N / (C K^{n/2} M^{2-n/2}); the inequality says this never exceeds 1."""
    n = grid.n
    K = fn.kinetic(grid, u, w)
    M = fn.mass(grid, u, w, p)
    return fn.quartic_N(grid, u, w) / (C * K ** (n / 2) * M ** (2 - n / 2))


def random_smooth_pair(grid: GridSpec, rng: np.random.Generator, bumps: int = 3):
    """Sums of randomly placed Gaussians with random complex amplitudes, well inside the box."""
    L = grid.half_width
    fields = []
    for _ in range(2):
        f = grid.zeros()
        for _ in range(bumps):
            amp = complex(rng.normal(), rng.normal())
            width = rng.uniform(0.3, 1.5) * L / 8
            centre = rng.uniform(-0.3 * L, 0.3 * L, size=grid.n)
            d2 = sum((x - c) ** 2 for x, c in zip(grid.coords, centre))
            f = f + amp * np.exp(-d2 / (2 * width * width))
        fields.append(f)
    return fields[0], fields[1]


# --- n = 2 mass threshold -------------------------------------------------


def _check_data_params(gs: GroundStatePair, p: fn.PhysParams) -> None:
    q = gs.params
    if not (math.isclose(q.sigma, p.sigma) and math.isclose(q.mu, p.mu)):
        raise fn.ParameterError(
            f"ground state built for sigma={q.sigma}, mu={q.mu} but data params are sigma={p.sigma}, mu={p.mu}"
        )


def global_threshold_n2(grid: GridSpec, u0, w0, gs: GroundStatePair, p: fn.PhysParams) -> ThresholdReport:
    if grid.n != 2 or gs.grid.n != 2:
        raise fn.ParameterError("the mass threshold is a two-dimensional statement")
    _require_resonant_gs(gs)
    _check_data_params(gs, p)
    M0 = fn.mass(grid, u0, w0, p)
    Mgs = gs.mass()
    margin = Mgs - M0
    verdict = Verdict.GLOBAL if _sign(margin, Mgs) > 0 else Verdict.INDETERMINATE
    return ThresholdReport("T3.8", verdict, margin, {"M0": M0, "M_gs": Mgs})


# --- bootstrap lemma ------------------------------------------------------


@dataclass(frozen=True)
class Bootstrap:
    a: float
    b: float
    q: float
    gamma: float
    strict_gap: float

    @property
    def applicable(self) -> bool:
        return self.strict_gap > 0

    def f(self, r: float) -> float:
        return self.a - r + self.b * r**self.q

    def classify(self, G0: float) -> str:
        """'below' or 'above' gamma for all time, 'boundary', or 'inapplicable'."""
        if not self.applicable:
            return "inapplicable"
        if G0 < self.gamma:
            return "below"
        if G0 > self.gamma:
            return "above"
        return "boundary"

    def delta2(self, delta1: float) -> float | None:
        """Lower bound G(t) > (1 + delta2) gamma for data above gamma.

        Valid when a < (1 - delta1)(1 - 1/q) gamma; returns None otherwise.
        delta2 is the root of (1 + d) - (1 + d)^q / q = (1 - delta1)(1 - 1/q).
        """
        if not self.applicable or not 0 < delta1 < 1:
            return None
        if not self.a < (1 - delta1) * (1 - 1 / self.q) * self.gamma:
            return None
        return bootstrap_delta2(delta1, self.q)


def bootstrap_delta2(delta1: float, q: float) -> float:
    if not 0 < delta1 < 1 or not q > 1:
        raise ValueError("need 0 < delta1 < 1 and q > 1")
    target = (1 - delta1) * (1 - 1 / q)

    def h(d):
        return (1 + d) - (1 + d) ** q / q - target

    hi = 1.0
    while h(hi) > 0:
        hi *= 2.0
    return optimize.brentq(h, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def bootstrap_gamma(a: float, b: float, q: float) -> tuple[float, float]:
    """gamma = (b q)^(-1/(q-1)) and the gap (1 - 1/q) gamma - a (lemma needs gap > 0)."""
    bs = bootstrap(a, b, q)
    return bs.gamma, bs.strict_gap


def bootstrap(a: float, b: float, q: float) -> Bootstrap:
    if not b > 0:
        raise ValueError(f"b must be positive, got {b}")
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    gamma = (b * q) ** (-1.0 / (q - 1.0))
    return Bootstrap(a, b, q, gamma, (1.0 - 1.0 / q) * gamma - a)


# --- n = 3 dichotomy ------------------------------------------------------


def _weighted_ok(grid: GridSpec, u0, w0, p: fn.PhysParams) -> tuple[bool, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ok = warn_boundary(grid, u0, w0)
    V = float(fn.virial(grid, u0, w0, p, check_boundary=False).V) if ok else math.nan
    return ok and math.isfinite(V), V


def dichotomy_n3(grid: GridSpec, u0, w0, gs: GroundStatePair, p: fn.PhysParams) -> ThresholdReport:
    """Global below both product thresholds; two-sided blow-up above the kinetic one.

    The margin is K(P,Q)M(P,Q) - K0 M0; the energy margin is in ``inputs``.
    """
    if grid.n != 3 or gs.grid.n != 3:
        raise fn.ParameterError("the product dichotomy is a three-dimensional statement")
    _require_resonant_gs(gs)
    _check_data_params(gs, p)
    E0, M0, K0 = fn.energy(grid, u0, w0, p), fn.mass(grid, u0, w0, p), fn.kinetic(grid, u0, w0)
    Egs, Mgs, Kgs = gs.energy(), gs.mass(), gs.kinetic()
    m_energy = 0.5 * Egs * Mgs - E0 * M0
    m_kin = Kgs * Mgs - K0 * M0
    s_e = _sign(m_energy, abs(Egs * Mgs) + abs(E0 * M0))
    s_k = _sign(m_kin, Kgs * Mgs + K0 * M0)
    blow_regime = math.isclose(p.sigma, 3.0) and math.isclose(p.mu, 9.0)
    weighted, V = _weighted_ok(grid, u0, w0, p)
    inputs = {
        "E0": E0, "M0": M0, "K0": K0, "E_gs": Egs, "M_gs": Mgs, "K_gs": Kgs,
        "energy_margin": m_energy, "V0": V, "weighted": weighted, "blowup_regime": blow_regime,
    }
    if s_e > 0 and s_k > 0:
        verdict = Verdict.GLOBAL
    elif s_e > 0 and s_k < 0 and blow_regime and weighted:
        verdict = Verdict.BOTH
    else:
        verdict = Verdict.INDETERMINATE
    return ThresholdReport("T3.10/T4.6", verdict, m_kin, inputs)


# --- blow-up catalogs -----------------------------------------------------


def blowup_criteria(grid: GridSpec, u0, w0, p: fn.PhysParams) -> list[ThresholdReport]:
    """Reports for every satisfied item of the two blow-up catalogs.

    The first catalog needs sigma = 3; the second one additionally mu = 9.
    Margins are positive exactly when the item's hypothesis holds.
    """
    if not math.isclose(p.sigma, 3.0, rel_tol=1e-12):
        raise fn.ParameterError(f"blow-up catalogs need sigma = 3, got {p.sigma}")
    if grid.n not in (2, 3):
        raise fn.ParameterError(f"blow-up catalogs cover n = 2, 3, got n = {grid.n}")
    n = grid.n
    E = fn.energy(grid, u0, w0, p)
    M = fn.mass(grid, u0, w0, p)
    K = fn.kinetic(grid, u0, w0)
    Y = fn.momentum_integral(grid, u0, w0)
    weighted, V = _weighted_ok(grid, u0, w0, p)
    inputs = {"E": E, "M": M, "K": K, "momentum": Y, "V": V, "weighted": weighted}
    if not weighted:
        return [ThresholdReport("weighted-space", Verdict.INDETERMINATE, math.nan, inputs)]

    # scale of the energy terms, for deciding E = 0 or 2E = M
    L = float(fn.integrate(grid, np.abs(u0) ** 2 + p.mu * np.abs(w0) ** 2).real)
    e_scale = K + L + 4.0 * abs(fn.quartic_N(grid, u0, w0))
    y_scale = math.sqrt(max(V, 0.0) * max(K, 0.0)) + abs(Y)
    sY = _sign(Y, y_scale)

    out: list[ThresholdReport] = []

    def catalog(prefix: str, G: float, coef: float):
        # G plays the role of E (first catalog) or 2E - M (second); the
        # threshold for the momentum is sqrt(n G V) / coef
        sG = _sign(G, e_scale)
        if sG < 0:
            out.append(ThresholdReport(prefix + ".i", Verdict.BOTH, -G, dict(inputs)))
        elif sG == 0:
            if sY < 0:
                out.append(ThresholdReport(prefix + ".ii", Verdict.FORWARD, -Y, dict(inputs)))
            elif sY > 0:
                out.append(ThresholdReport(prefix + ".iii", Verdict.BACKWARD, Y, dict(inputs)))
        else:
            bound = math.sqrt(n * G * V) / coef
            lo, hi = -bound - Y, Y - bound
            if _sign(lo, y_scale + bound) > 0:
                out.append(ThresholdReport(prefix + ".iv", Verdict.FORWARD, lo, dict(inputs)))
            if _sign(hi, y_scale + bound) > 0:
                out.append(ThresholdReport(prefix + ".v", Verdict.BACKWARD, hi, dict(inputs)))

    catalog("T4.7", E, 1.0)
    if math.isclose(p.mu, 9.0, rel_tol=1e-12):
        catalog("T4.8", 2.0 * E - M, math.sqrt(2.0))
    return out

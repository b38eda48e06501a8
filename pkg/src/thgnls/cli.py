"""Command-line driver.

Usage: ``thgnls <command> --config run.json [--out DIR] [--verbose]``

Every run writes ``manifest.json`` (echoed config, library versions, wall
time, exit status) next to its command-specific outputs.  Exit codes:
0 success (a detected blow-up counts as success), 2 invalid configuration,
3 solver non-convergence, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import pydantic
import scipy
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import __version__
from . import criteria as cr
from . import evolution as ev
from . import functionals as fn
from . import groundstate as gsm
from . import spectra as sp
from .grid import GridError, GridSpec, make_grid, read_nlsf, write_nlsf

log = logging.getLogger("thgnls")

EXIT_OK, EXIT_VALIDATION, EXIT_CONVERGENCE, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("groundstate", "evolve", "spectrum", "criteria", "virial-check", "gn-constant")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ZeroInit(_Strict):
    kind: Literal["zero"]


class GaussianInit(_Strict):
    """u = a_u exp(-|x|^2 / (2 s_u^2)), w likewise."""

    kind: Literal["gaussian"]
    amplitudes: tuple[float, float] = (0.5, 1.0)
    widths: tuple[float, float] = (1.0, 1.0)

    @field_validator("widths")
    @classmethod
    def _positive(cls, v):
        if min(v) <= 0:
            raise ValueError("widths must be positive")
        return v


class ScalarInit(_Strict):
    """(0, Q) with Q the scalar ground state for the given kappa (default: from params)."""

    kind: Literal["scalar-groundstate"]
    kappa: Optional[float] = None
    scale: float = 1.0


class PseudoconformalInit(_Strict):
    kind: Literal["pseudoconformal"]


class FileInit(_Strict):
    kind: Literal["file"]
    path: str


InitSpec = Annotated[
    Union[ZeroInit, GaussianInit, ScalarInit, PseudoconformalInit, FileInit], Field(discriminator="kind")
]


class StepperModel(_Strict):
    dt: float = Field(gt=0)
    t_end: float
    dealias: Optional[bool] = None
    blowup_K_threshold: Optional[float] = Field(default=None, gt=0)
    output_stride: int = Field(default=1, ge=1)
    snapshot_stride: Optional[int] = Field(default=None, ge=1)
    with_virial: bool = True


class RunConfig(_Strict):
    command: Literal["groundstate", "evolve", "spectrum", "criteria", "virial-check", "gn-constant"]
    n: int = Field(ge=1, le=3)
    sigma: float = Field(gt=0)
    mu: float = Field(gt=0)
    omega: float = 0.0
    points: int
    half_width: float = Field(gt=0)
    tol: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=50_000, ge=1)
    stepper: Optional[StepperModel] = None
    init: Optional[InitSpec] = None
    output: Optional[str] = None
    seed: int = 0
    samples: int = Field(default=1000, ge=0)

    @field_validator("points")
    @classmethod
    def _power_of_two(cls, v):
        if v < 16 or v & (v - 1):
            raise ValueError("points must be a power of two >= 16")
        return v

    @model_validator(mode="after")
    def _command_fields(self):
        if self.command in ("evolve", "virial-check") and self.stepper is None:
            raise ValueError(f"command {self.command!r} requires a 'stepper' section")
        if self.command in ("evolve", "virial-check", "criteria") and self.init is None:
            raise ValueError(f"command {self.command!r} requires an 'init' section")
        if isinstance(self.init, FileInit) and not Path(self.init.path).is_file():
            raise ValueError(f"init file {self.init.path!r} does not exist")
        return self

    def params(self) -> fn.PhysParams:
        return fn.PhysParams(self.sigma, self.mu, self.omega, self.n)

    def grid(self) -> GridSpec:
        return make_grid(self.n, self.points, self.half_width)


class ConfigError(ValueError):
    pass


def parse_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return RunConfig.model_validate(raw)
    except pydantic.ValidationError as exc:
        parts = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "<root>"
            parts.append(f"{loc}: {err['msg']}")
        raise ConfigError("; ".join(parts)) from exc


# --- helpers --------------------------------------------------------------


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _resonant_ground_state(cfg: RunConfig, grid: GridSpec) -> gsm.GroundStatePair:
    p0 = fn.PhysParams(cfg.sigma, cfg.mu, 0.0, cfg.n)
    return gsm.solve_ground_state(p0, grid, tol=cfg.tol, max_iter=cfg.max_iter)


def initial_data(cfg: RunConfig, grid: GridSpec, p: fn.PhysParams):
    init = cfg.init
    if isinstance(init, ZeroInit):
        return grid.zeros(complex), grid.zeros(complex)
    if isinstance(init, GaussianInit):
        (au, aw), (su, sw) = init.amplitudes, init.widths
        return (au * np.exp(-grid.r2 / (2 * su * su)) + 0j, aw * np.exp(-grid.r2 / (2 * sw * sw)) + 0j)
    if isinstance(init, ScalarInit):
        kappa = p.kappa if init.kappa is None else init.kappa
        pk = fn.PhysParams(1.0, kappa, 0.0, grid.n)
        Q = gsm.scalar_ground_state_nd(pk, grid, tol=min(cfg.tol, 1e-10))
        return grid.zeros(complex), init.scale * Q + 0j
    if isinstance(init, PseudoconformalInit):
        gs = _resonant_ground_state(cfg, grid)
        return ev.pseudoconformal_exact(grid, gs.P, gs.Q, 0.0, p)
    if isinstance(init, FileInit):
        fgrid, comps = read_nlsf(init.path)
        if fgrid != grid:
            raise ConfigError(f"snapshot grid {fgrid.describe()} differs from config grid {grid.describe()}")
        if len(comps) != 2:
            raise ConfigError(f"snapshot has {len(comps)} components, expected 2")
        return comps[0], comps[1]
    raise ConfigError("no initial data given")


def _stepper(cfg: RunConfig) -> ev.StepperConfig:
    s = cfg.stepper
    return ev.StepperConfig(
        dt=s.dt,
        t_end=s.t_end,
        dealias=s.dealias,
        blowup_K_threshold=s.blowup_K_threshold,
        output_stride=s.output_stride,
        with_virial=s.with_virial,
    )


# --- workflows ------------------------------------------------------------


def _run_groundstate(cfg: RunConfig, out: Path) -> dict:
    p, grid = cfg.params(), cfg.grid()
    init = None
    if cfg.init is not None:
        u, w = initial_data(cfg, grid, p)
        init = (np.real(u), np.real(w))
    gs = gsm.solve_ground_state(p, grid, init=init, tol=cfg.tol, max_iter=cfg.max_iter)
    gs.save(out / "groundstate")
    return {"groundstate": gs.summary()}


def _run_evolve(cfg: RunConfig, out: Path, virial_check: bool = False) -> dict:
    p, grid = cfg.params(), cfg.grid()
    u0, w0 = initial_data(cfg, grid, p)
    stepper = _stepper(cfg)
    if virial_check and not stepper.with_virial:
        raise ConfigError("virial-check needs stepper.with_virial = true")
    snapdir = out / "snapshots"

    def snap(s: ev.SimState):
        snapdir.mkdir(exist_ok=True)
        write_nlsf(snapdir / f"t{s.t:.6f}.nlsf", grid, [s.u, s.w])

    with open(out / "diagnostics.csv", "w", newline="") as fh:
        sink = fn.CsvSink(fh)
        res = ev.evolve(
            ev.SimState(0.0, u0, w0, p, grid),
            stepper,
            sink,
            snapshot=snap if cfg.stepper.snapshot_stride else None,
            snapshot_stride=cfg.stepper.snapshot_stride,
        )
    if np.all(np.isfinite(res.final.u)) and np.all(np.isfinite(res.final.w)):
        write_nlsf(out / "final.nlsf", grid, [res.final.u, res.final.w])
    report = {
        "outcome": res.outcome.value,
        "detection_time": res.detection_time,
        "final_time": res.final.t,
        "steps": res.steps,
        "K0": res.K0,
        "K_threshold": res.K_threshold,
        "max_mass_drift": res.max_mass_drift,
        "reason": res.reason,
    }
    if virial_check:
        report["virial"] = virial_consistency(sink.rows, stepper.dt * stepper.output_stride)
    _dump_json(out / ("virial.json" if virial_check else "evolution.json"), report)
    return {"evolution": report}


def virial_consistency(rows: list[fn.DiagnosticSet], spacing: float) -> dict:
    """Compare the centred second difference of V with the reported V'' at interior rows."""
    ts = [r.t for r in rows]
    worst, samples = 0.0, 0
    for i in range(1, len(rows) - 1):
        if not (
            math.isclose(ts[i] - ts[i - 1], spacing, rel_tol=1e-6)
            and math.isclose(ts[i + 1] - ts[i], spacing, rel_tol=1e-6)
        ):
            continue
        fd = (rows[i + 1].V - 2 * rows[i].V + rows[i - 1].V) / spacing**2
        scale = max(abs(rows[i].Vpp), 1e-300)
        worst = max(worst, abs(fd - rows[i].Vpp) / scale)
        samples += 1
    return {"max_relative_mismatch": worst, "samples": samples}


def _run_spectrum(cfg: RunConfig, out: Path) -> dict:
    rep = sp.stability_report(cfg.params(), cfg.grid())
    _dump_json(out / "spectrum.json", rep.to_dict())
    return {"spectrum": rep.to_dict()}


def _run_criteria(cfg: RunConfig, out: Path) -> dict:
    p, grid = cfg.params(), cfg.grid()
    u0, w0 = initial_data(cfg, grid, p)
    reports: list[cr.ThresholdReport] = []
    if math.isclose(p.sigma, 3.0) and grid.n in (2, 3):
        reports.extend(cr.blowup_criteria(grid, u0, w0, p))
    if p.resonant and grid.n in (2, 3):
        gs = _resonant_ground_state(cfg, grid)
        if grid.n == 2:
            reports.append(cr.global_threshold_n2(grid, u0, w0, gs, p))
        else:
            reports.append(cr.dichotomy_n3(grid, u0, w0, gs, p))
    with open(out / "criteria.jsonl", "w") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")
    return {"criteria": [json.loads(r.to_json()) for r in reports]}


def _run_gn(cfg: RunConfig, out: Path) -> dict:
    p, grid = cfg.params(), cfg.grid()
    if not p.resonant or p.omega != 0:
        raise fn.ParameterError("gn-constant needs omega = 0 and mu = 3 sigma")
    gs = gsm.solve_ground_state(p, grid, tol=cfg.tol, max_iter=cfg.max_iter)
    c_S, c_M = cr.gn_constant_forms(gs)
    C = cr.gn_constant(gs)
    rng = np.random.default_rng(cfg.seed)
    worst, violations = -math.inf, 0
    for _ in range(cfg.samples):
        u, w = cr.random_smooth_pair(grid, rng)
        ratio = cr.gn_ratio(grid, u, w, p, C)
        worst = max(worst, ratio)
        violations += ratio > 1.0
    report = {
        "C_GN": C,
        "C_GN_action_form": c_S,
        "C_GN_mass_form": c_M,
        "ground_state_ratio": cr.gn_ratio(grid, gs.P, gs.Q, p, C),
        "samples": cfg.samples,
        "max_sample_ratio": worst if cfg.samples else None,
        "violations": int(violations),
    }
    _dump_json(out / "gn_constant.json", report)
    return {"gn_constant": report}


_WORKFLOWS = {
    "groundstate": _run_groundstate,
    "evolve": _run_evolve,
    "spectrum": _run_spectrum,
    "criteria": _run_criteria,
    "virial-check": lambda cfg, out: _run_evolve(cfg, out, virial_check=True),
    "gn-constant": _run_gn,
}


def _versions() -> dict:
    return {
        "thgnls": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def run(cfg: RunConfig, out: Path | None = None) -> int:
    out = Path(out if out is not None else (cfg.output or "out"))
    start = time.perf_counter()
    status, error, result = EXIT_OK, None, {}
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO
    try:
        result = _WORKFLOWS[cfg.command](cfg, out)
    except gsm.ConvergenceError as exc:
        status, error = EXIT_CONVERGENCE, f"non-convergence: {exc}"
        if exc.result is not None:
            _dump_json(out / "groundstate_failed.json", exc.result.summary())
    except (ConfigError, fn.ParameterError, fn.OutsideDomainError, GridError, ValueError) as exc:
        status, error = EXIT_VALIDATION, f"validation: {exc}"
    except OSError as exc:
        status, error = EXIT_IO, f"I/O: {exc}"
    if error:
        log.error(error)
    manifest = {
        "config": cfg.model_dump(mode="json"),
        "versions": _versions(),
        "wall_time_seconds": time.perf_counter() - start,
        "exit_status": status,
        "error": error,
        "outputs": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    }
    try:
        _dump_json(out / "manifest.json", manifest)
    except OSError as exc:
        log.error("cannot write manifest: %s", exc)
        return EXIT_IO
    if status == EXIT_OK:
        log.info("%s finished: %s", cfg.command, json.dumps(result, default=_json_default)[:500])
    return status


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="thgnls", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="output directory (overrides config 'output')")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_VALIDATION
    if cfg.command != args.command:
        log.error("config command %r does not match command line %r", cfg.command, args.command)
        return EXIT_VALIDATION
    return run(cfg, Path(args.out) if args.out else None)


if __name__ == "__main__":
    sys.exit(main())

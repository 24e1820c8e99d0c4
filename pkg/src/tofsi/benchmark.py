"""Half-resolution benchmark runs (moving and fixed mesh) and their cross-check.

A run takes about an hour on one core, so results are cached on disk.  The
cache key is a hash of the numerical source files plus the run settings;
editing any solver or optimizer module invalidates it.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides
from .coupling import FSIProblem
from .errors import TofsiError
from .grid import build_grid
from .materials import DensityFilter, robust_triplet
from .optimize import CsvLogger, IterationContext, continuation_state, run_optimization
from .snapshot import Snapshot, load_snapshot, save_snapshot

log = logging.getLogger(__name__)

HALF_RESOLUTION = {"geometry.h": "0.04"}
SNAPSHOT_EVERY = 10
# modules whose behaviour determines the optimization result
NUMERIC_MODULES = ("adjoint", "coupling", "elastic", "fem", "fluid", "grid", "linalg", "materials", "mma",
                   "optimize")


def benchmark_config(moving: bool, iterations: int = 100, overrides: dict | None = None) -> RunConfig:
    items = dict(HALF_RESOLUTION)
    items["toggles.mesh_deformation"] = "on" if moving else "off"
    items["optimizer.iterations"] = str(iterations)
    items.update(overrides or {})
    return apply_overrides(RunConfig(), items).validate()


def fingerprint(cfg: RunConfig) -> str:
    h = hashlib.sha256()
    src = Path(__file__).parent
    for name in NUMERIC_MODULES:
        h.update((src / f"{name}.py").read_bytes())
    h.update(repr(cfg).encode())
    return h.hexdigest()[:16]


def build(cfg: RunConfig, moving: bool | None = None) -> FSIProblem:
    grid = build_grid(cfg.geometry)
    moving = cfg.toggles.mesh_deformation if moving is None else moving
    return FSIProblem(grid, cfg.fluid_properties(), cfg.solid_properties(), cfg.interpolation_params(), moving)


@dataclass
class BenchmarkRun:
    moving: bool
    history: list            # rows of history.csv as dicts of floats
    design: Snapshot | None  # final design, None if the run failed
    compliance: float
    dm: float
    volume: float
    error: str = ""          # non-empty if the optimization aborted

    @property
    def ok(self) -> bool:
        return not self.error

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.history])


def aborted_snapshot(cfg: RunConfig, grid, exc: TofsiError, moving: bool) -> Snapshot | None:
    """The design being analysed when an optimization aborted, if the error carries it."""
    rho = getattr(exc, "rho", None)
    if rho is None:
        return None
    it = max(getattr(exc, "iteration", 1), 1)
    o = cfg.optimizer
    beta, p_E, p_U = continuation_state(it, cfg.interpolation.delta, cfg.projection.beta, o.stage_length,
                                        o.n_updates, o.p_step)
    pp = dataclasses.replace(cfg.projection, beta=beta)
    tri = robust_triplet(rho, pp, DensityFilter(grid, pp.radius))
    return Snapshot(cfg.geometry, rho, tri.full("n"), beta, p_E, p_U, moving, it, meta={"aborted": str(exc)})


def _read_history(path: Path) -> list:
    if not path.exists():
        return []
    with open(path) as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def run_benchmark(cache_dir, moving: bool, iterations: int = 100, overrides: dict | None = None,
                  reuse: bool = True) -> BenchmarkRun:
    """Run (or load from ``cache_dir``) one benchmark optimization."""
    cfg = benchmark_config(moving, iterations, overrides)
    key = fingerprint(cfg)
    out = Path(cache_dir) / f"{'moving' if moving else 'fixed'}_{key}"
    meta_path = out / "run.json"
    if reuse and meta_path.exists():
        meta = json.loads(meta_path.read_text())
        design = load_snapshot(out / "design.npz") if (out / "design.npz").exists() else None
        log.info("reusing benchmark run in %s", out)
        return BenchmarkRun(moving, _read_history(out / "history.csv"), design, meta["compliance"], meta["dm"],
                            meta["volume"], meta["error"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(repr(cfg))
    problem = build(cfg)
    error, design = "", None
    compliance = dm = volume = float("nan")

    def snapshot_cb(ctx: IterationContext):
        if ctx.iteration % SNAPSHOT_EVERY == 0:
            snap = Snapshot(cfg.geometry, ctx.rho, ctx.design.full("n"), ctx.record.beta, ctx.p_E, ctx.p_U, moving,
                            ctx.iteration)
            save_snapshot(out / "snapshots" / f"iter_{ctx.iteration:04d}.npz", snap, problem.grid)

    try:
        res = run_optimization(problem, cfg.optimizer, cfg.projection, cfg.solver,
                               callbacks=[CsvLogger(out / "history.csv"), snapshot_cb])
    except TofsiError as exc:
        error = f"{type(exc).__name__} at iteration {getattr(exc, 'iteration', '?')}: {exc}"
        snap = aborted_snapshot(cfg, problem.grid, exc, moving)
        if snap is not None:
            save_snapshot(out / "aborted.npz", snap, problem.grid)
    else:
        compliance, dm, volume = res.compliance, res.dm, res.volume
        design = Snapshot(cfg.geometry, res.rho, res.design.full("n"), res.beta, res.p_E, res.p_U, moving,
                          len(res.history), u=res.state.u, d=res.state.d, w=res.state.w,
                          meta={"compliance": compliance, "dm": dm, "volume": volume})
        save_snapshot(out / "design.npz", design, problem.grid)
    meta_path.write_text(json.dumps({"compliance": compliance, "dm": dm, "volume": volume, "error": error,
                                     "fingerprint": key}, indent=1))
    return BenchmarkRun(moving, _read_history(out / "history.csv"), design, compliance, dm, volume, error)


def analyze_design(cfg: RunConfig, snap: Snapshot, moving: bool) -> float:
    """Nominal compliance of a stored design under one analysis mode."""
    problem = build(cfg, moving)
    problem.interp = dataclasses.replace(problem.interp, p_E=snap.p_E, p_U=snap.p_U)
    state = problem.staggered_solve(snap.rho_bar, cfg.solver)
    return float(problem.structure.compliance(state.u, snap.rho_bar)[0])


def cross_check(designs: dict, cfg: RunConfig | None = None) -> dict:
    """{name: {True: f_moving_analysis, False: f_fixed_analysis}} for each stored design."""
    cfg = cfg or benchmark_config(True)
    return {name: {m: analyze_design(cfg, snap, m) for m in (True, False)} for name, snap in designs.items()}

"""Robust min-max compliance optimization with continuation.

Per iteration: continuation parameters, the dilated/nominal/eroded
realizations, one staggered analysis plus adjoint each, the volume
constraint on the dilated design, and one MMA step.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .adjoint import compliance_sensitivity, pull_back
from .coupling import CoupledState, CouplerConfig, FSIProblem
from .errors import ConfigError, DegenerateDesignError, TofsiError
from .materials import (DensityFilter, DesignField, ProjectionParams, discreteness_measure, initial_design,
                        robust_triplet)
from .mma import MmaSettings, MmaState, minmax_update

log = logging.getLogger(__name__)

REALIZATIONS = ("d", "n", "e")


@dataclass
class OptimizerConfig:
    volume_fraction: float = 0.1
    iterations: int = 100
    stage_length: int = 20       # iterations per continuation stage
    n_updates: int = 4           # continuation updates (beta 4 -> 64)
    p_step: float = 0.5
    rescale_every: int = 2
    move: float = 0.1
    offset: float = 1.0

    def validate(self) -> None:
        if not 0 <= self.volume_fraction <= 1:
            raise ConfigError("optimizer.volume_fraction must lie in [0, 1]")
        if self.iterations < 1 or self.stage_length < 1 or self.rescale_every < 1:
            raise ConfigError("optimizer iteration counts must be >= 1")
        if self.n_updates < 0 or self.p_step < 0:
            raise ConfigError("optimizer.n_updates and optimizer.p_step must be >= 0")
        self.mma_settings().validate()

    def mma_settings(self) -> MmaSettings:
        return MmaSettings(move=self.move, offset=self.offset)


def continuation_state(iteration: int, delta: float = 1.0, beta0: float = 4.0, stage_length: int = 20,
                       n_updates: int = 4, p_step: float = 0.5):
    """(beta, p_E, p_U) for a 1-based iteration: beta doubles and the exponents step every stage."""
    if iteration < 1:
        raise ValueError("iterations are 1-based")
    stage = min((iteration - 1) // stage_length, n_updates)
    return beta0 * 2.0**stage, 1.0 + p_step * stage, 1.0 + p_step * stage / delta


def volume_fractions(design: DesignField, areas) -> dict:
    V0 = areas.sum()
    return {k: float(areas @ v) / V0 for k, v in design.projected.items()}


def volume_constraint(design: DesignField, areas, filt: DensityFilter, target: float, key: str = "d"):
    """g = sum V_i rho_bar_i / V0 - target and dg/drho (raw design variables)."""
    V0 = areas.sum()
    g = (areas @ design.projected[key]) / V0 - target
    g = g if np.iscomplexobj(g) else float(g)   # complex inputs stay complex for complex-step checks
    return g, pull_back(areas / V0, design.dprojected[key], filt)


def rescale_dilated_target(iteration: int, current: float, v_nominal_target: float, vol_dilated: float,
                           vol_nominal: float, every: int = 2) -> float:
    """Dilated volume target tracking the nominal target, refreshed every ``every`` iterations."""
    if iteration % every != 0:
        return current
    if not vol_nominal > 0:
        raise DegenerateDesignError("nominal volume is zero; cannot rescale the dilated target")
    return v_nominal_target * vol_dilated / vol_nominal


@dataclass
class IterationRecord:
    iteration: int
    f_d: float
    f_n: float
    f_e: float
    dm: float
    vol_nominal: float
    vol_dilated: float
    dilated_target: float
    beta: float
    p_E: float
    p_U: float
    max_change: float
    staggered_iterations: int
    min_jacobian: float     # over all staggered iterations of this design update
    disconnected: int       # elements held only by E_min, worst realization
    wall_time: float

    @classmethod
    def header(cls) -> list:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [repr(float(v)) if isinstance(v, float) else v for v in asdict(self).values()]


@dataclass
class OptimizationHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(IterationRecord.header())
            for r in self.records:
                wr.writerow(r.row())


@dataclass
class OptimizationResult:
    rho: np.ndarray
    design: DesignField
    history: OptimizationHistory
    compliance: float          # nominal compliance of the final design
    dm: float
    volume: float
    state: CoupledState
    beta: float
    p_E: float
    p_U: float


@dataclass
class IterationContext:
    """What a per-iteration callback sees (for logging and snapshots)."""

    iteration: int
    rho: np.ndarray
    design: DesignField
    record: IterationRecord
    states: dict
    p_E: float
    p_U: float


class CsvLogger:
    """Streams history rows to a CSV file as they are produced."""

    def __init__(self, path):
        self.path = path
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(IterationRecord.header())

    def __call__(self, ctx: IterationContext):
        with open(self.path, "a", newline="") as fh:
            csv.writer(fh).writerow(ctx.record.row())


def analyze_realizations(problem: FSIProblem, design: DesignField, cfg: CouplerConfig, warm: dict,
                         keys=REALIZATIONS, gradients: bool = True):
    """Staggered solve (and adjoint) for each realization; returns (f, dfdrho_bar_design, states)."""
    out_f, out_g, states = {}, {}, {}
    de = problem.grid.design_elements
    for key in keys:
        rho_bar = design.full(key)
        state = problem.staggered_solve(rho_bar, cfg, warm_start=warm.get(key))
        states[key] = state
        if gradients:
            f, dfdrb, _ = compliance_sensitivity(problem, state, rho_bar)
            out_g[key] = dfdrb[de]
        else:
            f = float(problem.structure.compliance(state.u, rho_bar)[0])
        out_f[key] = f
    return out_f, out_g, states


def run_optimization(problem: FSIProblem, opt: OptimizerConfig = None, proj: ProjectionParams = None,
                     solver: CouplerConfig = None, rho0=None,
                     callbacks: list[Callable[[IterationContext], None]] = ()) -> OptimizationResult:
    """Robust min-max compliance minimization under a dilated-volume constraint.

    ``problem.interp`` supplies the base interpolation (its p_E and p_U are
    overwritten by the continuation schedule).  On an analysis failure the
    exception is re-raised with ``rho`` and ``history`` attached.
    """
    opt = opt or OptimizerConfig()
    proj = proj or ProjectionParams()
    solver = solver or CouplerConfig()
    opt.validate()
    if not opt.volume_fraction > 0:
        raise ConfigError("optimizer.volume_fraction must be positive for optimization")
    grid = problem.grid
    filt = DensityFilter(grid, proj.radius)
    areas = grid.areas[grid.design_elements]
    base = problem.interp
    rho = initial_design(grid, opt.volume_fraction) if rho0 is None else np.array(rho0, dtype=float)
    mma_state = MmaState()
    settings = opt.mma_settings()
    history = OptimizationHistory()
    target = opt.volume_fraction
    warm = {}

    def schedule(it):
        return continuation_state(it, base.delta, proj.beta, opt.stage_length, opt.n_updates, opt.p_step)

    it = 0
    try:
        for it in range(1, opt.iterations + 1):
            t0 = time.perf_counter()
            beta, p_E, p_U = schedule(it)
            problem.interp = replace(base, p_E=p_E, p_U=p_U)
            pp = replace(proj, beta=beta)
            design = robust_triplet(rho, pp, filt)
            f, dfdrb, states = analyze_realizations(problem, design, solver, warm)
            warm = states
            vols = volume_fractions(design, areas)
            target = rescale_dilated_target(it, target, opt.volume_fraction, vols["d"], vols["n"],
                                            opt.rescale_every)
            g, dg = volume_constraint(design, areas, filt, target)
            grads = np.vstack([pull_back(dfdrb[k], design.dprojected[k], filt) for k in REALIZATIONS])
            # the constraint is scaled by the target; the feasible set is unchanged
            rho_new = minmax_update(mma_state, rho, [f[k] for k in REALIZATIONS], grads,
                                    [g / target], dg[None, :] / target, settings)
            change = float(np.max(np.abs(rho_new - rho)))
            record = IterationRecord(
                it, f["d"], f["n"], f["e"], discreteness_measure(design.nominal), vols["n"], vols["d"], target,
                beta, p_E, p_U, change, sum(s.outer_iterations for s in states.values()),
                min((s.min_jacobian for s in states.values() if s.trace), default=float("nan")),
                max(s.disconnected.size for s in states.values()), time.perf_counter() - t0)
            history.records.append(record)
            log.info("it %3d  f=(%.5f %.5f %.5f)  DM=%.2f%%  V=%.4f  Vd*=%.4f  beta=%g  dx=%.3f  stag=%d  %.1fs",
                     it, f["d"], f["n"], f["e"], record.dm, vols["n"], target, beta, change,
                     record.staggered_iterations, record.wall_time)
            ctx = IterationContext(it, rho, design, record, states, p_E, p_U)
            for cb in callbacks:
                cb(ctx)
            rho = rho_new

        beta, p_E, p_U = schedule(max(opt.iterations, 1))
        problem.interp = replace(base, p_E=p_E, p_U=p_U)
        design = robust_triplet(rho, replace(proj, beta=beta), filt)
        rho_bar = design.full("n")
        state = problem.staggered_solve(rho_bar, solver, warm_start=warm.get("n"))
        fn = float(problem.structure.compliance(state.u, rho_bar)[0])
    except TofsiError as exc:
        exc.rho, exc.history, exc.iteration = rho, history, it
        raise
    finally:
        problem.interp = base
    vol = volume_fractions(design, areas)["n"]
    return OptimizationResult(rho, design, history, fn, discreteness_measure(design.nominal), vol, state,
                              beta, p_E, p_U)

"""``tofsi`` command-line driver.

Exit codes: 0 success, 1 other/I-O error, 2 configuration error,
3 convergence failure, 4 mesh inversion.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .adjoint import sample_design_elements, verify_complex_step
from .benchmark import aborted_snapshot
from .config import RunConfig, apply_overrides, parse_config, write_config
from .coupling import CoupledState, FSIProblem, TraceRecord
from .errors import ConfigError, TofsiError
from .grid import StructuredGrid, build_grid
from .materials import DensityFilter, discreteness_measure, expand, initial_design, robust_triplet
from .optimize import CsvLogger, IterationContext, continuation_state, run_optimization
from .snapshot import Snapshot, load_snapshot, save_snapshot
from .vtk import pressure_on_q2, write_vtk

log = logging.getLogger("tofsi")


# ----------------------------------------------------------------- helpers
def load_run_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if getattr(args, "mesh_deformation", None) is not None:
        overrides["toggles.mesh_deformation"] = args.mesh_deformation
    if args.out is not None:
        overrides["output.dir"] = args.out
    return apply_overrides(cfg, overrides).validate()


def build_problem(cfg: RunConfig, grid: StructuredGrid | None = None, moving: bool | None = None) -> FSIProblem:
    grid = grid or build_grid(cfg.geometry)
    moving = cfg.toggles.mesh_deformation if moving is None else moving
    return FSIProblem(grid, cfg.fluid_properties(), cfg.solid_properties(), cfg.interpolation_params(), moving)


def initial_snapshot(cfg: RunConfig, grid: StructuredGrid) -> Snapshot:
    """The uniform starting design, projected at the initial sharpness."""
    rho = initial_design(grid, cfg.optimizer.volume_fraction)
    tri = robust_triplet(rho, cfg.projection, DensityFilter(grid, cfg.projection.radius))
    return Snapshot(cfg.geometry, rho, tri.full("n"), cfg.projection.beta, 1.0, 1.0,
                    cfg.toggles.mesh_deformation, meta={"source": "initial design"})


def prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.resolved.txt")
    return out


def evaluate(problem: FSIProblem, snap: Snapshot, cfg: RunConfig):
    """Staggered analysis of a stored design with its own penalization exponents."""
    base = problem.interp
    problem.interp = dataclasses.replace(base, p_E=snap.p_E, p_U=snap.p_U)
    try:
        state = problem.staggered_solve(snap.rho_bar, cfg.solver)
        f = float(problem.structure.compliance(state.u, snap.rho_bar)[0])
    finally:
        problem.interp = base
    return f, state


def export_fields(out: Path, stem: str, problem: FSIProblem, snap: Snapshot, state: CoupledState) -> list[Path]:
    grid = problem.grid
    fl = problem.fluid
    point = {
        "velocity": fl.velocity(state.w).ravel(),
        "pressure": pressure_on_q2(grid, fl.pressure(state.w)),
        "u": state.u,
        "d": state.d,
    }
    cells = {"rho_bar": snap.rho_bar, "rho": expand(grid, snap.rho)}
    paths = [write_vtk(out / f"{stem}_reference.vtk", grid, None, point, cells, f"{stem} reference")]
    if problem.moving:
        X = problem.coordinates(state.d, state.u, check=False)
        paths.append(write_vtk(out / f"{stem}_deformed.vtk", grid, X, point, cells, f"{stem} deformed"))
    return paths


def _state_snapshot(snap: Snapshot, state: CoupledState, moving: bool) -> Snapshot:
    return dataclasses.replace(snap, u=state.u, d=state.d, w=state.w, mesh_deformation=moving)


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(rows)


def _load_designs(args, cfg, grid):
    if not args.design:
        return [("initial", initial_snapshot(cfg, grid))]
    designs, seen = [], {}
    for p in args.design:
        snap = load_snapshot(p)
        if snap.geometry != cfg.geometry:
            log.info("using the geometry stored in %s", p)
        stem = Path(p).stem
        seen[stem] = seen.get(stem, 0) + 1
        # names key the output files, so repeated stems get a suffix
        designs.append((stem if seen[stem] == 1 else f"{stem}_{seen[stem]}", snap))
    return designs


# ---------------------------------------------------------------- commands
def cmd_analyze(args) -> int:
    cfg = load_run_config(args)
    out = prepare_out(cfg)
    grid = build_grid(cfg.geometry)
    designs = _load_designs(args, cfg, grid)
    modes = (True, False) if args.cross_check else (cfg.toggles.mesh_deformation,)
    rows, table = [], []
    for name, snap in designs:
        g = snap.grid() if snap.geometry != cfg.geometry else grid
        results = {}
        for moving in modes:
            problem = build_problem(cfg, g, moving)
            f, state = evaluate(problem, snap, cfg)
            results[moving] = f
            tag = f"{name}_{'moving' if moving else 'fixed'}"
            rows.append([name, "on" if moving else "off", repr(f), state.outer_iterations,
                         repr(state.norms["fluid"]), repr(state.norms["structure"]), repr(state.norms["mesh"]),
                         repr(float(np.abs(state.u).max())), repr(discreteness_measure(snap.rho_bar[g.design_elements]))])
            _write_rows(out / f"{tag}_trace.csv", [f.name for f in dataclasses.fields(TraceRecord)],
                        [dataclasses.astuple(t) for t in state.trace])
            save_snapshot(out / f"{tag}_state.npz", _state_snapshot(snap, state, moving), g)
            if cfg.output.vtk:
                export_fields(out, tag, problem, snap, state)
            print(f"{tag}: compliance {f:.6f}  outer iterations {state.outer_iterations}")
        table.append((name, results))
    _write_rows(out / "analysis.csv", ["design", "mesh_deformation", "compliance", "outer_iterations",
                                       "fluid_residual", "structure_residual", "mesh_residual",
                                       "max_displacement", "dm"], rows)
    if args.cross_check:
        _write_rows(out / "cross_check.csv", ["design", "moving_mesh_analysis", "fixed_mesh_analysis"],
                    [[n, repr(r[True]), repr(r[False])] for n, r in table])
        print(format_cross_check(table))
    return 0


def format_cross_check(table) -> str:
    lines = [f"{'Design':<24} {'Moving-mesh analysis':>22} {'Fixed-mesh analysis':>22}"]
    for name, r in table:
        lines.append(f"{name:<24} {r[True]:>22.6f} {r[False]:>22.6f}")
    return "\n".join(lines)


def cmd_optimize(args) -> int:
    cfg = load_run_config(args)
    out = prepare_out(cfg)
    problem = build_problem(cfg)
    grid = problem.grid
    moving = problem.moving
    every = cfg.output.snapshot_every

    def snapshot_cb(ctx: IterationContext):
        if every and ctx.iteration % every == 0:
            snap = Snapshot(cfg.geometry, ctx.rho, ctx.design.full("n"), ctx.record.beta, ctx.p_E, ctx.p_U,
                            moving, ctx.iteration)
            save_snapshot(out / "snapshots" / f"iter_{ctx.iteration:04d}.npz", snap, grid)

    try:
        res = run_optimization(problem, cfg.optimizer, cfg.projection, cfg.solver,
                               callbacks=[CsvLogger(out / "history.csv"), snapshot_cb])
    except TofsiError as exc:
        snap = aborted_snapshot(cfg, grid, exc, moving)
        if snap is not None:
            save_snapshot(out / "aborted.npz", snap, grid)
        raise
    snap = Snapshot(cfg.geometry, res.rho, res.design.full("n"), res.beta, res.p_E, res.p_U, moving,
                    len(res.history), meta={"compliance": res.compliance, "dm": res.dm, "volume": res.volume})
    save_snapshot(out / "design.npz", _state_snapshot(snap, res.state, moving), grid)
    if cfg.output.vtk:
        export_fields(out, "design", problem, snap, res.state)
    print(f"final nominal compliance {res.compliance:.6f}  DM {res.dm:.3f}%  volume {res.volume:.5f}")
    return 0


def cmd_verify(args) -> int:
    cfg = load_run_config(args)
    if args.elements is not None:
        cfg = apply_overrides(cfg, {"verify.elements": args.elements})
    if args.step is not None:
        cfg = apply_overrides(cfg, {"verify.step": args.step})
    cfg.validate()
    out = prepare_out(cfg)
    problem = build_problem(cfg)
    grid = problem.grid
    elements = list(cfg.verify.elements) or sample_design_elements(grid)
    bad = sorted(set(elements) - set(grid.design_elements.tolist()))
    if bad:
        raise ConfigError(f"verify.elements: {bad} are not design elements")
    rho = initial_design(grid, cfg.optimizer.volume_fraction)
    if args.design:
        rho = load_snapshot(args.design[0]).rho
    filt = DensityFilter(grid, cfg.projection.radius)
    report = verify_complex_step(problem, rho, elements, cfg.verify.step, cfg.projection, filt, cfg.solver)
    report.write_csv(out / "verification.csv")
    print(f"objective (nominal compliance) {report.objective:.12e}")
    print(report.format_table())
    print(f"max |normalized error| {report.max_error():.3e}")
    return 0


def cmd_export(args) -> int:
    cfg = load_run_config(args)
    out = prepare_out(cfg)
    if not args.design:
        raise ConfigError("export needs --design <snapshot.npz>")
    for p in args.design:
        snap = load_snapshot(p)
        grid = snap.grid()
        problem = build_problem(cfg, grid, snap.mesh_deformation)
        if snap.has_state:
            state = CoupledState(snap.u, snap.d, snap.w)
        else:
            _, state = evaluate(problem, snap, cfg)
        for path in export_fields(out, Path(p).stem, problem, snap, state):
            print(path)
    return 0


# -------------------------------------------------------------------- main
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tofsi", description="Topology optimization of fluid-structure interaction")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file (defaults if omitted)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        p.add_argument("--mesh-deformation", choices=("on", "off"))
        p.add_argument("--design", action="append", help="design/state snapshot (.npz); may repeat")
        return p

    a = common(sub.add_parser("analyze", help="staggered analysis of a design"))
    a.add_argument("--cross-check", action="store_true",
                   help="evaluate every design with and without mesh deformation")
    a.set_defaults(func=cmd_analyze)
    common(sub.add_parser("optimize", help="robust topology optimization")).set_defaults(func=cmd_optimize)
    v = common(sub.add_parser("verify", help="adjoint vs complex-step check"))
    v.add_argument("--elements", help="comma separated element ids")
    v.add_argument("--step", help="imaginary step (default 1e-10)")
    v.set_defaults(func=cmd_verify)
    common(sub.add_parser("export", help="VTK export of a snapshot")).set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TofsiError as exc:
        print(f"tofsi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"tofsi: I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

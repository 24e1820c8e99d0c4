"""Three-field fluid-structure system and its partitioned (staggered) solution.

Residual blocks, all evaluated on nodal vectors over the whole grid::

    S(rho, u, d, w) = K(rho) u - f_s(rho, X0 + d, w)     structure
    D(u, d)         = K_m d  with d = u tied on solid nodes  fluid mesh
    F(rho, d, w)    = Brinkman-Navier-Stokes on X0 + d       fluid flow

With the mesh frozen (``moving=False``) the fluid and the coupling forces
always use the reference coordinates and D reduces to d = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CouplingError, GeometryError, SolverError
from .elastic import MeshProblem, SolidProperties, StructureProblem, disconnected_material
from .fluid import FluidProblem, FluidProperties
from .fem import min_jacobian
from .grid import StructuredGrid, check_admissible, deformed_coordinates
from .linalg import Factorization
from .materials import InterpolationParams

log = logging.getLogger(__name__)


@dataclass
class CouplerConfig:
    tol: float = 1e-8
    max_outer: int = 100
    newton_tol: float = 1e-11    # relative to the fluid residual scale
    newton_max_iter: int = 50
    relaxation: float = 1.0      # under-relaxation of structural updates
    rescue_steps: int = 2        # retries with halved relaxation after divergence or inversion

    def validate(self):
        from .errors import ConfigError

        if not self.tol > 0 or not self.newton_tol > 0:
            raise ConfigError("solver tolerances must be positive")
        if not 0 < self.relaxation <= 1:
            raise ConfigError("relaxation must lie in (0, 1]")
        if self.max_outer < 1 or self.newton_max_iter < 1:
            raise ConfigError("iteration limits must be >= 1")
        if self.rescue_steps < 0:
            raise ConfigError("rescue_steps must be >= 0")


@dataclass
class TraceRecord:
    outer: int
    fluid: float
    structure: float
    mesh: float
    newton_iterations: int
    min_jacobian: float   # smallest det(J) at the quadrature points of the fluid mesh


@dataclass
class CoupledState:
    u: np.ndarray
    d: np.ndarray
    w: np.ndarray
    norms: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    refs: dict = field(default_factory=dict)
    disconnected: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def outer_iterations(self) -> int:
        return len(self.trace)

    @property
    def min_jacobian(self) -> float:
        """Smallest det(J) seen over all outer iterations (nan if none ran)."""
        return min((t.min_jacobian for t in self.trace), default=float("nan"))

    def copy(self) -> "CoupledState":
        return CoupledState(self.u.copy(), self.d.copy(), self.w.copy(), dict(self.norms),
                            list(self.trace), dict(self.refs), self.disconnected.copy())


class FSIProblem:
    """Bundles the three field problems on one grid."""

    def __init__(self, grid: StructuredGrid, fluid: FluidProperties = None, solid: SolidProperties = None,
                 interp: InterpolationParams = None, moving: bool = True):
        self.grid = grid
        self.fluid_props = fluid or FluidProperties()
        self.solid_props = solid or SolidProperties()
        self.moving = moving
        interp = interp or InterpolationParams()
        self.fluid = FluidProblem(grid, self.fluid_props, interp)
        self.structure = StructureProblem(grid, self.solid_props, interp, self.fluid_props.mu)
        self.mesh = MeshProblem(grid, self.solid_props, moving)
        self.interp = interp

    @property
    def interp(self) -> InterpolationParams:
        return self._interp

    @interp.setter
    def interp(self, value: InterpolationParams):
        self._interp = value
        self.fluid.interp = value
        self.structure.interp = value

    @property
    def sizes(self):
        return self.structure.ndof, self.mesh.ndof, self.fluid.ndof

    def zero_state(self, dtype=float) -> CoupledState:
        nu, nd, _ = self.sizes
        return CoupledState(np.zeros(nu, dtype), np.zeros(nd, dtype), self.fluid.initial_state(dtype))

    def coordinates(self, d, u=None, check: bool = True):
        """Fluid-mesh node positions for mesh displacement ``d``."""
        if not self.moving:
            return self.grid.nodes
        if u is None:
            X = self.grid.nodes + np.asarray(d).reshape(-1, 2)
            if check:
                check_admissible(self.grid, X)
            return X
        return deformed_coordinates(self.grid, u, d, check=check)

    # ------------------------------------------------------------ residuals
    def residuals(self, u, d, w, rho_bar, K=None):
        """The three residual vectors (S, D, F)."""
        X = self.coordinates(d, check=False)
        if K is None:
            K = self.structure.stiffness(rho_bar)
        f = self.structure.fluid_force(w, X, rho_bar, self.fluid.edofs)
        RS = self.structure.residual(u, K, f)
        RD = self.mesh.residual(u, d)
        RF = self.fluid.residual(w, X, rho_bar)
        return RS, RD, RF

    def residual_norms(self, state: CoupledState, rho_bar, refs=None, K=None):
        """Per-field residual norms divided by the reference scales ``refs``."""
        refs = refs or state.refs or self.reference_scales(rho_bar)
        RS, RD, RF = self.residuals(state.u, state.d, state.w, rho_bar, K)
        return {
            "fluid": float(np.linalg.norm(np.real(RF))) / refs["fluid"],
            "structure": float(np.linalg.norm(np.real(RS))) / refs["structure"],
            "mesh": float(np.linalg.norm(np.real(RD))) / refs["mesh"],
        }

    def reference_scales(self, rho_bar, force=None, u=None):
        rf = self.fluid.reference_norm(self.grid.nodes, rho_bar)
        rs = float(np.linalg.norm(np.real(force))) if force is not None else 0.0
        rd = float(np.linalg.norm(np.real(u))) if u is not None else 0.0
        return {"fluid": rf or 1.0, "structure": rs or 1.0, "mesh": rd or 1.0}

    # ------------------------------------------------------------- staggered
    def staggered_solve(self, rho_bar, cfg: CouplerConfig = None, warm_start: CoupledState = None) -> CoupledState:
        """Fluid -> coupling forces -> structure -> mesh, repeated to tolerance.

        ``rho_bar`` is the projected density over all elements (real or complex).
        For complex input the imaginary parts are additionally converged by
        increments (relative change of Im u and Im w below ``tol``).

        If the iteration diverges or inverts the mesh it is restarted from the
        same initial state with the relaxation halved, up to ``rescue_steps``
        times.  The fixed point does not depend on the relaxation.
        """
        cfg = cfg or CouplerConfig()
        floating = disconnected_material(self.grid, rho_bar)
        if floating.size:
            log.warning("disconnected material: %d element(s) held only by E_min, e.g. %s", floating.size,
                        floating[:10].tolist())
        for attempt in range(cfg.rescue_steps + 1):
            try:
                state = self._staggered(rho_bar, cfg, warm_start)
                state.disconnected = floating
                return state
            except (CouplingError, GeometryError) as exc:
                if attempt == cfg.rescue_steps:
                    if floating.size:
                        exc.args = (f"{exc.args[0]}; disconnected material at element(s) {floating[:10].tolist()}",
                                    *exc.args[1:])
                    raise
                omega = cfg.relaxation / 2
                log.warning("staggered solve failed (%s); retrying with under-relaxation omega=%g", exc, omega)
                cfg = replace(cfg, relaxation=omega)

    def _staggered(self, rho_bar, cfg: CouplerConfig, warm_start: CoupledState | None) -> CoupledState:
        fluid, structure, mesh = self.fluid, self.structure, self.mesh
        cplx = np.iscomplexobj(rho_bar)
        dtype = complex if cplx else float
        if warm_start is not None:
            state = CoupledState(warm_start.u.astype(dtype), warm_start.d.astype(dtype), warm_start.w.astype(dtype))
            for arr, n in zip((state.u, state.d, state.w), self.sizes):
                if arr.shape != (n,):
                    raise ValueError("warm start state does not match the problem dimensions")
            state.w[fluid.fixed] = fluid.g[fluid.fixed]
        else:
            state = self.zero_state(dtype)
        K = structure.stiffness(rho_bar)
        K_factor = Factorization(K)
        refs = self.reference_scales(np.real(rho_bar))
        atol = min(cfg.newton_tol, 0.01 * cfg.tol) * refs["fluid"]

        if warm_start is not None and not cplx:
            F0 = structure.fluid_force(state.w, self.coordinates(state.d), rho_bar, fluid.edofs)
            refs = self.reference_scales(np.real(rho_bar), F0, state.u)
            norms = self.residual_norms(state, rho_bar, refs, K)
            if max(norms.values()) <= cfg.tol:
                state.norms, state.refs = norms, refs
                return state

        frozen = warm_start is not None and not cplx
        omega = cfg.relaxation
        if omega < 1:
            log.info("staggered solve: under-relaxation omega=%g engaged", omega)
        for k in range(1, cfg.max_outer + 1):
            X = self.coordinates(state.d, state.u)
            try:
                w, hist = fluid.solve_newton(state.w, X, rho_bar, tol=cfg.newton_tol, atol=atol,
                                             max_iter=cfg.newton_max_iter, min_iter=1 if cplx else 0)
            except SolverError as exc:
                raise CouplingError(f"fluid Newton failed in outer iteration {k}: {exc}",
                                    state.trace) from exc
            f = structure.fluid_force(w, X, rho_bar, fluid.edofs)
            u_new = structure.solve(K_factor, f)
            if not frozen:
                refs = self.reference_scales(np.real(rho_bar), f, u_new)
                frozen = True
            u = state.u + omega * (u_new - state.u) if omega < 1 else u_new
            d = mesh.solve(u)
            du_im = np.linalg.norm((u - state.u).imag) if cplx else 0.0
            dw_im = np.linalg.norm((w - state.w).imag) if cplx else 0.0
            state.u, state.d, state.w = u, d, w
            X = self.coordinates(d, u)  # raises GeometryError on inversion
            norms = self.residual_norms(state, rho_bar, refs, K)
            jmin = float(min_jacobian(self.grid.element_coords(X)).min())
            state.trace.append(TraceRecord(k, norms["fluid"], norms["structure"], norms["mesh"], len(hist) - 1,
                                           jmin))
            log.debug("outer %d: F=%.3e S=%.3e D=%.3e newton=%d", k, norms["fluid"], norms["structure"],
                      norms["mesh"], len(hist) - 1)
            if not all(np.isfinite(v) for v in norms.values()):
                raise CouplingError(f"non-finite residual in outer iteration {k}", state.trace)
            done = max(norms.values()) <= cfg.tol
            if cplx:
                im_u = np.linalg.norm(u.imag)
                im_w = np.linalg.norm(w.imag)
                done = done and k >= 2 and du_im <= cfg.tol * im_u and dw_im <= cfg.tol * im_w
            if done:
                state.norms, state.refs = norms, refs
                return state
        raise CouplingError(f"staggered solve did not converge in {cfg.max_outer} outer iterations "
                            f"(last residuals {state.trace[-1] if state.trace else None})", state.trace)

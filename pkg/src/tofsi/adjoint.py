"""Discrete adjoint of the coupled system and the complex-step check.

Shape derivatives (dependence of the fluid residual and of the coupling
forces on nodal coordinates) are computed per element by complex step on
the coordinates, which is exact to round-off for these analytic kernels.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coupling import CoupledState, CouplerConfig, FSIProblem
from .errors import SolverError, TofsiError
from .fem import ElementGeometry
from .fluid import element_residual, force_operator
from .linalg import Factorization, SparsePattern, apply_dirichlet_rows
from .materials import (DensityFilter, ProjectionParams, brinkman_alpha, expand, force_filter,
                        robust_triplet)

log = logging.getLogger(__name__)

CS_STEP = 1e-30
BLOCKS = ("S", "D", "F")
FIELDS = ("u", "d", "w")


@dataclass
class CoupledJacobian:
    """Block sparse dR/dr; absent blocks are structurally zero."""

    blocks: dict
    sizes: tuple

    def matrix(self) -> sp.csr_matrix:
        grid = [[self.blocks.get((r, c)) for c in FIELDS] for r in BLOCKS]
        for i, r in enumerate(BLOCKS):
            for j, c in enumerate(FIELDS):
                if grid[i][j] is None and i == j:
                    grid[i][j] = sp.csr_matrix((self.sizes[i], self.sizes[j]))
        return sp.bmat(grid, format="csc")


@dataclass
class AdjointVector:
    S: np.ndarray
    D: np.ndarray
    F: np.ndarray
    residual: float = 0.0

    @property
    def full(self):
        return np.concatenate([self.S, self.D, self.F])


@dataclass
class SensitivityField:
    """df/drho over the design variables plus per-element intermediates."""

    drho: np.ndarray
    drho_bar: np.ndarray = None           # w.r.t. projected density, all elements
    value: float = 0.0


def _shape_derivative(kernel, Xe, h=CS_STEP):
    """d kernel(Xe) / d Xe by complex step, shape (E, n_out, 18)."""
    Xc = Xe.astype(complex)
    cols = []
    for a in range(9):
        for i in range(2):
            Xc[:, a, i] += 1j * h
            cols.append(kernel(Xc).imag / h)
            Xc[:, a, i] -= 1j * h
    return np.stack(cols, axis=-1)


def _coord_dofs(conn):
    return (2 * conn[:, :, None] + np.arange(2)).reshape(len(conn), 18)


def assemble_coupled_jacobian(problem: FSIProblem, state: CoupledState, rho_bar,
                              check_tol: float | None = None) -> CoupledJacobian:
    """All nonzero blocks of dR/dr at ``state``.

    If ``check_tol`` is given the state must satisfy it (relative residuals).
    """
    if check_tol is not None:
        norms = problem.residual_norms(state, rho_bar)
        if max(norms.values()) > check_tol:
            raise TofsiError(f"coupled Jacobian requested at a non-converged state: {norms}")
    grid = problem.grid
    fl, st, me = problem.fluid, problem.structure, problem.mesh
    nu, nd, nw = problem.sizes
    u, d, w = state.u, state.d, state.w
    X = problem.coordinates(d, check=False)
    Xe = grid.element_coords(X)
    blocks = {}

    # structure
    K = st.stiffness(rho_bar)
    blocks["S", "u"] = K
    free_s = (~st.fixed).astype(float)
    Xs = Xe[st.elements]
    U, _ = force_filter(rho_bar[st.elements], problem.interp)
    B = force_operator(Xs, problem.fluid_props.mu)
    pat_sw = SparsePattern(st.edofs, fl.edofs[st.elements], (nu, nw))
    blocks["S", "w"] = sp.diags(free_s) @ pat_sw.assemble(-U[:, None, None] * B)

    # mesh
    if problem.moving:
        blocks["D", "u"] = -sp.diags(me.tied.astype(float))
    blocks["D", "d"] = apply_dirichlet_rows(me.K, me.prescribed)

    # fluid
    _, JF = fl.assemble(w, X, rho_bar)
    blocks["F", "w"] = JF

    if problem.moving:
        ws = w[fl.edofs[st.elements]]
        mu = problem.fluid_props.mu
        dfs = _shape_derivative(lambda Xc: U[:, None] * np.einsum("eak,ek->ea", force_operator(Xc, mu), ws), Xs)
        pat_sd = SparsePattern(st.edofs, _coord_dofs(grid.conn[st.elements]), (nu, nd))
        blocks["S", "d"] = sp.diags(free_s) @ pat_sd.assemble(-dfs)

        alpha, _ = brinkman_alpha(rho_bar, problem.interp)
        we = w[fl.edofs]
        dRF = _shape_derivative(lambda Xc: element_residual(Xc, we, alpha, problem.fluid_props, False)[0], Xe)
        pat_fd = SparsePattern(fl.edofs, _coord_dofs(grid.conn), (nw, nd))
        blocks["F", "d"] = sp.diags((~fl.fixed).astype(float)) @ pat_fd.assemble(dRF)
    return CoupledJacobian({k: sp.csr_matrix(v) for k, v in blocks.items()}, (nu, nd, nw))


def solve_adjoint(J: CoupledJacobian, rhs, rtol: float = 1e-8, refine: int = 2) -> AdjointVector:
    """Solve (dR/dr)^T lambda = df/dr by a direct factorization.

    Up to ``refine`` steps of iterative refinement are taken; the penalized
    fluid rows make the system poorly scaled.
    """
    A = J.matrix()
    AT = A.T.tocsr()
    rhs = np.asarray(rhs)
    lu = Factorization(A)
    lam = lu.solve(rhs, trans="T")
    scale = np.linalg.norm(rhs) or 1.0
    rel = np.linalg.norm(AT @ lam - rhs) / scale
    for _ in range(refine):
        if rel <= 1e-3 * rtol:
            break
        lam = lam + lu.solve(rhs - AT @ lam, trans="T")
        rel = np.linalg.norm(AT @ lam - rhs) / scale
    if rel > rtol:
        raise SolverError(f"adjoint solve residual {rel:.3e} exceeds {rtol:.1e}")
    nu, nd, _ = J.sizes
    return AdjointVector(lam[:nu], lam[nu:nu + nd], lam[nu + nd:], rel)


def explicit_residual_sensitivity(problem: FSIProblem, state: CoupledState, rho_bar, lam: AdjointVector):
    """lambda^T dR/drho_bar per element (all elements)."""
    grid = problem.grid
    fl, st = problem.fluid, problem.structure
    X = problem.coordinates(state.d, check=False)
    Xe = grid.element_coords(X)
    out = np.zeros(grid.n_elements)

    # structure: E'(rho) k0 u - Upsilon'(rho) B w, on free rows only
    lam_s = np.where(st.fixed, 0.0, lam.S)
    ue = state.u[st.edofs]
    _, dE = st.modulus(rho_bar)
    _, dU = force_filter(rho_bar[st.elements], problem.interp)
    B = force_operator(Xe[st.elements], problem.fluid_props.mu)
    ls = lam_s[st.edofs]
    term = dE * np.einsum("ea,eab,eb->e", ls, st.k0, ue)
    term -= dU * np.einsum("ea,eak,ek->e", ls, B, state.w[fl.edofs[st.elements]])
    out[st.elements] += term

    # fluid: alpha'(rho) int v . phi on non-Dirichlet rows
    lam_f = np.where(fl.fixed, 0.0, lam.F)
    _, dalpha = brinkman_alpha(rho_bar, problem.interp)
    geo = ElementGeometry(Xe)
    V = state.w[fl.edofs][:, :18].reshape(-1, 9, 2)
    v = np.einsum("qn,eni->eqi", geo.quad.N, V)
    mv = np.einsum("eq,qa,eqi->eai", geo.wdet, geo.quad.N, v).reshape(-1, 18)
    out += dalpha * np.einsum("ea,ea->e", lam_f[fl.edofs][:, :18], mv)
    return out


def compliance_sensitivity(problem: FSIProblem, state: CoupledState, rho_bar):
    """Compliance and its total derivative w.r.t. the projected density (all elements)."""
    f, dfdu, dfdrho = problem.structure.compliance(state.u, rho_bar)
    J = assemble_coupled_jacobian(problem, state, rho_bar)
    nu, nd, nw = problem.sizes
    rhs = np.concatenate([dfdu, np.zeros(nd), np.zeros(nw)])
    lam = solve_adjoint(J, rhs)
    return float(f), dfdrho - explicit_residual_sensitivity(problem, state, rho_bar, lam), lam


def pull_back(dfdrho_bar_design, dprojected, filt: DensityFilter):
    """Chain rule through projection and the filter transpose to raw densities."""
    return filt.transpose(dprojected * dfdrho_bar_design)


def total_sensitivity(problem: FSIProblem, state: CoupledState, rho, pp: ProjectionParams,
                      filt: DensityFilter, key: str = "n") -> SensitivityField:
    """df/drho for the compliance of realization ``key`` ('d', 'n' or 'e')."""
    tri = robust_triplet(rho, pp, filt)
    rho_bar = tri.full(key)
    f, dfdrb, _ = compliance_sensitivity(problem, state, rho_bar)
    design = problem.grid.design_elements
    drho = pull_back(dfdrb[design], tri.dprojected[key], filt)
    per_element = np.zeros_like(dfdrb)
    per_element[design] = dfdrb[design]      # passive elements carry no sensitivity
    return SensitivityField(drho, per_element, f)


# --------------------------------------------------------------------------
# complex-step verification


@dataclass
class VerificationRow:
    element: int
    step: float
    imag_part: float
    approx: float
    analytic: float
    error: float
    status: str = "ok"


@dataclass
class VerificationReport:
    rows: list = field(default_factory=list)
    objective: float = 0.0

    def max_error(self) -> float:
        errs = [abs(r.error) for r in self.rows if r.status == "ok"]
        return max(errs) if errs else float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["element", "imaginary_step", "objective_imaginary_part",
                         "analytical_sensitivity", "complex_step_sensitivity", "normalized_error", "status"])
            for r in self.rows:
                wr.writerow([r.element, f"{r.step:+.0e}", f"{r.imag_part:+.12e}", f"{r.analytic:+.12e}",
                             f"{r.approx:+.12e}", f"{r.error:+.4e}", r.status])

    def format_table(self) -> str:
        lines = [f"{'Element':>8} {'Step':>7} {'Im f':>20} {'Analytical':>20} {'Norm. error':>12}"]
        for r in self.rows:
            lines.append(f"{r.element:>8d} {r.step:>+7.0e} {r.imag_part:>+20.12e} {r.analytic:>+20.12e} "
                         f"{r.error:>+12.4e}" + ("" if r.status == "ok" else f"  [{r.status}]"))
        return "\n".join(lines)


def sample_design_elements(grid, rows: int = 2, cols: int = 4):
    """Design elements nearest to a rows x cols lattice over the design box."""
    geom = grid.geometry
    c = grid.centroids[grid.design_elements]
    picks = []
    for j in range(rows):
        for i in range(cols):
            p = np.array([geom.design_x0 + (i + 0.5) / cols * geom.design_width,
                          (j + 0.5) / rows * geom.design_height])
            picks.append(int(grid.design_elements[np.argmin(np.linalg.norm(c - p, axis=1))]))
    return picks


def complex_step_objective(problem, rho, pp, filt, cfg, warm, key="n"):
    tri = robust_triplet(rho, pp, filt)
    rho_bar = expand(problem.grid, tri.projected[key])
    state = problem.staggered_solve(rho_bar, cfg, warm_start=warm)
    f, _, _ = problem.structure.compliance(state.u, rho_bar)
    return f


def verify_complex_step(problem: FSIProblem, rho, elements, h, pp: ProjectionParams, filt: DensityFilter,
                        cfg: CouplerConfig = None, key: str = "n", state: CoupledState = None,
                        sensitivity: SensitivityField = None) -> VerificationReport:
    """Compare adjoint sensitivities with Im f(rho + i h e_k) / h for each element.

    ``elements`` are global element ids (must be design elements); ``h`` may be
    a scalar or one step per element.  Non-convergence under perturbation is
    reported per element.
    """
    cfg = cfg or CouplerConfig()
    grid = problem.grid
    pos = {int(e): k for k, e in enumerate(grid.design_elements)}
    steps = np.broadcast_to(np.asarray(h, dtype=float), (len(elements),))
    if np.any(steps == 0):
        raise ValueError("complex step must be nonzero")
    if state is None:
        rho_bar = expand(grid, robust_triplet(rho, pp, filt).projected[key])
        state = problem.staggered_solve(rho_bar, cfg)
    if sensitivity is None:
        sensitivity = total_sensitivity(problem, state, rho, pp, filt, key)
    report = VerificationReport(objective=sensitivity.value)
    for e, hk in zip(elements, steps):
        if int(e) not in pos:
            raise ValueError(f"element {e} is not a design element")
        k = pos[int(e)]
        analytic = float(sensitivity.drho[k])
        rc = rho.astype(complex)
        rc[k] += 1j * hk
        try:
            f = complex_step_objective(problem, rc, pp, filt, cfg, state, key)
        except TofsiError as exc:
            log.warning("complex-step solve failed for element %d: %s", e, exc)
            report.rows.append(VerificationRow(int(e), hk, np.nan, np.nan, analytic, np.nan, f"failed: {exc}"))
            continue
        approx = f.imag / hk
        err = (approx - analytic) / analytic if analytic != 0 else approx - analytic
        report.rows.append(VerificationRow(int(e), float(hk), float(f.imag), float(approx), analytic, float(err)))
    return report

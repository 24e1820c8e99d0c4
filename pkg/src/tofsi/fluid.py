"""Brinkman-penalized steady Navier-Stokes with Q2Q1 (Taylor-Hood) elements.

Weak form per element, on the current (deformed) coordinates::

    R_v = int  rho_f (v.grad)v . phi + mu grad v : grad phi - p div phi + alpha v . phi
    R_p = int -q div v

The viscous term uses the gradient (Laplacian) form, whose natural outflow
condition ``mu dv/dn - p n = 0`` is satisfied by plane Poiseuille flow.
Dirichlet data are imposed node-wise by identity rows, residual ``w - g``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError, SolverError
from .fem import ElementGeometry, Quadrature
from .grid import StructuredGrid
from .linalg import Factorization, SparsePattern, apply_dirichlet_rows, scatter_add
from .materials import InterpolationParams, brinkman_alpha

log = logging.getLogger(__name__)


@dataclass
class FluidProperties:
    rho_f: float = 1.0   # kg/m^3
    mu: float = 1.0      # Pa s
    v_max: float = 1.0   # peak inlet velocity, m/s

    def validate(self) -> None:
        if not (self.rho_f > 0 and self.mu > 0 and self.v_max >= 0):
            raise ConfigError("fluid properties must be positive (v_max >= 0)")


def element_residual(Xe, we, alpha, props: FluidProperties, jacobian: bool = True):
    """Element residuals (E, 22) and, optionally, Jacobians (E, 22, 22).

    Local dofs: interleaved velocities of the 9 Q2 nodes, then 4 pressures.
    """
    geo = ElementGeometry(Xe)
    N, M = geo.quad.N, geo.quad.M
    E = Xe.shape[0]
    V = we[:, :18].reshape(E, 9, 2)
    P = we[:, 18:]
    wd = geo.wdet
    v = np.einsum("qn,eni->eqi", N, V)
    G = np.einsum("eni,eqnj->eqij", V, geo.dNdx)
    p = np.einsum("qb,eb->eq", M, P)
    conv = np.einsum("eqj,eqij->eqi", v, G)
    a = np.asarray(alpha)[:, None, None]
    body = props.rho_f * conv + a * v
    Rv = (np.einsum("eq,eqi,qa->eai", wd, body, N)
          + props.mu * np.einsum("eq,eqij,eqaj->eai", wd, G, geo.dNdx)
          - np.einsum("eq,eqai->eai", wd * p, geo.dNdx))
    Rp = -np.einsum("eq,qb,eqii->eb", wd, M, G)
    R = np.concatenate([Rv.reshape(E, 18), Rp], axis=1)
    if not jacobian:
        return R, None

    vgradN = np.einsum("eqj,eqcj->eqc", v, geo.dNdx)
    S = (props.rho_f * np.einsum("eq,qa,eqc->eac", wd, N, vgradN)
         + props.mu * np.einsum("eq,eqaj,eqcj->eac", wd, geo.dNdx, geo.dNdx)
         + np.asarray(alpha)[:, None, None] * np.einsum("q,eq,qa,qc->eac", np.ones(len(N)), wd, N, N))
    Kvv = props.rho_f * np.einsum("eq,qa,qc,eqik->eaick", wd, N, N, G, optimize=True)
    eye = np.eye(2)
    Kvv = Kvv + S[:, :, None, :, None] * eye[None, None, :, None, :]
    Kvp = -np.einsum("eq,qb,eqai->eaib", wd, M, geo.dNdx)
    K = np.zeros((E, 22, 22), dtype=R.dtype)
    K[:, :18, :18] = Kvv.reshape(E, 18, 18)
    K[:, :18, 18:] = Kvp.reshape(E, 18, 4)
    K[:, 18:, :18] = Kvp.reshape(E, 18, 4).transpose(0, 2, 1)
    return R, K


def stress_divergence(Xe, we, mu):
    """div(sigma_f) = -grad p + mu div(grad v + grad v^T) at the quadrature points.

    Evaluated elementwise from Q2 second derivatives and Q1 pressure gradients.
    Returns (E, q, 2).
    """
    D = stress_divergence_operator(ElementGeometry(Xe, hessian=True), mu)
    return np.einsum("eqik,ek->eqi", D, we)


def stress_divergence_operator(geo: ElementGeometry, mu):
    """Linear map from the 22 local fluid dofs to div(sigma_f): (E, q, 2, 22)."""
    H = geo.d2Ndx2  # (E, q, 9, 2, 2)
    E, nq = H.shape[:2]
    lap = H[..., 0, 0] + H[..., 1, 1]
    Dv = np.zeros((E, nq, 2, 9, 2), dtype=H.dtype)
    for i in range(2):
        for k in range(2):
            Dv[:, :, i, :, k] = mu * (lap * (i == k) + H[..., k, i])
    Dp = -geo.dMdx.transpose(0, 1, 3, 2)  # (E, q, 2, 4)
    return np.concatenate([Dv.reshape(E, nq, 2, 18), Dp], axis=-1)


def force_operator(Xe, mu):
    """Element matrices B (E, 18, 22) with f_e = B_e w_e = int N^T div(sigma_f)."""
    geo = ElementGeometry(Xe, hessian=True)
    D = stress_divergence_operator(geo, mu)
    B = np.einsum("eq,qa,eqik->eaik", geo.wdet, geo.quad.N, D)
    return B.reshape(Xe.shape[0], 18, 22)


def fluid_stress(geo: ElementGeometry, we, mu):
    """Cauchy stress -p I + mu (grad v + grad v^T) at the rule's points, (E, q, 2, 2)."""
    E = we.shape[0]
    V = we[:, :18].reshape(E, 9, 2)
    G = np.einsum("eni,eqnj->eqij", V, geo.dNdx)
    p = np.einsum("qb,eb->eq", geo.quad.M, we[:, 18:])
    return -p[..., None, None] * np.eye(2) + mu * (G + np.swapaxes(G, -1, -2))


# counter-clockwise edges as (fixed axis, fixed value, direction of travel)
_EDGES = ((1, -1.0, 1.0), (0, 1.0, 1.0), (1, 1.0, -1.0), (0, -1.0, -1.0))


def boundary_traction(Xe, we, mu, n_gauss: int = 4):
    """Closed boundary integral of sigma . n over each element, (E, 2)."""
    s, w = np.polynomial.legendre.leggauss(n_gauss)
    total = 0.0
    for axis, value, sign in _EDGES:
        pts = np.empty((n_gauss, 2))
        pts[:, axis] = value
        pts[:, 1 - axis] = sign * s
        geo = ElementGeometry(Xe, Quadrature.at(pts, w))
        tangent = sign * geo.J[..., :, 1 - axis]        # dx/ds along the direction of travel
        normal_ds = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)
        sigma = fluid_stress(geo, we, mu)
        total = total + np.einsum("q,eqij,eqj->ei", w, sigma, normal_ds)
    return total


def volume_force(Xe, we, mu):
    """Volume integral of div(sigma) over each element, (E, 2): the summed nodal forces."""
    fe = np.einsum("eak,ek->ea", force_operator(Xe, mu), we).reshape(-1, 9, 2)
    return fe.sum(axis=1)


class FluidProblem:
    """Dof bookkeeping, boundary data and global assembly for the fluid field."""

    def __init__(self, grid: StructuredGrid, props: FluidProperties, interp: InterpolationParams):
        self.grid = grid
        self.props = props
        self.interp = interp
        N = grid.n_nodes
        self.n_vel = 2 * N
        self.ndof = 2 * N + grid.n_pnodes
        vdofs = (2 * grid.conn[:, :, None] + np.arange(2)).reshape(-1, 18)
        self.edofs = np.concatenate([vdofs, self.n_vel + grid.pconn], axis=1)
        self.pattern = SparsePattern(self.edofs, self.edofs, (self.ndof, self.ndof))

        bs = grid.boundary_sets
        fixed = np.zeros(self.ndof, dtype=bool)
        g = np.zeros(self.ndof)
        for name in ("inlet", "walls"):
            fixed[2 * bs[name]] = fixed[2 * bs[name] + 1] = True
        H = grid.y_lines[-1] - grid.y_lines[0]
        y = grid.nodes[bs["inlet"], 1] - grid.y_lines[0]
        g[2 * bs["inlet"]] = 4 * props.v_max * y * (H - y) / H**2
        fixed[self.n_vel + grid.outlet_pnodes] = True
        self.fixed = fixed
        self.g = g

    # ----------------------------------------------------------------- state
    def initial_state(self, dtype=float):
        w = np.zeros(self.ndof, dtype=dtype)
        w[self.fixed] = self.g[self.fixed]
        return w

    def velocity(self, w):
        return w[: self.n_vel].reshape(-1, 2)

    def pressure(self, w):
        return w[self.n_vel:]

    def alpha(self, rho_bar):
        return brinkman_alpha(rho_bar, self.interp)

    # -------------------------------------------------------------- assembly
    def assemble(self, w, X, rho_bar, jacobian: bool = True):
        """Global residual and Jacobian d/dw (Dirichlet rows replaced)."""
        Xe = self.grid.element_coords(X)
        alpha, _ = self.alpha(rho_bar)
        Re, Ke = element_residual(Xe, w[self.edofs], alpha, self.props, jacobian)
        R = scatter_add(self.edofs, Re, self.ndof)
        R[self.fixed] = w[self.fixed] - self.g[self.fixed]
        if not jacobian:
            return R, None
        return R, apply_dirichlet_rows(self.pattern.assemble(Ke), self.fixed)

    def residual(self, w, X, rho_bar):
        return self.assemble(w, X, rho_bar, jacobian=False)[0]

    def reference_norm(self, X, rho_bar) -> float:
        """Residual norm of the all-zero state: the problem's residual scale."""
        r = self.residual(np.zeros(self.ndof), X, np.real(rho_bar))
        return float(np.linalg.norm(r))

    # ---------------------------------------------------------------- newton
    def solve_newton(self, w0, X, rho_bar, tol=1e-10, atol=0.0, max_iter=50, min_iter=0):
        """Undamped Newton-Raphson.  Returns (w, residual history).

        Converged when ||r|| <= max(tol * ||r_0||, atol); for complex states the
        real and imaginary parts are tested separately, the imaginary part
        against its own initial size and against ``atol`` scaled by
        ||Im w|| / ||Re w|| (the imaginary part's round-off floor).
        """
        w = np.array(w0, dtype=np.result_type(w0, X, rho_bar), copy=True)
        w[self.fixed] = self.g[self.fixed]
        history = []
        r0 = None
        for it in range(max_iter + 1):
            R, J = self.assemble(w, X, rho_bar)
            parts = _norm_parts(R)
            history.append(parts[0] if len(parts) == 1 else float(np.hypot(*parts)))
            if not np.all(np.isfinite(parts)):
                raise DivergenceError("Newton residual is not finite", history)
            if r0 is None:
                r0 = parts
            done = parts[0] <= max(tol * r0[0], atol)
            if len(parts) == 2:
                scale = np.linalg.norm(w.imag) / max(np.linalg.norm(w.real), 1e-300)
                done = done and parts[1] <= max(tol * r0[1], atol * scale)
            if done and it >= min_iter:
                return w, history
            if it == max_iter:
                break
            w = w - Factorization(J).solve(R)
        raise SolverError(f"Newton did not converge in {max_iter} iterations", history)


def _norm_parts(r):
    if np.iscomplexobj(r):
        return [float(np.linalg.norm(r.real)), float(np.linalg.norm(r.imag))]
    return [float(np.linalg.norm(r))]

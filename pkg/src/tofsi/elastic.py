"""Plane-strain Q2 elasticity: the structure and the pseudo-elastic fluid mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError
from .fem import ElementGeometry
from .fluid import force_operator
from .grid import StructuredGrid
from .linalg import Factorization, SparsePattern, apply_dirichlet_rows, scatter_add
from .materials import InterpolationParams, force_filter, simp_modulus


@dataclass
class SolidProperties:
    nu: float = 0.3
    E_mesh: float = 1.0
    nu_mesh: float = 0.3

    def validate(self) -> None:
        for name in ("nu", "nu_mesh"):
            if not -1 < getattr(self, name) < 0.5:
                raise ConfigError(f"physics.{name} must lie in (-1, 0.5) for plane strain")
        if not self.E_mesh > 0:
            raise ConfigError("mesh pseudo-modulus must be positive")


def plane_strain_matrix(E, nu):
    c = E / ((1 + nu) * (1 - 2 * nu))
    return c * np.array([[1 - nu, nu, 0], [nu, 1 - nu, 0], [0, 0, (1 - 2 * nu) / 2]])


def strain_operator(geo: ElementGeometry):
    """B (E, q, 3, 18) mapping interleaved nodal displacements to (exx, eyy, gxy)."""
    dN = geo.dNdx
    E, nq = dN.shape[:2]
    B = np.zeros((E, nq, 3, 9, 2), dtype=dN.dtype)
    B[:, :, 0, :, 0] = dN[..., 0]
    B[:, :, 1, :, 1] = dN[..., 1]
    B[:, :, 2, :, 0] = dN[..., 1]
    B[:, :, 2, :, 1] = dN[..., 0]
    return B.reshape(E, nq, 3, 18)


def element_stiffness(Xe, nu, E=1.0):
    """Element stiffness matrices (E, 18, 18) for modulus ``E`` (scalar or per element)."""
    geo = ElementGeometry(Xe)
    B = strain_operator(geo)
    C = plane_strain_matrix(1.0, nu)
    k = np.einsum("eq,eqsa,st,eqtb->eab", geo.wdet, B, C, B, optimize=True)
    return np.asarray(E)[..., None, None] * k if np.ndim(E) else E * k


def element_stress(Xe, ue, nu, E=1.0):
    """Stress (sxx, syy, sxy) at the quadrature points, (E, q, 3)."""
    B = strain_operator(ElementGeometry(Xe))
    eps = np.einsum("eqsa,ea->eqs", B, ue)
    return np.einsum("st,eqt->eqs", plane_strain_matrix(1.0, nu), eps) * np.reshape(E, (-1, 1, 1))


def _node_dofs(nodes):
    return np.concatenate([2 * nodes, 2 * nodes + 1])


class StructureProblem:
    """Linear elasticity on the solid computational domain (design + solid non-design).

    Unknowns live on all Q2 nodes (interleaved, 2 per node); nodes outside the
    solid domain and the ground nodes are held at zero by identity rows.
    """

    def __init__(self, grid: StructuredGrid, solid: SolidProperties, interp: InterpolationParams, mu: float):
        self.grid = grid
        self.solid = solid
        self.interp = interp
        self.mu = mu
        self.ndof = 2 * grid.n_nodes
        self.elements = grid.solid_elements
        conn = grid.conn[self.elements]
        self.edofs = (2 * conn[:, :, None] + np.arange(2)).reshape(-1, 18)
        self.k0 = element_stiffness(grid.element_coords()[self.elements], solid.nu)
        self.pattern = SparsePattern(self.edofs, self.edofs, (self.ndof, self.ndof))
        fixed = np.ones(self.ndof, dtype=bool)
        fixed[_node_dofs(np.flatnonzero(grid.solid_node_mask))] = False
        fixed[_node_dofs(grid.boundary_sets["ground"])] = True
        self.fixed = fixed

    def modulus(self, rho_bar):
        return simp_modulus(rho_bar[self.elements], self.interp)

    def stiffness(self, rho_bar, bc: bool = True):
        E, _ = self.modulus(rho_bar)
        K = self.pattern.assemble(E[:, None, None] * self.k0)
        return apply_dirichlet_rows(K, self.fixed) if bc else K

    def force_matrices(self, X):
        """Unfiltered element force operators B_e(X), (E_s, 18, 22)."""
        return force_operator(self.grid.element_coords(X)[self.elements], self.mu)

    def fluid_force(self, w, X, rho_bar, fluid_edofs, B=None):
        """Nodal forces  f_e = Upsilon(rho_e) int N^T div(sigma_f), assembled globally."""
        if B is None:
            B = self.force_matrices(X)
        U, _ = force_filter(rho_bar[self.elements], self.interp)
        fe = U[:, None] * np.einsum("eak,ek->ea", B, w[fluid_edofs[self.elements]])
        return scatter_add(self.edofs, fe, self.ndof)

    def solve(self, K_factor: Factorization, f):
        rhs = np.array(f, copy=True)
        rhs[self.fixed] = 0
        return K_factor.solve(rhs)

    def residual(self, u, K, f):
        r = K @ u - f
        r[self.fixed] = u[self.fixed]
        return r

    def compliance(self, u, rho_bar):
        """f = sum_e u_e^T k_e u_e with its partial derivatives in u and rho_bar."""
        E, dE = self.modulus(rho_bar)
        ue = u[self.edofs]
        ku = np.einsum("eab,eb->ea", self.k0, ue)
        quad = np.einsum("ea,ea->e", ue, ku)
        f = np.sum(E * quad)
        dfdu = scatter_add(self.edofs, 2 * E[:, None] * ku, self.ndof)
        dfdrho = np.zeros(self.grid.n_elements, dtype=np.result_type(quad, dE))
        dfdrho[self.elements] = dE * quad
        return f, dfdu, dfdrho


def disconnected_material(grid: StructuredGrid, rho_bar, threshold: float = 0.01) -> np.ndarray:
    """Solid-domain elements with rho_bar >= threshold and no edge-connected path of such elements to the ground.

    These are held only by E_min material, so K is close to singular there.
    """
    material = np.zeros(grid.n_elements, dtype=bool)
    solid = grid.solid_elements
    material[solid] = np.real(np.asarray(rho_bar))[solid] >= threshold
    labels, _ = ndimage.label(material.reshape(grid.ny, grid.nx))   # 4-connectivity = shared edges
    labels = labels.ravel()
    on_ground = np.isin(grid.conn, grid.boundary_sets["ground"]).any(axis=1)
    grounded = np.unique(labels[on_ground & material])
    return np.flatnonzero(material & ~np.isin(labels, grounded))


def solve_structure(K, f, fixed):
    """Solve K u = f with u = 0 on ``fixed`` dofs (row replacement)."""
    rhs = np.array(f, copy=True)
    rhs[fixed] = 0
    return Factorization(apply_dirichlet_rows(K, fixed)).solve(rhs)


class MeshProblem:
    """Pseudo-elastic mesh motion on the fluid non-design elements.

    The displacement d is stored on every node: d = u is tied on all nodes of
    the solid domain (including the wet interface) and d = 0 on the outer
    boundary; the remaining nodes follow homogeneous linear elasticity.
    With ``moving=False`` the mesh is frozen (d = 0 everywhere).
    """

    def __init__(self, grid: StructuredGrid, solid: SolidProperties, moving: bool = True):
        self.grid = grid
        self.moving = moving
        self.ndof = 2 * grid.n_nodes
        self.elements = grid.fluid_elements
        conn = grid.conn[self.elements]
        self.edofs = (2 * conn[:, :, None] + np.arange(2)).reshape(-1, 18)
        k0 = element_stiffness(grid.element_coords()[self.elements], solid.nu_mesh, solid.E_mesh)
        K = SparsePattern(self.edofs, self.edofs, (self.ndof, self.ndof)).assemble(k0)
        self.K = K
        self.tied = np.zeros(self.ndof, dtype=bool)
        self.tied[_node_dofs(np.flatnonzero(grid.solid_node_mask))] = True
        self.zero = np.zeros(self.ndof, dtype=bool)
        self.zero[_node_dofs(grid.boundary_sets["mesh_fixed"])] = True
        self.zero &= ~self.tied
        if not moving:
            self.zero[:] = True
            self.tied[:] = False
        self.prescribed = self.tied | self.zero
        self._factor = None

    @property
    def factor(self) -> Factorization:
        if self._factor is None:
            self._factor = Factorization(apply_dirichlet_rows(self.K, self.prescribed))
        return self._factor

    def solve(self, u):
        rhs = np.zeros(self.ndof, dtype=np.result_type(u))
        rhs[self.tied] = u[self.tied]
        if not self.moving:
            return rhs
        d = self.factor.solve(rhs)
        d[self.prescribed] = rhs[self.prescribed]
        return d

    def residual(self, u, d):
        r = self.K @ d
        r[self.zero] = d[self.zero]
        r[self.tied] = d[self.tied] - u[self.tied]
        return r

"""Reference-element machinery for the Q2 (9-node) / Q1 (4-node) quadrilateral.

Local Q2 node order is corners (counter-clockwise from (-1,-1)), then the
midsides bottom/right/top/left, then the center.  Q1 uses the four corners.
Every routine works on a batch of elements and is generic over the scalar
type of the nodal coordinates (float64 or complex128).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Q2_NODES = np.array(
    [[-1, -1], [1, -1], [1, 1], [-1, 1],
     [0, -1], [1, 0], [0, 1], [-1, 0],
     [0, 0]], dtype=float)
Q1_NODES = Q2_NODES[:4]

# position of each local node in the 3x3 lattice of the element, (i, j)
Q2_LATTICE = np.array(
    [[0, 0], [2, 0], [2, 2], [0, 2],
     [1, 0], [2, 1], [1, 2], [0, 1],
     [1, 1]], dtype=int)


def gauss_legendre(n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss rule on [-1, 1]^2; returns points (n*n, 2) and weights."""
    x, w = np.polynomial.legendre.leggauss(n)
    xi, eta = np.meshgrid(x, x, indexing="xy")
    wx, wy = np.meshgrid(w, w, indexing="xy")
    return np.column_stack([xi.ravel(), eta.ravel()]), (wx * wy).ravel()


def _lagrange2(t):
    t = np.asarray(t, dtype=float)
    val = np.stack([t * (t - 1) / 2, 1 - t * t, t * (t + 1) / 2], axis=-1)
    der = np.stack([t - 0.5, -2 * t, t + 0.5], axis=-1)
    sec = np.broadcast_to(np.array([1.0, -2.0, 1.0]), val.shape)
    return val, der, sec


def q2_shape(points: np.ndarray):
    """Q2 values (q, 9), gradients (q, 9, 2) and Hessians (q, 9, 2, 2)."""
    points = np.atleast_2d(points)
    lx, dlx, d2lx = _lagrange2(points[:, 0])
    ly, dly, d2ly = _lagrange2(points[:, 1])
    i, j = Q2_LATTICE[:, 0], Q2_LATTICE[:, 1]
    N = lx[:, i] * ly[:, j]
    dN = np.stack([dlx[:, i] * ly[:, j], lx[:, i] * dly[:, j]], axis=-1)
    d2N = np.empty(N.shape + (2, 2))
    d2N[..., 0, 0] = d2lx[:, i] * ly[:, j]
    d2N[..., 1, 1] = lx[:, i] * d2ly[:, j]
    d2N[..., 0, 1] = d2N[..., 1, 0] = dlx[:, i] * dly[:, j]
    return N, dN, d2N


def q1_shape(points: np.ndarray):
    """Q1 values (q, 4) and gradients (q, 4, 2)."""
    points = np.atleast_2d(points)
    xi, eta = points[:, :1], points[:, 1:]
    sx, sy = Q1_NODES[:, 0], Q1_NODES[:, 1]
    M = 0.25 * (1 + sx * xi) * (1 + sy * eta)
    dM = np.stack([0.25 * sx * (1 + sy * eta), 0.25 * sy * (1 + sx * xi)], axis=-1)
    return M, dM


@dataclass(frozen=True)
class Quadrature:
    points: np.ndarray
    weights: np.ndarray
    N: np.ndarray
    dN: np.ndarray
    d2N: np.ndarray
    M: np.ndarray
    dM: np.ndarray

    @classmethod
    def gauss(cls, n: int = 3) -> "Quadrature":
        pts, w = gauss_legendre(n)
        N, dN, d2N = q2_shape(pts)
        M, dM = q1_shape(pts)
        return cls(pts, w, N, dN, d2N, M, dM)

    @classmethod
    def at(cls, points, weights) -> "Quadrature":
        """Rule with arbitrary reference points (e.g. on element edges)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        N, dN, d2N = q2_shape(pts)
        M, dM = q1_shape(pts)
        return cls(pts, np.asarray(weights, dtype=float), N, dN, d2N, M, dM)


QUAD = Quadrature.gauss(3)


class ElementGeometry:
    """Isoparametric map data at quadrature points for a batch of elements.

    ``coords`` has shape (E, 9, 2).  Attributes are arrays over (E, q, ...).
    """

    def __init__(self, coords: np.ndarray, quad: Quadrature = QUAD, hessian: bool = False):
        self.coords = coords
        self.quad = quad
        J = np.einsum("eni,qna->eqia", coords, quad.dN)
        self.J = J
        self.detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        inv = np.empty_like(J)
        inv[..., 0, 0] = J[..., 1, 1]
        inv[..., 1, 1] = J[..., 0, 0]
        inv[..., 0, 1] = -J[..., 0, 1]
        inv[..., 1, 0] = -J[..., 1, 0]
        self.invJ = inv / self.detJ[..., None, None]  # invJ[a, i] = dxi_a / dx_i
        self.wdet = self.detJ * quad.weights
        self.dNdx = np.einsum("qna,eqai->eqni", quad.dN, self.invJ)
        self.dMdx = np.einsum("qna,eqai->eqni", quad.dM, self.invJ)
        self.d2Ndx2 = self._hessian() if hessian else None

    def _hessian(self):
        d2x = np.einsum("eni,qnab->eqiab", self.coords, self.quad.d2N)
        corr = self.quad.d2N[None] - np.einsum("eqni,eqiab->eqnab", self.dNdx, d2x)
        return np.einsum("eqai,eqnab,eqbj->eqnij", self.invJ, corr, self.invJ)

    def physical_points(self):
        return np.einsum("qn,eni->eqi", self.quad.N, self.coords)


def min_jacobian(coords: np.ndarray, quad: Quadrature = QUAD) -> np.ndarray:
    """Smallest real part of det(J) over the quadrature points, per element."""
    J = np.einsum("eni,qna->eqia", coords, quad.dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return np.real(det).min(axis=1)

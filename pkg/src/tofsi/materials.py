"""Design-variable machinery: interpolation laws, filtering, projection.

All pointwise functions return ``(value, derivative)`` and accept real or
complex densities so that complex-step perturbations pass straight through.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import ConfigError
from .grid import DESIGN, SOLID, StructuredGrid


@dataclass
class InterpolationParams:
    alpha_max: float = 1e7   # inverse permeability of solid, kg m^-3 s^-1
    alpha_min: float = 0.0
    p_alpha: float = 18e-7   # Brinkman convexity
    E_max: float = 1e4       # Pa
    E_min: float = 1e-6
    p_E: float = 1.0
    p_U: float = 1.0         # force-coupling filter exponent
    delta: float = 1.0       # relative penalization of p_E against p_U

    def validate(self) -> None:
        if not self.alpha_max > self.alpha_min >= 0:
            raise ConfigError("need alpha_max > alpha_min >= 0")
        if not self.E_max > self.E_min > 0:
            raise ConfigError("need E_max > E_min > 0")
        if not self.p_alpha > 0:
            raise ConfigError("p_alpha must be positive")
        if self.p_E < 1 or self.p_U < 1:
            raise ConfigError("p_E and p_U must be >= 1")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")


@dataclass
class ProjectionParams:
    beta: float = 4.0
    eta_d: float = 0.49
    eta_n: float = 0.50
    eta_e: float = 0.51
    radius: float = 1.5      # in multiples of the largest element edge

    def validate(self) -> None:
        if not 0 < self.eta_d < self.eta_n < self.eta_e < 1:
            raise ConfigError("need 0 < eta_d < eta_n < eta_e < 1")
        if self.beta < 1:
            raise ConfigError("beta must be >= 1")
        if self.radius < 1:
            raise ConfigError("filter radius must be >= 1 element")

    @property
    def etas(self) -> dict[str, float]:
        return {"d": self.eta_d, "n": self.eta_n, "e": self.eta_e}


def brinkman_alpha(rho, p: InterpolationParams):
    a0, a1, q = p.alpha_min, p.alpha_max, p.p_alpha
    den = 1 - rho + q
    # same law as a1 + (1 - rho)(a0 - a1)(1 + q)/den, without the cancellation near rho = 0
    alpha = a0 + (a1 - a0) * q * rho / den
    dalpha = (a1 - a0) * (1 + q) * q / den**2
    return alpha, dalpha


def simp_modulus(rho, p: InterpolationParams):
    E = p.E_min + (p.E_max - p.E_min) * rho**p.p_E
    dE = p.p_E * (p.E_max - p.E_min) * rho ** (p.p_E - 1)
    return E, dE


def force_filter(rho, p: InterpolationParams):
    # Upsilon_min = 0, Upsilon_max = 1
    return rho**p.p_U, p.p_U * rho ** (p.p_U - 1)


def project(rho_tilde, beta, eta):
    """Smoothed Heaviside (tanh) threshold projection and its derivative."""
    tb = np.tanh(beta * eta)
    den = tb + np.tanh(beta * (1 - eta))
    t = np.tanh(beta * (rho_tilde - eta))
    return (tb + t) / den, beta * (1 - t * t) / den


def discreteness_measure(rho_bar) -> float:
    """Percentage grayness: 0 for 0/1 fields, 100 for a uniform 0.5 field."""
    rho_bar = np.asarray(rho_bar, dtype=float)
    return float(np.sum(4 * rho_bar * (1 - rho_bar)) / rho_bar.size * 100)


class DensityFilter:
    """Linear hat-weight filter over the design elements.

    ``radius`` is in multiples of the largest element edge of the grid.
    """

    def __init__(self, grid: StructuredGrid, radius: float = 1.5):
        self.grid = grid
        self.radius = radius * grid.max_edge
        c = grid.centroids[grid.design_elements]
        tree = cKDTree(c)
        pairs = tree.query_pairs(self.radius, output_type="ndarray")
        i = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(len(c))])
        j = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(len(c))])
        w = np.maximum(0.0, self.radius - np.linalg.norm(c[i] - c[j], axis=1))
        W = sp.csr_matrix((w, (i, j)), shape=(len(c), len(c)))
        self.H = (sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W).tocsr()
        self.HT = self.H.T.tocsr()

    def __call__(self, rho):
        return self.H @ rho

    def transpose(self, y):
        return self.HT @ y


@dataclass
class DesignField:
    """Raw design variables and their filtered/projected realizations.

    Arrays indexed over design elements; ``full`` expands to all elements with
    the fixed values 1 (solid non-design) and 0 (fluid non-design).
    """

    grid: StructuredGrid
    rho: np.ndarray
    rho_tilde: np.ndarray = None
    projected: dict = field(default_factory=dict)
    dprojected: dict = field(default_factory=dict)

    def full(self, key: str) -> np.ndarray:
        return expand(self.grid, self.projected[key])

    @property
    def nominal(self):
        return self.projected["n"]


def initial_design(grid: StructuredGrid, volume_fraction: float) -> np.ndarray:
    return np.full(grid.design_elements.size, float(volume_fraction))


def robust_triplet(rho, pp: ProjectionParams, filt: DensityFilter) -> DesignField:
    """Dilated ("d"), nominal ("n") and eroded ("e") projections of the filtered field."""
    rho_tilde = filt(rho)
    field_ = DesignField(filt.grid, rho, rho_tilde)
    for key, eta in pp.etas.items():
        field_.projected[key], field_.dprojected[key] = project(rho_tilde, pp.beta, eta)
    return field_


def expand(grid: StructuredGrid, design_values) -> np.ndarray:
    """Element field with fixed non-design values (1 solid, 0 fluid)."""
    out = np.zeros(grid.n_elements, dtype=np.result_type(design_values, float))
    out[grid.tags == SOLID] = 1.0
    out[grid.tags == DESIGN] = design_values
    return out


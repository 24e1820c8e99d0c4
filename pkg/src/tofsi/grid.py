"""Structured tensor-product grids for the column-in-a-channel geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, GeometryError
from .fem import Q2_LATTICE, min_jacobian

DESIGN, SOLID, FLUID = 0, 1, 2
TAG_NAMES = {DESIGN: "design", SOLID: "solid_nondesign", FLUID: "fluid_nondesign"}


@dataclass(frozen=True)
class GeometryConfig:
    """Channel with a design box resting on the bottom wall and an optional column.

    Lengths in metres.  ``h`` is the target element edge; lines are inserted at
    every geometric edge and each segment is split uniformly.
    """

    channel_length: float = 2.0
    channel_height: float = 1.0
    design_x0: float = 0.3
    design_width: float = 1.4
    design_height: float = 0.8
    column: bool = True
    column_x0: float = 0.975
    column_width: float = 0.05
    column_height: float = 0.5
    h: float = 0.02

    def validate(self) -> None:
        if self.h <= 0:
            raise ConfigError("geometry.h must be positive")
        sizes = {
            "channel_length": self.channel_length,
            "channel_height": self.channel_height,
            "design_width": self.design_width,
            "design_height": self.design_height,
        }
        if self.column:
            sizes["column_width"] = self.column_width
            sizes["column_height"] = self.column_height
        for key, val in sizes.items():
            if not val > 1e-12:
                raise ConfigError(f"geometry.{key} must be positive (got {val})")
        eps = 1e-12
        if self.design_x0 < -eps or self.design_x0 + self.design_width > self.channel_length + eps:
            raise ConfigError("design box must lie inside the channel")
        if self.design_height > self.channel_height + eps:
            raise ConfigError("design box must lie inside the channel")
        if self.column:
            if (self.column_x0 < self.design_x0 - eps
                    or self.column_x0 + self.column_width > self.design_x0 + self.design_width + eps
                    or self.column_height > self.design_height + eps):
                raise ConfigError("column must lie inside the design box")

    def scaled(self, factor: float) -> "GeometryConfig":
        """Same geometry with the target element size multiplied by ``factor``."""
        return GeometryConfig(**{**self.__dict__, "h": self.h * factor})


def _grid_lines(breaks, h):
    pts = np.unique(np.round(np.asarray(breaks, dtype=float), 12))
    if np.any(np.diff(pts) < 1e-9):
        raise ConfigError("geometry edges closer than 1e-9 cannot be represented")
    lines = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, math.ceil((b - a) / h - 1e-9))
        lines.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(lines)


class StructuredGrid:
    """Conformal Q2/Q1 mesh on a tensor-product grid.

    Q2 nodes are numbered lexicographically on the (2nx+1) x (2ny+1) lattice
    (x fastest); Q1 nodes on the (nx+1) x (ny+1) corner lattice.  Element
    ``e = ey * nx + ex``.
    """

    def __init__(self, x_lines, y_lines, tags, geometry: GeometryConfig | None = None):
        self.x_lines = np.asarray(x_lines, dtype=float)
        self.y_lines = np.asarray(y_lines, dtype=float)
        if np.any(np.diff(self.x_lines) <= 0) or np.any(np.diff(self.y_lines) <= 0):
            raise ConfigError("grid lines must be strictly increasing")
        self.geometry = geometry
        self.nx = len(self.x_lines) - 1
        self.ny = len(self.y_lines) - 1
        self.n_elements = self.nx * self.ny
        self.tags = np.asarray(tags, dtype=int)
        assert self.tags.shape == (self.n_elements,)

        mx, my = 2 * self.nx + 1, 2 * self.ny + 1
        self.n_nodes = mx * my
        self.n_pnodes = (self.nx + 1) * (self.ny + 1)
        xq = np.empty(mx)
        xq[0::2] = self.x_lines
        xq[1::2] = 0.5 * (self.x_lines[:-1] + self.x_lines[1:])
        yq = np.empty(my)
        yq[0::2] = self.y_lines
        yq[1::2] = 0.5 * (self.y_lines[:-1] + self.y_lines[1:])
        X, Y = np.meshgrid(xq, yq, indexing="xy")
        self.nodes = np.column_stack([X.ravel(), Y.ravel()])

        ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="xy")
        ex, ey = ex.ravel(), ey.ravel()
        I = 2 * ex[:, None] + Q2_LATTICE[None, :, 0]
        J = 2 * ey[:, None] + Q2_LATTICE[None, :, 1]
        self.conn = J * mx + I
        self.pconn = (ey[:, None] + Q2_LATTICE[None, :4, 1] // 2) * (self.nx + 1) + (
            ex[:, None] + Q2_LATTICE[None, :4, 0] // 2)
        # Q1 node id -> Q2 node id at the same location
        pi, pj = np.meshgrid(np.arange(self.nx + 1), np.arange(self.ny + 1), indexing="xy")
        self.pnode_to_node = (2 * pj * mx + 2 * pi).ravel()

    # ------------------------------------------------------------------ sets
    @cached_property
    def design_elements(self):
        return np.flatnonzero(self.tags == DESIGN)

    @cached_property
    def solid_elements(self):
        """Solid computational domain: design plus solid non-design."""
        return np.flatnonzero(self.tags != FLUID)

    @cached_property
    def fluid_elements(self):
        return np.flatnonzero(self.tags == FLUID)

    def _closure(self, elements):
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.conn[elements].ravel()] = True
        return mask

    @cached_property
    def solid_node_mask(self):
        return self._closure(self.solid_elements)

    @cached_property
    def boundary_sets(self) -> dict[str, np.ndarray]:
        x, y = self.nodes[:, 0], self.nodes[:, 1]
        x0, x1 = self.x_lines[[0, -1]]
        y0, y1 = self.y_lines[[0, -1]]
        left, right = np.isclose(x, x0), np.isclose(x, x1)
        bottom, top = np.isclose(y, y0), np.isclose(y, y1)
        walls = bottom | top
        fluid_closure = self._closure(self.fluid_elements)
        solid = self.solid_node_mask
        return {
            "inlet": np.flatnonzero(left & ~walls),
            "outlet": np.flatnonzero(right & ~walls),
            "walls": np.flatnonzero(walls),
            "mesh_fixed": np.flatnonzero(left | right | walls),
            "wet_interface": np.flatnonzero(solid & fluid_closure),
            "ground": np.flatnonzero(solid & bottom),
        }

    @cached_property
    def outlet_pnodes(self):
        px = self.nodes[self.pnode_to_node, 0]
        return np.flatnonzero(np.isclose(px, self.x_lines[-1]))

    # -------------------------------------------------------------- geometry
    @cached_property
    def element_sizes(self):
        dx = np.diff(self.x_lines)
        dy = np.diff(self.y_lines)
        DX, DY = np.meshgrid(dx, dy, indexing="xy")
        return np.column_stack([DX.ravel(), DY.ravel()])

    @cached_property
    def areas(self):
        return self.element_sizes.prod(axis=1)

    @cached_property
    def centroids(self):
        xc = 0.5 * (self.x_lines[:-1] + self.x_lines[1:])
        yc = 0.5 * (self.y_lines[:-1] + self.y_lines[1:])
        X, Y = np.meshgrid(xc, yc, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def max_edge(self) -> float:
        return float(self.element_sizes.max())

    def element_coords(self, X=None):
        """Nodal coordinates per element, shape (E, 9, 2)."""
        X = self.nodes if X is None else X
        return X[self.conn]

    def summary(self) -> str:
        counts = {TAG_NAMES[t]: int(np.sum(self.tags == t)) for t in TAG_NAMES}
        return f"{self.nx}x{self.ny} elements ({self.n_elements}), {self.n_nodes} Q2 nodes, {counts}"


def build_grid(geom: GeometryConfig = GeometryConfig()) -> StructuredGrid:
    """Tensor grid aligned with every channel, design-box and column edge."""
    geom.validate()
    xb = [0.0, geom.channel_length, geom.design_x0, geom.design_x0 + geom.design_width]
    yb = [0.0, geom.channel_height, geom.design_height]
    if geom.column:
        xb += [geom.column_x0, geom.column_x0 + geom.column_width]
        yb += [geom.column_height]
    x_lines = _grid_lines(xb, geom.h)
    y_lines = _grid_lines(yb, geom.h)
    xc = 0.5 * (x_lines[:-1] + x_lines[1:])
    yc = 0.5 * (y_lines[:-1] + y_lines[1:])
    X, Y = np.meshgrid(xc, yc, indexing="xy")
    X, Y = X.ravel(), Y.ravel()
    tags = np.full(X.size, FLUID)
    in_design = (X > geom.design_x0) & (X < geom.design_x0 + geom.design_width) & (Y < geom.design_height)
    tags[in_design] = DESIGN
    if geom.column:
        in_col = (X > geom.column_x0) & (X < geom.column_x0 + geom.column_width) & (Y < geom.column_height)
        tags[in_col] = SOLID
    return StructuredGrid(x_lines, y_lines, tags, geom)


def deformed_coordinates(grid: StructuredGrid, u, d, check: bool = True):
    """Node positions: reference + u on solid-domain nodes, reference + d elsewhere.

    ``u`` and ``d`` are interleaved nodal vectors of length 2 * n_nodes.
    Raises GeometryError listing elements with a non-positive Jacobian.
    """
    u = np.asarray(u).reshape(-1, 2)
    d = np.asarray(d).reshape(-1, 2)
    disp = np.where(grid.solid_node_mask[:, None], u, d)
    X = grid.nodes + disp
    if check:
        check_admissible(grid, X)
    return X


def check_admissible(grid: StructuredGrid, X) -> None:
    jmin = min_jacobian(grid.element_coords(X))
    bad = np.flatnonzero(~(jmin > 0))
    if bad.size:
        raise GeometryError(f"inverted mesh: {bad.size} element(s) with det(J) <= 0, e.g. {bad[:10].tolist()}",
                            elements=bad)

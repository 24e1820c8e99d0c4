"""Design and state snapshots in a flat ``.npz`` container.

Layout (all arrays little-endian numpy, version 1):

    format         "tofsi-snapshot"      version        1
    nx, ny         element counts        geometry       JSON of GeometryConfig
    rho            raw design variables, ordered as ``grid.design_elements`` (ascending ids)
    rho_bar        projected nominal density on all elements, element id ``e = ey*nx + ex``
    beta, p_E, p_U projection sharpness and penalization exponents the design was evaluated with
    u, d           optional nodal structure / mesh displacements, interleaved (x, y) per Q2 node
    w              optional fluid state: 2 velocities per Q2 node, then one pressure per Q1 node
    mesh_deformation, iteration, meta (JSON)

Q2 nodes are numbered x-fastest on the (2nx+1) x (2ny+1) lattice and Q1
nodes on the (nx+1) x (ny+1) corner lattice.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grid import GeometryConfig, StructuredGrid, build_grid

FORMAT = "tofsi-snapshot"
VERSION = 1


@dataclass
class Snapshot:
    geometry: GeometryConfig
    rho: np.ndarray
    rho_bar: np.ndarray
    beta: float
    p_E: float
    p_U: float
    mesh_deformation: bool = True
    iteration: int = 0
    u: np.ndarray | None = None
    d: np.ndarray | None = None
    w: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def grid(self) -> StructuredGrid:
        grid = build_grid(self.geometry)
        if grid.design_elements.size != self.rho.size or grid.n_elements != self.rho_bar.size:
            raise ConfigError("snapshot arrays do not match the stored geometry")
        return grid

    @property
    def has_state(self) -> bool:
        return self.u is not None and self.d is not None and self.w is not None


def save_snapshot(path, snap: Snapshot, grid: StructuredGrid | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = grid or build_grid(snap.geometry)
    arrays = dict(
        format=np.array(FORMAT), version=np.array(VERSION), nx=np.array(grid.nx), ny=np.array(grid.ny),
        geometry=np.array(json.dumps(dataclasses.asdict(snap.geometry))),
        rho=np.asarray(snap.rho, dtype=float), rho_bar=np.asarray(snap.rho_bar, dtype=float),
        beta=np.array(snap.beta), p_E=np.array(snap.p_E), p_U=np.array(snap.p_U),
        mesh_deformation=np.array(bool(snap.mesh_deformation)), iteration=np.array(snap.iteration),
        meta=np.array(json.dumps(snap.meta)),
    )
    for key in ("u", "d", "w"):
        val = getattr(snap, key)
        if val is not None:
            arrays[key] = np.real(np.asarray(val)).astype(float)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_snapshot(path) -> Snapshot:
    path = Path(path)
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read snapshot {path}: {exc}") from exc
    with data:
        if "format" not in data or str(data["format"]) != FORMAT:
            raise ConfigError(f"{path} is not a tofsi snapshot")
        if int(data["version"]) != VERSION:
            raise ConfigError(f"{path}: unsupported snapshot version {int(data['version'])}")
        geom = GeometryConfig(**json.loads(str(data["geometry"])))
        opt = {k: data[k].copy() for k in ("u", "d", "w") if k in data}
        snap = Snapshot(geom, data["rho"].copy(), data["rho_bar"].copy(), float(data["beta"]), float(data["p_E"]),
                        float(data["p_U"]), bool(data["mesh_deformation"]), int(data["iteration"]),
                        meta=json.loads(str(data["meta"])), **opt)
        nx, ny = int(data["nx"]), int(data["ny"])
    if snap.rho_bar.size != nx * ny:
        raise ConfigError(f"{path}: rho_bar has {snap.rho_bar.size} entries, expected {nx * ny}")
    return snap

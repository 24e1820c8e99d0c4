import numpy as np
import pytest

from tofsi.errors import ConfigError
from tofsi.grid import GeometryConfig, StructuredGrid, build_grid
from tofsi.snapshot import Snapshot, load_snapshot, save_snapshot
from tofsi.vtk import HEADER, pressure_on_q2, read_vtk_counts, write_vtk


def one_element():
    return StructuredGrid([0.0, 1.0], [0.0, 1.0], [2])


def test_single_element_gives_four_cells(tmp_path):
    g = one_element()
    path = write_vtk(tmp_path / "e.vtk", g, cell_data={"rho_bar": [0.5]}, point_data={"p": np.zeros(9)})
    c = read_vtk_counts(path)
    assert c["header"] == HEADER
    assert (c["points"], c["cells"], c["CELL_DATA"], c["POINT_DATA"]) == (9, 4, 4, 9)


def test_counts_scale_with_grid(tmp_path, mini_grid):
    g = mini_grid
    vel = np.zeros(2 * g.n_nodes)
    path = write_vtk(tmp_path / "m.vtk", g, cell_data={"rho_bar": np.ones(g.n_elements)},
                     point_data={"velocity": vel})
    c = read_vtk_counts(path)
    assert c["points"] == (2 * g.nx + 1) * (2 * g.ny + 1)
    assert c["CELL_DATA"] == 4 * g.n_elements
    assert c["arrays"]["velocity"] == ("POINT_DATA", "VECTORS")


def test_subcells_tile_the_element(tmp_path):
    g = one_element()
    path = write_vtk(tmp_path / "e.vtk", g)
    lines = path.read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("CELLS"))
    area = 0.0
    for line in lines[i + 1:i + 5]:
        ids = [int(t) for t in line.split()[1:]]
        x, y = g.nodes[ids].T
        area += 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    assert area == pytest.approx(1.0)  # counter-clockwise, no overlap


def test_bad_point_data_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "e.vtk", one_element(), point_data={"p": np.zeros(5)})


def test_unwritable_path_raises_os_error(tmp_path):
    with pytest.raises(OSError):
        write_vtk(tmp_path / "missing" / "dir" / "e.vtk", one_element())


def test_pressure_interpolation_is_bilinear(mini_grid):
    px, py = mini_grid.nodes[mini_grid.pnode_to_node].T
    p = 3 * px - 2 * py + 1
    x, y = mini_grid.nodes.T
    assert np.allclose(pressure_on_q2(mini_grid, p), 3 * x - 2 * y + 1)


def test_snapshot_round_trip(tmp_path, mini_grid):
    rng = np.random.default_rng(0)
    snap = Snapshot(mini_grid.geometry, rng.uniform(size=10), rng.uniform(size=24), 16.0, 2.0, 2.5, False, 42,
                    u=rng.normal(size=2 * mini_grid.n_nodes), meta={"note": "x"})
    path = save_snapshot(tmp_path / "s.npz", snap)
    back = load_snapshot(path)
    assert back.geometry == snap.geometry
    assert np.array_equal(back.rho, snap.rho) and np.array_equal(back.rho_bar, snap.rho_bar)
    assert (back.beta, back.p_E, back.p_U, back.mesh_deformation, back.iteration) == (16.0, 2.0, 2.5, False, 42)
    assert np.array_equal(back.u, snap.u) and back.w is None and not back.has_state
    assert back.meta == {"note": "x"}
    assert back.grid().n_elements == 24


def test_foreign_file_rejected(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, a=np.zeros(3))
    with pytest.raises(ConfigError):
        load_snapshot(path)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tofsi.elastic import (MeshProblem, SolidProperties, StructureProblem, disconnected_material, element_stiffness,
                           element_stress, plane_strain_matrix, solve_structure)
from tofsi.errors import ConfigError
from tofsi.fem import Q2_NODES
from tofsi.grid import SOLID
from tofsi.materials import InterpolationParams, expand


def rigid_modes(X):
    x, y = X.T
    return [np.column_stack([np.ones_like(x), np.zeros_like(x)]).ravel(),
            np.column_stack([np.zeros_like(x), np.ones_like(x)]).ravel(),
            np.column_stack([-y, x]).ravel()]


@settings(max_examples=20)
@given(st.floats(0.0, 0.45), st.integers(0, 2**31 - 1))
def test_rigid_body_modes_are_zero_energy(nu, seed):
    X = Q2_NODES * 0.5 + np.random.default_rng(seed).uniform(-0.05, 0.05, (9, 2))
    k = element_stiffness(X[None], nu)[0]
    assert np.allclose(k, k.T)
    for m in rigid_modes(X):
        assert np.linalg.norm(k @ m) < 1e-10 * np.abs(k).max()
    assert np.sum(np.linalg.eigvalsh(k) > 1e-10 * np.abs(k).max()) == 15


def test_uniform_strain_patch():
    rng = np.random.default_rng(1)
    X = Q2_NODES + rng.uniform(-0.1, 0.1, (9, 2))
    eps = np.array([[1e-3, 2e-4], [2e-4, -5e-4]])
    u = (X @ eps.T).ravel()
    sig = element_stress(X[None], u[None], 0.3, 2.0)[0]
    expected = plane_strain_matrix(2.0, 0.3) @ [1e-3, -5e-4, 4e-4]
    assert np.allclose(sig, expected)


def test_structure_fixed_dofs(mini_grid):
    sp_ = StructureProblem(mini_grid, SolidProperties(), InterpolationParams(), 1.0)
    K = sp_.stiffness(expand(mini_grid, np.full(mini_grid.design_elements.size, 0.5)))
    f = np.zeros(sp_.ndof)
    f[~sp_.fixed] = 1.0
    u = solve_structure(K, f, sp_.fixed)
    # identity rows: zero up to the round-off of the factorization
    tol = 1e-10 * np.abs(u).max()
    assert np.abs(u[sp_.fixed]).max() <= tol
    ground = mini_grid.boundary_sets["ground"]
    assert np.abs(u[2 * ground]).max() <= tol


def test_compliance_gradient(mini_grid):
    sp_ = StructureProblem(mini_grid, SolidProperties(), InterpolationParams(p_E=3), 1.0)
    rng = np.random.default_rng(2)
    rho = expand(mini_grid, rng.uniform(0.2, 0.9, mini_grid.design_elements.size))
    u = rng.normal(size=sp_.ndof)
    f, dfdu, dfdrho = sp_.compliance(u, rho)
    e = mini_grid.design_elements[3]
    r2 = rho.astype(complex)
    r2[e] += 1e-30j
    assert sp_.compliance(u, r2)[0].imag / 1e-30 == pytest.approx(dfdrho[e])
    du = np.zeros(sp_.ndof, dtype=complex)
    du[7] = 1e-30j
    assert sp_.compliance(u + du, rho)[0].imag / 1e-30 == pytest.approx(dfdu[7])


def test_mesh_follows_structure_and_keeps_boundary(mini_grid):
    me = MeshProblem(mini_grid, SolidProperties())
    u = np.zeros(me.ndof)
    u[me.tied] = 1e-3
    d = me.solve(u)
    assert np.allclose(d[me.tied], 1e-3)
    assert np.all(d[me.zero] == 0)
    assert np.linalg.norm(me.residual(u, d)) < 1e-14


def test_frozen_mesh_is_identity(mini_grid):
    me = MeshProblem(mini_grid, SolidProperties(), moving=False)
    assert np.all(me.solve(np.ones(me.ndof)) == 0)


@pytest.mark.parametrize("nu", [0.5, 0.7, -1.0])
def test_invalid_poisson_ratio(nu):
    with pytest.raises(ConfigError):
        SolidProperties(nu=nu).validate()


def unit_square():
    return (0.5 * (Q2_NODES + 1))[None]


def test_element_stiffness_symmetric_and_scales_with_modulus():
    Xe = (Q2_NODES * [0.7, 0.4] + 0.1 * np.sin(3 * Q2_NODES[:, ::-1]))[None]
    k = element_stiffness(Xe, 0.3)[0]
    assert np.abs(k - k.T).max() < 1e-12 * np.abs(k).max()
    p = InterpolationParams()
    from tofsi.materials import simp_modulus
    E0, E1 = simp_modulus(0.0, p)[0], simp_modulus(1.0, p)[0]
    assert np.allclose(element_stiffness(Xe, 0.3, E0), (E0 / E1) * element_stiffness(Xe, 0.3, E1), rtol=1e-14)


def test_confined_compression_single_element():
    E, nu, sigma, L = 1e4, 0.3, -2.0, 1.0
    k = element_stiffness(L * unit_square(), nu, E)[0]
    x, y = (L * unit_square()[0]).T
    fixed = np.zeros(18, dtype=bool)
    fixed[0::2] = True                       # confined: no lateral motion
    fixed[1::2] = np.isclose(y, 0)           # bottom held
    f = np.zeros(18)
    top = np.isclose(y, L)
    # consistent loads of a uniform traction on a quadratic edge: 1/6, 4/6, 1/6
    f[1::2][top] = sigma * L * np.where(np.isclose(x[top], 0.5 * L), 4 / 6, 1 / 6)
    free = ~fixed
    u = np.zeros(18)
    u[free] = np.linalg.solve(k[np.ix_(free, free)], f[free])
    expected = sigma * L * (1 + nu) * (1 - 2 * nu) / (E * (1 - nu))
    assert np.allclose(u[1::2][top], expected, rtol=1e-12)
    # compliance is the external work
    assert u @ k @ u == pytest.approx(f @ u, rel=1e-12)


def test_element_fluid_force_examples():
    from tofsi.fluid import force_operator
    from tofsi.materials import force_filter
    Xe = unit_square()
    w = np.zeros(22)
    w[18:] = Xe[0, :4, 0]                    # p = x on the Q1 corners
    B = force_operator(Xe, 1.0)[0]
    total = (B @ w).reshape(9, 2).sum(axis=0)
    assert np.allclose(total, [-1.0, 0.0], atol=1e-13)
    old, new = InterpolationParams(p_U=2.0), InterpolationParams(p_U=1.0)
    ratio = force_filter(0.5, new)[0] / force_filter(0.5, old)[0]
    assert ratio == pytest.approx(2.0)
    assert force_filter(0.0, old)[0] * (B @ w) == pytest.approx(np.zeros(18))


def test_structure_response_is_linear(mini_grid):
    p = InterpolationParams()
    st = StructureProblem(mini_grid, SolidProperties(), p, 1.0)
    rho_bar = expand(mini_grid, np.full(mini_grid.design_elements.size, 0.7))
    K = st.stiffness(rho_bar)
    f = np.random.default_rng(1).normal(size=st.ndof)
    u1 = solve_structure(K, f, st.fixed)
    assert np.array_equal(solve_structure(K, 0 * f, st.fixed), np.zeros(st.ndof))
    assert np.allclose(solve_structure(K, 2 * f, st.fixed), 2 * u1, rtol=1e-12, atol=1e-15)
    c1 = st.compliance(u1, rho_bar)[0]
    assert st.compliance(3 * u1, rho_bar)[0] == pytest.approx(9 * c1, rel=1e-12)
    f_free = np.where(st.fixed, 0, f)
    assert c1 == pytest.approx(f_free @ u1, rel=1e-10)
    assert st.compliance(np.zeros(st.ndof), rho_bar)[0] == 0


@pytest.fixture(scope="module")
def benchmark_grid():
    from tofsi.grid import GeometryConfig, build_grid
    return build_grid(GeometryConfig())


def test_mesh_motion_interface_bound_and_modulus_invariance(benchmark_grid):
    g = benchmark_grid
    delta = np.array([0.01, -0.004])
    u = np.zeros(2 * g.n_nodes)
    u.reshape(-1, 2)[g.solid_node_mask] = delta
    soft = MeshProblem(g, SolidProperties(E_mesh=1.0))
    stiff = MeshProblem(g, SolidProperties(E_mesh=100.0))
    d = soft.solve(u)
    assert np.abs(d - stiff.solve(u)).max() < 1e-10 * np.abs(delta).max()
    dn = d.reshape(-1, 2)
    assert np.array_equal(dn[g.solid_node_mask], np.broadcast_to(delta, dn[g.solid_node_mask].shape))
    assert np.abs(dn).max() <= np.abs(delta).max() * 1.2
    assert np.array_equal(soft.solve(np.zeros_like(u)), np.zeros_like(u))


def _column_only(grid):
    return (grid.tags == SOLID).astype(float)


def test_no_disconnected_material_for_column_alone(mini_grid):
    assert disconnected_material(mini_grid, _column_only(mini_grid)).size == 0


def test_isolated_island_is_flagged(mini_grid):
    rb = _column_only(mini_grid)
    rb[13] = 0.24               # row 2, col 1: only void around it
    assert disconnected_material(mini_grid, rb).tolist() == [13]


def test_island_linked_to_ground_is_not_flagged(mini_grid):
    rb = _column_only(mini_grid)
    rb[[13, 7, 1]] = [0.24, 0.5, 0.5]   # a column of material down to the ground row
    assert disconnected_material(mini_grid, rb).size == 0


def test_corner_contact_does_not_connect(mini_grid):
    rb = _column_only(mini_grid)
    rb[14] = 1.0                # touches the column (element 9) at a corner only
    assert disconnected_material(mini_grid, rb).tolist() == [14]
    rb[15] = 0.3                # edge neighbour of both 14 and the column top
    assert disconnected_material(mini_grid, rb).size == 0


def test_material_below_threshold_is_ignored(mini_grid):
    rb = _column_only(mini_grid)
    rb[13] = 0.005
    assert disconnected_material(mini_grid, rb).size == 0
    assert disconnected_material(mini_grid, rb, threshold=1e-3).tolist() == [13]

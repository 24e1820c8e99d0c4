import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tofsi.errors import ConfigError
from tofsi.grid import SOLID
from tofsi.materials import (DensityFilter, InterpolationParams, ProjectionParams, brinkman_alpha,
                             discreteness_measure, expand, force_filter, initial_design, project, robust_triplet,
                             simp_modulus)

P = InterpolationParams()
density = st.floats(0.0, 1.0, allow_nan=False)
exponent = st.floats(1.0, 4.0)


def test_endpoints_to_machine_precision():
    assert brinkman_alpha(1.0, P)[0] == P.alpha_max
    assert brinkman_alpha(0.0, P)[0] == P.alpha_min
    assert simp_modulus(1.0, P)[0] == 1e4
    assert simp_modulus(0.0, P)[0] == 1e-6
    assert force_filter(1.0, P)[0] == 1.0
    assert force_filter(0.0, P)[0] == 0.0


def test_alpha_is_fluid_dominated_for_small_p_alpha():
    # tiny p_alpha keeps alpha near alpha_min until rho is almost 1
    assert brinkman_alpha(0.99, P)[0] < 1e-3 * P.alpha_max


@settings(max_examples=60)
@given(st.floats(0.01, 0.99), st.floats(1e-3, 1.0), exponent)
def test_derivatives_match_complex_step(rho, p_alpha, p_E):
    params = InterpolationParams(p_alpha=p_alpha, p_E=p_E, p_U=p_E)
    h = 1e-30
    for law in (brinkman_alpha, simp_modulus, force_filter):
        val, der = law(rho, params)
        cs = law(rho + 1j * h, params)[0].imag / h
        assert der == pytest.approx(cs, rel=1e-10)


@given(density, density)
def test_interpolations_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    for law in (brinkman_alpha, simp_modulus, force_filter):
        assert law(lo, P)[0] <= law(hi, P)[0] * (1 + 1e-14) + 1e-300


@given(st.floats(-0.5, 1.5), st.floats(1, 64), st.floats(0.05, 0.95))
def test_projection_range_and_slope(x, beta, eta):
    v, dv = project(x, beta, eta)
    assert dv >= 0
    if 0 <= x <= 1:
        assert -1e-12 <= v <= 1 + 1e-12


def test_projection_fixes_endpoints_and_threshold():
    for beta in (4, 64):
        assert project(0.0, beta, 0.5)[0] == pytest.approx(0.0, abs=1e-15)
        assert project(1.0, beta, 0.5)[0] == pytest.approx(1.0)
        assert project(0.5, beta, 0.5)[0] == pytest.approx(0.5)


def test_robust_ordering(mini_grid, mini_filter):
    rho = np.linspace(0, 1, mini_grid.design_elements.size)
    tri = robust_triplet(rho, ProjectionParams(), mini_filter)
    assert np.all(tri.projected["d"] >= tri.projected["n"]) and np.all(tri.projected["n"] >= tri.projected["e"])


def test_filter_rows_sum_to_one_and_preserve_constants(mini_grid, mini_filter):
    H = mini_filter.H
    assert np.allclose(H.sum(axis=1), 1)
    assert np.allclose(mini_filter(np.full(H.shape[0], 0.3)), 0.3)


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_filter_transpose_adjoint_identity(mini_filter, seed):
    rng = np.random.default_rng(seed)
    n = mini_filter.H.shape[0]
    x, y = rng.normal(size=n), rng.normal(size=n)
    assert y @ mini_filter(x) == pytest.approx(x @ mini_filter.transpose(y))


@pytest.mark.parametrize("field,expected", [(np.zeros(7), 0.0), (np.ones(7), 0.0), (np.full(7, 0.5), 100.0)])
def test_discreteness_measure(field, expected):
    assert discreteness_measure(field) == pytest.approx(expected)


def test_expand_sets_passive_values(mini_grid):
    full = expand(mini_grid, initial_design(mini_grid, 0.1))
    assert np.all(full[mini_grid.tags == SOLID] == 1)
    assert np.all(full[mini_grid.design_elements] == 0.1)
    assert full.sum() == pytest.approx(2 + 1.0)


@pytest.mark.parametrize("kw", [dict(alpha_max=0.0), dict(E_min=0.0), dict(p_E=0.5), dict(delta=0.0)])
def test_invalid_interpolation_rejected(kw):
    with pytest.raises(ConfigError):
        InterpolationParams(**kw).validate()


def test_invalid_projection_rejected():
    with pytest.raises(ConfigError):
        ProjectionParams(eta_d=0.6).validate()


def test_worked_interpolation_values():
    p = InterpolationParams(alpha_max=1.0, alpha_min=0.0, p_alpha=1.0)
    assert brinkman_alpha(0.5, p)[0] == pytest.approx(1 / 3, rel=1e-15)
    assert simp_modulus(0.5, InterpolationParams(p_E=1.5))[0] == pytest.approx(3535.5339, abs=1e-4)
    assert force_filter(0.5, InterpolationParams(p_U=2.0))[0] == 0.25


def test_projection_worked_value():
    assert project(0.45, 64, 0.5)[0] == pytest.approx(0.00166, abs=1e-5)


def test_derivatives_match_central_differences():
    rng = np.random.default_rng(20)
    p = InterpolationParams(p_alpha=0.01, p_E=3.0, p_U=2.5)
    for rho in rng.uniform(0.05, 0.95, 20):
        for law in (brinkman_alpha, simp_modulus, force_filter):
            fd = (law(rho + 1e-6, p)[0] - law(rho - 1e-6, p)[0]) / 2e-6
            assert law(rho, p)[1] == pytest.approx(fd, rel=1e-6)


def test_filter_self_weight_on_uniform_grid():
    from tofsi.grid import DESIGN, StructuredGrid
    g = StructuredGrid(np.linspace(0, 0.2, 11), np.linspace(0, 0.2, 11), np.full(100, DESIGN))
    filt = DensityFilter(g, 1.5)
    e = 5 * 10 + 5
    expected = 1.5 / (1.5 + 4 * 0.5 + 4 * (1.5 - np.sqrt(2)))
    assert filt.H[e, e] == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.3903, abs=1e-4)


def test_filter_is_linear(mini_filter):
    rng = np.random.default_rng(3)
    n = mini_filter.H.shape[0]
    x, y = rng.uniform(size=(2, n))
    assert np.allclose(mini_filter(2.5 * x - 0.7 * y), 2.5 * mini_filter(x) - 0.7 * mini_filter(y), atol=1e-12)


def test_triplet_is_filter_then_project(mini_grid, mini_filter):
    rng = np.random.default_rng(4)
    rho = rng.uniform(size=mini_grid.design_elements.size)
    pp = ProjectionParams(beta=4)
    tri = robust_triplet(rho, pp, mini_filter)
    for key, eta in pp.etas.items():
        assert np.allclose(tri.projected[key], project(mini_filter(rho), 4, eta)[0], atol=1e-15)
    zero = robust_triplet(np.zeros_like(rho), pp, mini_filter)
    assert all(np.all(v == 0) for v in zero.projected.values())


def test_discreteness_single_element():
    assert discreteness_measure(np.array([0.25])) == pytest.approx(75.0)

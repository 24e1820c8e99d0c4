import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tofsi.fem import Q1_NODES, Q2_NODES, QUAD, ElementGeometry, gauss_legendre, min_jacobian, q1_shape, q2_shape

unit = st.floats(-1, 1, allow_nan=False)


def affine_element(A, b):
    return (Q2_NODES @ np.asarray(A).T + b)[None]


def test_shape_functions_are_nodal():
    N, _, _ = q2_shape(Q2_NODES)
    assert np.allclose(N, np.eye(9))
    M, _ = q1_shape(Q1_NODES)
    assert np.allclose(M, np.eye(4))


@given(unit, unit)
def test_partition_of_unity(xi, eta):
    N, dN, d2N = q2_shape(np.array([[xi, eta]]))
    M, dM = q1_shape(np.array([[xi, eta]]))
    assert N.sum() == pytest.approx(1.0)
    assert np.allclose(dN.sum(axis=1), 0, atol=1e-12)
    assert np.allclose(d2N.sum(axis=1), 0, atol=1e-12)
    assert M.sum() == pytest.approx(1.0)
    assert np.allclose(dM.sum(axis=1), 0, atol=1e-12)


@given(unit, unit)
def test_gradients_match_finite_differences(xi, eta):
    N, dN, d2N = q2_shape(np.array([[xi, eta]]))
    # central differences of quadratics are exact up to round-off
    eps = 1e-6
    for a in range(2):
        e = np.zeros(2)
        e[a] = eps
        Np, dNp, _ = q2_shape(np.array([[xi, eta]]) + e)
        Nm, dNm, _ = q2_shape(np.array([[xi, eta]]) - e)
        assert np.allclose((Np - Nm) / (2 * eps), dN[..., a], atol=1e-8)
        assert np.allclose((dNp - dNm) / (2 * eps), d2N[..., a], atol=1e-7)


@pytest.mark.parametrize("px,py", [(0, 0), (1, 3), (5, 5), (4, 2)])
def test_gauss_rule_integrates_degree_five(px, py):
    pts, w = gauss_legendre(3)
    exact = (1 - (-1) ** (px + 1)) / (px + 1) * (1 - (-1) ** (py + 1)) / (py + 1)
    assert np.sum(w * pts[:, 0] ** px * pts[:, 1] ** py) == pytest.approx(exact, abs=1e-14)


@given(st.floats(0.2, 3), st.floats(0.2, 3), st.floats(-0.5, 0.5), st.floats(-5, 5), st.floats(-5, 5))
def test_affine_map_area_and_gradients(a, d, shear, bx, by):
    A = np.array([[a, shear], [0.0, d]])
    geo = ElementGeometry(affine_element(A, [bx, by]))
    assert geo.wdet.sum() == pytest.approx(4 * a * d)
    # Q2 reproduces linear fields: grad(x) = e_x
    X = geo.coords[0]
    G = np.einsum("ni,qnj->qij", X, geo.dNdx[0])
    assert np.allclose(G, np.eye(2), atol=1e-10)


def test_hessian_symmetric_on_distorted_element():
    rng = np.random.default_rng(3)
    X = Q2_NODES * [1.0, 0.7] + rng.uniform(-0.08, 0.08, (9, 2))
    geo = ElementGeometry(X[None], hessian=True)
    assert np.allclose(geo.d2Ndx2, np.swapaxes(geo.d2Ndx2, -1, -2))


def test_hessian_exact_for_quadratic_field_on_affine_element():
    f = lambda x, y: 1 + 2 * x - y + 0.5 * x * x - 1.5 * x * y + 2.0 * y * y
    A = np.array([[0.6, 0.1], [0.05, 0.4]])
    geo = ElementGeometry(affine_element(A, [0.2, 0.3]), hessian=True)
    vals = f(*geo.coords[0].T)
    H = np.einsum("n,qnij->qij", vals, geo.d2Ndx2[0])
    assert np.allclose(H, [[1.0, -1.5], [-1.5, 4.0]], atol=1e-10)


def test_min_jacobian_flags_inverted_element():
    X = Q2_NODES.copy()
    assert min_jacobian(X[None])[0] == pytest.approx(1.0)
    X[8] = [0.95, 0.95]  # center pushed into a corner
    assert min_jacobian(X[None])[0] <= 0


def test_geometry_complex_coordinates_pass_through():
    X = Q2_NODES.astype(complex)
    X[8, 0] += 1e-20j
    geo = ElementGeometry(X[None], QUAD)
    assert np.iscomplexobj(geo.detJ)

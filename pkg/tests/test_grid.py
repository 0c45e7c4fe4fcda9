"""Mesh, field, truncation, quadrature and norm checks.

Expected values are frozen from closed forms computed independently of the
implementation: int_0^1 sin^2(pi x) = 1/2, int_0^1 (pi cos pi x)^2 = pi^2/2,
int_0^1 (1+x)^-2 = 1/2, and hand-expanded affine integrals.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from varlab.grid import (
    DiscreteField,
    build_interval_grid,
    build_rect_grid,
    element_gradient,
    element_gradients,
    field_from_values,
    integrate_at_quadrature,
    interpolate,
    norm,
    tail,
    truncate,
    values_at_quadrature,
    weighted_grad_l2,
    zero_field,
)

# ---------------------------------------------------------------- builders


def test_interval_grid_basic():
    g = build_interval_grid(0.0, 1.0, 4)
    assert g.n_nodes == 5
    assert g.n_elements == 4
    assert g.dimension == 1
    np.testing.assert_allclose(g.nodes[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(g.boundary_mask, [True, False, False, False, True])
    assert g.measure == pytest.approx(1.0, abs=1e-15)


def test_interval_grid_smallest():
    g = build_interval_grid(0.0, 1.0, 1)
    assert g.n_elements == 1
    assert g.interior_index.size == 0


@pytest.mark.parametrize("a,b,cells", [(0.0, 1.0, 0), (1.0, 1.0, 4), (2.0, 1.0, 4)])
def test_interval_grid_rejects(a, b, cells):
    with pytest.raises(ValueError):
        build_interval_grid(a, b, cells)


def test_rect_grid_counts():
    g = build_rect_grid(1, 1, 1.0, 1.0)
    assert g.n_nodes == 4
    assert g.n_elements == 2
    assert g.interior_index.size == 0

    g = build_rect_grid(2, 2, 1.0, 1.0)
    assert g.n_nodes == 9
    assert g.n_elements == 8
    assert g.interior_index.size == 1
    assert g.measure == pytest.approx(1.0, abs=1e-15)


def test_rect_grid_boundary_mask_is_topological():
    g = build_rect_grid(3, 2, 2.0, 1.0)
    on_edge = (
        np.isclose(g.nodes[:, 0], 0.0) | np.isclose(g.nodes[:, 0], 2.0)
        | np.isclose(g.nodes[:, 1], 0.0) | np.isclose(g.nodes[:, 1], 1.0)
    )
    np.testing.assert_array_equal(g.boundary_mask, on_edge)


@pytest.mark.parametrize("args", [(0, 2, 1.0, 1.0), (2, 2, -1.0, 1.0), (2, 2, 1.0, 0.0)])
def test_rect_grid_rejects(args):
    with pytest.raises(ValueError):
        build_rect_grid(*args)


def test_quadrature_rule_contract():
    for g in (build_interval_grid(0, 1, 3), build_rect_grid(2, 2, 1, 1)):
        w = g.quadrature.weights
        assert np.all(w > 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(g.quad_weights.sum(axis=1), g.element_measures)


def test_quadrature_degree2_exact_on_coordinates():
    # int_0^1 x^2 dx = 1/3 on segments; int over unit square of x^2 and x*y.
    g1 = build_interval_grid(0.0, 1.0, 1)
    x = g1.quad_coords[..., 0]
    assert integrate_at_quadrature(g1, x**2) == pytest.approx(1 / 3, rel=1e-15)

    g2 = build_rect_grid(1, 1, 1.0, 1.0)
    x, y = g2.quad_coords[..., 0], g2.quad_coords[..., 1]
    assert integrate_at_quadrature(g2, x**2) == pytest.approx(1 / 3, rel=1e-14)
    assert integrate_at_quadrature(g2, x * y) == pytest.approx(1 / 4, rel=1e-14)


# ---------------------------------------------------------------- fields


def test_interpolate_pins_boundary():
    g = build_interval_grid(0.0, 1.0, 4)
    v = interpolate(g, lambda p: p[:, 0])
    np.testing.assert_allclose(v.values, [0.0, 0.25, 0.5, 0.75, 0.0])
    assert v.zero_trace


def test_interpolate_zero():
    g = build_rect_grid(2, 2, 1.0, 1.0)
    v = interpolate(g, lambda p: np.zeros(p.shape[0]))
    assert norm(v, "Linf") == 0.0


def test_field_shape_rejected():
    g = build_interval_grid(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        DiscreteField(g, np.zeros(7))
    with pytest.raises(ValueError):
        DiscreteField(g, np.array([0.0, 1.0, np.nan, 1.0, 0.0]))


def test_field_from_values_pins():
    g = build_interval_grid(0.0, 1.0, 2)
    v = field_from_values(g, [5.0, 2.0, -3.0])
    np.testing.assert_allclose(v.values, [0.0, 2.0, 0.0])


def test_interpolated_sine_l2_matches_half():
    g = build_interval_grid(0.0, 1.0, 64)
    v = interpolate(g, lambda p: np.sin(np.pi * p[:, 0]))
    assert norm(v, "L2") == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-3)


# ------------------------------------------------------- truncation algebra


def test_truncate_tail_examples():
    g = build_interval_grid(0.0, 1.0, 4)
    v = field_from_values(g, [0.0, -3.0, 0.5, 2.0, 0.0])
    t = truncate(v, 1.0)
    r = tail(v, 1.0)
    np.testing.assert_allclose(t.values, [0.0, -1.0, 0.5, 1.0, 0.0])
    np.testing.assert_allclose(r.values, [0.0, -2.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(t.values + r.values, v.values)
    with pytest.raises(ValueError):
        truncate(v, -1.0)


interval_fields = arrays(
    dtype=float,
    shape=9,
    elements=st.floats(-50.0, 50.0, allow_nan=False, allow_infinity=False),
)


@given(vals=interval_fields, k=st.floats(0.0, 60.0))
@settings(max_examples=200, deadline=None)
def test_truncation_algebra(vals, k):
    g = build_interval_grid(0.0, 1.0, 8)
    v = field_from_values(g, vals)
    t, r = truncate(v, k), tail(v, k)
    np.testing.assert_allclose(t.values + r.values, v.values, rtol=0, atol=0)
    assert norm(t, "Linf") <= k * (1 + 1e-15)
    inside = np.abs(v.values) <= k
    assert np.all(r.values[inside] == 0.0)


@given(vals=interval_fields, k=st.floats(0.0, 60.0))
@settings(max_examples=200, deadline=None)
def test_quadratic_truncation_identity(vals, k):
    # s^2 - T_k(s)^2 >= G_k(s)^2 pointwise: at nodes, and at quadrature points
    # of the interpolated field (clamp composed after interpolation).
    g = build_interval_grid(0.0, 1.0, 8)
    v = field_from_values(g, vals)
    for s in (v.values, values_at_quadrature(v)):
        ts = np.clip(s, -k, k)
        gs = s - ts
        assert np.all(s**2 - ts**2 >= gs**2 - 1e-9 * (1.0 + s**2))


@given(vals=interval_fields, k=st.floats(0.0, 40.0))
@settings(max_examples=200, deadline=None)
def test_norm_monotone_under_truncation_1d(vals, k):
    g = build_interval_grid(0.0, 1.0, 8)
    v = field_from_values(g, vals)
    t = truncate(v, k)
    assert norm(t, "W11_semi") <= norm(v, "W11_semi") * (1 + 1e-12) + 1e-12
    assert norm(t, "H1_semi") <= norm(v, "H1_semi") * (1 + 1e-12) + 1e-12


@given(
    vals=arrays(dtype=float, shape=16,
                elements=st.floats(-20.0, 20.0, allow_nan=False)),
    k=st.floats(0.0, 25.0),
)
@settings(max_examples=100, deadline=None)
def test_norm_monotone_under_truncation_2d(vals, k):
    g = build_rect_grid(3, 3, 1.0, 1.0)
    v = field_from_values(g, vals)
    t = truncate(v, k)
    assert norm(t, "W11_semi") <= norm(v, "W11_semi") * (1 + 1e-12) + 1e-12
    assert norm(t, "H1_semi") <= norm(v, "H1_semi") * (1 + 1e-12) + 1e-12


# ---------------------------------------------------------------- gradients


def test_gradient_of_ramp_is_one():
    g = build_interval_grid(0.0, 1.0, 5)
    ramp = DiscreteField(g, g.nodes[:, 0].copy())  # analytic probe, not zero-trace
    for e in range(g.n_elements):
        np.testing.assert_allclose(element_gradient(ramp, e), [1.0], atol=1e-14)


def test_gradient_of_zero_field():
    g = build_rect_grid(2, 2, 1.0, 1.0)
    np.testing.assert_allclose(element_gradients(zero_field(g)), 0.0)


def test_gradient_out_of_range():
    g = build_interval_grid(0.0, 1.0, 2)
    with pytest.raises(IndexError):
        element_gradient(zero_field(g), 2)


def test_triangle_gradients_match_affine_solve():
    # Independent oracle: fit the plane a*x + b*y + c through the three
    # vertices of each triangle and compare slopes.
    g = build_rect_grid(2, 2, 1.0, 1.0)
    v = DiscreteField(g, g.nodes[:, 0] * g.nodes[:, 1])
    grads = element_gradients(v)
    for e in range(g.n_elements):
        pts = g.nodes[g.elements[e]]
        A = np.column_stack([pts, np.ones(3)])
        coef = np.linalg.solve(A, v.values[g.elements[e]])
        np.testing.assert_allclose(grads[e], coef[:2], atol=1e-13)


# ---------------------------------------------------------------- norms


def test_norms_of_zero_field():
    g = build_interval_grid(0.0, 1.0, 6)
    z = zero_field(g)
    for which in ("L1", "L2", "Linf", "W11_semi", "H1_semi"):
        assert norm(z, which) == 0.0


def test_ramp_seminorms_are_one():
    g = build_interval_grid(0.0, 1.0, 7)
    ramp = DiscreteField(g, g.nodes[:, 0].copy())
    assert norm(ramp, "W11_semi") == pytest.approx(1.0, rel=1e-14)
    assert norm(ramp, "H1_semi") == pytest.approx(1.0, rel=1e-14)


def test_unknown_norm_rejected():
    g = build_interval_grid(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        norm(zero_field(g), "L3")


def test_sine_h1_seminorm_squared():
    g = build_interval_grid(0.0, 1.0, 128)
    v = interpolate(g, lambda p: np.sin(np.pi * p[:, 0]))
    assert norm(v, "H1_semi") ** 2 == pytest.approx(np.pi**2 / 2, abs=1e-3)


def test_affine_l2_quadrature_exact_1d():
    # int_0^1 x^2 dx = 1/3 exactly for the ramp interpolant.
    g = build_interval_grid(0.0, 1.0, 4)
    ramp = DiscreteField(g, g.nodes[:, 0].copy())
    assert norm(ramp, "L2") ** 2 == pytest.approx(1 / 3, rel=1e-12)


def test_affine_l2_quadrature_exact_2d():
    # v = x + 2y - 0.3 on the unit square:
    # int v^2 = 1/3 + 4/3 + 9/100 + 1 - 3/10 - 3/5  (expanded by hand)
    exact = 1 / 3 + 4 / 3 + 9 / 100 + 1 - 3 / 10 - 3 / 5
    g = build_rect_grid(3, 2, 1.0, 1.0)
    v = DiscreteField(g, g.nodes[:, 0] + 2 * g.nodes[:, 1] - 0.3)
    assert norm(v, "L2") ** 2 == pytest.approx(exact, rel=1e-12)


@given(vals=interval_fields)
@settings(max_examples=200, deadline=None)
def test_holder_consistency(vals):
    g = build_interval_grid(0.0, 2.0, 8)
    v = field_from_values(g, vals)
    w11 = norm(v, "W11_semi")
    h1 = norm(v, "H1_semi")
    assert w11**2 <= g.measure * h1**2 * (1 + 1e-10) + 1e-30


# ----------------------------------------------------- weighted gradient L2


def test_weighted_grad_l2_zero_field():
    g = build_interval_grid(0.0, 1.0, 8)
    ones = np.ones_like(g.quad_weights)
    assert weighted_grad_l2(zero_field(g), ones) == 0.0


@given(vals=interval_fields)
@settings(max_examples=100, deadline=None)
def test_weighted_grad_l2_collapses_without_damping(vals):
    g = build_interval_grid(0.0, 1.0, 8)
    v = field_from_values(g, vals)
    zeros = np.zeros_like(g.quad_weights)
    np.testing.assert_allclose(
        weighted_grad_l2(v, zeros), norm(v, "H1_semi") ** 2, rtol=1e-12, atol=1e-30)


def test_weighted_grad_l2_ramp_against_closed_form():
    # v = x, b = 1 on (0,1): int 1/(1+x)^2 dx = 1/2.
    g = build_interval_grid(0.0, 1.0, 64)
    ramp = DiscreteField(g, g.nodes[:, 0].copy())
    ones = np.ones_like(g.quad_weights)
    assert weighted_grad_l2(ramp, ones) == pytest.approx(0.5, abs=1e-6)


def test_weighted_grad_l2_shape_mismatch():
    g = build_interval_grid(0.0, 1.0, 4)
    with pytest.raises(ValueError):
        weighted_grad_l2(zero_field(g), np.ones((2, 2)))

import math

import numpy as np
import pytest

from helmsense import shape, states
from helmsense.geometry import (Domain, TransportMap, bubble_field_1d, dilation_field, quadratic_field_2d,
                                rotation_field, zero_field)
from helmsense.mesh import generate_mesh

RECT = Domain.rectangle((0, 0), (1.5, 1))
I1 = Domain.interval(-1, 1)


def rect_data():
    return states.ProblemData(
        3.0,
        states.quadratic([[2, 0.5], [0.5, -1]], [1, 0.5], 1.0),
        states.quadratic([[1, 0.3], [0.3, -0.5]], [0.2, -0.1]),
        states.sine_product(2, 2.0, 0.4, shift=0.1),
    )


@pytest.fixture(scope="module")
def rect_mesh():
    return generate_mesh(RECT, 0.1)


def test_zero_velocity_gives_exact_zeros(rect_mesh):
    rep = shape.shape_derivative(rect_mesh, rect_data(), zero_field(2), [1e-1, 1e-2])
    assert rep.dJ == 0.0
    assert all(v == 0.0 for v in rep.breakdown.values())
    assert all(R == 0.0 for _, R in rep.remainder)
    assert all(q == 0.0 for _, q in rep.finite_difference)


def test_objective_equals_lagrangian_at_the_state(rect_mesh):
    data = rect_data()
    tm = TransportMap(rotation_field((0.4, 0.3), 0.5))
    eta0 = states.solve_direct(rect_mesh, data)
    p0 = states.solve_adjoint(rect_mesh, data, eta0)
    for s in (0.0, 0.05):
        eta_s = states.solve_direct_pullback(rect_mesh, data, tm, s)
        J = shape.pulled_back_J(rect_mesh, data, tm, s, eta_s)
        L = shape.lagrangian(rect_mesh, data, tm, s, eta_s, p0)
        assert L == pytest.approx(J, abs=1e-11)
    assert shape.pulled_back_J(rect_mesh, data, tm, 0.0, eta0) == pytest.approx(shape.eval_J(rect_mesh, eta0, data))


def test_remainder_expansion_matches_definition(rect_mesh):
    data = rect_data()
    V = rotation_field((0.4, 0.3), 0.5)
    for (s, R) in shape.remainder_R_shape(rect_mesh, data, V, [0.1, 0.01]):
        assert R == pytest.approx(shape.remainder_by_definition(rect_mesh, data, V, s), abs=1e-11)


def test_derivative_is_linear_in_velocity(rect_mesh):
    data = rect_data()
    V1 = rotation_field((0.4, 0.3), 0.5)
    V2 = quadratic_field_2d([[0.1, 0.2, 0.0, 0.3, 0.1, 0.0], [0.0, 0.1, -0.2, 0.0, 0.2, 0.1]])
    d1 = shape.shape_derivative(rect_mesh, data, V1).dJ
    d2 = shape.shape_derivative(rect_mesh, data, V2).dJ
    assert shape.shape_derivative(rect_mesh, data, V1 + V2).dJ == pytest.approx(d1 + d2, abs=1e-12)
    assert shape.shape_derivative(rect_mesh, data, V2.scaled(-3.0)).dJ == pytest.approx(-3 * d2, abs=1e-12)


def test_dilation_in_1d_matches_finite_differences():
    m = generate_mesh(I1, 2.0 ** -6)
    data = states.example_1d(2.0, A=0.5)
    rep = shape.shape_derivative(m, data, dilation_field(1), [1e-1, 1e-2, 1e-3, 1e-4], I1)
    fd = dict(rep.finite_difference)
    assert abs(fd[1e-3] - rep.dJ) <= 1e-2 * abs(rep.dJ)
    assert rep.slopes["fd_error"] >= 0.9
    assert abs(rep.remainder[-1][1]) <= 1e-3 * max(1, abs(rep.dJ))


def test_odd_data_with_even_bubble_has_zero_derivative():
    # eta0, p0, f and eta_d are odd, V = 1 - x^2 is even: every term integrates an odd function
    m = generate_mesh(I1, 2.0 ** -6)
    rep = shape.shape_derivative(m, states.example_1d(2.0), bubble_field_1d())
    assert abs(rep.dJ) < 1e-12


def test_coercivity_margin():
    margin, c = shape.coercivity_margin(I1, 1.0, 1.0)
    assert c == pytest.approx(2 / math.pi)
    assert margin == pytest.approx(1 - 2 / math.pi)
    m = generate_mesh(I1, 2.0 ** -4)
    rep = shape.shape_derivative(m, states.example_1d(2.0), dilation_field(1), [0.1, 0.01], I1)
    assert rep.beta == pytest.approx(1.1)
    assert rep.coercivity_margin == pytest.approx(1 - 4 * (2 / math.pi) * 1.1)

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biphasic.exceptions import UnsupportedElement
from biphasic.fem import (
    FieldFunction,
    build_space,
    div_l2,
    h1_norm,
    h1_seminorm,
    interpolate,
    l2_norm,
    symmetric_gradient_at,
)
from biphasic.mesh import generate_unit_ball, generate_unit_square
from biphasic.quadrature import simplex_rule


def test_dof_counts():
    m1, m2 = generate_unit_square(1), generate_unit_square(2)
    assert build_space(m1, "P1", 1).n_dofs == 4
    assert build_space(m1, "P1", 2, constrained=True).n_dofs == 0
    assert build_space(m2, "P1", 1, constrained=True).n_dofs == 1
    # P2 adds one node per edge: 9 vertices + 16 edges
    assert build_space(m2, "P2", 1).n_dofs == 25
    assert build_space(m2, "P2", 2, constrained=True).n_dofs == 2 * (25 - 16)


def test_unsupported_family():
    with pytest.raises(UnsupportedElement):
        build_space(generate_unit_square(1), "P3")


def test_constrained_space_vanishes_on_boundary():
    m = generate_unit_square(3)
    sp = build_space(m, "P2", 2, constrained=True)
    u = interpolate(sp, lambda x: np.ones_like(x))
    vals = u.nodal_values()
    assert np.all(vals[sp.boundary_nodes] == 0)


def test_zero_interpolant():
    sp = build_space(generate_unit_square(2), "P2", 2)
    assert not interpolate(sp, lambda x: np.zeros_like(x)).coefficients.any()


@pytest.mark.parametrize("family, f", [
    ("P1", lambda x: 2 * x[:, 0] - 3 * x[:, 1] + 0.5),
    ("P2", lambda x: x[:, 0] ** 2 - x[:, 0] * x[:, 1] + 3 * x[:, 1]),
])
def test_interpolant_exact_at_quadrature(family, f):
    m = generate_unit_square(3)
    u = interpolate(build_space(m, family), f)
    bary, _ = simplex_rule(2, 5)
    vals, _ = u.at_quadrature(bary)
    x = np.einsum("qk,mkx->mqx", bary, m.vertices[m.cells]).reshape(-1, 2)
    assert np.allclose(vals.reshape(-1), f(x), atol=1e-13)


def test_norm_examples():
    m = generate_unit_square(4)
    one = interpolate(build_space(m, "P1"), lambda x: np.ones(len(x)))
    assert l2_norm(one) == pytest.approx(1.0, rel=1e-14)
    assert h1_seminorm(one) == pytest.approx(0.0, abs=1e-13)
    u = interpolate(build_space(m, "P2", 2), lambda x: np.c_[x[:, 0], 0 * x[:, 0]])
    assert div_l2(u) == pytest.approx(1.0, rel=1e-13)
    assert l2_norm(u) == pytest.approx(math.sqrt(1 / 3), rel=1e-13)
    assert h1_norm(u) == pytest.approx(math.sqrt(4 / 3), rel=1e-13)


def test_constant_on_disk_tends_to_sqrt_pi():
    errs = []
    for n in (1, 2, 3):
        one = interpolate(build_space(generate_unit_ball(n, 2), "P1"), lambda x: np.ones(len(x)))
        errs.append(abs(l2_norm(one) - math.sqrt(math.pi)))
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 0.01


@pytest.mark.parametrize("f, expected", [
    (lambda x: np.c_[-x[:, 1], x[:, 0]], [[0, 0], [0, 0]]),
    (lambda x: np.c_[x[:, 0], 0 * x[:, 0]], [[1, 0], [0, 0]]),
    (lambda x: np.c_[x[:, 1], 0 * x[:, 0]], [[0, 0.5], [0.5, 0]]),
])
def test_symmetric_gradient(f, expected):
    m = generate_unit_square(2)
    u = interpolate(build_space(m, "P2", 2), f)
    x = np.array([0.3, 0.6])
    cell = m.locate(x[None])[0]
    assert np.allclose(symmetric_gradient_at(u, cell, x), expected, atol=1e-13)


@pytest.mark.parametrize("p", [1, 2])
def test_interpolation_error_order(p):
    fam = f"P{p}"
    errs, hs = [], []
    for n in (4, 8, 16):
        m = generate_unit_square(n)
        sp = build_space(m, fam)
        u = interpolate(sp, lambda x: np.sin(np.pi * x[:, 0]) * np.cos(2 * x[:, 1]))
        bary, w = simplex_rule(2, 8)
        vals, _ = u.at_quadrature(bary)
        x = np.einsum("qk,mkx->mqx", bary, m.vertices[m.cells])
        exact = np.sin(np.pi * x[..., 0]) * np.cos(2 * x[..., 1])
        err = np.sqrt(np.einsum("q,m,mq->", w, m.volumes, (vals[..., 0] - exact) ** 2))
        errs.append(err)
        hs.append(m.h)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert rate == pytest.approx(p + 1, abs=0.2)


coeffs = st.lists(st.floats(-10, 10), min_size=18, max_size=18)


@settings(max_examples=30)
@given(coeffs, coeffs, st.floats(-5, 5).filter(lambda c: c == 0 or abs(c) > 1e-100))
def test_norm_homogeneity_and_triangle(a, b, c):
    sp = build_space(generate_unit_square(2), "P1", 2)
    u, v = FieldFunction(sp, a), FieldFunction(sp, b)
    assert l2_norm(c * u) == pytest.approx(abs(c) * l2_norm(u), rel=1e-12, abs=1e-300)
    assert l2_norm(u + v) <= l2_norm(u) + l2_norm(v) + 1e-12
    assert h1_norm(u + v) <= h1_norm(u) + h1_norm(v) + 1e-12


def test_point_evaluation_outside_is_nan():
    u = interpolate(build_space(generate_unit_square(2), "P1"), lambda x: x[:, 0])
    out = u(np.array([[0.25, 0.5], [3.0, 0.0]]))
    assert out[0, 0] == pytest.approx(0.25)
    assert np.isnan(out[1, 0])

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biphasic.exceptions import DimensionMismatch, LossOfPositivity
from biphasic.resistivity import (
    Bounds,
    Constant,
    DilatationAffine,
    DisplacementAnisotropic,
    Truncated,
    check_spd,
    verify_structure,
    with_bounds,
)


def test_dilatation_at_zero_is_identity():
    assert np.array_equal(DilatationAffine(1.0, 2e-3).eval(0.0, 3), np.eye(3))


def test_anisotropic_hand_expansion():
    K = DisplacementAnisotropic(1.0, 0.5, 0.1).eval(np.array([1.0, 0.0]))
    assert np.allclose(K, np.diag([1.6, 1.1]), rtol=0, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
def test_anisotropic_at_zero_exact(d):
    K = DisplacementAnisotropic(0.7, 0.2, 0.3).eval(np.zeros(d))
    assert np.array_equal(K, 0.3 * np.eye(d))


def test_truncated_constant():
    K = Truncated(Constant(np.diag([0.3, 1.4])), 1.0).eval(np.zeros(2))
    assert np.array_equal(K, np.diag([0.3, 1.0]))


def test_truncation_inactive_above_k2():
    inner = Constant(np.array([[2.0, 0.5], [0.5, 1.0]]))
    k2 = inner.declared.k2
    rng = np.random.default_rng(1)
    x = rng.standard_normal((50, 2))
    assert np.array_equal(Truncated(inner, k2).eval(x), inner.eval(x))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        DisplacementAnisotropic(1, 1, 1).eval(1.0)
    with pytest.raises(DimensionMismatch):
        Constant.identity(2).eval(np.zeros(3))
    with pytest.raises(DimensionMismatch):
        DilatationAffine(1.0, 1.0).eval(0.5)


def test_check_spd():
    check_spd(np.eye(2)[None])
    with pytest.raises(LossOfPositivity):
        check_spd(DilatationAffine(1.0, 1.0).eval(np.array([-2.0]), 2))


def test_structure_constant_identity():
    r = verify_structure(Constant.identity(2), 200)
    assert r.k1_hat == 1.0 and r.k2_hat == pytest.approx(1.0) and r.kL_hat == 0.0
    assert r.ok


@pytest.mark.parametrize("d", [2, 3])
def test_structure_dilatation_lipschitz(d):
    r = verify_structure(DilatationAffine(1.0, 2e-3), 500, 10.0, dim=d)
    assert r.kL_hat <= 2e-3 * math.sqrt(d) + 1e-10
    r = verify_structure(DilatationAffine(1.0, 2e-3), 500, 10.0, dim=d, norm="fro")
    assert r.kL_hat <= 2e-3 * math.sqrt(d) + 1e-10


def test_structure_anisotropic_eigenvalues_and_bounds():
    model = DisplacementAnisotropic(1.0, 0.5, 0.1)
    r = verify_structure(model, 2000, 3.0, dim=3)
    assert r.k1_hat >= 0.1 - 1e-12
    assert r.ok, r.contradictions
    # brute-force eigen decomposition over an independent sample
    rng = np.random.default_rng(7)
    U = rng.standard_normal((500, 3)) * 2
    assert np.linalg.eigvalsh(model.eval(U)).min() >= 0.1 - 1e-12


def test_structure_reports_contradiction():
    wrong = with_bounds(DisplacementAnisotropic(1.0, 0.5, 0.1), k_L=0.01)
    r = verify_structure(wrong, 500, 2.0)
    assert any(c.startswith("k_L") for c in r.contradictions)


def test_truncated_bounds_for_off_diagonal_law():
    inner = Constant(np.ones((2, 2)) + np.eye(2))
    # entrywise capping leaves [[1, 1], [1, 1]]: singular, norm 2 > m
    tr = Truncated(inner, 1.0)
    assert tr.declared.k2 is None and tr.declared.k1 is None
    iso = Truncated(DisplacementAnisotropic(1.0, 1.0, 0.5), 3.0)
    assert iso.declared.k2 == 3.0 and iso.declared.k1 == 0.5


def test_declared_override():
    m = with_bounds(DilatationAffine(1.0, 2e-3), k1=0.5, k2=1.4)
    assert m.declared == Bounds(k1=0.5, k2=1.4, k_L=2e-3, k0=1.0)


vec3 = arrays(np.float64, (20, 3), elements=st.floats(-1e3, 1e3))
vec2 = arrays(np.float64, (20, 2), elements=st.floats(-1e3, 1e3))
pos = st.floats(1e-3, 10.0)
nonneg = st.floats(0.0, 10.0)


def _sym_err(K):
    return np.abs(K - np.swapaxes(K, -1, -2)).max() / max(np.abs(K).max(), 1e-300)


@settings(max_examples=60)
@given(st.one_of(vec2, vec3), nonneg, nonneg, pos, pos)
def test_every_model_symmetric(U, a, b, c, m):
    d = U.shape[1]
    models = [
        DisplacementAnisotropic(a, b, c),
        Truncated(DisplacementAnisotropic(a, b, c), m),
        Constant.identity(d, c),
    ]
    for model in models:
        assert _sym_err(model.eval(U)) <= 1e-14
    dil = DilatationAffine(c, b)
    assert _sym_err(dil.eval(U[:, 0], d)) <= 1e-14
    assert _sym_err(Truncated(dil, m).eval(U[:, 0], d)) <= 1e-14


@settings(max_examples=60)
@given(st.one_of(vec2, vec3), nonneg, nonneg, pos, pos)
def test_truncated_entries_bounded(U, a, b, c, m):
    K = Truncated(DisplacementAnisotropic(a, b, c), m).eval(U)
    assert K.max() <= m + 1e-15

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from qlab.oracles import MoreauToolkit, moreau_value
from qlab.oracles.moreau import envelope_objective, optimal_threshold
from qlab.verify import golden_value

vec8 = arrays(np.float64, 8, elements=st.floats(-100, 100, allow_nan=False))
xis = st.sampled_from([0.1, 0.25, 1.0])


def test_zero_vector():
    mv = moreau_value(np.zeros(5), 0.25)
    assert mv.value == 0.0 and mv.m_norm == 0.0
    assert np.array_equal(mv.grad, np.zeros(5))


@pytest.mark.parametrize("c", [-3.0, 0.5, 2.0, 1e3])
@pytest.mark.parametrize("xi", [0.1, 0.25, 1.0])
def test_one_dimensional_closed_form(c, xi):
    mv = moreau_value(np.array([c]), xi)
    assert mv.value == pytest.approx(c * c / (2 * (1 + xi)), rel=1e-14)
    assert mv.threshold == pytest.approx(abs(c) / (1 + xi), rel=1e-14)


def test_rejects_nonpositive_xi():
    with pytest.raises(ValueError):
        moreau_value(np.ones(3), 0.0)


def test_segment_scan_matches_golden_section():
    rng = np.random.default_rng(0)
    for _ in range(200):
        q = rng.normal(scale=10 ** rng.uniform(-2, 1), size=8)
        assert moreau_value(q, 0.25).value == pytest.approx(golden_value(q, 0.25), abs=1e-10)


@given(vec8, xis)
def test_threshold_minimises_objective(q, xi):
    m = optimal_threshold(q, xi)
    g = envelope_objective(q, xi, m)
    top = float(np.abs(q).max())
    for other in np.linspace(0, top, 41):
        assert g <= envelope_objective(q, xi, float(other)) * (1 + 1e-12) + 1e-12


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    h = 1e-6
    checked = 0
    for _ in range(100):
        q = rng.normal(size=6)
        xi = 0.25
        mv = moreau_value(q, xi)
        a = np.sort(np.abs(q))
        # skip vectors whose threshold sits within a step of a breakpoint
        if np.min(np.abs(a - mv.threshold)) < 1e-4 or np.min(np.diff(a)) < 1e-4:
            continue
        fd = np.empty(6)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h
            fd[i] = (moreau_value(q + e, xi).value - moreau_value(q - e, xi).value) / (2 * h)
        assert np.allclose(fd, mv.grad, rtol=1e-4, atol=1e-8)
        checked += 1
    assert checked > 50


@given(vec8, vec8, xis)
def test_smoothness(x, y, xi):
    mx, my = moreau_value(x, xi), moreau_value(y, xi)
    diff = y - x
    assert my.value <= mx.value + mx.grad @ diff + diff @ diff / xi + 1e-9 * (1 + mx.value + my.value)


@given(vec8, xis)
def test_norm_equivalence(q, xi):
    kit = MoreauToolkit(xi, 8)
    mv = moreau_value(q, xi)
    inf = float(np.abs(q).max())
    tol = 1e-9 * (1 + inf)
    assert kit.l_im * mv.m_norm <= inf + tol
    assert inf <= kit.u_im * mv.m_norm + tol


@given(vec8, vec8, xis)
def test_gradient_inner_products(q, p, xi):
    mq, mp = moreau_value(q, xi), moreau_value(p, xi)
    scale = 1e-9 * (1 + mq.m_norm * (1 + mp.m_norm))
    assert mq.grad @ q >= mq.m_norm**2 - scale
    assert mq.grad @ p <= mq.m_norm * mp.m_norm + scale


def test_toolkit_constants():
    kit = MoreauToolkit(0.25, 4)
    assert kit.l_it == 0.5 and kit.u_it == 1.0
    assert kit.l_im == pytest.approx(math.sqrt(1 + 0.25 * 0.25))
    assert kit.u_im == pytest.approx(math.sqrt(1.25))


def test_for_contraction_makes_coefficient_positive():
    kit = MoreauToolkit.for_contraction(8, 0.999)
    assert kit.descent_coefficient(0.999) > 0
    assert kit.xi <= 0.25
    assert MoreauToolkit.for_contraction(8, 0.5).xi == 0.25
    with pytest.raises(ValueError):
        MoreauToolkit.for_contraction(8, 1.0)

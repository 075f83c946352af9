"""Property-based checks of the algebraic invariants."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riesz_flow import (J_m, apply, build_intertwining_kernel, build_sphere,
                        dual_Q, kelvin, separable_solution,
                        total_Q_functional)

SIGMA = 0.25
GEO = build_sphere(1, 32)
KER = build_intertwining_kernel(GEO, SIGMA)
MC = KER.m_critical

scales = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)
seeds = st.integers(min_value=0, max_value=2 ** 31)
exponents = st.floats(min_value=0.4, max_value=3.0).filter(lambda m: abs(m - 1) > 1e-3)


def field(seed):
    rng = np.random.default_rng(seed)
    return 0.5 + rng.random(GEO.size)


@settings(max_examples=40, deadline=None)
@given(c=scales, seed=seeds, m=exponents)
def test_quotient_scale_invariance(c, seed, m):
    f = field(seed)
    assert J_m(KER, c * f, m) == pytest.approx(J_m(KER, f, m), rel=1e-11)


@settings(max_examples=40, deadline=None)
@given(c=scales, seed=seeds)
def test_dual_q_homogeneity(c, seed):
    u = field(seed)
    ref = c ** (1.0 - MC) * dual_Q(KER, u).values
    assert np.allclose(dual_Q(KER, c * u).values, ref, rtol=1e-11)


@settings(max_examples=40, deadline=None)
@given(c=scales, seed=seeds)
def test_total_q_scale_invariance(c, seed):
    u = field(seed)
    assert total_Q_functional(KER, c * u) == pytest.approx(
        total_Q_functional(KER, u), rel=1e-11)


@settings(max_examples=40, deadline=None)
@given(seed=seeds)
def test_bilinear_symmetry(seed):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(GEO.size), rng.standard_normal(GEO.size)
    w = GEO.weights
    lhs = np.dot(w * g, apply(KER, f))
    rhs = np.dot(w * f, apply(KER, g))
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-13)


@settings(max_examples=40, deadline=None)
@given(lam=st.floats(min_value=0.2, max_value=5.0),
       x0=st.floats(min_value=-2.0, max_value=2.0),
       x=st.floats(min_value=-8.0, max_value=8.0))
def test_kelvin_involution(lam, x0, x):
    if abs(x - x0) < 1e-3:
        return
    v = lambda p: (2.0 / (1.0 + np.sum(p * p, axis=-1))) ** 0.25
    kk = kelvin(kelvin(v, np.array([x0]), lam, 1, SIGMA),
                np.array([x0]), lam, 1, SIGMA)
    pt = np.array([[x]])
    assert kk(pt)[0] == pytest.approx(v(pt)[0], rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(m=exponents, c=st.floats(min_value=0.1, max_value=10.0))
def test_separable_initial_value(m, c):
    S = field(3)
    got = separable_solution(S, m, c, 0.0)
    assert np.allclose(got, c ** (1.0 / (m - 1.0)) * S, rtol=1e-12)

import math
from dataclasses import replace

import numpy as np
import pytest

from riesz_flow import (ConfigError, J_m, apply, aubin_check,
                        build_intertwining_kernel, build_power_kernel,
                        build_sphere, bubble, BubbleParams, critical_exponent,
                        hls_constant, pole_constant, rescaled_steady,
                        solve_extremal, steady_from_extremal)
from riesz_flow.steady import SteadySolution

from conftest import SIGMA


def test_scale_invariance(ker64):
    rng = np.random.default_rng(0)
    f = 0.5 + rng.random(64)
    for m in (0.6, 2.0):
        assert J_m(ker64, 7.3 * f, m) == pytest.approx(J_m(ker64, f, m), rel=1e-12)


def test_zero_field_rejected(ker64):
    with pytest.raises(ConfigError):
        J_m(ker64, np.zeros(64), 2.0)


def test_constant_quotient_value(ker256):
    # constants at the critical exponent: (2 pi)^{-3/2} * 2 pi * K(1)
    mc = critical_exponent(1, SIGMA)
    vol = 2 * math.pi
    exact = vol ** (-1.5) * vol * math.gamma(0.25) / math.gamma(0.75)
    assert J_m(ker256, np.ones(256), mc) == pytest.approx(exact, rel=1e-4)


def test_extremal_constant_fixed_point(ker128):
    sol = solve_extremal(ker128, 2.0)
    assert sol.converged and sol.iterations <= 2
    assert np.ptp(sol.S) <= 1e-12 * sol.S.mean()
    assert J_m(ker128, sol.S, 2.0) == pytest.approx(sol.J_bar, rel=1e-12)


def test_uniqueness_across_inits(ker128):
    rng = np.random.default_rng(42)
    sols = []
    for _ in range(10):
        init = 0.5 + rng.random(128)
        sol = solve_extremal(ker128, 2.0, init=init, tol=1e-12)
        assert sol.converged
        sols.append(steady_from_extremal(ker128, sol).S)
    for s in sols[1:]:
        assert np.max(np.abs(s / sols[0] - 1.0)) <= 1e-8


def test_monotone_quotient_along_iteration(ker128):
    rng = np.random.default_rng(3)
    sol = solve_extremal(ker128, 2.0, init=0.5 + rng.random(128))
    hist = sol.J_history
    assert (np.diff(hist[1:]) >= -1e-12 * np.abs(hist[-1])).all()
    assert (sol.S > 0).all()


def test_subunit_exponent_converges(ker128):
    sol = solve_extremal(ker128, 0.6, tol=1e-10)
    assert sol.converged
    assert sol.residual <= 1e-8


def test_steady_from_extremal_scaling(ker64):
    # J_bar = 4, m = 2 rescales the profile by exactly 4
    f = np.ones(64)
    fake = SteadySolution(f, 2.0, 4.0, 0.0, 1, True)
    S = steady_from_extremal(ker64, fake)
    assert np.allclose(S.S, 4.0, rtol=0, atol=0)
    # for a genuinely converged extremal the steady equation holds
    sol = solve_extremal(ker64, 2.0, tol=1e-12)
    S = steady_from_extremal(ker64, sol)
    assert S.residual <= 1e-10
    assert J_m(ker64, S.S, 2.0) == pytest.approx(S.J_bar, rel=1e-12)
    with pytest.raises(ConfigError):
        steady_from_extremal(ker64, SteadySolution(f, 1.0, 2.0, 0.0, 1, True))


def test_rescaled_steady(ker128):
    # m = 1/2 has beta = 1 so phi = S; m = 2 has beta = 2 and the substitution
    # check K(alpha S) = beta (alpha S)^2 forces alpha = 1/2
    sol = solve_extremal(ker128, 0.5, tol=1e-12)
    S = steady_from_extremal(ker128, sol)
    phi = rescaled_steady(ker128, S)
    assert np.array_equal(phi.S, S.S)
    sol2 = solve_extremal(ker128, 2.0, tol=1e-12)
    S2 = steady_from_extremal(ker128, sol2)
    phi2 = rescaled_steady(ker128, S2)
    assert np.allclose(phi2.S, 0.5 * S2.S, rtol=1e-15)
    assert phi2.residual <= 1e-10
    beta = 2.0
    target = beta * phi2.S ** 2
    assert np.max(np.abs(apply(ker128, phi2.S) - target)) <= 1e-10 * target.max()


def test_kernel_scaling_homogeneity(ker64):
    # kernel c*K multiplies J_bar by c and the steady state by c^{1/(m-1)}
    sol1 = steady_from_extremal(ker64, solve_extremal(ker64, 2.0, tol=1e-13))
    kern2 = replace(ker64, matrix=2.0 * ker64.matrix)
    sol2 = steady_from_extremal(kern2, solve_extremal(kern2, 2.0, tol=1e-13))
    assert sol2.J_bar == pytest.approx(2.0 * sol1.J_bar, rel=1e-12)
    assert np.max(np.abs(sol2.S / (2.0 * sol1.S) - 1.0)) <= 1e-12


def test_hls_constant_and_bubble_agreement(geo256, ker256):
    mc = critical_exponent(1, SIGMA)
    hls = hls_constant(geo256, SIGMA)
    vol = 2 * math.pi
    exact = vol ** (-0.5) * math.gamma(0.25) / math.gamma(0.75)
    assert hls == pytest.approx(exact, rel=1e-4)
    ub = bubble(geo256, BubbleParams(geo256.nodes[0].copy(), 2.0, 1.0), SIGMA)
    assert J_m(ker256, ub, mc) == pytest.approx(hls, rel=1e-3)


def test_hls_refinement_stabilizes():
    vals = {N: hls_constant(build_sphere(1, N), SIGMA) for N in (64, 128, 256, 512)}
    d1 = abs(vals[128] - vals[64])
    d2 = abs(vals[256] - vals[128])
    d3 = abs(vals[512] - vals[256])
    assert d3 < d2 < d1


def test_aubin_round_sphere_gap_zero(geo128, ker128):
    rep = aubin_check(ker128, geo128, SIGMA)
    assert rep.gap_sign == 0
    assert abs(rep.gap) <= 1e-6 * rep.hls
    assert np.isfinite(rep.j_bar_errbar) and np.isfinite(rep.hls_errbar)


def test_aubin_amplified_kernel_positive_gap(geo128):
    # J scales linearly with the kernel amplitude, the reference constant is fixed
    c = 1.5 * pole_constant(1, SIGMA)
    kern = build_power_kernel(geo128, SIGMA, lambda X, Y: np.full(
        np.broadcast_shapes(X.shape[:-1], Y.shape[:-1]), c))
    rep = aubin_check(kern, geo128, SIGMA)
    assert rep.gap_sign == 1
    assert rep.j_bar == pytest.approx(1.5 * rep.hls, rel=1e-6)


def test_aubin_total_on_perturbed_kernel(geo128):
    def amp(X, Y):
        return 1.0 + 0.1 * np.cos(np.linalg.norm(X - Y, axis=-1))

    kern = build_power_kernel(geo128, SIGMA, amp)
    rep = aubin_check(kern, geo128, SIGMA)
    assert np.isfinite(rep.j_bar) and np.isfinite(rep.hls)
    assert rep.j_bar_status in ("ok", "max_iter", "concentration")


def test_concentration_guard_at_critical(geo128):
    # amplitude peaked at a point: the critical supremum concentrates and the
    # iteration must stop with the guard instead of chasing a spike
    c = pole_constant(1, SIGMA)
    p = geo128.nodes[0]

    def amp(X, Y):
        dx = np.linalg.norm(X - p, axis=-1)
        dy = np.linalg.norm(Y - p, axis=-1)
        return c * (1.0 + 8.0 * np.exp(-(dx * dx + dy * dy) / 0.005))

    kern = build_power_kernel(geo128, SIGMA, amp)
    sol = solve_extremal(kern, critical_exponent(1, SIGMA), max_iter=1500)
    assert sol.status == "concentration"
    assert not sol.converged
    assert sol.S.max() / sol.S.min() > 1e6
    # the report is still usable best-effort
    rep = aubin_check(kern, geo128, SIGMA)
    assert rep.j_bar_status == "concentration"
    assert rep.gap_sign == 1


def test_bad_inputs(ker64):
    with pytest.raises(ConfigError):
        solve_extremal(ker64, -1.0)
    with pytest.raises(ConfigError):
        solve_extremal(ker64, 2.0, init=np.zeros(64))
    with pytest.raises(ConfigError):
        solve_extremal(ker64, 2.0, damping=1.5)

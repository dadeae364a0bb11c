import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_affine
from ldp_portfolio import (
    DegenerateInfeasible,
    DecaySolution,
    NotAttained,
    Unsolvable,
    Unstable,
    build_rate_curve,
    classify_scalar_case,
    decay_rates,
    eval_F,
    invariant_measure,
    lambda_bar,
    optimal_portfolio,
    solve_p2,
    solve_riccati,
    tilde_beta,
)
from ldp_portfolio.rate import (
    AffinePortfolio,
    P1_at_one,
    dF,
    e_vector,
    left_derivative_at_bar,
    p2_at_one,
    portfolio_at_lambda,
    rate_point,
    scalar_boundary_constant,
)
from ldp_portfolio.riccati import ScalarCase, riccati_coefficients

SQ = math.sqrt(1.125)


def test_E_and_p2_reference(R):
    s = solve_riccati(R, -1.0)
    assert e_vector(R, -1.0, s.P1)[0] == pytest.approx(-0.025, abs=1e-15)
    assert solve_p2(R, s)[0] == pytest.approx(-0.025 / SQ, abs=1e-14)


def test_p2_at_zero_vanishes_even_with_theta2(R):
    m = R.replace(theta2=[0.3])
    assert solve_p2(m, solve_riccati(m, 0.0))[0] == 0.0


def test_p2_unsolvable_at_semistable_point(R):
    with pytest.raises(Unsolvable):
        solve_p2(R, solve_riccati(R, 0.8))


def test_F_reference(R):
    assert eval_F(R, 0.0) == 0.0
    # term by term: 0.00027778 - 0.0025 - 0.5 + 0.5 - 0.0303301
    terms = 0.5 * (0.025 / SQ) ** 2 - 0.5 * 0.5 * 0.1**2 - 0.5 + 0.5 + 0.5 * (1 - SQ)
    assert terms == pytest.approx(-0.0325523, abs=1e-7)
    assert eval_F(R, -1.0) == pytest.approx(terms, abs=1e-14)
    assert eval_F(R, 0.9) == math.inf
    assert eval_F(R, 0.8) == math.inf
    assert eval_F(R, 1.5) == math.inf


def _beta_half(R2):
    # 1 + d (d + 1.6) = 0.5 for d = A1 - r1
    d = (-1.6 + math.sqrt(1.6**2 - 2.0)) / 2
    return R2.replace(A1=[[d]])


def test_lambda_bar(R, R2):
    assert lambda_bar(R) == pytest.approx(0.8, abs=1e-15)
    assert lambda_bar(R.replace(A1=[[0.0]])) == 1.0
    m = _beta_half(R2)
    assert tilde_beta(m) == pytest.approx(0.5)
    assert lambda_bar(m) == 1.0


def _convex(curve):
    # the grid is non-uniform (0 is always inserted), so compare slopes
    lam, F = curve.lambdas[curve.finite], curve.F[curve.finite]
    slopes = np.diff(F) / np.diff(lam)
    return bool(np.all(np.diff(slopes) >= -1e-8 * (1 + np.abs(slopes[1:]))))


@pytest.mark.parametrize("name", ["R", "R2", "R3"])
def test_convexity(name, request):
    m = request.getfixturevalue(name)
    c = build_rate_curve(m, lmin=-4, n=301)
    assert _convex(c)
    assert c.F[c.lambdas == 0.0][0] == 0.0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_convexity_random(seed):
    m = random_affine(np.random.default_rng(seed))
    c = build_rate_curve(m, lmin=-3, n=61)
    assert _convex(c)
    assert abs(eval_F(m, 0.0)) < 1e-12


def test_dF_matches_fine_differences(R2):
    for lam in [-2.0, -0.5, 0.0, 0.3]:
        h = 1e-5
        ref = (eval_F(R2, lam + h) - eval_F(R2, lam - h)) / (2 * h)
        assert dF(R2, lam) == pytest.approx(ref, abs=1e-7)


def test_decay_at_zero_slope(R):
    c = build_rate_curve(R, n=81)
    d = decay_rates(c, dF(R, 0.0))
    assert abs(d.lambda_hat) < 1e-8
    assert abs(d.J_q) < 1e-12 and d.J_q_out == d.J_q_short


def test_decay_outperformance(R):
    c = build_rate_curve(R, n=81)
    d = decay_rates(c, dF(R, 0.0) + 0.3)
    assert d.lambda_hat > 0 and d.J_q_short == 0.0
    assert d.J_q_out == d.J_q > 0


def test_decay_reference(R):
    c = build_rate_curve(R, n=81)
    q = dF(R, -1.0)
    d = decay_rates(c, q)
    assert d.lambda_hat == pytest.approx(-1.0, abs=1e-6)
    assert d.J_q == pytest.approx(-q - eval_F(R, -1.0), abs=1e-10)
    assert d.J_q_short == d.J_q and d.J_q_out == 0.0
    assert d.saddle_certificate < 1e-8


@pytest.mark.parametrize("name", ["R", "R2", "R3"])
def test_tangency(name, request):
    m = request.getfixturevalue(name)
    c = build_rate_curve(m, lmin=-2, n=41)
    grid = c.lambdas[(c.lambdas > -1.9) & (c.lambdas < c.lambda_bar - 0.05)]
    for lam in grid[::4]:
        d = decay_rates(c, dF(m, lam))
        assert d.lambda_hat == pytest.approx(lam, abs=1e-5)


def test_decay_extends_left(R):
    c = build_rate_curve(R, lmin=-1, n=21)
    d = decay_rates(c, dF(R, -6.0))
    assert d.lambda_hat == pytest.approx(-6.0, abs=1e-5)
    with pytest.raises(NotAttained):
        decay_rates(c, dF(R, -6.0), max_extensions=0)


def test_portfolio_at_zero(R):
    p = portfolio_at_lambda(R, 0.0)
    np.testing.assert_allclose(p(np.array([[-1.0], [2.0]])), [[-0.4], [1.1]], atol=1e-15)


def test_optimal_portfolio_negative_lambda(R):
    q = dF(R, -1.5)
    p = optimal_portfolio(R, q)
    assert p.lambda_hat == pytest.approx(-1.5, abs=1e-6)
    assert p.G[0, 0] == pytest.approx(0.5 / (1 - p.lambda_hat), abs=1e-12)


def test_portfolio_roundtrip(R):
    p = portfolio_at_lambda(R, -0.7)
    q = AffinePortfolio.from_dict(p.to_dict())
    np.testing.assert_array_equal(p.G, q.G)
    np.testing.assert_array_equal(p.g0, q.g0)


def _degenerate_model(R):
    return R.replace(A1=[[0.0]], b=[[1.0, 0, 0.5]], a2=[0.5])


def test_degenerate_branch(R):
    m = _degenerate_model(R)
    slope = left_derivative_at_bar(m)
    for extra in [0.0, 0.2]:
        q = slope + extra
        d = decay_rates(build_rate_curve(m, n=41), q)
        assert d.degenerate and d.lambda_hat == 1.0
        p = optimal_portfolio(m, q, decay=d)
        assert p.degenerate
        assert 0.5 * p.vhat_magnitude**2 == pytest.approx(q - slope, abs=1e-12)
        np.testing.assert_allclose(p.base, m.c_inv @ m.b @ m.beta)
        if extra == 0.0:
            np.testing.assert_allclose(p.g0, p.base, atol=1e-12)


def test_degenerate_infeasible(R):
    m = _degenerate_model(R)
    slope = left_derivative_at_bar(m)
    fake = DecaySolution(slope - 0.1, 1.0, 0.0, 0.0, 0.0, True, 0.0, 0.0)
    with pytest.raises(DegenerateInfeasible):
        optimal_portfolio(m, slope - 0.1, decay=fake)


def test_degenerate_z_direction(R):
    m = _degenerate_model(R)
    q = left_derivative_at_bar(m) + 0.5
    p1 = optimal_portfolio(m, q, z=[1.0])
    p2 = optimal_portfolio(m, q, z=[-2.0])
    assert p1.g0[0] - p1.base[0] == pytest.approx(-(p2.g0[0] - p2.base[0]))


def test_beta_equal_one_limits():
    # tilde_beta = 1 with A1 != r1: sigma sigma^T (A1 - r1) = 2 Theta1 sigma b^T
    s2 = math.sqrt(0.84)
    from ldp_portfolio import AffineModel

    def model(a2):
        return AffineModel(
            A1=[[0.8]], a2=[a2], r1=[0.0], r2=0.0, alpha1=[0.0], alpha2=0.0, Theta1=[[-1.0]], theta2=[0.0],
            b=[[1.0, 0, 0]], beta=[0.2, 0, 1.0], sigma=[[-0.4, s2, 0]],
        )

    # choose a2 so that a2 - r2 - b.beta + b sigma^T p2(1) = 0 (affine in a2)
    def defect(a2):
        m = model(a2)
        return a2 - 0.2 + m.sb[0, 0] * p2_at_one(m)

    d0, d1 = defect(0.0), defect(1.0)
    m = model(-d0 / (d1 - d0))
    assert tilde_beta(m) == pytest.approx(1.0, abs=1e-14)
    assert P1_at_one(m) == pytest.approx(-0.8 / -0.4, abs=1e-6)
    assert p2_at_one(m) == pytest.approx(-(m.a2[0] - 0.2) / -0.4, abs=1e-6)
    an = classify_scalar_case(m)
    assert math.isfinite(an.F_at_bar) and math.isfinite(an.left_derivative_at_bar)


def test_boundary_asymptotics(R3):
    c = scalar_boundary_constant(R3)
    assert c == pytest.approx(abs(-1.0) * math.sqrt(0.55) / (2 * 0.64), rel=1e-12)
    F1 = eval_F(R3, 1.0)
    ratio = (F1 - eval_F(R3, 1 - 1e-6)) / 1e-3
    assert ratio == pytest.approx(c, rel=0.01)


def test_invariant_measure_reference(R):
    g = invariant_measure(R, -1.0)
    assert g.mean[0] == pytest.approx(-0.0222222, abs=1e-7)
    assert g.covariance[0, 0] == pytest.approx(1 / (2 * SQ), abs=1e-12)
    assert g.D[0, 0] * g.mean[0] + g.drift_const[0] == pytest.approx(0.0, abs=1e-15)


def test_invariant_measure_at_zero(R2):
    g = invariant_measure(R2, 0.0)
    assert g.mean[0] == 0.0
    assert g.covariance[0, 0] == pytest.approx(R2.sigma_sq[0, 0] / 2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3.0, -0.05))
def test_invariant_measure_lyapunov_random(seed, lam):
    m = random_affine(np.random.default_rng(seed), l=2)
    g = invariant_measure(m, lam)
    res = g.D @ g.covariance + g.covariance @ g.D.T + m.sigma_sq
    assert np.linalg.norm(res) < 1e-10
    assert np.linalg.norm(g.D @ g.mean + g.drift_const) < 1e-10
    assert np.linalg.eigvalsh(g.covariance).min() > 0


def test_invariant_measure_unstable(R2):
    lb = 1 / tilde_beta(R2)
    A, B, _ = riccati_coefficients(R2, lb)
    P = -A / B
    e0 = e_vector(R2.replace(a2=[0.0]), lb, P)[0]
    e1 = e_vector(R2.replace(a2=[1.0]), lb, P)[0]
    m = R2.replace(a2=[-e0 / (e1 - e0)])
    assert classify_scalar_case(m).case is ScalarCase.BetaGt1_Eeq0
    with pytest.raises(Unstable):
        invariant_measure(m, lb)


def test_rate_point_consistency(R2):
    pt = rate_point(R2, -0.4)
    assert pt.F == eval_F(R2, -0.4)
    assert pt.riccati.stable

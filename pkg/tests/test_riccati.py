import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_affine
from ldp_portfolio import (
    AffineModel,
    DomainError,
    NoSolution,
    classify_scalar_case,
    riccati_coefficients,
    scalar_closed_form,
    solve_riccati,
    tilde_beta,
)
from ldp_portfolio.rate import e_vector, lambda_bar
from ldp_portfolio.riccati import Definiteness, ScalarCase, riccati_residual

SQ = math.sqrt(1.125)


def test_coefficients_at_zero(R2):
    A, B, C = riccati_coefficients(R2, 0.0)
    np.testing.assert_allclose(A, R2.Theta1)
    np.testing.assert_allclose(B, R2.sigma_sq)
    np.testing.assert_allclose(C, [[0.25]])


def test_coefficients_reference(R):
    A, B, C = riccati_coefficients(R, -1.0)
    assert (A[0, 0], B[0, 0], C[0, 0]) == pytest.approx((-1.0, 1.0, 0.25))


def test_B_blows_up_towards_one(R2):
    lams = 1 - np.geomspace(1e-1, 1e-7, 15)
    Bs = [riccati_coefficients(R2, x)[1][0, 0] for x in lams]
    assert np.all(np.diff(Bs) > 0) and Bs[-1] > 1e6


def test_coefficients_domain(R):
    with pytest.raises(DomainError):
        riccati_coefficients(R, 1.0)
    with pytest.raises(DomainError):
        solve_riccati(R, 1.5)


def test_solve_at_zero(R):
    s = solve_riccati(R, 0.0)
    assert s.P1[0, 0] == 0.0 and s.D[0, 0] == -1.0 and s.stable


def test_solve_reference(R):
    s = solve_riccati(R, -1.0)
    # P^2 - 2P - 0.125 = 0, nonpositive root
    assert s.P1[0, 0] == pytest.approx(1 - SQ, abs=1e-14)
    assert s.D[0, 0] == pytest.approx(-SQ, abs=1e-14)
    assert s.stable and s.definiteness is Definiteness.NegativeSemiDef
    assert s.residual < 1e-14


def test_solve_past_threshold(R):
    with pytest.raises(NoSolution):
        solve_riccati(R, 0.9)


def test_closed_form_values(R):
    assert scalar_closed_form(R, 0.0).D[0, 0] == pytest.approx(-1.0)
    assert scalar_closed_form(R, -1.0).D[0, 0] == pytest.approx(-SQ)
    s = scalar_closed_form(R, 0.8)
    assert s.D[0, 0] == 0.0 and not s.stable and s.semistable
    with pytest.raises(NoSolution):
        scalar_closed_form(R, 0.85)


def test_solver_semistable_at_threshold(R):
    s = solve_riccati(R, 0.8)
    assert s.semistable and not s.stable
    assert abs(s.D[0, 0]) < 1e-6


def test_tilde_beta(R, R2):
    assert tilde_beta(R) == pytest.approx(1.25)
    assert tilde_beta(R2) == pytest.approx(2.05)
    assert tilde_beta(R.replace(A1=[[0.0]])) == 1.0


@pytest.mark.parametrize("name", ["R", "R2", "R3"])
def test_solver_matches_closed_form(name, request):
    m = request.getfixturevalue(name)
    lb = lambda_bar(m)
    for lam in np.linspace(-5, lb - 1e-3, 60):
        a, b = solve_riccati(m, lam), scalar_closed_form(m, lam)
        assert abs(a.P1[0, 0] - b.P1[0, 0]) < 1e-10
        assert abs(a.D[0, 0] - b.D[0, 0]) < 1e-10
        assert a.residual < 1e-10


def test_definiteness_by_sign(R2):
    for lam in np.linspace(-4, -0.01, 20):
        assert solve_riccati(R2, lam).definiteness is Definiteness.NegativeSemiDef
    for lam in np.linspace(0.01, lambda_bar(R2) - 1e-3, 20):
        assert solve_riccati(R2, lam).definiteness is Definiteness.PositiveSemiDef


def test_continuity_on_grid(R2):
    lams = np.linspace(-3, lambda_bar(R2) - 1e-2, 300)
    P = np.array([solve_riccati(R2, x).P1[0, 0] for x in lams])
    jumps = np.abs(np.diff(P))
    assert jumps.max() < 50 * (lams[1] - lams[0])


def _decoupled_two_factor(R):
    """R plus an irrelevant second factor (independent noise, no effect on
    the asset); the Riccati solution is block diagonal."""
    return AffineModel(
        A1=[[0.5, 0.0]], a2=[0.1], r1=[0.0, 0.0], r2=0.0, alpha1=[0.0, 0.0], alpha2=0.0,
        Theta1=[[-1.0, 0.0], [0.0, -2.0]], theta2=[0.0, 0.0],
        b=[[1.0, 0, 0, 0]], beta=[0, 0, 1.0, 0],
        sigma=[[0, 1.0, 0, 0], [0, 0, 0, 1.0]],
    )


def test_hamiltonian_route_matches_scalar(R):
    m2 = _decoupled_two_factor(R)
    for lam in [-3.0, -1.0, -0.2, 0.3, 0.7]:
        s2, s1 = solve_riccati(m2, lam), solve_riccati(R, lam)
        assert s2.P1[0, 0] == pytest.approx(s1.P1[0, 0], abs=1e-10)
        assert abs(s2.P1[0, 1]) < 1e-12 and abs(s2.P1[1, 1]) < 1e-12
        assert s2.residual < 1e-10


def test_multidimensional_threshold_matches_scalar(R):
    assert lambda_bar(_decoupled_two_factor(R)) == pytest.approx(0.8, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-4.0, -0.01))
def test_random_models_negative_lambda(seed, lam):
    m = random_affine(np.random.default_rng(seed))
    s = solve_riccati(m, lam)
    A, B, C = riccati_coefficients(m, lam)
    assert s.stable
    assert riccati_residual(s.P1, A, B, C, lam / (1 - lam)) < 1e-10
    assert s.definiteness is Definiteness.NegativeSemiDef
    assert np.allclose(s.P1, s.P1.T, atol=1e-13)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_random_models_positive_lambda(seed, frac):
    m = random_affine(np.random.default_rng(seed))
    lam = frac * lambda_bar(m)
    if lam <= 0:
        return
    s = solve_riccati(m, lam)
    assert s.residual < 1e-10 * max(1.0, np.abs(s.P1).max())
    assert s.definiteness is Definiteness.PositiveSemiDef


def test_classify_reference(R):
    an = classify_scalar_case(R)
    assert an.case is ScalarCase.BetaGt1_Eneq0
    assert an.lambda_bar == pytest.approx(0.8)
    assert an.F_at_bar == math.inf
    A, B, _ = riccati_coefficients(R, 0.8)
    assert abs(e_vector(R, 0.8, -A / B)[0]) > 1e-3


def test_classify_beta_lt_one(R3):
    an = classify_scalar_case(R3)
    assert an.case is ScalarCase.BetaLt1
    assert an.tilde_beta == pytest.approx(0.45)
    assert an.lambda_bar == 1.0
    assert math.isfinite(an.F_at_bar)
    assert an.left_derivative_at_bar == math.inf


def test_classify_beta_gt_one_with_vanishing_E(R2):
    # choose a2 so that E(1/tilde_beta) = 0; E is affine in a2
    lb = 1 / tilde_beta(R2)
    A, B, _ = riccati_coefficients(R2, lb)
    P = -A / B
    e0 = e_vector(R2.replace(a2=[0.0]), lb, P)[0]
    e1 = e_vector(R2.replace(a2=[1.0]), lb, P)[0]
    m = R2.replace(a2=[-e0 / (e1 - e0)])
    an = classify_scalar_case(m)
    assert an.case is ScalarCase.BetaGt1_Eeq0
    assert math.isfinite(an.F_at_bar)
    assert an.left_derivative_at_bar == math.inf


def _beta_eq_one_model(R):
    # A1 = r1, sigma b^T = 0, a2 - r2 = b.beta
    return R.replace(A1=[[0.0]], b=[[1.0, 0, 0.5]], a2=[0.5])


def test_classify_beta_equal_one(R):
    m = _beta_eq_one_model(R)
    an = classify_scalar_case(m)
    assert an.tilde_beta == 1.0 and an.lambda_bar == 1.0
    slope = an.left_derivative_at_bar
    assert math.isfinite(an.F_at_bar) and math.isfinite(slope)
    assert classify_scalar_case(m, q=slope + 0.1).case is ScalarCase.BetaEq1_Degenerate
    assert classify_scalar_case(m, q=slope - 0.1).case is ScalarCase.BetaEq1_Regular


def test_classify_beta_equal_one_conditions_fail(R):
    m = R.replace(A1=[[0.0]], a2=[0.3])
    an = classify_scalar_case(m, q=10.0)
    assert an.case is ScalarCase.BetaEq1_Regular
    assert an.F_at_bar == math.inf

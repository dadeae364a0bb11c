import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ldp_portfolio import (
    AffineModel,
    GeneralModel1D,
    ModelValidationError,
    SingularMatrix,
    check_condition_n,
    check_growth_condition,
    projection_q1,
    projection_q2,
    solve_riccati,
)
from ldp_portfolio.model import angle_condition_matrix

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_q1_single_row():
    np.testing.assert_allclose(projection_q1([[1.0, 0, 0]]), np.diag([0.0, 1, 1]), atol=1e-15)


def test_q1_full_rank_is_zero():
    np.testing.assert_allclose(projection_q1(np.eye(4)), np.zeros((4, 4)), atol=1e-14)


def test_q1_random_2x5():
    q1 = projection_q1(np.random.default_rng(3).normal(size=(2, 5)))
    assert np.trace(q1) == pytest.approx(3.0, abs=1e-12)
    assert np.linalg.norm(q1 @ q1 - q1) < 1e-12


def test_q1_singular():
    with pytest.raises(SingularMatrix):
        projection_q1([[1.0, 0, 0], [2.0, 0, 0]])


def test_q2_reference():
    q2 = projection_q2([[1.0, 0, 0]], [[0, 1.0, 0]])
    np.testing.assert_allclose(q2, np.diag([0.0, 0, 1]), atol=1e-15)
    beta = np.array([0, 0, 1.0])
    assert beta @ q2 @ beta == pytest.approx(1.0)


def test_q2_singular_when_sigma_in_row_space_of_b():
    with pytest.raises(SingularMatrix):
        projection_q2([[1.0, 0, 0]], [[2.0, 0, 0]])


@settings(max_examples=60, deadline=None)
@given(arrays(float, (2, 6), elements=finite), arrays(float, (2, 6), elements=finite))
def test_projection_properties(b, sigma):
    try:
        q1 = projection_q1(b)
        q2 = projection_q2(b, sigma)
    except SingularMatrix:
        return
    scale = 1 + np.abs(b).max() + np.abs(sigma).max()
    assert np.allclose(q1, q1.T, atol=1e-12)
    assert np.linalg.norm(q1 @ q1 - q1) < 1e-10
    assert np.linalg.norm(q1 @ b.T) < 1e-10 * scale
    assert np.linalg.norm(q2 @ b.T) < 1e-9 * scale
    assert np.linalg.norm(q2 @ sigma.T) < 1e-9 * scale
    assert np.linalg.norm(q1 @ q2 @ q1 - q2) < 1e-10
    assert np.linalg.eigvalsh(q2).min() > -1e-10


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 2), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_angle_characterisations_agree(n, l, seed):
    rng = np.random.default_rng(seed)
    k = n + l + int(rng.integers(0, 2))
    b = rng.normal(size=(n, k))
    sigma = rng.normal(size=(l, k))
    if rng.random() < 0.3:  # push sigma towards the row space of b
        sigma[0] = rng.normal() * b[0] + 1e-3 * rng.normal(size=k)
    q1 = projection_q1(b)
    e1 = np.linalg.eigvalsh(sigma @ q1 @ sigma.T).min()
    e2 = np.linalg.eigvalsh(angle_condition_matrix(b, sigma)).min()
    if min(abs(e1), abs(e2)) > 1e-8:
        assert (e1 > 0) == (e2 > 0)


def test_condition_n_reference(R):
    rep = check_condition_n(R)
    assert rep.part1_ok and rep.part2_ok
    assert rep.min_eig_sQ1s == pytest.approx(1.0)
    assert rep.min_beta_Q2_beta == pytest.approx(1.0)
    assert rep.k_margin == 1


def test_condition_n_beta_in_range_of_b(R):
    rep = check_condition_n(R.replace(beta=[1.0, 0, 0]))
    assert rep.part1_ok and not rep.part2_ok


def test_condition_n_k_equals_n_plus_l():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = AffineModel(
            A1=[[0.1]], a2=[0.0], r1=[0.0], r2=0.0, alpha1=[0.0], alpha2=0.0, Theta1=[[-1.0]], theta2=[0.0],
            b=rng.normal(size=(1, 2)), beta=rng.normal(size=2), sigma=rng.normal(size=(1, 2)),
        )
        rep = check_condition_n(m)
        assert rep.k_margin == 0
        assert not rep.part2_ok


def test_condition_n_is_deterministic(R2):
    a, b = check_condition_n(R2), check_condition_n(R2)
    assert a.to_dict() == b.to_dict()


def test_condition_n_general_grid(R_general):
    rep = check_condition_n(R_general, x_grid=np.linspace(-3, 3, 11))
    assert rep.part1_ok and rep.part2_ok
    assert rep.k_margin == 1


def test_growth_condition_reference(R):
    assert check_growth_condition(R, solve_riccati(R, -1.0))


def test_growth_condition_zero_matrix(R):
    m = R.replace(A1=[[0.0]])
    assert not check_growth_condition(m, solve_riccati(m, -1.0))


def test_growth_condition_orthogonal_vol():
    rng = np.random.default_rng(1)
    m = AffineModel(
        A1=rng.normal(size=(2, 2)), a2=[0.1, 0.0], r1=[0.0, 0.0], r2=0.0, alpha1=[0.0, 0.0], alpha2=0.0,
        Theta1=-np.eye(2), theta2=[0.0, 0.0],
        b=np.hstack([np.eye(2), np.zeros((2, 3))]), beta=[0, 0, 0, 0, 1.0],
        sigma=np.hstack([np.zeros((2, 2)), np.eye(2), np.zeros((2, 1))]),
    )
    assert check_growth_condition(m, solve_riccati(m, -0.7))


def test_validation_rejects_bad_models(R):
    with pytest.raises(ModelValidationError):
        R.replace(Theta1=[[0.5]])
    with pytest.raises(ModelValidationError):
        R.replace(b=[[0.0, 0.0, 0.0]])
    with pytest.raises(ModelValidationError):
        R.replace(beta=[0.0, 0.0, 0.0])
    with pytest.raises(ModelValidationError):
        R.replace(a2=[0.1, 0.2])


def test_hurwitz_non_symmetric_theta_warns(R):
    base = R.replace(b=[[1.0, 0, 0, 0]], beta=[0, 0, 0, 1.0], sigma=[[0, 1.0, 0, 0], [0, 0, 1.0, 0]],
                     A1=[[0.5, 0.0]], r1=[0.0, 0.0], alpha1=[0.0, 0.0], theta2=[0.0, 0.0], Theta1=-np.eye(2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        base.replace(Theta1=-np.eye(2))
    with pytest.warns(UserWarning):
        base.replace(Theta1=[[-0.1, 5.0], [0.0, -0.1]])


def test_general_model_validation():
    ok = dict(
        a=lambda x: 0.1 + 0 * x, r=lambda x: 0 * x, alpha=lambda x: 0 * x, theta=lambda x: -x,
        b=lambda x: np.stack([1 + 0 * x, 0 * x], -1), sigma=lambda x: np.stack([0 * x, 1 + 0 * x], -1),
        beta=lambda x: np.stack([0 * x, 1 + 0 * x], -1), k=2,
    )
    GeneralModel1D(**ok)
    with pytest.raises(ModelValidationError):
        GeneralModel1D(**{**ok, "theta": lambda x: x})
    with pytest.raises(ModelValidationError):
        GeneralModel1D(**{**ok, "b": lambda x: np.stack([0 * x, 0 * x], -1)})
    with pytest.raises(ModelValidationError):
        GeneralModel1D(**{**ok, "domain": (0.0, 1.0)})

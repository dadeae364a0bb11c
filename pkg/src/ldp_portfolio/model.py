"""Market/factor model types, validation, and nondegeneracy checks.

Two model families are supported:

* ``AffineModel``: drift terms affine in the factor, constant volatilities.
  Any factor dimension ``l`` and any number ``n`` of risky assets.
* ``GeneralModel1D``: one factor, one risky asset, arbitrary (vectorised)
  coefficient functions of the factor.

``ScalarModel`` is the ``l = n = 1`` affine case with the derived scalars
used by the closed forms cached on the instance.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, fields
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ModelValidationError, SingularMatrix

TOL_PD = 1e-10


def _min_eig_sym(m: np.ndarray) -> float:
    m = np.atleast_2d(m)
    return float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())


def projection_q1(b) -> np.ndarray:
    """Orthogonal projector of R^k onto the null space of ``b`` (n x k).

    ``Q1 = I - b^T (b b^T)^{-1} b``.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    c = b @ b.T
    if _min_eig_sym(c) <= TOL_PD:
        raise SingularMatrix("b b^T is numerically singular")
    q1 = np.eye(b.shape[1]) - b.T @ np.linalg.solve(c, b)
    return 0.5 * (q1 + q1.T)


def projection_q2(b, sigma) -> np.ndarray:
    """``Q1 (I - sigma^T (sigma Q1 sigma^T)^{-1} sigma) Q1``.

    Annihilates the ranges of both ``b^T`` and ``sigma^T``.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    q1 = projection_q1(b)
    s = sigma @ q1 @ sigma.T
    if _min_eig_sym(s) <= TOL_PD:
        raise SingularMatrix("sigma Q1 sigma^T is numerically singular")
    inner = np.eye(b.shape[1]) - sigma.T @ np.linalg.solve(s, sigma)
    q2 = q1 @ inner @ q1
    return 0.5 * (q2 + q2.T)


def angle_condition_matrix(b, sigma) -> np.ndarray:
    """``c - b sigma^T (sigma sigma^T)^{-1} sigma b^T``.

    Positive definite exactly when ``sigma Q1 sigma^T`` is.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    sb = sigma @ b.T
    return b @ b.T - sb.T @ np.linalg.solve(sigma @ sigma.T, sb)


@dataclass(frozen=True, eq=False)
class AffineModel:
    """Gaussian factor model with affine drifts and constant volatilities.

    ``a(x) = A1 x + a2``, ``r(x) = r1.x + r2``, ``alpha(x) = alpha1.x + alpha2``,
    ``theta(x) = Theta1 x + theta2``; ``b`` (n x k), ``beta`` (k,) and
    ``sigma`` (l x k) are constant.
    """

    A1: np.ndarray
    a2: np.ndarray
    r1: np.ndarray
    r2: float
    alpha1: np.ndarray
    alpha2: float
    Theta1: np.ndarray
    theta2: np.ndarray
    b: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        for f in fields(AffineModel):
            try:
                np.asarray(getattr(self, f.name), dtype=float)
            except (TypeError, ValueError) as exc:
                raise ModelValidationError(f"{f.name} is not a numeric array: {exc}") from None
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        n, k = b.shape
        l = sigma.shape[0]
        conv = {
            "A1": (np.asarray(self.A1, dtype=float).reshape(n, l) if np.size(self.A1) == n * l else None),
            "a2": np.asarray(self.a2, dtype=float).reshape(-1),
            "r1": np.asarray(self.r1, dtype=float).reshape(-1),
            "r2": float(self.r2),
            "alpha1": np.asarray(self.alpha1, dtype=float).reshape(-1),
            "alpha2": float(self.alpha2),
            "Theta1": np.atleast_2d(np.asarray(self.Theta1, dtype=float)),
            "theta2": np.asarray(self.theta2, dtype=float).reshape(-1),
            "b": b,
            "beta": np.asarray(self.beta, dtype=float).reshape(-1),
            "sigma": sigma,
        }
        if conv["A1"] is None:
            raise ModelValidationError(f"A1 must have {n}x{l} entries, got shape {np.shape(self.A1)}")
        expected = {"a2": (n,), "r1": (l,), "alpha1": (l,), "Theta1": (l, l), "theta2": (l,), "beta": (k,), "sigma": (l, k)}
        for name, shape in expected.items():
            if conv[name].shape != shape:
                raise ModelValidationError(f"{name} must have shape {shape}, got {conv[name].shape}")
        for name, value in conv.items():
            if not np.all(np.isfinite(value)):
                raise ModelValidationError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, value)
        self._validate()

    def _validate(self):
        if _min_eig_sym(self.c) <= TOL_PD:
            raise ModelValidationError("c = b b^T is not positive definite")
        if _min_eig_sym(self.sigma_sq) <= TOL_PD:
            raise ModelValidationError("sigma sigma^T is not positive definite")
        eigs = np.linalg.eigvals(self.Theta1)
        if not np.all(eigs.real < 0):
            raise ModelValidationError("Theta1 is not Hurwitz (an eigenvalue has nonnegative real part)")
        sym = 0.5 * (self.Theta1 + self.Theta1.T)
        if np.linalg.eigvalsh(sym).max() >= 0:
            warnings.warn("Theta1 is Hurwitz but not symmetric-negative-definite", stacklevel=3)
        if not np.any(self.beta != 0):
            raise ModelValidationError("benchmark volatility beta must be nonzero")

    @property
    def n(self) -> int:
        return self.b.shape[0]

    @property
    def l(self) -> int:  # noqa: E743
        return self.sigma.shape[0]

    @property
    def k(self) -> int:
        return self.b.shape[1]

    @cached_property
    def c(self) -> np.ndarray:
        return self.b @ self.b.T

    @cached_property
    def c_inv(self) -> np.ndarray:
        return np.linalg.inv(self.c)

    @cached_property
    def sigma_sq(self) -> np.ndarray:
        return self.sigma @ self.sigma.T

    @cached_property
    def excess_slope(self) -> np.ndarray:
        """``A1 - 1 r1^T`` (n x l)."""
        return self.A1 - np.outer(np.ones(self.n), self.r1)

    @cached_property
    def excess_const(self) -> np.ndarray:
        """``a2 - r2 1`` (n,)."""
        return self.a2 - self.r2

    @cached_property
    def sb(self) -> np.ndarray:
        """``sigma b^T`` (l x n)."""
        return self.sigma @ self.b.T

    @property
    def is_scalar(self) -> bool:
        return self.n == 1 and self.l == 1

    # vectorised coefficient evaluation, X has shape (m, l)
    def a(self, X):
        return X @ self.A1.T + self.a2

    def r(self, X):
        return X @ self.r1 + self.r2

    def alpha(self, X):
        return X @ self.alpha1 + self.alpha2

    def theta(self, X):
        return X @ self.Theta1.T + self.theta2

    def to_dict(self) -> dict:
        out = {}
        for f in fields(AffineModel):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else v
        return out

    def replace(self, **changes) -> "AffineModel":
        kw = {f.name: getattr(self, f.name) for f in fields(AffineModel)}
        kw.update(changes)
        return type(self)(**kw)


class ScalarModel(AffineModel):
    """``l = n = 1`` affine model with cached scalar combinations."""

    def _validate(self):
        if not self.is_scalar:
            raise ModelValidationError(f"ScalarModel needs l = n = 1, got l={self.l}, n={self.n}")
        super()._validate()

    @classmethod
    def from_affine(cls, model: AffineModel) -> "ScalarModel":
        if isinstance(model, cls):
            return model
        return cls(**{f.name: getattr(model, f.name) for f in fields(AffineModel)})

    @cached_property
    def Theta(self) -> float:
        return float(self.Theta1[0, 0])

    @cached_property
    def c_s(self) -> float:
        return float(self.c[0, 0])

    @cached_property
    def ssq(self) -> float:
        return float(self.sigma_sq[0, 0])

    @cached_property
    def sb_s(self) -> float:
        return float(self.sb[0, 0])

    @cached_property
    def bbeta(self) -> float:
        return float(self.b[0] @ self.beta)

    @cached_property
    def sbeta(self) -> float:
        return float(self.sigma[0] @ self.beta)

    @cached_property
    def beta_sq(self) -> float:
        return float(self.beta @ self.beta)

    @cached_property
    def A1_r1(self) -> float:
        return float(self.A1[0, 0] - self.r1[0])

    @cached_property
    def a2_r2(self) -> float:
        return float(self.a2[0] - self.r2)


def as_scalar(model) -> ScalarModel | None:
    if isinstance(model, AffineModel) and model.is_scalar:
        return ScalarModel.from_affine(model)
    return None


def _const(v: float) -> Callable:
    return lambda x: np.full(np.shape(x), float(v))


@dataclass(frozen=True, eq=False)
class GeneralModel1D:
    """One factor, one risky asset, nonlinear coefficients.

    Every coefficient is a vectorised callable of the factor value: scalar
    coefficients map an array of shape ``(m,)`` to ``(m,)``, the volatility
    rows ``b``, ``sigma``, ``beta`` map it to ``(m, k)``.  The checks run on
    a uniform grid over the declared ``domain``.
    """

    a: Callable
    r: Callable
    alpha: Callable
    theta: Callable
    b: Callable
    sigma: Callable
    beta: Callable
    k: int
    domain: tuple[float, float] = (-8.0, 8.0)
    vol_bounds: tuple[float, float] | None = None
    growth_K: float | None = None
    check_points: int = 257

    def __post_init__(self):
        lo, hi = map(float, self.domain)
        if not lo < 0 < hi:
            raise ModelValidationError(f"domain must satisfy x_min < 0 < x_max, got {self.domain}")
        object.__setattr__(self, "domain", (lo, hi))
        x = self.check_grid()
        for name in ("b", "sigma", "beta"):
            v = self._row(name, x)
            if v.shape != (x.size, self.k):
                raise ModelValidationError(f"{name}(x) must return shape (m, {self.k}), got {v.shape}")
        for name in ("a", "r", "alpha", "theta"):
            v = np.asarray(getattr(self, name)(x), dtype=float)
            if v.shape != x.shape or not np.all(np.isfinite(v)):
                raise ModelValidationError(f"{name}(x) must return finite values of shape (m,)")
        c, s = self.c(x), self.ssq(x)
        if c.min() <= TOL_PD:
            raise ModelValidationError("b(x) b(x)^T is not bounded away from zero on the domain")
        if s.min() <= TOL_PD:
            raise ModelValidationError("sigma(x) sigma(x)^T is not bounded away from zero on the domain")
        if self.vol_bounds is not None:
            vlo, vhi = self.vol_bounds
            if min(c.min(), s.min()) < vlo or max(c.max(), s.max()) > vhi:
                raise ModelValidationError("volatility outside declared vol_bounds on the domain")
        ends = np.array([lo, hi])
        if np.any(self.theta(ends) * ends >= 0):
            raise ModelValidationError("theta(x) x must be negative at both domain endpoints")
        beta_sq = np.sum(self._row("beta", x) ** 2, axis=1)
        if beta_sq.min() <= TOL_PD:
            raise ModelValidationError("|beta(x)|^2 must be bounded away from zero")

    def check_grid(self, n: int | None = None) -> np.ndarray:
        return np.linspace(self.domain[0], self.domain[1], n or self.check_points)

    def _row(self, name, x):
        x = np.asarray(x, dtype=float)
        v = np.asarray(getattr(self, name)(np.atleast_1d(x)), dtype=float)
        return v.reshape(np.atleast_1d(x).shape + (self.k,))

    def b_row(self, x):
        return self._row("b", x)

    def sigma_row(self, x):
        return self._row("sigma", x)

    def beta_row(self, x):
        return self._row("beta", x)

    def c(self, x):
        return np.sum(self.b_row(x) ** 2, axis=-1)

    def ssq(self, x):
        return np.sum(self.sigma_row(x) ** 2, axis=-1)

    def sb(self, x):
        return np.sum(self.sigma_row(x) * self.b_row(x), axis=-1)

    @classmethod
    def from_affine(cls, model: AffineModel, domain=(-8.0, 8.0)) -> "GeneralModel1D":
        """Wrap an ``l = n = 1`` affine model as a general one-factor model."""
        if not model.is_scalar:
            raise ModelValidationError("from_affine needs l = n = 1")
        A1, a2 = float(model.A1[0, 0]), float(model.a2[0])
        r1, al1 = float(model.r1[0]), float(model.alpha1[0])
        th1, th2 = float(model.Theta1[0, 0]), float(model.theta2[0])
        b, s, be = model.b[0].copy(), model.sigma[0].copy(), model.beta.copy()
        k = model.k
        return cls(
            a=lambda x: A1 * x + a2,
            r=lambda x: r1 * x + model.r2,
            alpha=lambda x: al1 * x + model.alpha2,
            theta=lambda x: th1 * x + th2,
            b=lambda x: np.broadcast_to(b, np.shape(x) + (k,)),
            sigma=lambda x: np.broadcast_to(s, np.shape(x) + (k,)),
            beta=lambda x: np.broadcast_to(be, np.shape(x) + (k,)),
            k=k,
            domain=domain,
        )


@dataclass(frozen=True)
class ConditionNReport:
    min_eig_sQ1s: float
    min_beta_Q2_beta: float
    part1_ok: bool
    part2_ok: bool
    k_margin: int

    def to_dict(self) -> dict:
        return asdict(self)


def _condition_n_at(b, sigma, beta) -> tuple[float, float]:
    q1 = projection_q1(b)
    s = np.atleast_2d(sigma) @ q1 @ np.atleast_2d(sigma).T
    e1 = _min_eig_sym(s)
    if e1 <= TOL_PD:
        return e1, 0.0
    q2 = projection_q2(b, sigma)
    return e1, float(beta @ q2 @ beta)


def check_condition_n(model, x_grid=None) -> ConditionNReport:
    """Evaluate both parts of the nondegeneracy condition.

    For a ``GeneralModel1D`` the minima are taken over ``x_grid`` (default:
    the model's check grid).  Failures are reported in the flags, never
    raised.
    """
    if isinstance(model, AffineModel):
        e1, e2 = _condition_n_at(model.b, model.sigma, model.beta)
        k_margin = model.k - model.n - model.l
    else:
        x = model.check_grid() if x_grid is None else np.asarray(x_grid, dtype=float)
        B, S, Be = model.b_row(x), model.sigma_row(x), model.beta_row(x)
        e1, e2 = np.inf, np.inf
        for i in range(x.size):
            a, c = _condition_n_at(B[i][None, :], S[i][None, :], Be[i])
            e1, e2 = min(e1, a), min(e2, c)
        k_margin = model.k - 2
    return ConditionNReport(
        min_eig_sQ1s=float(e1),
        min_beta_Q2_beta=float(e2),
        part1_ok=bool(e1 > TOL_PD),
        part2_ok=bool(e2 > TOL_PD),
        k_margin=int(k_margin),
    )


def check_growth_condition(model: AffineModel, riccati) -> bool:
    """Affine sufficient condition for the truncation-limit hypothesis.

    True iff ``(b sigma^T P1)^T c^{-1} (b sigma^T P1) - (A1 - 1 r1^T)^T c^{-1} (A1 - 1 r1^T)``
    is negative definite.
    """
    K = model.sb.T @ riccati.P1
    E = model.excess_slope
    m = K.T @ model.c_inv @ K - E.T @ model.c_inv @ E
    return bool(np.linalg.eigvalsh(0.5 * (m + m.T)).max() < -TOL_PD)

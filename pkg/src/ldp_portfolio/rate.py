"""Growth-rate curve F(lambda), its threshold, decay rates and portfolios
for affine models.

With ``P1`` the stabilising Riccati root and ``D = A + B P1``, the linear
coefficient ``p2`` of the value-function gradient solves ``D^T p2 + E = 0``
and ``F`` is an explicit quadratic expression in ``(P1, p2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from ._parallel import ordered_map
from .errors import (
    DegenerateInfeasible,
    DomainError,
    NoSolution,
    NotAttained,
    Unsolvable,
    Unstable,
)
from .model import AffineModel, as_scalar
from .riccati import (
    RiccatiSolution,
    ScalarCase,
    classify_scalar_case,
    solve_riccati,
    tilde_beta,
)

TOL_LINEAR = 1e-10
FD_STEP = 1e-6
LAMBDA_BAR_TOL = 1e-8


def _mu(lam: float) -> float:
    if lam >= 1:
        raise DomainError(f"lambda must be < 1, got {lam}")
    return lam / (1.0 - lam)


def e_vector(model: AffineModel, lam: float, P1: np.ndarray) -> np.ndarray:
    """Constant term ``E(lambda)`` of the linear equation for ``p2``."""
    mu = _mu(lam)
    slope = model.excess_slope + model.sb.T @ P1  # n x l
    const = model.excess_const - lam * (model.b @ model.beta)
    return (
        mu * slope.T @ model.c_inv @ const
        + lam * (model.r1 - model.alpha1 - P1 @ model.sigma @ model.beta)
        + P1 @ model.theta2
    )


def solve_p2(model: AffineModel, riccati: RiccatiSolution) -> np.ndarray:
    E = e_vector(model, riccati.lam, riccati.P1)
    D = riccati.D
    if riccati.stable:
        return np.linalg.solve(D.T, -E)
    p2, *_ = np.linalg.lstsq(D.T, -E, rcond=None)
    res = np.linalg.norm(D.T @ p2 + E)
    if res > TOL_LINEAR * (1.0 + np.linalg.norm(E)):
        raise Unsolvable(f"E not in range of D^T at lambda={riccati.lam} (residual {res:.3e})")
    return p2


def F_from_parts(model: AffineModel, lam: float, P1: np.ndarray, p2: np.ndarray) -> float:
    mu = _mu(lam)
    v = model.excess_const - lam * (model.b @ model.beta) + model.sb.T @ p2
    beta_sq = float(model.beta @ model.beta)
    return float(
        0.5 * p2 @ model.sigma_sq @ p2
        + 0.5 * mu * v @ model.c_inv @ v
        + (model.theta2 - lam * model.sigma @ model.beta) @ p2
        + lam * (model.r2 - model.alpha2 + 0.5 * beta_sq)
        + 0.5 * lam**2 * beta_sq
        + 0.5 * np.trace(model.sigma_sq @ P1)
    )


@dataclass(frozen=True, eq=False)
class RatePoint:
    lam: float
    F: float
    riccati: RiccatiSolution | None
    p2: np.ndarray | None


def rate_point(model: AffineModel, lam: float) -> RatePoint:
    """F at a point strictly inside the Riccati existence region
    (``+inf`` when the root or ``p2`` does not exist)."""
    try:
        ric = solve_riccati(model, lam)
        if not (ric.stable or ric.semistable):
            return RatePoint(lam, math.inf, ric, None)
        p2 = solve_p2(model, ric)
    except (NoSolution, Unsolvable):
        return RatePoint(lam, math.inf, None, None)
    return RatePoint(lam, F_from_parts(model, lam, ric.P1, p2), ric, p2)


@lru_cache(maxsize=128)
def lambda_bar(model: AffineModel) -> float:
    """Right end of the region where F is finite.

    Scalar models use ``min(1/tilde_beta, 1)``.  Otherwise bisection on
    existence of a stable Riccati root with solvable ``p2``; this yields the
    Riccati threshold, which can lie below the true threshold.
    """
    sm = as_scalar(model)
    if sm is not None:
        tb = tilde_beta(sm)
        return 1.0 / tb if tb > 1 else 1.0

    def ok(lam):
        pt = rate_point(model, lam)
        return math.isfinite(pt.F) and pt.riccati is not None and pt.riccati.stable

    hi = 1.0 - 1e-9
    if ok(hi):
        return 1.0
    lo = 0.0
    while hi - lo > LAMBDA_BAR_TOL:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _left_limit_fit(fn, lb: float, s_max=0.04, s_min=2e-3, n=16, deg=5):
    """Fit ``fn(lb - s^2)`` by a polynomial in ``s`` and return its
    coefficients in increasing order (``c0`` is the limit, ``-c2`` the left
    derivative when ``c1 = 0``)."""
    s = np.geomspace(s_max, s_min, n)
    vals = np.array([fn(lb - si * si) for si in s], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NoSolution("function not finite near the boundary")
    coef = np.polynomial.polynomial.polyfit(s / s_max, vals, deg)
    return coef / s_max ** np.arange(deg + 1)


def left_limit(model: AffineModel, lb: float) -> tuple[float, float, float]:
    """``(F(lb-), sqrt coefficient, -c2)`` from the square-root expansion."""
    coef = _left_limit_fit(lambda x: rate_point(model, x).F, lb)
    return float(coef[0]), float(coef[1]), float(-coef[2])


def p2_at_one(model: AffineModel) -> float:
    """Left limit of ``p2`` at 1 for a scalar model (``tilde_beta = 1``)."""
    def p2(x):
        pt = rate_point(model, x)
        return math.nan if pt.p2 is None else float(pt.p2[0])

    return float(_left_limit_fit(p2, 1.0)[0])


def P1_at_one(model: AffineModel) -> float:
    def p1(x):
        return float(solve_riccati(model, x).P1[0, 0])

    return float(_left_limit_fit(p1, 1.0)[0])


@lru_cache(maxsize=128)
def _boundary_value(model: AffineModel) -> tuple[float, float]:
    """``(F(lambda_bar), F'(lambda_bar-))`` with ``+inf`` where infinite."""
    sm = as_scalar(model)
    if sm is None:
        return math.inf, math.inf
    an = classify_scalar_case(sm)
    return an.F_at_bar, an.left_derivative_at_bar


def eval_F(model: AffineModel, lam: float) -> float:
    lam = float(lam)
    lb = lambda_bar(model)
    if lam > lb:
        return math.inf
    if lam == lb:
        return _boundary_value(model)[0]
    return rate_point(model, lam).F


def left_derivative_at_bar(model: AffineModel) -> float:
    return _boundary_value(model)[1]


def dF(model: AffineModel, lam: float, h: float = FD_STEP) -> float:
    """dF/dlambda by differences in ``mu = lambda/(1-lambda)``.

    Central where both neighbours are inside the finite region, otherwise
    second-order backward.
    """
    lam = float(lam)
    lb = lambda_bar(model)
    mu = _mu(lam)
    step = h * max(1.0, abs(mu))

    def F_mu(m):
        return eval_F(model, m / (1.0 + m))

    jac = (1.0 + mu) ** 2  # dmu/dlambda
    if (mu + step) / (1.0 + mu + step) < lb:
        d = (F_mu(mu + step) - F_mu(mu - step)) / (2 * step)
    else:
        d = (3 * F_mu(mu) - 4 * F_mu(mu - step) + F_mu(mu - 2 * step)) / (2 * step)
    return float(d * jac)


@dataclass(eq=False)
class RateCurve:
    """Sampled ``lambda -> (F, p2, P1)`` together with its model."""

    model: AffineModel
    lambdas: np.ndarray
    F: np.ndarray
    p2: np.ndarray  # (m, l), nan where F is infinite
    stable: np.ndarray
    lambda_bar: float
    dF: np.ndarray
    P1refs: list = field(default_factory=list)

    def F_at(self, lam: float) -> float:
        return eval_F(self.model, lam)

    @property
    def finite(self) -> np.ndarray:
        return np.isfinite(self.F)


def build_rate_curve(
    model: AffineModel,
    lmin: float = -2.0,
    lmax: float | None = None,
    n: int = 121,
    lambdas=None,
    workers: int | None = None,
) -> RateCurve:
    """Sample F on a grid.  The grid always contains 0 when it straddles it;
    ``lmax`` defaults to ``lambda_bar``."""
    lb = lambda_bar(model)
    if lambdas is None:
        hi = lb if lmax is None else float(lmax)
        hi = min(hi, 1.0)
        lambdas = np.linspace(float(lmin), hi, int(n))
        if lambdas[0] < 0 < lambdas[-1]:
            lambdas = np.union1d(lambdas, [0.0])
    lambdas = np.unique(np.asarray(lambdas, dtype=float))
    if np.any(lambdas > 1):
        raise DomainError("rate curve grid must lie in lambda <= 1")

    def one(lam):
        F = eval_F(model, lam)
        pt = rate_point(model, lam) if lam < lb else None
        d = dF(model, lam) if (math.isfinite(F) and lam < lb) else math.nan
        return F, pt, d

    results = ordered_map(one, lambdas, workers)
    l = model.l
    F = np.array([r[0] for r in results])
    p2 = np.full((lambdas.size, l), np.nan)
    stable = np.zeros(lambdas.size, dtype=bool)
    refs = []
    for i, (_, pt, _) in enumerate(results):
        ric = pt.riccati if pt is not None else None
        refs.append(ric)
        if pt is not None and pt.p2 is not None:
            p2[i] = pt.p2
        stable[i] = bool(ric is not None and ric.stable)
    dFs = np.array([r[2] for r in results])
    return RateCurve(model, lambdas, F, p2, stable, lb, dFs, refs)


@dataclass(frozen=True)
class DecaySolution:
    q: float
    lambda_hat: float
    J_q: float
    J_q_out: float
    J_q_short: float
    degenerate: bool
    saddle_certificate: float
    F_at_hat: float

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "lambda_hat": self.lambda_hat,
            "J_q": self.J_q,
            "J_q_out": self.J_q_out,
            "J_q_short": self.J_q_short,
            "degenerate": self.degenerate,
            "saddle_certificate": self.saddle_certificate,
            "F_at_hat": self.F_at_hat,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecaySolution":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return c if fc >= fd else d


def decay_rates(curve: RateCurve, q: float, tol: float = 1e-10, max_extensions: int = 30) -> DecaySolution:
    """Maximise ``lambda q - F(lambda)`` over ``lambda <= 1``.

    The curve's grid brackets the maximiser (extending leftwards if the
    maximum sits at the left end), golden-section search refines it, and a
    dense local scan around the result gives an independent value for the
    supremum.  The gap between the two is the saddle certificate.
    """
    model = curve.model
    q = float(q)
    lb = curve.lambda_bar
    F_bar = eval_F(model, lb)

    def phi(lam):
        F = eval_F(model, lam)
        return -math.inf if not math.isfinite(F) else lam * q - F

    pts = [float(x) for x in curve.lambdas if x < lb]
    vals = [x * q - f if math.isfinite(f) else -math.inf for x, f in zip(curve.lambdas, curve.F) if x < lb]
    if math.isfinite(F_bar):
        pts.append(lb)
        vals.append(lb * q - F_bar)
    if not pts:
        raise NotAttained("rate curve has no points below lambda_bar")
    ext = 0
    while int(np.argmax(vals)) == 0:
        if ext >= max_extensions:
            raise NotAttained("objective still increasing at the left end of the lambda grid")
        width = max(1.0, pts[-1] - pts[0])
        new = list(np.linspace(pts[0] - width, pts[0], 9)[:-1])
        pts = new + pts
        vals = [phi(x) for x in new] + vals
        ext += 1
    i = int(np.argmax(vals))
    lo = pts[i - 1]
    hi = pts[i + 1] if i + 1 < len(pts) else lb
    if hi <= pts[i]:
        hi = pts[i]
    lam_hat = _golden_max(phi, lo, hi, tol)
    # the boundary itself is never sampled by the golden section
    if math.isfinite(F_bar) and hi == lb and phi(lb) >= phi(lam_hat):
        lam_hat = lb
    val_hat = phi(lam_hat)

    width = max(hi - lo, 1e-6)
    scan = np.linspace(max(lo, lam_hat - width), min(hi, lam_hat + width), 401)
    J = max([val_hat, vals[i]] + [phi(x) for x in scan])
    certificate = J - val_hat

    degenerate = bool(lb == 1.0 and math.isfinite(F_bar) and lam_hat >= 1.0 - 1e-9)
    if lb == 1.0 and math.isfinite(F_bar) and not degenerate:
        # q >= F'(1-) puts the maximiser on the boundary; decide it directly
        # since the objective is flat there when q equals the slope
        slope = left_derivative_at_bar(model)
        if math.isfinite(slope) and q >= slope - 1e-9 * (1 + abs(slope)):
            degenerate = True
            J = max(J, q - F_bar)
    if degenerate:
        lam_hat = 1.0
    if abs(lam_hat) <= 10 * tol and J <= 10 * tol:
        J_out = J_short = max(J, 0.0)
    else:
        J_out = J if lam_hat >= 0 else 0.0
        J_short = J if lam_hat <= 0 else 0.0
    return DecaySolution(
        q=q,
        lambda_hat=float(lam_hat),
        J_q=float(J),
        J_q_out=float(J_out),
        J_q_short=float(J_short),
        degenerate=degenerate,
        saddle_certificate=float(certificate),
        F_at_hat=float(eval_F(model, lam_hat)),
    )


@dataclass(frozen=True, eq=False)
class AffinePortfolio:
    """Feedback ``u(x) = G x + g0`` (fractions of wealth in each asset).

    In the degenerate branch ``G = 0`` and ``g0 = base + c^{-1} b vhat``,
    with ``base = c^{-1} b beta``.
    """

    G: np.ndarray
    g0: np.ndarray
    lambda_hat: float
    degenerate: bool = False
    base: np.ndarray | None = None
    vhat_magnitude: float | None = None
    z: np.ndarray | None = None

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return X @ self.G.T + self.g0

    def to_dict(self) -> dict:
        out = {
            "lambda_hat": self.lambda_hat,
            "degenerate": self.degenerate,
            "G": self.G.tolist(),
            "g0": self.g0.tolist(),
        }
        if self.degenerate:
            out["base"] = self.base.tolist()
            out["vhat_magnitude"] = self.vhat_magnitude
            out["z"] = self.z.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AffinePortfolio":
        opt = lambda k: None if d.get(k) is None else np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(
            G=np.atleast_2d(np.asarray(d["G"], dtype=float)),
            g0=np.asarray(d["g0"], dtype=float),
            lambda_hat=float(d["lambda_hat"]),
            degenerate=bool(d.get("degenerate", False)),
            base=opt("base"),
            vhat_magnitude=d.get("vhat_magnitude"),
            z=opt("z"),
        )


def portfolio_at_lambda(model: AffineModel, lam: float) -> AffinePortfolio:
    """Maximiser of the Hamiltonian along ``p = P1 x + p2`` at ``lam < lambda_bar``."""
    pt = rate_point(model, lam)
    if pt.p2 is None:
        raise NoSolution(f"no finite F at lambda={lam}")
    k = 1.0 / (1.0 - lam)
    G = k * model.c_inv @ (model.excess_slope + model.sb.T @ pt.riccati.P1)
    g0 = k * model.c_inv @ (model.excess_const - lam * model.b @ model.beta + model.sb.T @ pt.p2)
    return AffinePortfolio(G=G, g0=g0, lambda_hat=float(lam))


def optimal_portfolio(
    model: AffineModel,
    q: float,
    curve: RateCurve | None = None,
    z=None,
    decay: DecaySolution | None = None,
) -> AffinePortfolio:
    if decay is None:
        curve = curve if curve is not None else build_rate_curve(model, n=41)
        decay = decay_rates(curve, q)
    if not decay.degenerate:
        return portfolio_at_lambda(model, decay.lambda_hat)
    slope = left_derivative_at_bar(model)
    rad = float(q) - slope
    if rad < -1e-12:
        raise DegenerateInfeasible(f"q={q} is below F'(1-)={slope}")
    n = model.n
    z = np.eye(n)[0] if z is None else np.asarray(z, dtype=float).reshape(n)
    z = z / np.linalg.norm(z)
    w, V = np.linalg.eigh(model.c)
    c_inv_half = V @ np.diag(w**-0.5) @ V.T
    mag = math.sqrt(2.0 * max(rad, 0.0))
    vhat = model.b.T @ c_inv_half @ z * mag
    base = model.c_inv @ model.b @ model.beta
    g0 = model.c_inv @ model.b @ (model.beta + vhat)
    return AffinePortfolio(
        G=np.zeros((n, model.l)),
        g0=g0,
        lambda_hat=1.0,
        degenerate=True,
        base=base,
        vhat_magnitude=mag,
        z=z,
    )


@dataclass(frozen=True, eq=False)
class GaussianInvariantMeasure:
    mean: np.ndarray
    covariance: np.ndarray
    D: np.ndarray
    drift_const: np.ndarray


def tilted_drift_const(model: AffineModel, lam: float, p2: np.ndarray) -> np.ndarray:
    mu = _mu(lam)
    v = model.excess_const - lam * model.b @ model.beta + model.sb.T @ p2
    return (
        mu * model.sb @ model.c_inv @ v
        - lam * model.sigma @ model.beta
        + model.sigma_sq @ p2
        + model.theta2
    )


def invariant_measure(model: AffineModel, lam: float) -> GaussianInvariantMeasure:
    """Stationary law of ``dY = (D Y + drift_const) dt + sigma dW``."""
    pt = rate_point(model, lam)
    if pt.riccati is None or pt.p2 is None:
        raise NoSolution(f"no Riccati solution at lambda={lam}")
    D = pt.riccati.D
    if not pt.riccati.stable:
        raise Unstable(f"D({lam}) is not Hurwitz")
    h = tilted_drift_const(model, lam, pt.p2)
    mean = -np.linalg.solve(D, h)
    cov = linalg.solve_continuous_lyapunov(D, -model.sigma_sq)
    cov = 0.5 * (cov + cov.T)
    return GaussianInvariantMeasure(mean=mean, covariance=cov, D=D, drift_const=h)


def scalar_boundary_constant(model: AffineModel) -> float:
    """Limit of ``(F(1) - F(lambda)) / sqrt(1 - lambda)`` for a scalar model
    with ``tilde_beta < 1``."""
    sm = as_scalar(model)
    tb = tilde_beta(sm)
    return abs(sm.Theta) * math.sqrt(1.0 - tb) * sm.ssq / (2.0 * sm.sb_s**2 / sm.c_s)


def scalar_case(model: AffineModel, q: float | None = None) -> ScalarCase:
    return classify_scalar_case(as_scalar(model), q).case

"""Euler-Maruyama Monte Carlo for the factor and the benchmark-relative
log wealth, with an optional Girsanov tilt used for importance sampling.

Under a tilt with drift shift ``h(x) = lam N(u(x), x) + sigma(x)^T grad_f(x)``
the Brownian motion is ``W = W_hat + int h dt`` and each path carries the
log-likelihood ``log dP/dP_hat = -int h.dW_hat - 1/2 int |h|^2 dt``, so that
``E_P[Z] = E_hat[Z exp(logw)]``.  Random numbers come from counter-based
Philox streams keyed by ``(seed, block index)`` with a fixed block size, so
results do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from ._parallel import ordered_map
from .errors import NumericalBlowup, ValidationError
from .model import AffineModel, GeneralModel1D
from .rate import (
    AffinePortfolio,
    GaussianInvariantMeasure,
    RateCurve,
    build_rate_curve,
    decay_rates,
    optimal_portfolio,
    portfolio_at_lambda,
    rate_point,
)

BLOCK_SIZE = 1024
STEP_CHUNK = 64


class Side(str, Enum):
    AtLeast = "AtLeast"
    AtMost = "AtMost"


@dataclass(frozen=True, eq=False)
class Tilt:
    """Measure change built from a control ``u(x)`` and a value gradient.

    ``control`` maps factor values ``(m, l)`` to portfolios ``(m, n)``;
    ``grad_f`` maps them to gradients ``(m, l)``.
    """

    lambda_hat: float
    control: Callable
    grad_f: Callable
    q: float | None = None

    @classmethod
    def at_lambda(cls, model: AffineModel, lam: float, q: float | None = None) -> "Tilt":
        pt = rate_point(model, lam)
        if pt.p2 is None:
            raise ValidationError(f"no finite F at lambda={lam}; cannot build a tilt")
        P1, p2 = pt.riccati.P1.copy(), pt.p2.copy()
        return cls(
            lambda_hat=float(lam),
            control=portfolio_at_lambda(model, lam),
            grad_f=lambda X: X @ P1.T + p2,
            q=q,
        )

    @classmethod
    def optimal(cls, model: AffineModel, q: float, curve: RateCurve | None = None) -> "Tilt":
        curve = curve if curve is not None else build_rate_curve(model, n=41)
        dec = decay_rates(curve, q)
        if dec.degenerate:
            raise ValidationError("the degenerate boundary case has no tilt of this form")
        return cls.at_lambda(model, dec.lambda_hat, q=float(q))

    @classmethod
    def from_grid(cls, lam: float, x: np.ndarray, g: np.ndarray, u: np.ndarray, q: float | None = None) -> "Tilt":
        """Tilt for a one-factor model from a Bellman grid solution."""
        return cls(
            lambda_hat=float(lam),
            control=GridFeedback(x, u),
            grad_f=GridFeedback(x, g),
            q=q,
        )


@dataclass(frozen=True, eq=False)
class GridFeedback:
    """Piecewise-linear interpolation of a grid function, extrapolated
    linearly beyond the grid ends; maps ``(m, 1)`` to ``(m, 1)``."""

    x: np.ndarray
    y: np.ndarray

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1)
        x, y = self.x, self.y
        out = np.interp(X, x, y)
        lo, hi = X < x[0], X > x[-1]
        out[lo] = y[0] + (X[lo] - x[0]) * (y[1] - y[0]) / (x[1] - x[0])
        out[hi] = y[-1] + (X[hi] - x[-1]) * (y[-1] - y[-2]) / (x[-1] - x[-2])
        return out[:, None]


def constant_portfolio(u, l: int = 1) -> AffinePortfolio:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return AffinePortfolio(G=np.zeros((u.size, l)), g0=u, lambda_hat=math.nan)


@dataclass(frozen=True)
class SimConfig:
    t: float
    dt: float
    n_paths: int
    seed: int = 0
    tilt: Tilt | None = None
    x0: tuple | None = None
    x0_law: GaussianInvariantMeasure | None = None
    guard: float = 1e6
    workers: int | None = None
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.t <= 0 or self.dt <= 0:
            raise ValidationError("t and dt must be positive")
        if self.n_paths < 100:
            raise ValidationError("n_paths must be at least 100")
        if self.dt > 0.01:
            raise ValidationError("dt must not exceed 0.01")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t / self.dt))

    def params(self) -> dict:
        return {
            "t": self.t,
            "dt": self.dt,
            "n_paths": self.n_paths,
            "seed": int(self.seed),
            "tilt_lambda": None if self.tilt is None else self.tilt.lambda_hat,
            "tilt_q": None if self.tilt is None else self.tilt.q,
            "x0": None if self.x0 is None else list(self.x0),
            "x0_invariant": self.x0_law is not None,
            "block_size": self.block_size,
        }


def _rowdot(a, b):
    return np.einsum("ij,ij->i", a, b)


class _Dynamics:
    """Uniform access to coefficients for affine and one-factor models."""

    def __init__(self, model):
        self.model = model
        self.affine = isinstance(model, AffineModel)
        if self.affine:
            self.l, self.n, self.k = model.l, model.n, model.k
            self._es_T = model.excess_slope.T
            self._ra = model.r1 - model.alpha1
            self._c0 = model.r2 - model.alpha2 + 0.5 * float(model.beta @ model.beta)
        elif isinstance(model, GeneralModel1D):
            self.l, self.n, self.k = 1, 1, model.k
        else:
            raise ValidationError(f"unsupported model type {type(model).__name__}")

    def theta_scale(self) -> float:
        if self.affine:
            return float(np.abs(np.linalg.eigvals(self.model.Theta1)).max())
        x = self.model.check_grid()
        return float(np.abs(np.gradient(self.model.theta(x), x)).max())

    def rows(self, X):
        """Return ``(a, r, alpha, theta, b, sigma, beta)``; the matrices are
        constant for affine models and per path ``(m, ., k)`` otherwise."""
        m = self.model
        if self.affine:
            return m.a(X), m.r(X), m.alpha(X), m.theta(X), m.b, m.sigma, m.beta
        x = X[:, 0]
        return (
            m.a(x)[:, None],
            m.r(x),
            m.alpha(x),
            m.theta(x)[:, None],
            m.b_row(x)[:, None, :],
            m.sigma_row(x)[:, None, :],
            m.beta_row(x),
        )

    def step_terms(self, X, u, tilt: Tilt | None):
        """Drift/volatility of tL and X, plus the tilt shift ``h``."""
        if self.affine:
            m = self.model
            bu = u @ m.b  # b^T u per path
            N = bu - m.beta
            M = _rowdot(u, X @ self._es_T + m.excess_const) - 0.5 * _rowdot(bu, bu) + X @ self._ra + self._c0
            theta, sigma = m.theta(X), m.sigma
            b, beta = m.b, m.beta
        else:
            a, r, alpha, theta, b, sigma, beta = self.rows(X)
            bu = np.einsum("mnk,mn->mk", b, u)
            N = bu - beta
            M = _rowdot(u, a - r[:, None]) - 0.5 * _rowdot(bu, bu) + r - alpha + 0.5 * _rowdot(beta, beta)
        h = None
        if tilt is not None:
            uc = tilt.control(X)
            buc = uc @ b if self.affine else np.einsum("mnk,mn->mk", b, uc)
            gf = tilt.grad_f(X)
            sTg = gf @ sigma if self.affine else np.einsum("mlk,ml->mk", sigma, gf)
            h = tilt.lambda_hat * (buc - beta) + sTg
        return M, N, theta, sigma, h

    def sigma_times(self, sigma, v):
        return v @ sigma.T if self.affine else np.einsum("mlk,mk->ml", sigma, v)


@dataclass(eq=False)
class SimPaths:
    L: np.ndarray  # (1/t) log(Z_t / Y_t) per path
    logw: np.ndarray  # log dP/dP_hat, zero without tilt
    x_final: np.ndarray
    obs_avg: np.ndarray  # (m, n_obs) time averages of observables
    config: SimConfig


def _initial_state(dyn: _Dynamics, cfg: SimConfig, m: int, rng) -> np.ndarray:
    if cfg.x0_law is not None:
        chol = np.linalg.cholesky(cfg.x0_law.covariance)
        return cfg.x0_law.mean + rng.standard_normal((m, dyn.l)) @ chol.T
    x0 = np.zeros(dyn.l) if cfg.x0 is None else np.asarray(cfg.x0, dtype=float).reshape(dyn.l)
    return np.tile(x0, (m, 1))


def _euler_step(dyn, portfolio, tilt, X, tL, logw, dW, dt):
    """One Euler-Maruyama step driven by the raw increment ``dW``; updates
    ``tL`` and ``logw`` in place and returns the new factor state."""
    u = portfolio(X)
    M, N, theta, sigma, h = dyn.step_terms(X, u, tilt)
    if h is not None:
        logw -= _rowdot(h, dW) + 0.5 * dt * _rowdot(h, h)
        dW = dW + h * dt
    tL += M * dt + _rowdot(N, dW)
    return X + theta * dt + dyn.sigma_times(sigma, dW)


def _run_block(dyn, portfolio, cfg: SimConfig, block: int, m: int, observables, burn_steps: int):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(cfg.seed), spawn_key=(block,))))
    X = _initial_state(dyn, cfg, m, rng)
    tL = np.zeros(m)
    logw = np.zeros(m)
    obs = np.zeros((m, len(observables)))
    dt, sq = cfg.dt, math.sqrt(cfg.dt)
    n_steps = cfg.n_steps
    done = 0
    while done < n_steps:
        chunk = min(STEP_CHUNK, n_steps - done)
        Z = rng.standard_normal((chunk, m, dyn.k))
        for j in range(chunk):
            X = _euler_step(dyn, portfolio, cfg.tilt, X, tL, logw, sq * Z[j], dt)
            if done + j >= burn_steps:
                for i, f in enumerate(observables):
                    obs[:, i] += f(X)
        done += chunk
        if not np.all(np.abs(X) < cfg.guard):
            raise NumericalBlowup(f"|X| exceeded {cfg.guard} in block {block}")
    kept = max(1, n_steps - burn_steps)
    return tL / cfg.t, logw, X, obs / kept


def euler_from_increments(model, portfolio, x0, dW: np.ndarray, dt: float, tilt: Tilt | None = None):
    """Run the scheme on given Brownian increments ``dW`` of shape
    ``(steps, m, k)``; returns ``(t L_t, logw, X_t)``.  Useful for coupling
    runs with different step sizes."""
    dyn = _Dynamics(model)
    steps, m, _ = dW.shape
    X = np.tile(np.asarray(x0, dtype=float).reshape(dyn.l), (m, 1))
    tL, logw = np.zeros(m), np.zeros(m)
    for j in range(steps):
        X = _euler_step(dyn, portfolio, tilt, X, tL, logw, dW[j], dt)
    return tL, logw, X


def simulate_paths(model, portfolio, config: SimConfig, observables=(), burn_in: float = 0.0) -> SimPaths:
    """Simulate ``config.n_paths`` paths of ``(X, L)`` under ``portfolio``.

    ``observables`` are callables of the factor ``(m, l) -> (m,)`` whose time
    averages (after ``burn_in``) are returned per path.
    """
    dyn = _Dynamics(model)
    scale = dyn.theta_scale()
    if scale > 0 and config.dt > 0.1 / scale:
        raise ValidationError(f"dt={config.dt} too large for mean reversion of size {scale:.3g}")
    bs = config.block_size
    sizes = [min(bs, config.n_paths - i * bs) for i in range(-(-config.n_paths // bs))]
    burn_steps = int(round(burn_in / config.dt))
    results = ordered_map(
        lambda i: _run_block(dyn, portfolio, config, i, sizes[i], list(observables), burn_steps),
        range(len(sizes)),
        config.workers,
    )
    return SimPaths(
        L=np.concatenate([r[0] for r in results]),
        logw=np.concatenate([r[1] for r in results]),
        x_final=np.concatenate([r[2] for r in results]),
        obs_avg=np.concatenate([r[3] for r in results]),
        config=config,
    )


def _weighted_log_mean(y: np.ndarray) -> tuple[float, float, float, bool]:
    """``log mean exp(y)``, its delta-method standard error, the effective
    sample size, and the heavy-weight flag."""
    n = y.size
    if not np.any(np.isfinite(y)):
        return -math.inf, math.inf, 0.0, True
    ymax = float(np.max(y))
    w = np.exp(y - ymax)
    mean = w.mean()
    log_mean = math.log(mean) + ymax
    se = float(w.std(ddof=1) / (mean * math.sqrt(n))) if n > 1 else math.inf
    n_eff = float(w.sum() ** 2 / np.sum(w * w))
    top = max(1, int(math.ceil(0.01 * n)))
    heavy = bool(np.sort(w)[-top:].sum() > 0.5 * w.sum())
    return log_mean, se, n_eff, heavy


@dataclass(frozen=True)
class WeightCheck:
    mean: float
    std_error: float

    @classmethod
    def of(cls, logw: np.ndarray) -> "WeightCheck":
        w = np.exp(logw)
        return cls(float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size)))

    def within(self, k: float = 3.0) -> bool:
        return abs(self.mean - 1.0) <= k * self.std_error + 1e-15


@dataclass(frozen=True)
class GrowthEstimate:
    lam: float
    rate: float
    std_error: float
    n_effective: float
    n_paths: int
    degenerate_weights: bool
    weights: WeightCheck
    params: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "estimator": "growth",
            "params": {"lambda": self.lam, **self.params},
            "estimate": self.rate,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "seed": self.params.get("seed"),
            "n_effective": self.n_effective,
            "flags": ["DegenerateWeights"] if self.degenerate_weights else [],
            "weight_mean": self.weights.mean,
            "weight_mean_std_error": self.weights.std_error,
        }


def estimate_growth_rate(model, portfolio, lam: float, config: SimConfig) -> GrowthEstimate:
    """``(1/t) log E[exp(lam t L_t)]`` with importance weights if tilted."""
    lam = float(lam)
    if lam > 0:
        warnings.warn("lambda > 0: the estimator may be dominated by a few paths", stacklevel=2)
    paths = simulate_paths(model, portfolio, config)
    if lam == 0.0 and config.tilt is None:
        lm, se, n_eff, heavy = 0.0, 0.0, float(config.n_paths), False
    else:
        lm, se, n_eff, heavy = _weighted_log_mean(lam * config.t * paths.L + paths.logw)
    return GrowthEstimate(
        lam=lam,
        rate=lm / config.t,
        std_error=se / config.t,
        n_effective=n_eff,
        n_paths=config.n_paths,
        degenerate_weights=heavy,
        weights=WeightCheck.of(paths.logw),
        params=config.params(),
    )


@dataclass(frozen=True)
class TailEstimate:
    q: float
    side: Side
    rate: float
    std_error: float
    tilted: bool
    n_hits: int
    n_paths: int
    mean_L: float
    mean_L_std_error: float
    weights: WeightCheck
    zero_hits: bool = False
    params: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "estimator": "tail",
            "params": {"q": self.q, "side": self.side.value, "tilted": self.tilted, **self.params},
            "estimate": self.rate,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "seed": self.params.get("seed"),
            "n_hits": self.n_hits,
            "mean_L": self.mean_L,
            "mean_L_std_error": self.mean_L_std_error,
            "flags": ["ZeroHits"] if self.zero_hits else [],
            "weight_mean": self.weights.mean,
            "weight_mean_std_error": self.weights.std_error,
        }


def tail_from_paths(paths: SimPaths, q: float, side: Side | str) -> TailEstimate:
    side = Side(side)
    cfg = paths.config
    hit = paths.L >= q if side is Side.AtLeast else paths.L <= q
    n = paths.L.size
    n_hits = int(hit.sum())
    tilted = cfg.tilt is not None
    if n_hits == 0:
        rate, se, zero = -math.inf, math.inf, True
    elif not tilted:
        p = n_hits / n
        rate, se, zero = math.log(p) / cfg.t, math.sqrt((1 - p) / (n * p)) / cfg.t, False
    else:
        y = np.where(hit, paths.logw, -np.inf)
        ymax = float(paths.logw[hit].max())
        v = np.exp(y - ymax)
        mean = v.mean()
        rate = (math.log(mean) + ymax) / cfg.t
        se = float(v.std(ddof=1) / (mean * math.sqrt(n))) / cfg.t
        zero = False
    return TailEstimate(
        q=float(q),
        side=side,
        rate=float(rate),
        std_error=float(se),
        tilted=tilted,
        n_hits=n_hits,
        n_paths=n,
        mean_L=float(paths.L.mean()),
        mean_L_std_error=float(paths.L.std(ddof=1) / math.sqrt(n)),
        weights=WeightCheck.of(paths.logw),
        zero_hits=zero,
        params=cfg.params(),
    )


def estimate_tail_rate(model, portfolio, q: float, side: Side | str, config: SimConfig) -> TailEstimate:
    """``(1/t) log P(L_t >= q)`` or ``(1/t) log P(L_t <= q)``."""
    return tail_from_paths(simulate_paths(model, portfolio, config), q, side)


@dataclass(frozen=True)
class ErgodicAverage:
    value: float
    std_error: float
    n_paths: int
    weights: WeightCheck | None = None

    def __float__(self) -> float:
        return self.value


def ergodic_average(model: AffineModel, lam: float, g: Callable, config: SimConfig, burn_in: float = 0.0) -> ErgodicAverage:
    """Long-run time average of ``g(X)`` under the dynamics tilted at ``lam``.

    ``g`` maps ``(m, l)`` factor values to ``(m,)``; the reported error is
    the standard error across independent paths.
    """
    tilt = Tilt.at_lambda(model, lam)
    cfg = replace(config, tilt=tilt)
    paths = simulate_paths(model, tilt.control, cfg, observables=[g], burn_in=burn_in)
    v = paths.obs_avg[:, 0]
    return ErgodicAverage(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), v.size, WeightCheck.of(paths.logw))


def optimal_tail_setup(model: AffineModel, q: float, curve: RateCurve | None = None):
    """``(portfolio, tilt, decay)`` for the tilted tail estimator at ``q``."""
    curve = curve if curve is not None else build_rate_curve(model, n=41)
    dec = decay_rates(curve, q)
    port = optimal_portfolio(model, q, decay=dec)
    tilt = Tilt.at_lambda(model, dec.lambda_hat, q=float(q))
    return port, tilt, dec


__all__ = [
    "Side",
    "Tilt",
    "GridFeedback",
    "SimConfig",
    "SimPaths",
    "simulate_paths",
    "euler_from_increments",
    "estimate_growth_rate",
    "estimate_tail_rate",
    "tail_from_paths",
    "ergodic_average",
    "GrowthEstimate",
    "TailEstimate",
    "ErgodicAverage",
    "WeightCheck",
    "constant_portfolio",
    "optimal_tail_setup",
]

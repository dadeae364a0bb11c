"""Ergodic Bellman equation for one-factor, one-asset nonlinear models.

Unknowns are the constant ``Lambda`` and the gradient ``g = f'`` of the
value function in

    1/2 s(x) g'(x) + 1/2 T(x) g^2 + S(x) g + R(x) = Lambda,   s = |sigma(x)|^2,

which is a first-order Riccati-type ODE for ``g``.  The solution with linear
growth is found by shooting: integrate forward from ``x_min`` starting on the
upper root of the pointwise quadratic, backward from ``x_max`` starting on
the lower one (each direction is stable along its own branch), and adjust
``Lambda`` until the two meet at the grid node nearest 0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, DomainTooNarrow, ModelValidationError, NoConvergence
from .model import GeneralModel1D

TOL_PDE = 1e-6
_BLOWUP = 1e8


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < 0 < self.x_max:
            raise ModelValidationError("grid needs x_min < 0 < x_max")
        if self.n_points < 64:
            raise ModelValidationError("grid needs at least 64 points")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)


@dataclass(frozen=True)
class Coefficients:
    """``T, S, R`` and ``s = sigma sigma^T`` evaluated at points ``x``."""

    T: np.ndarray
    S: np.ndarray
    R: np.ndarray
    s: np.ndarray


def _mu(lam: float) -> float:
    if lam >= 1:
        raise DomainError(f"lambda must be < 1, got {lam}")
    return lam / (1.0 - lam)


def coefficients(model: GeneralModel1D, lam: float, x) -> Coefficients:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mu = _mu(lam)
    B, Sg, Be = model.b_row(x), model.sigma_row(x), model.beta_row(x)
    c = np.sum(B * B, axis=-1)
    s = np.sum(Sg * Sg, axis=-1)
    sb = np.sum(Sg * B, axis=-1)
    bbeta = np.sum(B * Be, axis=-1)
    sbeta = np.sum(Sg * Be, axis=-1)
    beta_sq = np.sum(Be * Be, axis=-1)
    r = model.r(x)
    w = model.a(x) - r - lam * bbeta
    T = s + mu * sb * sb / c
    S = mu * w * sb / c - lam * sbeta + model.theta(x)
    R = 0.5 * mu * w * w / c + lam * (r - model.alpha(x) + 0.5 * beta_sq) + 0.5 * lam**2 * beta_sq
    return Coefficients(T, S, R, s)


def eval_Hbreve(model: GeneralModel1D, lam: float, x, p):
    """``1/2 T(x) p^2 + S(x) p + R(x)``; broadcasts over ``x`` and ``p``."""
    scalar = np.ndim(x) == 0 and np.ndim(p) == 0
    co = coefficients(model, lam, x)
    p = np.asarray(p, dtype=float)
    out = 0.5 * co.T * p * p + co.S * p + co.R
    return float(out[0]) if scalar else out


def hamiltonian_objective(model: GeneralModel1D, lam: float, x, p, u):
    """The expression whose extremum over the portfolio ``u`` gives
    ``eval_Hbreve``:  ``lam M + lam^2 |N|^2 / 2 + lam N.sigma^T p + theta p + |sigma^T p|^2 / 2``
    with ``M`` and ``N`` the drift and volatility of the log wealth ratio."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    B, Sg, Be = model.b_row(x), model.sigma_row(x), model.beta_row(x)
    c = np.sum(B * B, axis=-1)
    r = model.r(x)
    beta_sq = np.sum(Be * Be, axis=-1)
    M = u * (model.a(x) - r) - 0.5 * c * u * u + r - model.alpha(x) + 0.5 * beta_sq
    N = B * u[..., None] - Be
    sigma_p = Sg * p[..., None] if p.ndim else Sg * p
    out = (
        lam * M
        + 0.5 * lam**2 * np.sum(N * N, axis=-1)
        + lam * np.sum(N * sigma_p, axis=-1)
        + model.theta(x) * p
        + 0.5 * np.sum(sigma_p * sigma_p, axis=-1)
    )
    return out


def feedback_from_gradient(model: GeneralModel1D, lam: float, x, g) -> np.ndarray:
    """Optimal fraction of wealth in the risky asset given ``g = f'``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    B, Sg, Be = model.b_row(x), model.sigma_row(x), model.beta_row(x)
    c = np.sum(B * B, axis=-1)
    sb = np.sum(Sg * B, axis=-1)
    bbeta = np.sum(B * Be, axis=-1)
    w = model.a(x) - model.r(x) - lam * bbeta + sb * np.asarray(g, dtype=float)
    return w / (c * (1.0 - lam))


def tilted_drift(model: GeneralModel1D, lam: float, x, g) -> np.ndarray:
    """Factor drift under the measure change built from ``(lam, g)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = feedback_from_gradient(model, lam, x, g)
    B, Sg, Be = model.b_row(x), model.sigma_row(x), model.beta_row(x)
    s = np.sum(Sg * Sg, axis=-1)
    sb = np.sum(Sg * B, axis=-1)
    sbeta = np.sum(Sg * Be, axis=-1)
    return model.theta(x) + lam * (sb * u - sbeta) + s * g


@dataclass(frozen=True, eq=False)
class ErgodicSolution1D:
    lam: float
    Lambda: float
    x: np.ndarray
    g: np.ndarray
    u: np.ndarray
    m_hat: np.ndarray
    residual: float
    boundary_residual: float
    match_index: int

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "g", "u", "m_hat"])
            for row in zip(self.x, self.g, self.u, self.m_hat):
                w.writerow([repr(float(v)) for v in row])


def read_solution_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


class _Shooter:
    def __init__(self, co_nodes: Coefficients, co_mid: Coefficients, h: float, match: int):
        def prep(co):
            return (
                (2.0 / co.s).tolist(),
                (-2.0 * co.R / co.s).tolist(),
                (-2.0 * co.S / co.s).tolist(),
                (-co.T / co.s).tolist(),
            )

        self.nodes = prep(co_nodes)
        self.mid = prep(co_mid)
        self.co = co_nodes
        self.h = h
        self.match = match
        self.n = co_nodes.s.size

    def _manifold(self, i: int, Lam: float, upper: bool, shift: float = 0.0) -> float:
        # root of 1/2 T g^2 + S g + R + shift - Lam = 0
        T, S, R = self.co.T[i], self.co.S[i], self.co.R[i] + shift
        disc = S * S - 2.0 * T * (R - Lam)
        if disc <= 0:
            return -S / T
        root = math.sqrt(disc)
        if upper:
            return (-S + root) / T if S <= 0 else -2.0 * (R - Lam) / (S + root)
        return (-S - root) / T if S >= 0 else -2.0 * (R - Lam) / (S - root)

    def start(self, Lam: float, forward: bool) -> float:
        idx = [0, 1, 2] if forward else [self.n - 1, self.n - 2, self.n - 3]
        shifts = [0.0, 0.0, 0.0]
        g = [0.0, 0.0, 0.0]
        for _ in range(6):
            g = [self._manifold(i, Lam, forward, sh) for i, sh in zip(idx, shifts)]
            # one-sided second-order slope at the endpoint, copied to the next nodes
            slope = (-3 * g[0] + 4 * g[1] - g[2]) / (2 * self.h)
            if not forward:
                slope = -slope
            shifts = [0.5 * self.co.s[i] * slope for i in idx]
        return g[0]

    def integrate(self, Lam: float, forward: bool, record: bool = False):
        inv2s, a0, a1, a2 = self.nodes
        m_inv2s, m_a0, m_a1, m_a2 = self.mid
        g = self.start(Lam, forward)
        if forward:
            rng, h = range(0, self.match), self.h
        else:
            rng, h = range(self.n - 1, self.match, -1), -self.h
        path = [g] if record else None
        for i in rng:
            j = i + 1 if forward else i - 1
            mi = i if forward else i - 1
            k1 = inv2s[i] * Lam + a0[i] + (a1[i] + a2[i] * g) * g
            gm = g + 0.5 * h * k1
            cm = m_inv2s[mi] * Lam + m_a0[mi]
            k2 = cm + (m_a1[mi] + m_a2[mi] * gm) * gm
            gm = g + 0.5 * h * k2
            k3 = cm + (m_a1[mi] + m_a2[mi] * gm) * gm
            ge = g + h * k3
            k4 = inv2s[j] * Lam + a0[j] + (a1[j] + a2[j] * ge) * ge
            g = g + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
            if not abs(g) < _BLOWUP:
                return None
            if record:
                path.append(g)
        return path if record else g

    def defect(self, Lam: float) -> float:
        gf = self.integrate(Lam, True)
        gb = self.integrate(Lam, False)
        if gf is None or gb is None:
            return -_BLOWUP
        return gf - gb


def _fd_first(g: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Fourth-order derivative: central on interior nodes, one-sided on the
    two outermost nodes at each end."""
    d = np.empty_like(g)
    d[2:-2] = (g[:-4] - 8 * g[1:-3] + 8 * g[3:-1] - g[4:]) / (12 * h)
    c0 = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    c1 = np.array([-3, -10, 18, -6, 1]) / (12 * h)
    d[0] = c0 @ g[:5]
    d[1] = c1 @ g[:5]
    d[-1] = -(c0 @ g[-5:][::-1])
    d[-2] = -(c1 @ g[-5:][::-1])
    interior = np.zeros(g.size, dtype=bool)
    interior[2:-2] = True
    return d, interior


def stationary_density(x: np.ndarray, drift: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Zero-flux exponentially fitted density of ``dX = drift dt + sqrt(s) dW``.

    With ``w = s m`` the zero-flux condition ``drift m = (s m)'/2`` gives
    ``w_{i+1} / w_i = exp(2 h (drift/s)_{i+1/2})``; the result is positive
    and normalised so that ``sum(m) h = 1``.
    """
    h = float(x[1] - x[0])
    ratio = drift / s
    mid = 0.5 * (ratio[1:] + ratio[:-1])
    logw = np.concatenate([[0.0], np.cumsum(2.0 * h * mid)])
    logm = logw - np.log(s)
    m = np.exp(logm - logm.max())
    return m / (m.sum() * h)


def solve_ergodic_bellman(
    model: GeneralModel1D,
    lam: float,
    grid: Grid1D,
    tol_pde: float = TOL_PDE,
    max_iter: int = 200,
) -> ErgodicSolution1D:
    """Solve for ``(Lambda, g)`` and the tilted stationary density."""
    lam = float(lam)
    _mu(lam)
    x = grid.x
    h = grid.h
    ends = np.array([x[0], x[-1]])
    if np.any(model.theta(ends) * ends >= 0):
        raise ModelValidationError("theta(x) x must be negative at both grid endpoints")
    co = coefficients(model, lam, x)
    co_mid = coefficients(model, lam, 0.5 * (x[1:] + x[:-1]))
    if np.any(co.T <= 0) or np.any(co_mid.T <= 0):
        raise NoConvergence(f"quadratic coefficient T is not positive at lambda={lam}")
    match = int(np.argmin(np.abs(x)))
    sh = _Shooter(co, co_mid, h, match)

    scale = 1.0 + float(np.max(np.abs(co.R[match - 1 : match + 2])))
    lo, hi = -scale, scale
    d_lo, d_hi = sh.defect(lo), sh.defect(hi)
    it = 0
    while d_lo >= 0 and it < 60:
        hi, d_hi = lo, d_lo
        lo -= 2.0 * (hi - lo if hi > lo else scale)
        d_lo = sh.defect(lo)
        it += 1
    while d_hi <= 0 and it < 60:
        lo, d_lo = hi, d_hi
        hi += 2.0 * (hi - lo if hi > lo else scale)
        d_hi = sh.defect(hi)
        it += 1
    if not (d_lo < 0 < d_hi):
        raise NoConvergence(f"could not bracket Lambda at lambda={lam}")
    try:
        Lam = brentq(sh.defect, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
    except RuntimeError as exc:
        raise NoConvergence(str(exc)) from exc

    fwd = sh.integrate(Lam, True, record=True)
    bwd = sh.integrate(Lam, False, record=True)
    if fwd is None or bwd is None:
        raise NoConvergence(f"shooting blew up at the located Lambda (lambda={lam})")
    g = np.empty(x.size)
    g[: match + 1] = fwd
    g[match:] = bwd[::-1]
    g[match] = 0.5 * (fwd[-1] + bwd[-1])

    dg, interior = _fd_first(g, h)
    res = np.abs(0.5 * co.s * dg + 0.5 * co.T * g * g + co.S * g + co.R - Lam)
    r_int = float(res[interior].max())
    r_bdry = float(res[~interior].max())
    tol = tol_pde * (1.0 + abs(Lam))
    if r_int > tol:
        raise NoConvergence(f"interior residual {r_int:.3e} exceeds {tol:.3e}")
    if r_bdry > 10.0 * max(r_int, tol):
        raise DomainTooNarrow(f"boundary residual {r_bdry:.3e} vs interior {r_int:.3e}")

    u = feedback_from_gradient(model, lam, x, g)
    m_hat = stationary_density(x, tilted_drift(model, lam, x, g), co.s)
    return ErgodicSolution1D(
        lam=lam,
        Lambda=float(Lam),
        x=x,
        g=g,
        u=u,
        m_hat=m_hat,
        residual=r_int,
        boundary_residual=r_bdry,
        match_index=match,
    )


def adjoint_defect(sol: ErgodicSolution1D, model: GeneralModel1D, test: np.ndarray) -> float:
    """``h * sum m_hat (b_hat test' + s test''/2)`` for a discrete test function
    vanishing near the boundary; zero up to O(h^2) for the exact density."""
    x, h = sol.x, sol.h
    b = tilted_drift(model, sol.lam, x, sol.g)
    s = model.ssq(x)
    d1 = np.gradient(test, h, edge_order=2)
    d2 = np.zeros_like(test)
    d2[1:-1] = (test[2:] - 2 * test[1:-1] + test[:-2]) / h**2
    return float(h * np.sum(sol.m_hat * (b * d1 + 0.5 * s * d2)))

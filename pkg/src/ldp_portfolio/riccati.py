"""Algebraic Riccati equation for the quadratic part of the value function.

For ``lambda < 1`` and ``mu = lambda / (1 - lambda)`` the symmetric matrix
``P1`` solves

    P1 B P1 + A^T P1 + P1 A + mu C = 0,

with ``A = Theta1 + mu sigma b^T c^{-1} (A1 - 1 r1^T)``,
``B = sigma sigma^T + mu sigma b^T c^{-1} b sigma^T`` and
``C = (A1 - 1 r1^T)^T c^{-1} (A1 - 1 r1^T)``.  The root of interest is the
one making ``D = A + B P1`` stable (semistable at the boundary of the
existence region).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg

from .errors import DomainError, NoSolution
from .model import AffineModel, ScalarModel

TOL_RICCATI = 1e-10


class Definiteness(str, Enum):
    NegativeSemiDef = "NegativeSemiDef"
    PositiveSemiDef = "PositiveSemiDef"
    Indefinite = "Indefinite"


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    lam: float
    P1: np.ndarray
    D: np.ndarray
    stable: bool
    definiteness: Definiteness
    residual: float
    note: str = ""

    @property
    def semistable(self) -> bool:
        return self.note == "semistable"


def _mu(lam: float) -> float:
    if lam >= 1:
        raise DomainError(f"lambda must be < 1, got {lam}")
    return lam / (1.0 - lam)


def riccati_coefficients(model: AffineModel, lam: float):
    """Return ``(A, B, C)`` at risk-sensitivity ``lam``."""
    mu = _mu(lam)
    sbc = model.sb @ model.c_inv  # sigma b^T c^{-1}, l x n
    A = model.Theta1 + mu * sbc @ model.excess_slope
    B = model.sigma_sq + mu * sbc @ model.sb.T
    C = model.excess_slope.T @ model.c_inv @ model.excess_slope
    return A, 0.5 * (B + B.T), 0.5 * (C + C.T)


def riccati_residual(P, A, B, C, mu) -> float:
    R = P @ B @ P + A.T @ P + P @ A + mu * C
    return float(np.linalg.norm(R, "fro"))


def _definiteness(P, tol=1e-12) -> Definiteness:
    eigs = np.linalg.eigvalsh(0.5 * (P + P.T))
    scale = max(1.0, float(np.abs(eigs).max()))
    if eigs.max() <= tol * scale:
        return Definiteness.NegativeSemiDef
    if eigs.min() >= -tol * scale:
        return Definiteness.PositiveSemiDef
    return Definiteness.Indefinite


def _pack(lam, P, A, B, C, mu, note="") -> RiccatiSolution:
    D = A + B @ P
    re = np.linalg.eigvals(D).real
    stable = bool(np.all(re < 0)) and note != "semistable"
    return RiccatiSolution(
        lam=float(lam),
        P1=P,
        D=D,
        stable=stable,
        definiteness=_definiteness(P),
        residual=riccati_residual(P, A, B, C, mu),
        note=note,
    )


def _newton_refine(P, A, B, C, mu, iters=20):
    for _ in range(iters):
        R = P @ B @ P + A.T @ P + P @ A + mu * C
        scale = 1.0 + np.abs(A).max() * np.abs(P).max() + abs(mu) * np.abs(C).max()
        if np.linalg.norm(R, "fro") <= 1e-14 * scale:
            break
        D = A + B @ P
        # D^T X + X D = -R
        dP = linalg.solve_continuous_lyapunov(D.T, -R)
        P = P + 0.5 * (dP + dP.T)
    return P


def solve_riccati(model: AffineModel, lam: float) -> RiccatiSolution:
    """Stabilising root of the Riccati equation.

    ``l = 1`` uses the numerically stable form of the quadratic formula,
    ``l > 1`` the stable invariant subspace of the Hamiltonian matrix
    (ordered real Schur form) followed by Newton polishing.  Raises
    ``NoSolution`` when no root with stable or semistable ``D`` exists.
    """
    lam = float(lam)
    mu = _mu(lam)
    A, B, C = riccati_coefficients(model, lam)
    l = model.l
    if lam == 0.0:
        return _pack(lam, np.zeros((l, l)), A, B, C, mu)
    if l == 1:
        a, b_, c_ = A[0, 0], B[0, 0], mu * C[0, 0]
        if b_ <= 0:
            raise NoSolution(f"B({lam}) is not positive")
        disc = a * a - b_ * c_
        scale = a * a + abs(b_ * c_)
        if disc < -1e-14 * scale:
            raise NoSolution(f"negative discriminant at lambda={lam}")
        if disc <= 1e-14 * scale:
            return _pack(lam, np.array([[-a / b_]]), A, B, C, mu, note="semistable")
        s = math.sqrt(disc)
        p = c_ / (-a + s) if -a > 0 else (-a - s) / b_
        return _pack(lam, np.array([[p]]), A, B, C, mu)

    H = np.block([[A, B], [-mu * C, -A.T]])
    eigs = np.linalg.eigvals(H)
    hscale = max(1.0, float(np.abs(eigs).max()))
    if np.any(np.abs(eigs.real) <= 1e-10 * hscale):
        raise NoSolution(f"Hamiltonian has eigenvalues on the imaginary axis at lambda={lam}")
    T, Z, sdim = linalg.schur(H, output="real", sort="lhp")
    if sdim != l:
        raise NoSolution(f"stable invariant subspace has dimension {sdim}, expected {l}")
    U11, U21 = Z[:l, :l], Z[l:, :l]
    if np.linalg.cond(U11) > 1e12:
        raise NoSolution("stable invariant subspace is not a graph over the first block")
    P = np.linalg.solve(U11.T, U21.T).T
    P = _newton_refine(0.5 * (P + P.T), A, B, C, mu)
    return _pack(lam, P, A, B, C, mu)


def tilde_beta(model: ScalarModel) -> float:
    """Threshold parameter of the scalar model; existence region is
    ``lambda <= min(1/tilde_beta, 1)``."""
    m = ScalarModel.from_affine(model)
    d = m.A1_r1
    return 1.0 + d / m.c_s * (m.ssq * d - 2.0 * m.Theta * m.sb_s) / m.Theta**2


def scalar_closed_form(model: ScalarModel, lam: float) -> RiccatiSolution:
    m = ScalarModel.from_affine(model)
    lam = float(lam)
    mu = _mu(lam)
    tb = tilde_beta(m)
    ratio = (1.0 - lam * tb) / (1.0 - lam)
    if ratio < 0:
        raise NoSolution(f"1 - lambda*tilde_beta < 0 at lambda={lam}")
    A, B, C = riccati_coefficients(m, lam)
    root = abs(m.Theta) * math.sqrt(ratio)
    P = np.array([[(-A[0, 0] - root) / B[0, 0]]])
    D = np.array([[m.Theta * math.sqrt(ratio)]])
    note = "semistable" if ratio == 0 else ""
    return RiccatiSolution(
        lam=lam,
        P1=P,
        D=D,
        stable=bool(D[0, 0] < 0),
        definiteness=_definiteness(P),
        residual=riccati_residual(P, A, B, C, mu),
        note=note,
    )


class ScalarCase(str, Enum):
    BetaGt1_Eneq0 = "BetaGt1_Eneq0"
    BetaGt1_Eeq0 = "BetaGt1_Eeq0"
    BetaLt1 = "BetaLt1"
    BetaEq1_Regular = "BetaEq1_Regular"
    BetaEq1_Degenerate = "BetaEq1_Degenerate"


@dataclass(frozen=True)
class ScalarCaseAnalysis:
    tilde_beta: float
    lambda_bar: float
    case: ScalarCase
    F_at_bar: float
    left_derivative_at_bar: float

    def to_dict(self) -> dict:
        return {
            "tilde_beta": self.tilde_beta,
            "lambda_bar": self.lambda_bar,
            "case": self.case.value,
            "F_at_bar": self.F_at_bar,
            "left_derivative_at_bar": self.left_derivative_at_bar,
        }


TOL_CASE = 1e-12


def classify_scalar_case(model: ScalarModel, q: float | None = None) -> ScalarCaseAnalysis:
    """Split the scalar model into the boundary regimes of F at lambda_bar.

    ``q`` only matters when ``tilde_beta = 1`` and F(1) is finite: then the
    maximiser sits on the boundary (degenerate case) iff ``q >= F'(1-)``.
    """
    from . import rate

    m = ScalarModel.from_affine(model)
    tb = tilde_beta(m)
    inf = math.inf
    if tb > 1 + TOL_CASE:
        lb = 1.0 / tb
        A, B, _ = riccati_coefficients(m, lb)
        P_bar = np.array([[-A[0, 0] / B[0, 0]]])
        E = rate.e_vector(m, lb, P_bar)
        scale = 1.0 + abs(_mu(lb)) * (abs(m.A1_r1) + abs(m.sb_s * P_bar[0, 0])) * (abs(m.a2_r2) + abs(m.bbeta))
        if abs(E[0]) <= 1e-10 * scale:
            val, _, _ = rate.left_limit(m, lb)
            return ScalarCaseAnalysis(tb, lb, ScalarCase.BetaGt1_Eeq0, val, inf)
        return ScalarCaseAnalysis(tb, lb, ScalarCase.BetaGt1_Eneq0, inf, inf)
    if tb < 1 - TOL_CASE:
        val, _, _ = rate.left_limit(m, 1.0)
        return ScalarCaseAnalysis(tb, 1.0, ScalarCase.BetaLt1, val, inf)
    # tilde_beta == 1: D = Theta1 throughout, P1 and p2 extend smoothly to 1
    p2_1 = rate.p2_at_one(m)
    defect = m.a2_r2 - m.bbeta + m.sb_s * p2_1
    if abs(defect) > 1e-9 * (1.0 + abs(m.a2_r2) + abs(m.bbeta)):
        return ScalarCaseAnalysis(tb, 1.0, ScalarCase.BetaEq1_Regular, inf, inf)
    val, _, slope = rate.left_limit(m, 1.0)
    case = ScalarCase.BetaEq1_Degenerate if (q is not None and q >= slope) else ScalarCase.BetaEq1_Regular
    return ScalarCaseAnalysis(tb, 1.0, case, val, slope)

"""Optimal long-run benchmark-relative portfolios for diffusion factor models.

Risk-sensitive growth rates ``F(lambda)``, decay rates of out- and
under-performance probabilities, optimal feedback portfolios, an ergodic
Bellman solver for one-factor nonlinear models, and importance-sampled Monte
Carlo checks.
"""

from .bellman1d import Grid1D, ErgodicSolution1D, eval_Hbreve, feedback_from_gradient, solve_ergodic_bellman
from .errors import (
    DegenerateInfeasible,
    DomainError,
    DomainTooNarrow,
    LdpError,
    ModelValidationError,
    NoConvergence,
    NoSolution,
    NotAttained,
    NumericalBlowup,
    NumericalError,
    SingularMatrix,
    Unsolvable,
    Unstable,
    ValidationError,
)
from .io import load_fixture, load_model
from .model import (
    AffineModel,
    ConditionNReport,
    GeneralModel1D,
    ScalarModel,
    check_condition_n,
    check_growth_condition,
    projection_q1,
    projection_q2,
)
from .rate import (
    AffinePortfolio,
    DecaySolution,
    GaussianInvariantMeasure,
    RateCurve,
    build_rate_curve,
    decay_rates,
    eval_F,
    invariant_measure,
    lambda_bar,
    optimal_portfolio,
    solve_p2,
)
from .riccati import (
    RiccatiSolution,
    ScalarCaseAnalysis,
    classify_scalar_case,
    riccati_coefficients,
    scalar_closed_form,
    solve_riccati,
    tilde_beta,
)
from .simulate import (
    GrowthEstimate,
    SimConfig,
    Side,
    TailEstimate,
    Tilt,
    ergodic_average,
    estimate_growth_rate,
    estimate_tail_rate,
    simulate_paths,
)

__version__ = "0.1.0"

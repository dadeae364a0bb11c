"""Monte Carlo checks of growth and tail rates on the reference model, plus
a horizon study showing the O(log t / t) gap between finite-t tail rates and
the limiting decay rate, and the spread of the importance weights."""

from __future__ import annotations

import argparse
import math
from dataclasses import dataclass

import numpy as np

from ldp_portfolio import (
    SimConfig,
    Tilt,
    build_rate_curve,
    decay_rates,
    estimate_growth_rate,
    eval_F,
    load_fixture,
    simulate_paths,
)
from ldp_portfolio.rate import dF
from ldp_portfolio.simulate import tail_from_paths


@dataclass
class Config:
    dt: float = 0.005
    n_paths: int = 4000
    seed: int = 1
    horizons: tuple[float, ...] = (10.0, 25.0, 50.0, 100.0)
    growth_lambdas: tuple[float, ...] = (-0.5, -1.0)
    tail_lambda: float = -1.0


def second_derivative(m, lam, h=1e-3):
    return (eval_F(m, lam + h) - 2 * eval_F(m, lam) + eval_F(m, lam - h)) / h**2


def main(cfg: Config) -> None:
    R = load_fixture("R")
    print("growth rate, tilted at lambda with the lambda-optimal portfolio (t=50)")
    for lam in cfg.growth_lambdas:
        tilt = Tilt.at_lambda(R, lam)
        est = estimate_growth_rate(R, tilt.control, lam, SimConfig(50.0, cfg.dt, cfg.n_paths, cfg.seed, tilt))
        print(f"  lambda={lam:5.2f}: estimate {est.rate:.6f} +/- {est.std_error:.1e}, F = {eval_F(R, lam):.6f}")

    lam = cfg.tail_lambda
    q = dF(R, lam)
    dec = decay_rates(build_rate_curve(R, n=81), q)
    F2 = second_derivative(R, lam)
    print(f"\ntail P(L_t <= q) at q = F'({lam}) = {q:.5f}; -J = {-dec.J_q:.5f}, F''({lam}) = {F2:.4f}")
    print(f"  {'t':>6s} {'estimate':>10s} {'se':>8s} {'with prefactor':>15s} {'var logw':>9s} {'lam^2 t F2':>10s}")
    tilt = Tilt.at_lambda(R, lam, q=q)
    for t in cfg.horizons:
        paths = simulate_paths(R, tilt.control, SimConfig(t, cfg.dt, cfg.n_paths, cfg.seed, tilt))
        est = tail_from_paths(paths, q, "AtMost")
        # Bahadur-Rao: P ~ exp(-t J) / (|lam| sqrt(2 pi t F''))
        pred = -dec.J_q - math.log(abs(lam) * math.sqrt(2 * math.pi * t * F2)) / t
        print(
            f"  {t:6.0f} {est.rate:10.5f} {est.std_error:8.1e} {pred:15.5f} "
            f"{np.var(paths.logw):9.2f} {lam**2 * t * F2:10.2f}"
        )


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-paths", type=int, default=Config.n_paths)
    ap.add_argument("--seed", type=int, default=Config.seed)
    a = ap.parse_args()
    main(Config(n_paths=a.n_paths, seed=a.seed))

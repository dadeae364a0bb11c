"""Decay rates and optimal affine portfolios over a range of targets q."""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from ldp_portfolio import build_rate_curve, decay_rates, load_fixture, optimal_portfolio
from ldp_portfolio.rate import dF


@dataclass
class Config:
    model: str = "R"
    q_min: float = -1.0
    q_max: float = 1.2
    n_q: int = 12


def main(cfg: Config) -> None:
    m = load_fixture(cfg.model)
    curve = build_rate_curve(m, n=121)
    print(f"model {cfg.model}: lambda_bar = {curve.lambda_bar:.6f}, typical growth F'(0) = {dF(m, 0.0):.6f}")
    print(f"{'q':>8s} {'lambda_hat':>11s} {'J_q':>10s} {'J_out':>10s} {'J_short':>10s} {'G':>9s} {'g0':>9s}  flags")
    for q in np.linspace(cfg.q_min, cfg.q_max, cfg.n_q):
        d = decay_rates(curve, q)
        p = optimal_portfolio(m, q, decay=d)
        flags = "degenerate" if d.degenerate else ""
        print(
            f"{q:8.4f} {d.lambda_hat:11.6f} {d.J_q:10.6f} {d.J_q_out:10.6f} {d.J_q_short:10.6f} "
            f"{p.G[0, 0]:9.5f} {p.g0[0]:9.5f}  {flags}"
        )


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default=Config.model)
    ap.add_argument("--q-min", type=float, default=Config.q_min)
    ap.add_argument("--q-max", type=float, default=Config.q_max)
    ap.add_argument("--n-q", type=int, default=Config.n_q)
    a = ap.parse_args()
    main(Config(a.model, a.q_min, a.q_max, a.n_q))

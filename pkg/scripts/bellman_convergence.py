"""Grid refinement study of the ergodic Bellman solver.

For the affine model the exact answer comes from the Riccati route; for the
nonlinear fixture a fine-grid solution serves as reference.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

import numpy as np

from ldp_portfolio import GeneralModel1D, Grid1D, eval_F, load_fixture, solve_ergodic_bellman
from ldp_portfolio.bellman1d import adjoint_defect


@dataclass
class Config:
    lam: float = -1.0
    x_max: float = 6.0
    levels: tuple[int, ...] = (8, 9, 10, 11)  # n = 2^k + 1
    ref_level: int = 13


def refinement(model, cfg: Config) -> None:
    grid = lambda k: Grid1D(-cfg.x_max, cfg.x_max, 2**k + 1)
    ref = solve_ergodic_bellman(model, cfg.lam, grid(cfg.ref_level))
    print(f"  reference Lambda = {ref.Lambda:.12f} on {ref.x.size} points")
    print(f"  {'n':>6s} {'max|g-g_ref|':>13s} {'|dLambda|':>11s} {'adjoint':>10s} {'seconds':>8s}")
    for k in cfg.levels:
        t0 = time.perf_counter()
        sol = solve_ergodic_bellman(model, cfg.lam, grid(k))
        dt = time.perf_counter() - t0
        stride = 2 ** (cfg.ref_level - k)
        err = np.abs(sol.g - ref.g[::stride]).max()
        test = np.exp(-sol.x**2) * np.sin(sol.x + 0.3)
        adj = abs(adjoint_defect(sol, model, test))
        print(f"  {sol.x.size:6d} {err:13.3e} {abs(sol.Lambda - ref.Lambda):11.3e} {adj:10.2e} {dt:8.3f}")


def main(cfg: Config) -> None:
    R = load_fixture("R")
    sol = solve_ergodic_bellman(GeneralModel1D.from_affine(R), cfg.lam, Grid1D(-8, 8, 2048))
    print(f"affine R at lambda={cfg.lam}: Lambda = {sol.Lambda:.12f}, F = {eval_F(R, cfg.lam):.12f}")
    print("nonlinear fixture:")
    refinement(load_fixture("nonlinear"), cfg)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambda", dest="lam", type=float, default=Config.lam)
    main(Config(lam=ap.parse_args().lam))

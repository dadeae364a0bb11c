"""Tabulate F(lambda), its threshold and the boundary classification for the
bundled one-factor models; writes one CSV per model."""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from ldp_portfolio import build_rate_curve, classify_scalar_case, load_fixture
from ldp_portfolio.io import write_rate_curve_csv


@dataclass
class Config:
    models: list[str] = field(default_factory=lambda: ["R", "R2", "R3"])
    lmin: float = -4.0
    n: int = 201
    out: Path = Path("out/rate_curve")


def main(cfg: Config) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    print(f"{'model':6s} {'tilde_beta':>10s} {'lambda_bar':>10s} {'case':>22s} {'F(bar)':>10s} {'F_-(bar)':>10s}")
    for name in cfg.models:
        m = load_fixture(name)
        curve = build_rate_curve(m, lmin=cfg.lmin, n=cfg.n)
        write_rate_curve_csv(curve, cfg.out / f"{name}.csv", {"model": name, "lambda_bar": curve.lambda_bar})
        an = classify_scalar_case(m)
        print(
            f"{name:6s} {an.tilde_beta:10.4f} {an.lambda_bar:10.4f} {an.case.value:>22s} "
            f"{an.F_at_bar:10.5f} {an.left_derivative_at_bar:10.4f}"
        )
    print(f"curves written to {cfg.out}/")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lmin", type=float, default=Config.lmin)
    ap.add_argument("--n", type=int, default=Config.n)
    ap.add_argument("--out", type=Path, default=Config.out)
    a = ap.parse_args()
    main(Config(lmin=a.lmin, n=a.n, out=a.out))

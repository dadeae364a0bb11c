"""Command-line front end: ``ldp-portfolio <command> MODEL --out DIR [options]``.

Exit status 0 on success, 2 for invalid input, 3 when a numerical procedure
fails; errors are printed to stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bellman1d, io, rate, simulate
from .errors import LdpError, NumericalError, ValidationError
from .model import AffineModel, GeneralModel1D, check_condition_n, check_growth_condition
from .riccati import solve_riccati

COMMANDS = ("check", "rate-curve", "decay", "portfolio", "bellman1d", "simulate")


@dataclass
class RunSpec:
    command: str
    model_path: Path
    out_dir: Path
    params: dict = field(default_factory=dict)


def _require_affine(model, command):
    if not isinstance(model, AffineModel):
        raise ValidationError(f"'{command}' needs an affine model")
    return model


def _curve(model, p):
    return rate.build_rate_curve(model, lmin=p["lmin"], lmax=p.get("lmax"), n=p["n"])


def _cmd_check(model, spec):
    report = check_condition_n(model)
    out = {"condition_n": report.to_dict()}
    if isinstance(model, AffineModel):
        out["model"] = {"kind": "affine", "n": model.n, "l": model.l, "k": model.k}
        out["lambda_bar"] = rate.lambda_bar(model)
        if model.is_scalar:
            from .riccati import classify_scalar_case

            out["scalar_case"] = classify_scalar_case(model).to_dict()
        lam = spec.params["growth_lambda"]
        out["growth_condition"] = {"lambda": lam, "holds": check_growth_condition(model, solve_riccati(model, lam))}
    else:
        out["model"] = {"kind": "general1d", "k": model.k, "domain": list(model.domain)}
    path = spec.out_dir / "check.json"
    io.write_json(path, out)
    return out, [path]


def _cmd_rate_curve(model, spec):
    model = _require_affine(model, spec.command)
    p = spec.params
    curve = _curve(model, p)
    path = spec.out_dir / "rate_curve.csv"
    meta = {"lmin": p["lmin"], "lmax": p.get("lmax"), "n": p["n"], "lambda_bar": curve.lambda_bar, "rows": int(curve.lambdas.size)}
    io.write_rate_curve_csv(curve, path, meta)
    return meta, [path, Path(str(path) + ".meta.json")]


def _cmd_decay(model, spec):
    model = _require_affine(model, spec.command)
    p = spec.params
    dec = rate.decay_rates(_curve(model, p), p["q"])
    out = {**dec.to_dict(), "params": {k: p[k] for k in ("q", "lmin", "lmax", "n")}}
    path = spec.out_dir / "decay.json"
    io.write_json(path, out)
    return out, [path]


def _cmd_portfolio(model, spec):
    model = _require_affine(model, spec.command)
    p = spec.params
    curve = _curve(model, p)
    dec = rate.decay_rates(curve, p["q"])
    port = rate.optimal_portfolio(model, p["q"], decay=dec, z=p.get("z"))
    out = {**port.to_dict(), "q": p["q"], "params": {k: p[k] for k in ("q", "lmin", "lmax", "n", "z")}}
    path = spec.out_dir / "portfolio.json"
    io.write_json(path, out)
    return out, [path]


def _as_general(model):
    if isinstance(model, GeneralModel1D):
        return model
    if isinstance(model, AffineModel) and model.is_scalar:
        return GeneralModel1D.from_affine(model)
    raise ValidationError("bellman1d needs a one-factor, one-asset model")


def _cmd_bellman1d(model, spec):
    p = spec.params
    g = _as_general(model)
    lo, hi = (p["xmin"], p["xmax"])
    lo = g.domain[0] if lo is None else lo
    hi = g.domain[1] if hi is None else hi
    sol = bellman1d.solve_ergodic_bellman(g, p["lambda"], bellman1d.Grid1D(lo, hi, p["grid"]))
    path = spec.out_dir / "bellman1d.csv"
    meta = {
        "lambda": sol.lam,
        "Lambda": sol.Lambda,
        "residual": sol.residual,
        "boundary_residual": sol.boundary_residual,
        "grid": {"x_min": lo, "x_max": hi, "n_points": p["grid"]},
        "tol_pde": bellman1d.TOL_PDE,
    }
    io.write_csv(path, ["x", "g", "u", "m_hat"], zip(sol.x, sol.g, sol.u, sol.m_hat), meta)
    return meta, [path, Path(str(path) + ".meta.json")]


def _cmd_simulate(model, spec):
    model = _require_affine(model, spec.command)
    p = spec.params
    est = p["estimator"]
    tilt = None
    if est == "growth":
        lam = p["lambda"]
        if lam is None:
            raise ValidationError("--lambda is required for the growth estimator")
        port = rate.portfolio_at_lambda(model, lam) if p["portfolio"] == "optimal" else simulate.constant_portfolio(np.zeros(model.n), model.l)
        if p["tilt"] == "optimal":
            tilt = simulate.Tilt.at_lambda(model, lam)
    else:
        if p["q"] is None:
            raise ValidationError("--q is required for the tail estimator")
        curve = _curve(model, p)
        port, opt_tilt, _ = simulate.optimal_tail_setup(model, p["q"], curve)
        if p["portfolio"] == "zero":
            port = simulate.constant_portfolio(np.zeros(model.n), model.l)
        if p["tilt"] == "optimal":
            tilt = opt_tilt
    cfg = simulate.SimConfig(t=p["t"], dt=p["dt"], n_paths=p["n_paths"], seed=p["seed"], tilt=tilt, x0=tuple(p["x0"]) if p["x0"] else None)
    paths = simulate.simulate_paths(model, port, cfg)
    if est == "growth":
        lm, se, n_eff, heavy = simulate._weighted_log_mean(p["lambda"] * cfg.t * paths.L + paths.logw)
        res = simulate.GrowthEstimate(
            lam=p["lambda"],
            rate=lm / cfg.t,
            std_error=se / cfg.t,
            n_effective=n_eff,
            n_paths=cfg.n_paths,
            degenerate_weights=heavy,
            weights=simulate.WeightCheck.of(paths.logw),
            params=cfg.params(),
        )
    else:
        res = simulate.tail_from_paths(paths, p["q"], p["side"])
    rec = res.to_record()
    rec["params"]["portfolio"] = p["portfolio"]
    files = []
    path = spec.out_dir / "simulate.json"
    io.write_json(path, rec)
    files.append(path)
    if p["dump_paths"]:
        pp = spec.out_dir / "paths.csv"
        io.write_csv(pp, ["L", "logw"], zip(paths.L, paths.logw))
        files.append(pp)
    return rec, files


_HANDLERS = {
    "check": _cmd_check,
    "rate-curve": _cmd_rate_curve,
    "decay": _cmd_decay,
    "portfolio": _cmd_portfolio,
    "bellman1d": _cmd_bellman1d,
    "simulate": _cmd_simulate,
}


def _error(kind: str, exc: Exception, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def run(spec: RunSpec) -> int:
    if spec.command not in _HANDLERS:
        return _error("validation", ValidationError(f"unknown command {spec.command!r}"), 2)
    try:
        spec.out_dir.mkdir(parents=True, exist_ok=True)
        model = io.load_model(spec.model_path)
        out, files = _HANDLERS[spec.command](model, spec)
    except ValidationError as exc:
        return _error("validation", exc, 2)
    except NumericalError as exc:
        return _error("numerical", exc, 3)
    except LdpError as exc:  # pragma: no cover - every subclass is handled above
        return _error("numerical", exc, 3)
    except OSError as exc:
        return _error("validation", exc, 2)
    summary = {"command": spec.command, "files": [str(f) for f in files], "result": out}
    sys.stdout.write(json.dumps(summary, indent=2, default=_jsonable) + "\n")
    return 0


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _vector(s: str):
    return [float(v) for v in s.split(",")] if s else None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ldp-portfolio", description="Risk-sensitive growth rates, decay rates and optimal benchmark-relative portfolios.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", type=Path, help="model JSON file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")

    def grid(p):
        p.add_argument("--lmin", type=float, default=-2.0)
        p.add_argument("--lmax", type=float, default=None, help="default: lambda_bar")
        p.add_argument("--n", type=int, default=121)

    p = sub.add_parser("check", help="nondegeneracy report")
    common(p)
    p.add_argument("--growth-lambda", type=float, default=-1.0, help="lambda at which the affine growth condition is checked")

    p = sub.add_parser("rate-curve", help="F(lambda) on a grid, as CSV")
    common(p)
    grid(p)

    for name in ("decay", "portfolio"):
        p = sub.add_parser(name, help="decay rates at q" if name == "decay" else "optimal affine portfolio at q")
        common(p)
        p.add_argument("--q", type=float, required=True)
        grid(p)
        if name == "portfolio":
            p.add_argument("--z", type=_vector, default=None, help="unit vector for the degenerate branch, comma separated")

    p = sub.add_parser("bellman1d", help="ergodic Bellman equation on a grid")
    common(p)
    p.add_argument("--lambda", dest="lambda_", type=float, required=True)
    p.add_argument("--grid", type=int, default=2048)
    p.add_argument("--xmin", type=float, default=None)
    p.add_argument("--xmax", type=float, default=None)

    p = sub.add_parser("simulate", help="Monte Carlo growth-rate or tail estimate")
    common(p)
    p.add_argument("--estimator", choices=("growth", "tail"), required=True)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--side", choices=("AtLeast", "AtMost"), default="AtMost")
    p.add_argument("--tilt", choices=("none", "optimal"), default="optimal")
    p.add_argument("--portfolio", choices=("optimal", "zero"), default="optimal")
    p.add_argument("--t", type=float, default=50.0)
    p.add_argument("--dt", type=float, default=0.005)
    p.add_argument("--n-paths", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=_vector, default=None)
    p.add_argument("--dump-paths", action="store_true")
    grid(p)
    return ap


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "model", "out")}
    if "lambda_" in params:
        params["lambda"] = params.pop("lambda_")
    return RunSpec(command=args.command, model_path=args.model, out_dir=args.out, params=params)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(spec_from_args(args))


if __name__ == "__main__":
    sys.exit(main())

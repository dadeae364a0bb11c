"""Model JSON ingestion with line-precise errors, and artifact writers/readers."""

from __future__ import annotations

import ast
import csv
import json
import math
import re
from importlib import resources
from json.decoder import scanstring
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ModelValidationError
from .model import AffineModel, GeneralModel1D

_WS = re.compile(r"[ \t\n\r]*")


def _line_of(text: str, idx: int) -> int:
    return text.count("\n", 0, idx) + 1


def locate(text: str, path) -> int:
    """Line number of the JSON value at ``path`` (keys / indices) in ``text``.

    Falls back to the deepest container found when the path does not exist
    (e.g. a missing required key reports the enclosing object's line).
    """
    dec = json.JSONDecoder()
    idx = _WS.match(text, 0).end()
    for key in path:
        if idx >= len(text):
            break
        ch = text[idx]
        if ch == "{" and isinstance(key, str):
            start = idx
            idx = _WS.match(text, idx + 1).end()
            found = False
            while idx < len(text) and text[idx] != "}":
                k, idx = scanstring(text, idx + 1)
                idx = _WS.match(text, idx).end() + 1  # past ':'
                idx = _WS.match(text, idx).end()
                if k == key:
                    found = True
                    break
                _, idx = dec.raw_decode(text, idx)
                idx = _WS.match(text, idx).end()
                if text[idx] == ",":
                    idx = _WS.match(text, idx + 1).end()
            if not found:
                return _line_of(text, start)
        elif ch == "[" and isinstance(key, int):
            start = idx
            idx = _WS.match(text, idx + 1).end()
            for _ in range(key):
                if text[idx] == "]":
                    return _line_of(text, start)
                _, idx = dec.raw_decode(text, idx)
                idx = _WS.match(text, idx).end()
                if text[idx] == ",":
                    idx = _WS.match(text, idx + 1).end()
            if text[idx] == "]":
                return _line_of(text, start)
        else:
            break
    return _line_of(text, idx)


def model_schema() -> dict:
    with resources.files("ldp_portfolio").joinpath("schema/model.schema.json").open() as fh:
        return json.load(fh)


def _fail(source: str, line: int | None, msg: str):
    where = f"{source}:{line}" if line is not None else source
    raise ModelValidationError(f"{where}: {msg}")


# --- expressions for one-factor coefficient functions ---------------------

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Name,
    ast.Load,
    ast.Call,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def compile_expression(expr: str):
    """Vectorised function of ``x`` from an arithmetic expression string."""
    tree = ast.parse(str(expr), mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ValueError(f"unsupported syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ValueError(f"only numeric constants allowed in {expr!r}")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in _CONSTS and node.id != "x":
            raise ValueError(f"unknown name {node.id!r} in {expr!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _FUNCS):
            raise ValueError(f"only calls to {sorted(_FUNCS)} allowed in {expr!r}")
    code = compile(tree, "<expr>", "eval")

    def f(x):
        x = np.asarray(x, dtype=float)
        val = eval(code, {"__builtins__": {}}, {**_FUNCS, **_CONSTS, "x": x})  # noqa: S307 - whitelisted AST
        return np.broadcast_to(np.asarray(val, dtype=float), x.shape).astype(float)

    f.expr = str(expr)
    return f


def _vector_fn(exprs, k):
    fns = [compile_expression(e) for e in exprs]

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.stack([g(x) for g in fns], axis=-1)

    f.expr = list(map(str, exprs))
    return f


def model_from_document(doc: dict, text: str | None = None, source: str = "<model>"):
    text = text if text is not None else json.dumps(doc, indent=2)
    validator = jsonschema.Draft202012Validator(model_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        loc = "/".join(map(str, path)) or "(root)"
        _fail(source, locate(text, path), f"schema violation at {loc}: {err.message}")
    if "affine" in doc:
        body = doc["affine"]
        try:
            return AffineModel(**{k: body[k] for k in AffineModel.__dataclass_fields__})
        except ModelValidationError as exc:
            field = next((f for f in AffineModel.__dataclass_fields__ if str(exc).startswith(f + " ")), None)
            line = locate(text, ["affine", field]) if field else locate(text, ["affine"])
            _fail(source, line, str(exc))
    body = doc["general1d"]
    k = int(body["k"])
    fns = {}
    for name in ("a", "r", "alpha", "theta"):
        try:
            fns[name] = compile_expression(body[name])
        except (ValueError, SyntaxError) as exc:
            _fail(source, locate(text, ["general1d", name]), str(exc))
    for name in ("b", "sigma", "beta"):
        if len(body[name]) != k:
            _fail(source, locate(text, ["general1d", name]), f"{name} must have k={k} entries")
        try:
            fns[name] = _vector_fn(body[name], k)
        except (ValueError, SyntaxError) as exc:
            _fail(source, locate(text, ["general1d", name]), str(exc))
    try:
        return GeneralModel1D(
            **fns,
            k=k,
            domain=tuple(body.get("domain", (-8.0, 8.0))),
            vol_bounds=tuple(body["vol_bounds"]) if "vol_bounds" in body else None,
            growth_K=body.get("growth_K"),
        )
    except ModelValidationError as exc:
        _fail(source, locate(text, ["general1d"]), str(exc))


def load_model(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelValidationError(f"{path}: cannot read model file ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg} (column {exc.colno})") from exc
    return model_from_document(doc, text, str(path))


def model_to_document(model) -> dict:
    if isinstance(model, AffineModel):
        return {"affine": model.to_dict()}
    doc = {
        "k": model.k,
        **{name: getattr(model, name).expr for name in ("a", "r", "alpha", "theta", "b", "sigma", "beta")},
        "domain": list(model.domain),
    }
    if model.vol_bounds is not None:
        doc["vol_bounds"] = list(model.vol_bounds)
    if model.growth_K is not None:
        doc["growth_K"] = model.growth_K
    return {"general1d": doc}


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("ldp_portfolio").joinpath(f"fixtures/{name}.json")))


def load_fixture(name: str):
    return load_model(fixture_path(name))


# --- artifacts --------------------------------------------------------------


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return repr(float(v))


def write_csv(path, header: list[str], rows, meta: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    if meta is not None:
        write_json(str(path) + ".meta.json", meta)


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    cols = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in rows[1:]]
        if vals and all(v in ("true", "false") for v in vals):
            cols[name] = np.array([v == "true" for v in vals])
        else:
            cols[name] = np.array(vals, dtype=float)
    return cols


def write_rate_curve_csv(curve, path, meta: dict | None = None) -> None:
    l = curve.p2.shape[1]
    header = ["lambda", "F", "stable"] + [f"p2_{i + 1}" for i in range(l)]
    rows = ([lam, F, st, *p2] for lam, F, st, p2 in zip(curve.lambdas, curve.F, curve.stable, curve.p2))
    write_csv(path, header, rows, meta)


def read_rate_curve_csv(path) -> dict[str, np.ndarray]:
    return read_csv(path)

"""Command-line front end: ``fhn-zerohopf <command> [flags]``.

Every run writes one JSON report (schema in docs/schema/report.md) to stdout
or ``--out``.  Exit status: 0 success, 2 usage, 3 domain violation,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict

import numpy as np

from . import __version__
from . import averaging as avg
from .errors import DomainError, IntegrationError, QuadratureNotConverged, ShootingDiverged
from .fhn_core import Params, State, classify_zero_hopf, equilibria
from .orbit_verify import IntegratorConfig, refine_periodic
from .reduction import (OrbitPrediction, PerturbationT1, PerturbationT2, PerturbationT34, predict_orbits_t1,
                        predict_orbits_t2, predict_orbits_t34)

SCHEMA = "fhn-zerohopf/report/1"
CONFIG_ENV = "FHN_ZEROHOPF_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "tol": 1e-9,
    "quad_nodes": avg.DEFAULT_NODES,
    "jobs": 1,
    "rel_tol": 1e-10,
    "abs_tol": 1e-12,
    "max_time": 1e5,
    "w_max": 50.0,
}
_INT_KEYS = {"quad_nodes", "jobs"}

FAMILY_FLAGS = {
    "t1": (["d", "omega", "alpha", "gamma"], ["beta1"]),
    "t2": (["omega", "alpha1", "gamma1"], ["alpha2", "beta2", "gamma2", "beta1", "d"]),
    "t3": (["alpha0", "alpha1", "beta1", "beta2", "gamma2"], ["alpha2", "gamma1", "d"]),
}
FAMILY_FLAGS["t4"] = FAMILY_FLAGS["t3"]
ALL_FAMILY_FLAGS = sorted({f for req, opt in FAMILY_FLAGS.values() for f in req + opt})


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ output

_NUM = re.compile(r'"\\u0000(.*?)\\u0000"')


def _prep(obj):
    if isinstance(obj, dict):
        return {str(k): _prep(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prep(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not math.isfinite(v) else "\0" + format(v, ".17g") + "\0"
    if isinstance(obj, (complex, np.complexfloating)):
        return _prep([obj.real, obj.imag])
    return obj


def dumps(obj) -> str:
    """JSON with sorted keys and 17 significant digits for every float."""
    text = json.dumps(_prep(obj), sort_keys=True, indent=2)
    return _NUM.sub(lambda m: m.group(1), text)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


# ------------------------------------------------------------------ config


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{n}: unknown key {key!r}")
            try:
                out[key] = int(val) if key in _INT_KEYS else float(val)
            except ValueError as exc:
                raise UsageError(f"{path}:{n}: bad value for {key}: {val!r}") from exc
    return out


def settings_from(args) -> dict:
    s = dict(DEFAULTS)
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV)
    if path:
        if not os.path.exists(path):
            raise UsageError(f"config file not found: {path}")
        s.update(read_config(path))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            s[key] = v
    if s["jobs"] < 1 or s["quad_nodes"] < 8 or not s["tol"] > 0:
        raise UsageError("jobs >= 1, quad-nodes >= 8 and tol > 0 are required")
    return s


# ---------------------------------------------------------------- commands


def _params(args) -> Params:
    return Params(args.a, args.b, args.c, args.d)


def _eq_dict(e):
    return {"kind": e.kind, "location": list(e.location), "eigenvalues": [complex(v) for v in e.eigenvalues],
            "discriminant": e.discriminant}


def cmd_equilibria(args, s):
    p = _params(args)
    return {"params": p.as_dict()}, {"equilibria": [_eq_dict(e) for e in equilibria(p)]}


def cmd_classify(args, s):
    p = _params(args)
    fams = classify_zero_hopf(p, tol=s["tol"])
    return {"params": p.as_dict()}, {"families": [asdict(f) for f in fams]}


def family_from(theorem: str, values: dict, eps: float):
    req, opt = FAMILY_FLAGS[theorem]
    missing = [k for k in req if values.get(k) is None]
    if missing:
        raise UsageError(f"--theorem {theorem} needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
    kw = {k: float(values[k]) for k in req + opt if values.get(k) is not None}
    if theorem == "t1":
        kw.setdefault("beta1", 0.0)
        return PerturbationT1(eps=eps, **kw)
    if theorem == "t2":
        return PerturbationT2(eps=eps, **kw)
    return PerturbationT34(eps=eps, sign="plus" if theorem == "t3" else "minus", **kw)


def run_predict(fam, s: dict, allow_nonzero_first_order: bool = False) -> list:
    nodes = int(s["quad_nodes"])
    if isinstance(fam, PerturbationT1):
        return predict_orbits_t1(fam, nodes=nodes)
    if isinstance(fam, PerturbationT2):
        return predict_orbits_t2(fam, nodes=nodes)
    return predict_orbits_t34(fam, nodes=nodes, w_max=s["w_max"], tol=s["tol"],
                              require_first_order_zero=not allow_nonzero_first_order)


def _family_values(args) -> dict:
    return {k: getattr(args, k, None) for k in ALL_FAMILY_FLAGS}


def cmd_predict(args, s):
    fam = family_from(args.theorem, _family_values(args), args.eps)
    preds = run_predict(fam, s, args.allow_nonzero_first_order)
    inputs = {"theorem": args.theorem, "family": asdict(fam),
              "allow_nonzero_first_order": args.allow_nonzero_first_order}
    return inputs, {"count": len(preds), "predictions": [pr.as_dict() for pr in preds]}


def verify_one(pred: OrbitPrediction, s: dict) -> dict:
    out = {"theorem": pred.theorem, "eps": pred.eps, "predicted_initial": list(pred.initial_condition),
           "predicted_period": pred.approx_period}
    if pred.eps == 0:
        out.update(found=False, error="eps = 0: no perturbation, nothing to verify")
        return out
    cfg = IntegratorConfig(rel_tol=s["rel_tol"], abs_tol=s["abs_tol"], max_time=s["max_time"])
    try:
        orb = refine_periodic(pred.params, pred.initial_condition, pred.approx_period, cfg,
                              center=pred.equilibrium)
    except ShootingDiverged as exc:
        out.update(found=False, error=f"ShootingDiverged: {exc}", residual=exc.residual, iterations=exc.iterations)
        return out
    except IntegrationError as exc:
        out.update(found=False, error=f"{type(exc).__name__}: {exc}")
        return out
    dist = float(np.linalg.norm(np.subtract(orb.initial, pred.initial_condition)))
    out.update(found=True, orbit=orb.as_dict(), distance=dist, distance_over_eps2=dist / pred.eps**2,
               predicted_stability=pred.stability,
               stability_agrees=orb.stability == pred.stability)
    return out


def _load_predictions(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("results", data).get("predictions", [])
    return [OrbitPrediction.from_dict(d) for d in data]


def _inline_prediction(args) -> OrbitPrediction:
    if args.ic is None or args.period is None or None in (args.a, args.b, args.c, args.d):
        raise UsageError("verify needs --input FILE, or --a --b --c --d --ic X Y Z --period T")
    center = State(*args.center) if args.center else State(0.0, 0.0, 0.0)
    return OrbitPrediction(theorem="inline", rw_star=(math.nan, math.nan), conditions=[], jac_det_value=math.nan,
                           initial_condition=State(*args.ic), approx_period=args.period, stability="unknown",
                           eps=1.0 if args.eps is None else args.eps, omega=2 * math.pi / args.period,
                           equilibrium=center, params=_params(args))


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_star, [(fn, it) for it in items]))


def _star(packed):
    fn, it = packed
    return fn(*it)


def cmd_verify(args, s):
    preds = _load_predictions(args.input) if args.input else [_inline_prediction(args)]
    results = _map(verify_one, [(pr, s) for pr in preds], int(s["jobs"]))
    inputs = {"input": args.input, "predictions": [pr.as_dict() for pr in preds]}
    return inputs, {"count": len(results), "found": sum(r["found"] for r in results), "orbits": results}


def parse_grid(spec: str):
    m = re.fullmatch(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^:]+):([^:]+):(\d+)\s*", spec)
    if not m:
        raise UsageError(f"bad grid spec {spec!r}; expected name=lo:hi:count")
    name, lo, hi, n = m.group(1), m.group(2), m.group(3), int(m.group(4))
    if name not in ALL_FAMILY_FLAGS and name != "eps":
        raise UsageError(f"unknown grid parameter {name!r}")
    try:
        lo, hi = float(lo), float(hi)
    except ValueError as exc:
        raise UsageError(f"bad bounds in grid spec {spec!r}") from exc
    if n < 1:
        raise UsageError("grid count must be >= 1")
    return name, list(np.linspace(lo, hi, n)) if n > 1 else [lo]


def sweep_cell(theorem, values, eps, s, allow):
    row = {"count": 0, "conditions_ok": False, "error": "", "zeros": ""}
    try:
        fam = family_from(theorem, values, eps)
        preds = run_predict(fam, s, allow)
    except UsageError:
        raise
    except (DomainError, RuntimeError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row["count"] = len(preds)
    row["conditions_ok"] = bool(preds) and all(c[2] for pr in preds for c in pr.conditions)
    row["zeros"] = ";".join(f"{_fmt(pr.rw_star[0])}:{_fmt(pr.rw_star[1])}" for pr in preds)
    return row


def cmd_sweep(args, s):
    grids = [parse_grid(g) for g in args.grid]
    names = [g[0] for g in grids]
    if len(set(names)) != len(names):
        raise UsageError("each grid parameter may appear once")
    base = _family_values(args)
    cells = [{}]
    for name, vals in grids:
        cells = [dict(c, **{name: v}) for c in cells for v in vals]
    items = []
    for c in cells:
        vals = dict(base, **{k: v for k, v in c.items() if k != "eps"})
        items.append((args.theorem, vals, c.get("eps", args.eps), s, args.allow_nonzero_first_order))
    # fail fast on incomplete parameter sets
    family_from(args.theorem, items[0][1], items[0][2]) if items else None
    rows = _map(sweep_cell, items, int(s["jobs"]))
    table = [dict({"cell": i}, **{n: c.get(n) for n in names}, **r) for i, (c, r) in enumerate(zip(cells, rows))]
    cols = ["cell"] + names + ["count", "conditions_ok", "zeros", "error"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in table:
        w.writerow([_fmt(r[c]) for c in cols])
    text = buf.getvalue()
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    inputs = {"theorem": args.theorem, "grid": args.grid, "base": {k: v for k, v in base.items() if v is not None},
              "eps": args.eps}
    return inputs, {"cells": table, "csv_path": args.csv}


# ------------------------------------------------------------------ parser


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--tol", type=float, default=d, help="classification / first-order tolerance")
    p.add_argument("--quad-nodes", dest="quad_nodes", type=int, default=d, help="initial quadrature nodes")
    p.add_argument("--out", default=d, help="write the JSON report here instead of stdout")
    p.add_argument("--jobs", type=int, default=d, help="parallel workers for verify and sweep")
    p.add_argument("--config", default=d, help=f"key = value settings file (default from ${CONFIG_ENV})")


def _param_flags(p, required):
    for k in "abcd":
        p.add_argument(f"--{k}", type=float, required=required)


def _family_flag_args(p):
    for k in ALL_FAMILY_FLAGS:
        p.add_argument("--" + k.replace("_", "-"), dest=k, type=float)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--allow-nonzero-first-order", action="store_true",
                   help="t3/t4: apply the second-order formula even if the first-order average does not vanish")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fhn-zerohopf", description=__doc__.splitlines()[0])
    _global_flags(ap, suppress=False)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("equilibria", parents=[common], help="list equilibria and eigenvalues")
    _param_flags(p, True)
    p = sub.add_parser("classify", parents=[common], help="zero-Hopf families at (a, b, c, d)")
    _param_flags(p, True)

    p = sub.add_parser("predict", parents=[common], help="averaging predictions for a theorem family")
    p.add_argument("--theorem", choices=sorted(FAMILY_FLAGS), required=True)
    p.add_argument("--w-max", dest="w_max", type=float)
    _family_flag_args(p)

    p = sub.add_parser("verify", parents=[common], help="refine predicted orbits by shooting")
    p.add_argument("--input", help="predict report (JSON)")
    _param_flags(p, False)
    p.add_argument("--ic", type=float, nargs=3)
    p.add_argument("--period", type=float)
    p.add_argument("--center", type=float, nargs=3)
    p.add_argument("--eps", type=float)
    p.add_argument("--rel-tol", dest="rel_tol", type=float)
    p.add_argument("--abs-tol", dest="abs_tol", type=float)
    p.add_argument("--max-time", dest="max_time", type=float)

    p = sub.add_parser("sweep", parents=[common], help="prediction counts over a parameter grid")
    p.add_argument("--theorem", choices=sorted(FAMILY_FLAGS), required=True)
    p.add_argument("--grid", action="append", required=True, help="name=lo:hi:count (repeatable)")
    p.add_argument("--csv", help="write the per-cell CSV here")
    p.add_argument("--w-max", dest="w_max", type=float)
    _family_flag_args(p)
    return ap


COMMANDS = {"equilibria": cmd_equilibria, "classify": cmd_classify, "predict": cmd_predict,
            "verify": cmd_verify, "sweep": cmd_sweep}


def _emit(report: dict, out):
    text = dumps(report) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    report = {"schema": SCHEMA, "version": __version__, "command": args.command, "argv": argv}
    t0 = time.perf_counter()
    try:
        s = settings_from(args)
        report["settings"] = s
        inputs, results = COMMANDS[args.command](args, s)
        report.update(inputs=inputs, results=results, status="ok")
        code = EXIT_OK
    except UsageError as exc:
        ap.error(str(exc))
    except DomainError as exc:
        report.update(status="domain_error", error=f"{type(exc).__name__}: {exc}",
                      conditions=[{"name": n, "value": v, "satisfied": bool(ok)} for n, v, ok in exc.conditions])
        _condition_table(exc)
        code = EXIT_DOMAIN
    except (QuadratureNotConverged, IntegrationError, ShootingDiverged, RuntimeError, np.linalg.LinAlgError) as exc:
        report.update(status="numerical_failure", error=f"{type(exc).__name__}: {exc}")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    report["timings"] = {"wall_seconds": time.perf_counter() - t0}
    _emit(report, getattr(args, "out", None))
    return code


def _condition_table(exc: DomainError):
    print(f"error: {exc}", file=sys.stderr)
    if exc.conditions:
        width = max(len(n) for n, _, _ in exc.conditions)
        for n, v, ok in exc.conditions:
            print(f"  {n:<{width}}  {_fmt(float(v)):>24}  {'ok' if ok else 'VIOLATED'}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())

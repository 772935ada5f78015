"""Command line: generate, solve, verify and report.

Exit codes: 0 success, 1 check failure or uncertified run, 2 invalid input,
3 divergence, 4 epsilon violation after the allowed restarts.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import os
import sys
import tempfile
import time

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_DIVERGED, EXIT_EPSILON = 0, 1, 2, 3, 4

# Every tolerance lives here; a JSON config file and flags override it.
DEFAULT_CONFIG = {
    "solver": {
        "r0": 1.0,  # null runs the initial-radius gate search
        "K_max": 8,  # maximum number of iteration steps
        "abs_floor": 1e-10,  # absolute stopping floor for a_k
        "floor_factor": 1.0,  # multiplier on the measured discretisation floor
        "eps": 0.4,  # admissible neighbourhood of I for the gauges
        "H": None,  # quadratic-decay constant used by the gate; null means 1
        "C": None,  # interior constant; null means the kernel default
        "npa": None,  # grid points per axis; null means 33 (n=1) or 13 (n=2)
        "hmax": 4,  # highest derivative order in the norms
        "max_restarts": 3,  # radius halvings after an epsilon violation
        "divergence_patience": 2,  # consecutive increases of a_k before aborting
        "certify_factor": 10.0,  # certified when system residual <= factor * floor
    },
    "kernel": {"n_rad": 16, "n_ang": 64, "n_phi_multi": 12, "n_chi_multi": 6, "n_bd_phi": 24,
               "n_bd_chi": 12, "ang_boost": 24.0, "derivative": "fit", "C": 0.05},
    "holder": {"mu": 0.5, "n_samples": 800, "seed": 20240601},
    "real": {"tol": 1e-8, "floor": 1e-13, "K_max": 30, "eps": 0.4},
}


class InputError(Exception):
    pass


# -- small utilities -------------------------------------------------------------------------

def _apply_threads():
    val = os.environ.get("DBARFORGE_THREADS")
    if not val:
        return
    try:
        k = max(int(val), 1)
    except ValueError:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(k)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    cfg = DEFAULT_CONFIG
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise InputError("config must be a JSON object")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise InputError(f"unknown config sections {sorted(unknown)}")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def solver_config(cfg: dict):
    from .holder import HolderConfig
    from .kernels import KernelConfig
    from .nash_moser import SolverConfig
    s = dict(cfg["solver"])
    s.pop("certify_factor", None)
    try:
        return SolverConfig(kernel=KernelConfig(**cfg["kernel"]), holder=HolderConfig(**cfg["holder"]), **s)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(x):
    import numpy as np
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serialisable: {type(x)}")


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def make_manifest(command: str, config, inputs: dict, outputs: list, seed=None) -> dict:
    from . import __version__
    man = {"command": command, "config": config, "inputs": inputs, "outputs": outputs, "seed": seed,
           "version": __version__}
    man["hash"] = hashlib.sha256(canonical(man).encode()).hexdigest()
    return man


def write_json(path: str, payload: dict, manifest: dict):
    payload = dict(payload)
    payload["manifest"] = manifest
    payload["manifest_hash"] = manifest["hash"]
    atomic_write(path, json.dumps(payload, sort_keys=True, indent=1, default=_jsonable) + "\n")


def read_problem(path: str):
    from .real_case import FlatProblem
    from .recalibration import ResolutionProblem
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read problem {path}: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != "dbarproblem":
        raise InputError(f"{path} is not a .dbarproblem.json record")
    try:
        if obj.get("field") == "real":
            return FlatProblem.from_json(obj)
        return ResolutionProblem.from_json(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"malformed problem {path}: {exc}") from exc


# -- commands ---------------------------------------------------------------------------------

def cmd_generate(args) -> int:
    from .real_case import manufacture_flat
    from .recalibration import manufacture_problem
    if args.field == "real":
        try:
            prob = manufacture_flat(args.gauge, args.dmax)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        params = {"field": "real", "gauge": args.gauge, "dmax": args.dmax}
    else:
        try:
            p = tuple(int(x) for x in str(args.p).split(","))
        except ValueError as exc:
            raise InputError(f"invalid rank vector {args.p!r}") from exc
        try:
            prob = manufacture_problem(args.seed, args.m, args.n, p, args.difficulty, degree=args.degree,
                                       dmax=args.dmax or 8, exact=not args.float)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        params = {"field": "complex", "m": args.m, "n": args.n, "p": list(p), "difficulty": args.difficulty,
                  "degree": args.degree, "dmax": args.dmax or 8, "exact": not args.float}
    man = make_manifest("generate", params, {}, [args.out], args.seed)
    write_json(args.out, prob.to_json(), man)
    print(f"wrote {args.out} (manifest {man['hash'][:12]})")
    return EXIT_OK


def _trace_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    cols = ["k", "r_k", "sigma_k", "a_k", "b_k", "residual_max", "seconds"]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({c: (repr(float(r[c])) if c != "k" else r[c]) for c in cols})
    return buf.getvalue()


def _print_table(rows: list[dict]):
    print(f"{'k':>3s} {'r_k':>12s} {'a_k':>12s} {'b_k':>12s}")
    for r in rows:
        print(f"{r['k']:3d} {r['r_k']:12.6g} {r['a_k']:12.4e} {r['b_k']:12.4e}")


def cmd_solve(args) -> int:
    from .forms import to_json as form_json
    from .nash_moser import DivergenceError, RoughProblemError, quadratic_decay_report, solve
    from .real_case import FlatProblem, solve_flat
    from .recalibration import EpsilonViolation
    overrides = {"solver": {}}
    for key in ("r0", "K_max", "npa", "abs_floor"):
        val = getattr(args, key)
        if val is not None:
            overrides["solver"][key] = val
    cfg = load_config(args.config, overrides)
    prob = read_problem(args.problem)
    out = args.out or os.path.splitext(os.path.splitext(args.problem)[0])[0]
    sol_path, csv_path = out + ".dbarsolution.json", out + ".trace.csv"
    inputs = {args.problem: sha256_file(args.problem)}
    t0 = time.perf_counter()
    if isinstance(prob, FlatProblem):
        rc = cfg["real"]
        try:
            sol = solve_flat(prob.connection, tol=rc["tol"], floor=rc["floor"], K_max=rc["K_max"], eps=rc["eps"])
        except ValueError as exc:
            if isinstance(exc, EpsilonViolation):
                print(f"epsilon violation: {exc}", file=sys.stderr)
                return EXIT_EPSILON
            print(f"rejected: {exc}", file=sys.stderr)
            return EXIT_INPUT
        except DivergenceError as exc:
            print(f"diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        rows = [{"k": k, "r_k": sol.radius, "sigma_k": 0.0, "a_k": a, "b_k": a, "residual_max": a, "seconds": 0.0}
                for k, a in enumerate(sol.a)]
        ok = sol.residual <= max(10 * sol.flatness, 1e-6)
        payload = {"format": "dbarsolution", "field": "real", "gauge": form_json(sol.g),
                   "report": {"residual": sol.residual, "column_residuals": sol.column_residuals,
                              "flatness": sol.flatness, "iterations": sol.iterations, "a": sol.a,
                              "radius": sol.radius, "shrunk": sol.shrunk, "certified": ok}}
    else:
        scfg = solver_config(cfg)
        try:
            g, eta, trace = solve(prob.omega, scfg, eta_star=prob.eta_star)
        except DivergenceError as exc:
            print(f"diverged: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        except (EpsilonViolation, RoughProblemError) as exc:
            print(f"epsilon violation: {exc}", file=sys.stderr)
            return EXIT_EPSILON
        rows = trace.csv_rows()
        cert = trace.certification
        ok = trace.converged and cert["system_max"] <= cfg["solver"]["certify_factor"] * trace.floor
        decay = quadratic_decay_report(trace)
        payload = {"format": "dbarsolution", "field": "complex",
                   "gauges": {str(s): form_json(gs) for s, gs in g.items()},
                   "eta": eta.to_json(), "trace": trace.to_json(),
                   "report": {"certified": ok, "iterations": len(trace.steps) - 1, "floor": trace.floor,
                              "system_residual_max": cert["system_max"], "sigma_residual_max": cert["sigma_max"],
                              "equivalence_residual_max": cert.get("equivalence_max"),
                              "decay": {"exponent": decay.exponent, "ratios": decay.ratios,
                                        "normalized": decay.normalized, "bounded": decay.bounded}}}
    elapsed = time.perf_counter() - t0
    man = make_manifest("solve", cfg, inputs, [sol_path, csv_path])
    man_timed = dict(man, timing={"seconds": elapsed})
    write_json(sol_path, payload, man_timed)
    atomic_write(csv_path, f"# manifest {man['hash']}\n" + _trace_csv(rows))
    _print_table(rows)
    print(f"{'certified' if ok else 'NOT certified'}; wrote {sol_path} and {csv_path}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    from .verify import SUITES, format_table, run_suite
    if args.suite not in SUITES:
        raise InputError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    checks = run_suite(args.suite, quick=args.quick)
    print(format_table(checks))
    passed = all(c.passed for c in checks)
    if args.out:
        man = make_manifest("verify", {"suite": args.suite, "quick": args.quick}, {}, [args.out])
        write_json(args.out, {"format": "dbarreport", "suite": args.suite, "passed": passed,
                              "checks": [c.to_json() for c in checks]}, man)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_report(args) -> int:
    try:
        with open(args.solution) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read solution {args.solution}: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != "dbarsolution":
        raise InputError(f"{args.solution} is not a solution record")
    rep = dict(obj.get("report", {}))
    rep["source"] = args.solution
    rep["source_manifest"] = obj.get("manifest_hash")
    steps = (obj.get("trace") or {}).get("steps", [])
    if steps:
        _print_table(steps)
    for key in ("certified", "iterations", "floor", "system_residual_max", "sigma_residual_max",
                "equivalence_residual_max", "residual"):
        if key in rep:
            print(f"{key:26s} {rep[key]}")
    if args.out:
        man = make_manifest("report", {}, {args.solution: sha256_file(args.solution)}, [args.out])
        write_json(args.out, {"format": "dbarreport", "report": rep}, man)
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dbarforge", description="Holomorphic gauges for integrable calibrations.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a manufactured problem")
    g.add_argument("--field", choices=("complex", "real"), default="complex")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--m", type=int, default=0)
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--p", default="2", help="comma separated ranks p_0,...,p_m")
    g.add_argument("--difficulty", type=float, default=0.2)
    g.add_argument("--degree", type=int, default=2)
    g.add_argument("--dmax", type=int, default=None)
    g.add_argument("--float", action="store_true", help="floating coefficients instead of exact ones")
    g.add_argument("--gauge", default="exy", help="real case: exy, unipotent or generic")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    s.add_argument("--config")
    s.add_argument("--out", help="output prefix (default: the problem path)")
    s.add_argument("--r0", type=float)
    s.add_argument("--K-max", dest="K_max", type=int)
    s.add_argument("--npa", type=int)
    s.add_argument("--abs-floor", dest="abs_floor", type=float)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--config")
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="summarise a solution file")
    r.add_argument("solution")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    _apply_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``frugal-split validate|lift|certify|run|compare``.

Exit codes
----------
0  success (valid, certified, converged)
1  invalid representation, certificate not satisfied, or incompatible methods
2  unreadable input or bad arguments
3  run stopped by the divergence guard
4  run stopped at max_iter
5  certify refused: U is rank deficient
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import convergence, runner, zoo
from .operators import OracleError, tuple_from_dict, zero_of_sum_oracle, inclusion_residual
from .representation import (
    InvalidRepresentationError,
    factorize,
    minimal_kernel,
    minimal_lifting,
    representation_from_dict,
    representation_to_dict,
    from_kernel,
    validate,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DIVERGED, EXIT_MAX_ITER, EXIT_RANK = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _seed(value):
    env = os.environ.get("FRUGAL_SPLIT_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise UsageError(f"FRUGAL_SPLIT_SEED must be an integer, got {env!r}") from exc
    return 0 if value is None else int(value)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _index_list(text):
    text = (text or "").strip()
    if not text:
        return frozenset()
    try:
        return frozenset(int(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"expected comma-separated indices, got {text!r}") from exc


def _parse_value(text):
    parts = [p for p in str(text).split(",") if p.strip()]
    values = [float(p) for p in parts]
    if len(values) == 1:
        v = values[0]
        return int(v) if v.is_integer() and "." not in parts[0] and "e" not in parts[0].lower() else v
    return values


def _parse_betas(items):
    betas = {}
    for item in items or []:
        try:
            i, v = item.split("=")
            betas[int(i)] = float(v)
        except ValueError as exc:
            raise UsageError(f"--beta expects i=value, got {item!r}") from exc
    return betas


def _method_params(args):
    params = {}
    for name in ("gamma", "theta", "sigma", "n", "f", "lam"):
        value = getattr(args, name, None)
        if value is not None:
            params[name] = value
    if getattr(args, "tau", None) is not None:
        params["tau"] = _parse_value(args.tau)
    return params


def _build_entry(name, params):
    try:
        return zoo.build(name, **params)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _parse_method_spec(spec):
    """``name:key=value,key=value`` → (name, params). Lists use ``/``: ``tau=1/1/2``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        params[key.strip()] = _parse_value(value.replace("/", ","))
    return name.strip(), params


def _load_problem(spec, seed):
    """A generator spec ``affine:n=4,m=3,F=2/3,mu=0.1`` / ``lasso:m=1,mu=1`` or a JSON path."""
    if spec.endswith(".json") or os.path.exists(spec):
        data = _read_json(spec)
        try:
            T = tuple_from_dict(data)
        except (KeyError, ValueError, TypeError) as exc:
            raise UsageError(f"bad problem file: {exc}") from exc
        x = np.array(data["known_solution"], float) if "known_solution" in data else None
        if x is None:
            try:
                x = zero_of_sum_oracle(T)
            except OracleError:
                x = None
        residual = None if x is None else inclusion_residual(T.operators, x, atol=1e-7)
        return runner.Problem(T, x, seed, residual, os.path.basename(spec))
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, value = item.partition("=")
        params[key.strip()] = value.strip()
    try:
        if kind == "affine":
            F = _index_list(params.get("F", "").replace("/", ","))
            return runner.gen_affine_problem(int(params.get("n", 2)), int(params.get("m", 3)), F,
                                             float(params.get("mu", 0.1)), seed)
        if kind == "lasso":
            box = float(params.get("box", 10.0))
            return runner.gen_lasso_problem(int(params.get("m", 1)), float(params.get("mu", 1.0)),
                                            (-box, box), seed)
    except (ValueError, OracleError) as exc:
        raise UsageError(f"cannot generate problem {spec!r}: {exc}") from exc
    raise UsageError(f"unknown problem spec {spec!r}; use affine:..., lasso:... or a JSON file")


# -- commands ----------------------------------------------------------------


def cmd_validate(args):
    data = _read_json(args.representation)
    try:
        rep = representation_from_dict(data)
    except InvalidRepresentationError as exc:
        print(f"invalid: {exc}")
        return EXIT_FAIL
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise UsageError(f"cannot parse representation: {exc}") from exc
    report = validate(rep)
    print(report.summary())
    return EXIT_OK if report.valid else EXIT_FAIL


def cmd_lift(args):
    F = _index_list(args.forward_set)
    try:
        d = minimal_lifting(args.n, F)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(d)
    if args.emit_kernel:
        try:
            M = minimal_kernel(args.n, F, args.primal)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        p = args.primal or max(set(range(1, args.n + 1)) - F)
        _dump(representation_to_dict(from_kernel(M, p, F)), args.emit_kernel)
    return EXIT_OK


def cmd_certify(args):
    betas = _parse_betas(args.beta)
    seed = _seed(args.seed)
    if args.representation:
        try:
            rep = representation_from_dict(_read_json(args.representation))
        except (InvalidRepresentationError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot load representation: {exc}") from exc
        entry = None
    else:
        if not args.method:
            raise UsageError("give --method or --representation")
        entry = _build_entry(args.method, _method_params(args))
        rep = entry.rep
    try:
        fact = factorize(rep)
    except InvalidRepresentationError as exc:
        print(f"invalid representation: {exc}")
        return EXIT_FAIL
    try:
        if args.Q:
            Q = np.array(_read_json(args.Q), dtype=float)
            source = "file"
        elif entry is not None and not args.search:
            Q = entry.closed_form_Q(betas)
            source = "closed-form"
        else:
            Q = convergence.search_Q(fact, betas, convergence.SearchOptions(seed=seed))
            source = "search"
    except convergence.RankDeficientUError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_RANK
    except KeyError as exc:
        raise UsageError(f"missing cocoercivity constant: {exc}") from exc
    if Q is None:
        out = {"satisfied": False, "Q_source": source, "seed": seed, "message": "no certificate found"}
        _dump(out, args.output)
        return EXIT_FAIL
    try:
        cert = convergence.check(fact, Q, betas)
    except KeyError as exc:
        raise UsageError(f"missing cocoercivity constant: {exc}") from exc
    cert.seed = seed if source == "search" else None
    out = cert.to_dict()
    out["Q_source"] = source
    if entry is not None:
        out["method"] = entry.name
        out["parameters"] = entry.parameters
        try:
            out["convergence_condition"] = entry.convergence_condition(betas)
        except KeyError:
            out["convergence_condition"] = None
    _dump(out, args.output)
    return EXIT_OK if cert.satisfied else EXIT_FAIL


def _run_config(args):
    config = _read_json(args.config) if getattr(args, "config", None) else {}
    for key in ("method", "problem", "max_iter", "tol", "seed", "trace", "summary", "representation"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    params = dict(config.get("parameters", {}))
    params.update(_method_params(args))
    config["parameters"] = params
    return config


def cmd_run(args):
    config = _run_config(args)
    seed = _seed(config.get("seed"))
    if bool(config.get("method")) == bool(config.get("representation")):
        raise UsageError("give exactly one of --method or --representation")
    if "problem" not in config:
        raise UsageError("--problem is required")
    problem = _load_problem(config["problem"], seed)
    entry = None
    if config.get("method"):
        entry = _build_entry(config["method"], config["parameters"])
        rep = entry.rep
    else:
        try:
            rep = representation_from_dict(_read_json(config["representation"]))
        except (InvalidRepresentationError, KeyError, ValueError) as exc:
            raise UsageError(f"cannot load representation: {exc}") from exc
    if rep.n != problem.n or rep.F != problem.F:
        raise UsageError(f"method expects n={rep.n}, F={sorted(rep.F)}; problem has n={problem.n}, "
                         f"F={sorted(problem.F)}")

    cert = None
    if entry is not None:
        try:
            cert = entry.certificate(problem.betas)
        except (KeyError, ValueError):
            cert = None
    y_star = None
    if problem.known_solution is not None:
        try:
            y_star = problem.dual_solution(rep.p)
        except OracleError:
            y_star = None
    use_cert = cert is not None and cert.satisfied
    trace = runner.run(
        rep, problem.tuple,
        max_iter=int(config.get("max_iter", 10_000)),
        tol=float(config.get("tol", 1e-10)),
        Q=cert.Q if use_cert else None,
        W=cert.W if use_cert else None,
        y_star=y_star if use_cert else None,
    )
    summary = trace.summary()
    summary.update({"problem": problem.name, "seed": seed, "certified": bool(use_cert)})
    if entry is not None:
        summary.update({"method": entry.name, "parameters": entry.parameters})
    if use_cert and y_star is not None:
        summary["fejer"] = runner.monitor_fejer(trace, cert.Q, cert.W, trace.P @ y_star).to_dict()
    if problem.known_solution is not None and trace.final is not None:
        x = trace.final.y[rep.p - 1]
        summary["solution_error"] = float(np.linalg.norm(x - problem.known_solution))
    if config.get("trace"):
        runner.write_trace_csv(trace, config["trace"])
    _dump(summary, config.get("summary"))
    return {runner.TOLERANCE: EXIT_OK, runner.DIVERGENCE: EXIT_DIVERGED, runner.MAX_ITER: EXIT_MAX_ITER}[
        trace.terminated_by
    ]


def cmd_compare(args):
    config = _read_json(args.config) if args.config else {}
    specs = config.get("methods", [])
    if args.methods:
        specs = [s for s in args.methods.split(";") if s.strip()]
    if not specs:
        raise UsageError("no methods given")
    entries = []
    for spec in specs:
        if isinstance(spec, dict):
            name, params = spec["name"], spec.get("parameters", {})
        else:
            name, params = _parse_method_spec(spec)
        entries.append(_build_entry(name, params))
    seed = _seed(args.seed if args.seed is not None else config.get("seed"))
    problem_spec = args.problem or config.get("problem")
    if not problem_spec:
        raise UsageError("--problem is required")
    problem = _load_problem(problem_spec, seed)
    budget = int(args.budget or config.get("budget", 10_000))
    tol = float(args.tol or config.get("tol", 1e-10))
    try:
        rows = runner.compare(entries, problem, budget, tol)
    except runner.IncompatibleMethodError as exc:
        print(f"incompatible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    output = args.output or config.get("output")
    if output:
        runner.write_compare_csv(rows, output)
    for row in rows:
        d = row.to_dict()
        print(f"{d['name']}\titerations={d['iterations_to_tol']}\tresidual={d['final_residual']:.3e}"
              f"\tcertified={str(d['certified']).lower()}\t{d['terminated_by']}")
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _add_method_args(p):
    p.add_argument("--method", help="zoo method name, e.g. davis-yin or malitsky-tam")
    p.add_argument("--gamma", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--tau", help="scalar, or comma-separated list for projective")
    p.add_argument("--sigma", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--lam", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="frugal-split", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a representation JSON file")
    p.add_argument("representation")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("lift", help="minimal lifting number for n operators with forward set F")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--forward-set", default="", help='comma-separated 1-based indices, "" for none')
    p.add_argument("--primal", type=int, help="primal index for --emit-kernel")
    p.add_argument("--emit-kernel", metavar="PATH", help="write a minimal representation as JSON")
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("certify", help="check the convergence certificate")
    _add_method_args(p)
    p.add_argument("--representation", help="representation JSON instead of --method")
    p.add_argument("--beta", action="append", metavar="I=VALUE", help="cocoercivity constant, repeatable")
    p.add_argument("--Q", help="JSON file with the metric Q")
    p.add_argument("--search", action="store_true", help="search for Q instead of the closed form")
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("run", help="iterate a splitting on a problem")
    _add_method_args(p)
    p.add_argument("--representation")
    p.add_argument("--problem", help="affine:n=..,m=..,F=2/3 | lasso:m=..,mu=.. | problem.json")
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="CSV trace output")
    p.add_argument("--summary", help="JSON summary output (stdout if omitted)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several methods on one problem")
    p.add_argument("--methods", help='"douglas-rachford:gamma=1;malitsky-tam:n=2,theta=0.5"')
    p.add_argument("--problem")
    p.add_argument("--config")
    p.add_argument("--budget", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output", help="CSV table output")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``probcon {invert,estimate,experiment,oracle}``.

Exit codes: 0 success, 1 usage or input error, 2 infeasible constraints,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dirichlet, gaussian, harness
from .bregman import WishartHyperprior
from .constraints import ConstraintSet, LinearConstraint, ProbabilisticConstraint
from .errors import DomainError, InfeasibleError, ProbconError
from .estimators import gaussian_means as gm
from .estimators import multinomial as mn
from .estimators import regression as rg
from .estimators.result import EstimationResult

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3
METHOD_CHOICES = ("edgeworth1", "edgeworth2", "exact", "mc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")


def _matrix(text):
    """``"1,0;0,1"`` -> 2x2 matrix; a plain list is read as a diagonal."""
    if ";" not in text:
        return np.array(_floats(text))
    try:
        return np.array([[float(t) for t in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed matrix {text!r}")


def _globals():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file with inputs for the subcommand")
    p.add_argument("--seed", type=int, default=None, help="unsigned 64-bit seed")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--method", choices=METHOD_CHOICES, default=None,
                   help="Dirichlet probability evaluation")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for experiments")
    return p


def build_parser():
    common = _globals()
    parser = _Parser(prog="probcon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    inv = sub.add_parser("invert", parents=[common],
                         help="prior mass of a half-space and feasibility of a constraint")
    inv.add_argument("family", choices=("dirichlet", "gaussian"))
    inv.add_argument("--alpha", type=_floats)
    inv.add_argument("--mu", type=_floats)
    inv.add_argument("--sigma", type=_matrix, help="'1,0;0,1' or a diagonal '1,1'")
    inv.add_argument("--a", type=_floats)
    inv.add_argument("--b", type=float)
    inv.add_argument("--eta", type=float, default=None)
    inv.add_argument("--samples", type=int, default=100_000, help="Monte Carlo draws")

    est = sub.add_parser("estimate", parents=[common], help="fit one estimator to data")
    est.add_argument("--estimator", choices=sorted(ESTIMATORS))
    est.add_argument("--data", help="JSON data file")
    est.add_argument("--constraints", help="JSON list of {a, b, eta} records")
    est.add_argument("--mode", choices=("diagonal", "full"), default=None)
    est.add_argument("--tau", type=float, default=None)
    est.add_argument("--ridge", type=float, default=None)
    est.add_argument("--alpha-box", type=_floats, default=None)

    exp = sub.add_parser("experiment", parents=[common], help="run a seeded experiment")
    exp.add_argument("--builtin", choices=sorted(harness.BUILTINS))
    exp.add_argument("--replicates", type=int, default=None)

    orc = sub.add_parser("oracle", parents=[common],
                         help="cross-check Edgeworth, quadrature and Monte Carlo")
    orc.add_argument("--instances", type=int, default=50)
    orc.add_argument("--samples", type=int, default=100_000)
    orc.add_argument("--cases", action="store_true", help="include per-instance values")
    return parser


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}")


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj, out):
    _emit(json.dumps(obj, sort_keys=True) + "\n", out)


def _pick(args, cfg, key, attr=None):
    val = getattr(args, attr or key, None)
    if val is None:
        val = cfg.get(key)
    return val


# -- invert -------------------------------------------------------------------

def cmd_invert(args):
    cfg = _load_json(args.config) if args.config else {}
    a, b, eta = _pick(args, cfg, "a"), _pick(args, cfg, "b"), _pick(args, cfg, "eta")
    if a is None or b is None:
        raise UsageError("invert needs a constraint: --a and --b (or config keys a, b)")
    c = LinearConstraint(a, b)
    if args.family == "dirichlet":
        alpha = _pick(args, cfg, "alpha")
        if alpha is None:
            raise UsageError("invert dirichlet needs --alpha")
        hyper = dirichlet.DirichletHyper(alpha)
        method = args.method or cfg.get("method", "edgeworth2")
        out = {"method": method}
        if method == "mc":
            seed = args.seed if args.seed is not None else cfg.get("seed", 0)
            p, se = dirichlet.prob_leq_montecarlo(hyper, c, args.samples,
                                                  np.random.default_rng(seed))
            out["std_err"] = se
        else:
            p = dirichlet.prob_leq(hyper, c, method)
        out["prob"] = p
        if eta is not None:
            out["eta"] = eta
            out["member"] = bool(p >= eta)
        return out
    mu, sigma = _pick(args, cfg, "mu"), _pick(args, cfg, "sigma")
    if mu is None or sigma is None:
        raise UsageError("invert gaussian needs --mu and --sigma")
    hyper = gaussian.GaussianHyper(mu, np.asarray(sigma, dtype=float))
    out = {"prob": gaussian.prob_leq(hyper, c)}
    if eta is not None:
        pc = ProbabilisticConstraint(c, eta)
        margin = gaussian.soc_margin(hyper, pc)
        out.update(eta=eta, margin=margin, member=bool(margin >= 0.0))
    return out


# -- estimate -----------------------------------------------------------------

def _counts(data):
    if "counts" not in data:
        raise UsageError("multinomial data needs a 'counts' list")
    return np.asarray(data["counts"], dtype=float)


def _box(opts):
    return tuple(opts.get("alpha_box") or mn.DEFAULT_ALPHA_BOX)


def _opt(opts, key, default):
    val = opts.get(key)
    return default if val is None else val


def _prior(opts, n):
    return WishartHyperprior.scaled_identity(float(_opt(opts, "tau", 1.0)), n)


def _gdata(data):
    if "groups" not in data:
        raise UsageError("gaussian data needs a 'groups' list of sample lists")
    return gm.GaussianMeansData(data["groups"])


def _rdata(data):
    if "X" not in data or "y" not in data:
        raise UsageError("regression data needs 'X' and 'y'")
    return rg.RegressionData(data["X"], data["y"], float(data.get("sigma2", 1.0)))


ESTIMATORS = {
    "mle_multinomial": lambda d, cs, o: mn.mle_multinomial(_counts(d)),
    "constrained_mle_multinomial":
        lambda d, cs, o: mn.constrained_mle_multinomial(_counts(d), cs.linear),
    "map_dirichlet": lambda d, cs, o: mn.map_dirichlet_multinomial(
        _counts(d), cs, alpha_box=_box(o), method=o["method"], seed=o["seed"]),
    "eb_dirichlet": lambda d, cs, o: mn.eb_dirichlet_multinomial(
        d.get("replicates") or [_counts(d)], cs, alpha_box=_box(o), method=o["method"],
        seed=o["seed"]),
    "mle_gaussian": lambda d, cs, o: gm.mle_gaussian_means(_gdata(d)),
    "constrained_mle_gaussian":
        lambda d, cs, o: gm.constrained_mle_gaussian_means(_gdata(d), cs.linear),
    "map_gaussian": lambda d, cs, o: gm.map_gaussian_means(
        _gdata(d), cs, _prior(o, len(d["groups"])), o.get("mode") or "full"),
    "ridge": lambda d, cs, o: rg.ridge_regression(_rdata(d), float(_opt(o, "ridge", 1.0))),
    "constrained_ridge": lambda d, cs, o: rg.constrained_ridge(
        _rdata(d), float(_opt(o, "ridge", 1.0)), cs.linear),
    "map_regression": lambda d, cs, o: rg.map_regression(
        _rdata(d), cs, _prior(o, np.shape(d["X"])[1]), o.get("mode") or "full"),
}


def cmd_estimate(args):
    cfg = _load_json(args.config) if args.config else {}
    name = args.estimator or cfg.get("estimator")
    if name not in ESTIMATORS:
        raise UsageError(f"--estimator must be one of {sorted(ESTIMATORS)}")
    data = _load_json(args.data) if args.data else cfg.get("data")
    if not isinstance(data, dict):
        raise UsageError("estimate needs --data (or a 'data' object in the config)")
    recs = _load_json(args.constraints) if args.constraints else cfg.get("constraints", [])
    try:
        cs = ConstraintSet.from_records(recs)
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed constraint records: {exc!r}")
    opts = dict(cfg.get("options", {}))
    for key in ("mode", "tau", "ridge", "alpha_box"):
        if getattr(args, key) is not None:
            opts[key] = getattr(args, key)
    method = args.method or opts.get("method", "edgeworth2")
    if method == "mc":
        raise UsageError("estimators need a deterministic method (edgeworth1/2 or exact)")
    opts["method"] = method
    opts["seed"] = args.seed if args.seed is not None else int(opts.get("seed", 0))
    res = ESTIMATORS[name](data, cs, opts)
    if not isinstance(res, EstimationResult):
        res = EstimationResult(np.asarray(res))
    out = res.to_dict()
    out["estimator"] = name
    return out


# -- experiment / oracle ------------------------------------------------------

def cmd_experiment(args):
    if bool(args.builtin) == bool(args.config):
        raise UsageError("experiment needs exactly one of --builtin or --config")
    seed = args.seed if args.seed is not None else 0
    if args.builtin:
        spec = harness.builtin_spec(args.builtin, seed)
    else:
        spec = harness.load_spec(args.config)
        if args.seed is not None:
            spec = harness.with_seed(spec, seed)
    if args.method is not None:
        if args.method == "mc":
            raise UsageError("experiments need a deterministic method")
        spec = harness.replace(spec, hyper=dict(spec.hyper, method=args.method))
    if args.replicates is not None:
        spec = harness.replace(spec, n_replicates=args.replicates)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    rows = harness.run_experiment(spec, jobs=args.jobs)
    _emit(harness.rows_to_csv(rows), args.out)
    return None


def cmd_oracle(args):
    if args.instances < 1 or args.samples < 1:
        raise UsageError("--instances and --samples must be positive")
    rep = harness.oracle_report(args.seed or 0, args.instances, args.samples)
    if not args.cases:
        rep.pop("cases")
    return rep


COMMANDS = {"invert": cmd_invert, "estimate": cmd_estimate, "experiment": cmd_experiment,
            "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("probcon: a subcommand is required "
                             "(invert, estimate, experiment, oracle)")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        result = COMMANDS[args.command](args)
        if result is not None:
            _dump(result, args.out)
        return EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, ProbconError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

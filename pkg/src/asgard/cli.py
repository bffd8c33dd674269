"""Command-line front end: ``asgard {solve, experiment, verify}``.

Exit codes: 0 success, 1 verification violations, 2 bad configuration,
3 numerical abort.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import experiments as ex
from .baseline import BaselineConfig, gamma_star, run_baseline
from .errors import CapabilityError, NumericalError, UsageError
from .linops import LinearMap
from .problem import SaddleProblem
from .proxlib import elastic_net, l2dist_conjugate
from .schedule import Regime
from .solver import run, write_trace_csv

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError("expected a boolean, got %r" % s)


def read_config(path):
    """Parse ``key=value`` lines; ``#`` starts a comment. Keys use flag names without dashes."""
    out = {}
    try:
        fh = open(path)
    except OSError as e:
        raise UsageError("cannot read config %s: %s" % (path, e))
    with fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError("%s:%d: expected key=value" % (path, ln))
            k, v = (t.strip() for t in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _add_instance_flags(p):
    p.add_argument("--p", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--corr", type=_bool)
    p.add_argument("--rho", type=float)
    p.add_argument("--lam", type=float, help="override the lambda rule")
    p.add_argument("--seed", type=int, default=0)


def _common(p):
    p.add_argument("--out", default="asgard_out", help="output directory")
    p.add_argument("--kmax", type=int)
    p.add_argument("--config", help="key=value file; flags win on conflict")
    p.add_argument("--verify", action="store_true", help="also run the invariant suite")


def build_parser():
    parser = _Parser(prog="asgard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("solve", help="solve one instance and write its trace")
    _common(ps)
    _add_instance_flags(ps)
    src = ps.add_mutually_exclusive_group()
    src.add_argument("--instance", help="instance bundle directory")
    src.add_argument("--demo", action="store_true", help="the one-dimensional demo problem")
    ps.add_argument("--algo", choices=["asgard", "nesterov"], default="asgard")
    ps.add_argument("--regime", choices=["auto", "case1", "case2"], default="auto")
    ps.add_argument("--beta0", default=None, help="star, 10star, 0.1star or a positive number")
    ps.add_argument("--save-instance", action="store_true", help="write the generated bundle")

    pe = sub.add_parser("experiment", help="run one comparison experiment")
    _common(pe)
    _add_instance_flags(pe)
    pe.add_argument("--exp", type=int, choices=[1, 2, 3, 4])
    pe.add_argument("--instances", type=int)
    pe.add_argument("--profile", choices=sorted(ex.PROFILES), default="desk")
    pe.add_argument("--budget", type=int, default=ex.REFERENCE_BUDGET, help="reference iterations")
    pe.add_argument("--cache", default=None, help="directory for instance bundles and references")

    pv = sub.add_parser("verify", help="run the invariant suite")
    _common(pv)
    pv.add_argument("--tamper-tau", type=float, default=None, help="inflate tau by this factor")
    pv.add_argument("--illegal-beta0", action="store_true",
                    help="add a run with beta0 below the admissible range")
    pv.add_argument("--horizon", type=int, default=100000)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        # re-parse with the file as defaults so explicit flags win
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in known:
                raise UsageError("unknown config key %r" % k)
            act = known[k]
            if act.type is not None:
                try:
                    v = act.type(v)
                except (ValueError, argparse.ArgumentTypeError) as e:
                    raise UsageError("config key %s: %s" % (k, e))
            elif isinstance(act, argparse._StoreTrueAction):
                v = _bool(v)
            defaults[k] = v
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if getattr(args, "kmax", None) is not None and args.kmax < 1:
        raise UsageError("--kmax must be >= 1")
    return args


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise UsageError("cannot create output directory %s: %s" % (path, e))
    if not os.access(path, os.W_OK):
        raise UsageError("output directory %s is not writable" % path)
    return path


def _spec_from_args(args, base=None):
    fields = {} if base is None else dict(base)
    for name, key in (("p", "p"), ("n", "n"), ("s", "s"), ("sigma", "sigma"), ("corr", "correlated"),
                      ("rho", "rho"), ("lam", "lam")):
        v = getattr(args, name, None)
        if v is not None:
            fields[key] = v
    return fields


def demo_problem():
    """``min |x| + |x - 1|``: ``f = |.|``, ``K = [1]``, ``b = 1``; every point of [0, 1] is optimal."""
    return SaddleProblem(elastic_net(1.0), l2dist_conjugate(np.array([1.0])),
                         LinearMap(np.array([[1.0]])), name="demo")


def _beta_rule(text, opnorm, dist0, regime):
    if text is None:
        if regime.case == 2:
            return ex.case2_beta0(opnorm, regime.mu_f)
        text = "star"
    mult = {"star": 1.0, "10star": 10.0, "0.1star": 0.1}.get(text)
    if mult is not None:
        return mult * ex.beta_star(opnorm, max(dist0, 1e-12))
    try:
        v = float(text)
    except ValueError:
        raise UsageError("--beta0 must be star, 10star, 0.1star or a number")
    if not v > 0 or not math.isfinite(v):
        raise UsageError("--beta0 must be positive")
    return v


def cmd_solve(args):
    out = _outdir(args.out)
    k_max = args.kmax or 1000
    if args.demo:
        prob = demo_problem()
        dist0 = 1.0
        bundle = None
    else:
        if args.instance:
            if not os.path.isdir(args.instance):
                raise UsageError("instance directory %s not found" % args.instance)
            bundle = ex.read_bundle(args.instance)
        else:
            spec = ex.InstanceSpec(seed=args.seed, **_spec_from_args(args))
            bundle = ex.generate(spec)
        prob = ex.make_problem(bundle)
        needs_ref = args.beta0 in (None, "star", "10star", "0.1star") or args.algo == "nesterov"
        if bundle.x_ref is None and needs_ref:
            ex.reference_solve(bundle)
        dist0 = float(np.linalg.norm(bundle.x_ref)) if bundle.x_ref is not None else 1.0
        if args.save_instance:
            ex.write_bundle(os.path.join(out, "instance"), bundle)
    if args.regime == "case1":
        prob = prob.general_convex()
    elif args.regime == "case2":
        if prob.f.mu <= 0:
            raise UsageError("case2 needs rho > 0")
        prob = prob.with_regime(Regime.strongly_convex_primal(prob.f.mu))
    x0 = np.zeros(prob.p)
    if args.algo == "nesterov":
        gtext = args.beta0 or "star"
        mult = {"star": 1.0, "10star": 10.0, "0.1star": 0.1}.get(gtext)
        gamma = mult * gamma_star(prob.opnorm, max(dist0, 1e-12), k_max) if mult else float(gtext)
        rec = run_baseline(prob, BaselineConfig(gamma, k_max, x0))
    else:
        beta0 = 1.0 if (args.demo and args.beta0 is None) else _beta_rule(args.beta0, prob.opnorm, dist0,
                                                                          prob.regime)
        rec = run(prob, x0, beta0=beta0, k_max=k_max)
    path = os.path.join(out, "trace.csv")
    write_trace_csv(path, rec)
    last = rec.trace[-1]
    print("k=%d F=%.12g gap=%s -> %s" % (last.k, last.F_primal, last.gap_cert, path))
    return EXIT_OK


def cmd_experiment(args):
    if args.exp is None:
        raise UsageError("--exp is required")
    out = _outdir(args.out)
    overrides = _spec_from_args(args)
    res = ex.run_experiment(args.exp, num_instances=args.instances, profile=args.profile, k_max=args.kmax,
                            base_seed=args.seed, budget=args.budget, cache_dir=args.cache, **overrides)
    stem = os.path.join(out, "exp%d" % args.exp)
    res.report.write_csv(stem + "_aggregate.csv")
    res.write_instances_csv(stem + "_instances.csv")
    from .plotting import plot_report

    paths = plot_report(res.report, stem, title="Experiment %d (%s profile)" % (args.exp, args.profile))
    for c in res.configs:
        med = float(np.median(res.final_residuals(c)))
        print("%-22s median final residual %.3e" % (c, med))
    if res.excluded:
        print("excluded instances (uncertified reference): %s" % res.excluded)
    print("wrote %s_aggregate.csv and %s" % (stem, ", ".join(paths)))
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_verification

    out = _outdir(args.out)
    rep = run_verification(tau_factor=args.tamper_tau, illegal_beta0=args.illegal_beta0,
                           horizon=args.horizon)
    path = os.path.join(out, "verification.csv")
    rep.write_csv(path)
    total = sum(rep.counts.values())
    if rep.ok:
        print("verification passed: %d checks, 0 violations -> %s" % (total, path))
        return EXIT_OK
    w = rep.max_violation()
    print("verification FAILED: %d of %d checks violated; worst %s at k=%d (slack %.3e) -> %s"
          % (len(rep.violations), total, w.quantity, w.k, w.slack, path))
    return EXIT_VIOLATION


def main(argv=None):
    try:
        args = _parse(argv)
        cmd = {"solve": cmd_solve, "experiment": cmd_experiment, "verify": cmd_verify}[args.command]
        code = cmd(args)
        if code == EXIT_OK and args.command != "verify" and args.verify:
            args.tamper_tau, args.illegal_beta0, args.horizon = None, False, 100000
            code = cmd_verify(args)
        return code
    except NumericalError as e:
        print("numerical abort: %s" % e, file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, CapabilityError, ValueError, OSError) as e:
        print("error: %s" % e, file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Sparse-recovery instances, reference solutions and the comparison experiments.

The test problem is ``min_x ||Kx - b|| + lam ||x||_1 + (rho / 2) ||x||^2``
written as ``f = elastic net`` and ``g = ||. - b||``.
"""

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
from scipy.special import ndtri

from . import diagnostics as diag
from .baseline import BaselineConfig, gamma_star, run_baseline
from .errors import UsageError
from .linops import LinearMap, load_matrix_csv, save_matrix_csv
from .problem import SaddleProblem
from .proxlib import elastic_net, l2dist_conjugate
from .schedule import CASE2_BETA_FACTOR
from .solver import run

__all__ = [
    "InstanceSpec", "InstanceBundle", "generate", "lambda_rule", "make_problem", "reference_solve",
    "beta_star", "case2_beta0", "prepare_instance", "feasible_dual", "run_experiment", "aggregate", "AggregateReport",
    "ExperimentResult", "write_bundle", "read_bundle", "PROFILES", "EXPERIMENTS", "REFERENCE_BUDGET",
]

REFERENCE_BUDGET = 100_000

#: stand-in for ||x^0 - x_ref|| when the reference is x^0 itself
DIST_FLOOR = 1e-8

PROFILES = {
    "desk": dict(p=200, n=70, s=20, instances=10, k_max=2000),
    "paper": dict(p=1000, n=350, s=100, instances=30, k_max=5000),
}

EXPERIMENTS = {
    1: dict(correlated=False, rho=0.0),
    2: dict(correlated=True, rho=0.0),
    3: dict(correlated=False, rho=0.1),
    4: dict(correlated=True, rho=0.1),
}


def lambda_rule(p, alpha=0.05, c=1.1):
    """``c * Phi^{-1}(1 - alpha / (2p))``.

    With ``N(0, 1)`` entries the columns of ``K`` have norm about
    ``sqrt(n)``, which cancels the normalizations of the square-root lasso
    rule against the unnormalized ``||Kx - b||``.
    """
    if not (0.0 < alpha < 1.0 + 1e-15) or c < 1.0 or p < 1:
        raise UsageError("lambda_rule needs alpha in (0, 1], c >= 1, p >= 1")
    return float(c * ndtri(1.0 - alpha / (2.0 * p)))


@dataclass(frozen=True)
class InstanceSpec:
    """Generation parameters; ``sigma`` is the noise variance."""

    p: int = 200
    n: int = 70
    s: int = 20
    sigma: float = 0.05
    correlated: bool = False
    rho: float = 0.0
    lam: Optional[float] = None
    alpha: float = 0.05
    c: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.n < 1:
            raise UsageError("p and n must be positive")
        if not 0 <= self.s <= self.p:
            raise UsageError("need 0 <= s <= p")
        if self.sigma < 0 or self.rho < 0:
            raise UsageError("sigma and rho must be nonnegative")

    @property
    def lam_value(self):
        return self.lam if self.lam is not None else lambda_rule(self.p, self.alpha, self.c)


@dataclass
class InstanceBundle:
    K: np.ndarray
    b: np.ndarray
    x_natural: np.ndarray
    lam: float
    rho: float
    spec: InstanceSpec
    F_ref: float = math.nan
    x_ref: Optional[np.ndarray] = None
    y_ref: Optional[np.ndarray] = None
    certified: Optional[bool] = None
    ref_gap: float = math.nan
    provenance: Dict[str, str] = field(default_factory=dict)


def _rng(seed):
    return np.random.Generator(np.random.MT19937(int(seed)))


def generate(spec):
    """Draw ``K``, a sparse ``x_natural`` and ``b = K x_natural + noise`` from the seed.

    The correlated design is ``G Sigma^{1/2}`` with the equicorrelation
    ``Sigma = 0.5 I + 0.5 11^T``, whose square root is
    ``sqrt(0.5) I + c 11^T`` for a scalar ``c``.
    """
    rng = _rng(spec.seed)
    n, p = spec.n, spec.p
    K = rng.standard_normal((n, p))
    if spec.correlated:
        r = math.sqrt(0.5)
        c = (math.sqrt(0.5 + 0.5 * p) - r) / p
        K = r * K + c * K.sum(axis=1, keepdims=True)
    x = np.zeros(p)
    if spec.s > 0:
        idx = rng.choice(p, size=spec.s, replace=False)
        x[idx] = rng.standard_normal(spec.s)
    noise = math.sqrt(spec.sigma) * rng.standard_normal(n)
    b = K @ x + noise
    prov = {"generator": "MT19937", "seed": str(spec.seed)}
    return InstanceBundle(K, b, x, spec.lam_value, spec.rho, spec, provenance=prov)


def make_problem(bundle, regime=None):
    return SaddleProblem(elastic_net(bundle.lam, bundle.rho), l2dist_conjugate(bundle.b),
                         LinearMap(bundle.K), regime=regime, name="sparse-recovery")


def beta_star(opnorm, dist0, M_g=1.0):
    """``||K|| ||x^0 - x*|| / M_g``, the minimizer of the general-convex bound's constant."""
    if opnorm <= 0 or dist0 <= 0 or M_g <= 0:
        raise UsageError("beta_star needs positive inputs")
    return opnorm * dist0 / M_g


def case2_beta0(opnorm, mu_f):
    """Smallest admissible ``beta0`` in the strongly convex primal regime."""
    return CASE2_BETA_FACTOR * opnorm ** 2 / mu_f


def feasible_dual(problem, y, lam, KTy=None):
    """Scale ``y`` into ``dom D`` when ``f`` is a pure l1 term.

    ``f*`` is then the indicator of ``||z||_inf <= lam`` and the dual ball
    is star-shaped around 0, so ``y min(1, lam / ||K^T y||_inf)`` is
    feasible. For ``rho > 0`` the dual is finite everywhere and ``y`` is
    returned unchanged.
    """
    if problem.f.mu > 0:
        return y
    if KTy is None:
        KTy = problem.K.adjoint(y)
    m = float(np.abs(KTy).max(initial=0.0))
    return y if m <= lam else y * (lam / m)


class _Tracker:
    """Observer keeping the best primal iterate and the best dual point seen.

    Dual candidates are the averaged dual iterate and, when ``g*`` exposes
    it, a subgradient of ``g`` at ``K x^k``; the latter becomes exact as
    ``x^k`` approaches a minimizer and certifies much earlier.
    """

    def __init__(self, problem, lam, dual_every):
        self.problem = problem
        self.lam = lam
        self.dual_every = dual_every
        self.F = math.inf
        self.x = None
        self.D = math.inf
        self.y = None

    def __call__(self, row, state):
        if row.F_primal < self.F:
            self.F = row.F_primal
            self.x = state if isinstance(state, np.ndarray) else state.x
        if self.dual_every and not isinstance(state, np.ndarray) and row.k % self.dual_every == 0:
            self.offer_dual(state.ytilde, state.KTytilde)
            if self.problem.gstar.conj_argmax is not None:
                self.offer_dual(self.problem.gstar.conj_argmax(state.Kx))

    def offer_dual(self, y, KTy=None):
        y = feasible_dual(self.problem, y, self.lam, KTy)
        D = diag.dual_value(self.problem, y)
        if math.isfinite(D) and D < self.D:
            self.D = D
            self.y = np.array(y)


def reference_solve(bundle, budget=REFERENCE_BUDGET, dist_guess=None, dual_every=50):
    """High-accuracy solution by long runs of both methods.

    The smoothing parameters need ``||x^0 - x*||``, which is unknown before
    solving; ``||x_natural||`` stands in for it (``dist_guess`` overrides).
    For ``rho = 0`` the general-convex method runs with ``0.01 beta*`` and
    the baseline with ``gamma*`` for ``budget`` iterations. For ``rho > 0``
    the strongly convex primal schedule (with its smallest admissible
    ``beta0``) runs until the gap certificate reaches
    ``1e-6 max(1, |F|)`` or the budget is exhausted; the certificate decides
    ``bundle.certified``.

    Returns ``(F_ref, x_ref, y_ref)`` and fills the bundle fields.
    """
    if budget < REFERENCE_BUDGET:
        raise UsageError("reference budget must be >= %d" % REFERENCE_BUDGET)
    prob = make_problem(bundle)
    x0 = np.zeros(prob.p)
    d = dist_guess if dist_guess is not None else float(np.linalg.norm(bundle.x_natural))
    d = max(d, 1e-3)
    tr = _Tracker(prob, bundle.lam, dual_every)
    if bundle.rho > 0:
        beta0 = case2_beta0(prob.opnorm, bundle.rho)
        run(prob, x0, beta0=beta0, k_max=budget, observer=_StopOnGap(tr), trace_level="primal")
    else:
        run(prob, x0, beta0=0.01 * beta_star(prob.opnorm, d), k_max=budget, observer=tr,
            trace_level="primal")
        run_baseline(prob, BaselineConfig(gamma_star(prob.opnorm, d, budget), budget, x0),
                     observer=tr, trace_level="primal")
    F_ref = diag.primal_value(prob, tr.x)
    gap = F_ref + tr.D if tr.y is not None else math.inf
    bundle.F_ref = F_ref
    bundle.x_ref = tr.x
    bundle.y_ref = tr.y
    bundle.ref_gap = gap
    bundle.certified = bool(gap <= 1e-6 * max(1.0, abs(F_ref))) if bundle.rho > 0 else True
    return F_ref, tr.x, tr.y


class _StopOnGap:
    """Tracker that asks the run to stop once the best pair is certified."""

    def __init__(self, tracker):
        self.tr = tracker

    def __call__(self, row, state):
        self.tr(row, state)
        if row.k % self.tr.dual_every == 0 and self.tr.y is not None:
            return self.tr.F + self.tr.D <= 1e-6 * max(1.0, abs(self.tr.F))
        return False


def write_bundle(path, bundle):
    os.makedirs(path, exist_ok=True)
    save_matrix_csv(os.path.join(path, "K.csv"), bundle.K)
    np.savetxt(os.path.join(path, "b.csv"), bundle.b, fmt="%.17g")
    np.savetxt(os.path.join(path, "xnat.csv"), bundle.x_natural, fmt="%.17g")
    if bundle.x_ref is not None:
        np.savetxt(os.path.join(path, "xref.csv"), bundle.x_ref, fmt="%.17g")
    if bundle.y_ref is not None:
        np.savetxt(os.path.join(path, "yref.csv"), bundle.y_ref, fmt="%.17g")
    sp = bundle.spec
    meta = dict(p=sp.p, n=sp.n, s=sp.s, sigma=repr(sp.sigma), corr=int(sp.correlated),
                **{"lambda": repr(bundle.lam)}, rho=repr(bundle.rho), seed=sp.seed,
                F_ref=repr(bundle.F_ref),
                certified="" if bundle.certified is None else int(bundle.certified),
                ref_gap=repr(bundle.ref_gap))
    with open(os.path.join(path, "meta.txt"), "w") as fh:
        for k, v in meta.items():
            fh.write("%s=%s\n" % (k, v))


def read_bundle(path):
    meta = {}
    with open(os.path.join(path, "meta.txt")) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                k, _, v = line.partition("=")
                meta[k.strip()] = v.strip()
    K = load_matrix_csv(os.path.join(path, "K.csv"))
    b = np.atleast_1d(np.loadtxt(os.path.join(path, "b.csv")))
    xn = np.atleast_1d(np.loadtxt(os.path.join(path, "xnat.csv")))
    spec = InstanceSpec(p=int(meta["p"]), n=int(meta["n"]), s=int(meta["s"]), sigma=float(meta["sigma"]),
                        correlated=bool(int(meta["corr"])), rho=float(meta["rho"]),
                        lam=float(meta["lambda"]), seed=int(meta["seed"]))
    opt = {}
    for name, key in (("xref.csv", "x_ref"), ("yref.csv", "y_ref")):
        fp = os.path.join(path, name)
        if os.path.exists(fp):
            opt[key] = np.atleast_1d(np.loadtxt(fp))
    cert = meta.get("certified", "")
    return InstanceBundle(K, b, xn, spec.lam, spec.rho, spec, F_ref=float(meta.get("F_ref", "nan")),
                          certified=None if cert == "" else bool(int(cert)),
                          ref_gap=float(meta.get("ref_gap", "nan")), provenance={"path": path}, **opt)


@dataclass
class AggregateReport:
    configs: List[str]
    k: np.ndarray
    mean: Dict[str, np.ndarray]
    lo: Dict[str, np.ndarray]
    hi: Dict[str, np.ndarray]
    count: Dict[str, int]

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("config,k,mean,min,max\n")
            for c in self.configs:
                for i, k in enumerate(self.k):
                    fh.write("%s,%d,%r,%r,%r\n" % (c, k, float(self.mean[c][i]), float(self.lo[c][i]),
                                                   float(self.hi[c][i])))


def aggregate(curves):
    """Pointwise mean, min and max across instances for each configuration.

    ``curves`` maps a configuration name to a list of equal-length arrays.
    """
    if not curves:
        raise UsageError("nothing to aggregate")
    configs = list(curves)
    length = None
    mean, lo, hi, count = {}, {}, {}, {}
    for c in configs:
        runs = curves[c]
        if not runs:
            raise UsageError("configuration %s has no runs" % c)
        lens = {len(r) for r in runs}
        if len(lens) != 1 or (length is not None and lens != {length}):
            raise UsageError("ragged traces for configuration %s" % c)
        length = lens.pop()
        A = np.vstack(runs)
        mean[c] = A.mean(axis=0)
        lo[c] = A.min(axis=0)
        hi[c] = A.max(axis=0)
        count[c] = A.shape[0]
    return AggregateReport(configs, np.arange(length), mean, lo, hi, count)


def experiment_configs(which):
    if which in (1, 2):
        return ["asgard_0.1beta*", "asgard_beta*", "asgard_10beta*",
                "nesterov_0.1gamma*", "nesterov_gamma*", "nesterov_10gamma*"]
    if which in (3, 4):
        return ["asgard_case1_beta*", "asgard_case2"]
    raise UsageError("experiment must be 1, 2, 3 or 4")


@dataclass
class InstanceResult:
    index: int
    seed: int
    F_ref: float
    certified: bool
    ref_gap: float
    opnorm: float
    dist0: float
    beta_star: float
    gamma_star: float
    primal: Dict[str, np.ndarray]


def _cache_key(spec, budget):
    lam = "%.17g" % spec.lam_value
    parts = (spec.p, spec.n, spec.s, "%.17g" % spec.sigma, int(spec.correlated), "%.17g" % spec.rho,
             lam, spec.seed, budget)
    digest = hashlib.sha1(repr(parts).encode()).hexdigest()[:12]
    return "inst_p%d_n%d_seed%d_%s" % (spec.p, spec.n, spec.seed, digest)


def prepare_instance(spec, budget=REFERENCE_BUDGET, cache_dir=None):
    """Generate an instance and its reference, reusing a cached bundle when present."""
    path = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, _cache_key(spec, budget))
        if os.path.exists(os.path.join(path, "meta.txt")):
            return read_bundle(path)
    bundle = generate(spec)
    reference_solve(bundle, budget)
    if path is not None:
        write_bundle(path, bundle)
    return bundle


def _instance_task(args):
    which, spec, k_max, budget, index, cache_dir = args
    bundle = prepare_instance(spec, budget, cache_dir)
    prob = make_problem(bundle)
    x0 = np.zeros(prob.p)
    dist0 = float(np.linalg.norm(x0 - bundle.x_ref))
    # x_ref = x^0 happens when lam is large enough that 0 is optimal
    d = max(dist0, DIST_FLOOR)
    bs = beta_star(prob.opnorm, d)
    gs = gamma_star(prob.opnorm, d, k_max)
    curves = {}
    if which in (1, 2):
        for tag, m in (("0.1", 0.1), ("", 1.0), ("10", 10.0)):
            rec = run(prob, x0, beta0=m * bs, k_max=k_max, trace_level="primal")
            curves["asgard_%sbeta*" % tag] = rec.primal_values
            rb = run_baseline(prob, BaselineConfig(m * gs, k_max, x0), trace_level="primal")
            curves["nesterov_%sgamma*" % tag] = rb.primal_values
    else:
        rec = run(prob.general_convex(), x0, beta0=bs, k_max=k_max, trace_level="primal")
        curves["asgard_case1_beta*"] = rec.primal_values
        rec = run(prob, x0, beta0=case2_beta0(prob.opnorm, bundle.rho), k_max=k_max,
                  trace_level="primal")
        curves["asgard_case2"] = rec.primal_values
    return InstanceResult(index, spec.seed, bundle.F_ref, bool(bundle.certified), bundle.ref_gap,
                          prob.opnorm, dist0, bs, gs, curves)


@dataclass
class ExperimentResult:
    which: int
    configs: List[str]
    instances: List[InstanceResult]
    excluded: List[int]
    residuals: Dict[str, List[np.ndarray]]
    report: AggregateReport

    def final_residuals(self, config, k=None):
        return np.array([r[-1 if k is None else k] for r in self.residuals[config]])

    def write_instances_csv(self, path):
        with open(path, "w") as fh:
            fh.write("index,seed,F_ref,certified,ref_gap,opnorm,dist0,beta_star,gamma_star\n")
            for r in self.instances:
                fh.write("%d,%d,%r,%d,%r,%r,%r,%r,%r\n" % (r.index, r.seed, r.F_ref, int(r.certified),
                                                          r.ref_gap, r.opnorm, r.dist0,
                                                          r.beta_star, r.gamma_star))


def _workers(requested):
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("ASGARD_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError("ASGARD_THREADS must be an integer")
    return 1


def run_experiment(which, num_instances=None, profile="desk", k_max=None, base_seed=0,
                   budget=REFERENCE_BUDGET, workers=None, cache_dir=None, **overrides):
    """Run experiment `which` on `num_instances` generated instances.

    Instance ``i`` uses seed ``base_seed + i``. `overrides` may set any
    `InstanceSpec` field (``p``, ``n``, ``s``, ``sigma``, ``correlated``,
    ``rho``, ``lam``). Reference values are folded with every iterate of
    the experiment's own runs so residuals are nonnegative. Instances whose
    reference is not certified are excluded and listed in ``excluded``.
    With `cache_dir`, instance bundles and their references are stored
    there and reused by later calls.
    """
    configs = experiment_configs(which)
    if profile not in PROFILES:
        raise UsageError("unknown profile %r" % profile)
    prof = PROFILES[profile]
    num_instances = prof["instances"] if num_instances is None else int(num_instances)
    k_max = prof["k_max"] if k_max is None else int(k_max)
    if num_instances < 1 or k_max < 1:
        raise UsageError("need at least one instance and k_max >= 1")
    fields_ = dict(p=prof["p"], n=prof["n"], s=prof["s"], **EXPERIMENTS[which])
    fields_.update(overrides)
    base = InstanceSpec(**fields_)
    tasks = [(which, replace(base, seed=base_seed + i), k_max, budget, i, cache_dir)
             for i in range(num_instances)]
    nw = min(_workers(workers), num_instances)
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            results = list(ex.map(_instance_task, tasks))
    else:
        results = [_instance_task(t) for t in tasks]
    results.sort(key=lambda r: r.index)
    residuals = {c: [] for c in configs}
    excluded = []
    for r in results:
        if not r.certified:
            excluded.append(r.index)
            continue
        F_ref = min(r.F_ref, min(float(np.min(v)) for v in r.primal.values()))
        r.F_ref = F_ref
        scale = max(1.0, abs(F_ref))
        for c in configs:
            residuals[c].append((r.primal[c] - F_ref) / scale)
    if not any(residuals.values()) or all(len(v) == 0 for v in residuals.values()):
        raise UsageError("no instance had a certified reference")
    return ExperimentResult(which, configs, results, excluded, residuals, aggregate(residuals))

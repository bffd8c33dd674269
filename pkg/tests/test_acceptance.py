"""Acceptance criteria 1-7, each reported as one PASS/FAIL line.

Every test asserts its criterion at the stated tolerance. The desk
experiment test runs first so its timing includes the reference solves;
the rate-bound tests then reuse the cached instances.
"""

import math
import os
import time

import numpy as np
import pytest

from asgard import diagnostics as diag
from asgard.diagnostics import BoundSpec, theorem_bound
from asgard.experiments import (DIST_FLOOR, EXPERIMENTS, PROFILES, InstanceSpec, beta_star, case2_beta0,
                                generate, make_problem, prepare_instance, reference_solve,
                                run_experiment)
from asgard.linops import LinearMap
from asgard.problem import SaddleProblem
from asgard.proxlib import box_indicator, elastic_net, l2dist_conjugate, quadratic_conjugate
from asgard.solver import run
from asgard.verify import run_verification

from conftest import record_criterion
from test_proxlib import catalog, draws, perturbation_gap

DESK = PROFILES["desk"]
SLOPE_WINDOW = (100, 2000)


def desk_spec(which, seed):
    return InstanceSpec(p=DESK["p"], n=DESK["n"], s=DESK["s"], seed=seed, **EXPERIMENTS[which])


def folded_residual(bundle, *curves):
    """``F(x^k) - F_ref`` with the reference lowered to the best value seen anywhere."""
    F_ref = min([bundle.F_ref] + [float(np.min(c)) for c in curves])
    return [c - F_ref for c in curves], F_ref


def loglog_slope(r, F_ref, window=SLOPE_WINDOW):
    """Least-squares slope of ``log r_k`` against ``log k``.

    Points at or below the resolution floor ``1e-12 max(1, |F_ref|)`` are
    dropped; if fewer than ten points remain the residual has already
    vanished and the slope is reported as ``-inf``.
    """
    k = np.arange(window[0], window[1] + 1)
    rk = r[k]
    keep = rk > 1e-12 * max(1.0, abs(F_ref))
    if keep.sum() < 10:
        return -math.inf
    return float(np.polyfit(np.log(k[keep]), np.log(rk[keep]), 1)[0])


def worst_ratio(residual, bound):
    """Largest ``residual_k / bound_k`` over ``k >= 1``."""
    return float(np.max(residual[1:] / bound[1:]))


# criterion 6 (desk profile) --------------------------------------------------------------------

def test_criterion6_experiment_orderings(cache_dir):
    fresh = not os.listdir(cache_dir)
    t0 = time.perf_counter()
    res = {w: run_experiment(w, profile="desk", cache_dir=cache_dir) for w in (1, 2, 3, 4)}
    elapsed = time.perf_counter() - t0

    def med(w, c, k=None):
        return float(np.median(res[w].final_residuals(c, k)))

    fails = []
    for w in (1, 2):
        if not med(w, "asgard_beta*") <= med(w, "nesterov_gamma*"):
            fails.append("(a) exp%d" % w)
        for big, star in (("asgard_10beta*", "asgard_beta*"), ("nesterov_10gamma*", "nesterov_gamma*")):
            lead = med(w, big, 50) < med(w, star, 50)
            trail = med(w, big) > med(w, star)
            if not (lead and trail):
                fails.append("(b) exp%d %s lead@50=%s trail@end=%s" % (w, big, lead, trail))
    for w in (3, 4):
        if not med(w, "asgard_case1_beta*") >= 10 * med(w, "asgard_case2"):
            fails.append("(c) exp%d" % w)
    if elapsed > 300:
        fails.append("time %.0fs > 300s" % elapsed)
    summary = "; ".join(
        "exp%d %s" % (w, " ".join("%s=%.2e" % (c, med(w, c)) for c in res[w].configs)) for w in res)
    detail = "desk %.0fs (%s references); %s; medians: %s" % (
        elapsed, "fresh" if fresh else "cached", "; ".join(fails) if fails else "all orderings hold", summary)
    record_criterion("6-desk", not fails, detail)
    assert not fails, detail


@pytest.mark.skipif(os.environ.get("ASGARD_PAPER") != "1", reason="paper profile needs ASGARD_PAPER=1")
def test_criterion6_paper_profile(cache_dir):
    t0 = time.perf_counter()
    res = {w: run_experiment(w, profile="paper", cache_dir=cache_dir) for w in (1, 2, 3, 4)}
    elapsed = time.perf_counter() - t0

    def med(w, c, k=None):
        return float(np.median(res[w].final_residuals(c, k)))

    fails = []
    for w in (1, 2):
        if not med(w, "asgard_beta*") <= med(w, "nesterov_gamma*"):
            fails.append("(a) exp%d" % w)
        for big, star in (("asgard_10beta*", "asgard_beta*"), ("nesterov_10gamma*", "nesterov_gamma*")):
            if not (med(w, big, 50) < med(w, star, 50) and med(w, big) > med(w, star)):
                fails.append("(b) exp%d %s" % (w, big))
    for w in (3, 4):
        if not med(w, "asgard_case1_beta*") >= 10 * med(w, "asgard_case2"):
            fails.append("(c) exp%d" % w)
    if elapsed > 7200:
        fails.append("time %.0fs > 7200s" % elapsed)
    detail = "paper %.0fs; %s" % (elapsed, "; ".join(fails) if fails else "all orderings hold")
    record_criterion("6-paper", not fails, detail)
    assert not fails, detail


# criterion 1 -----------------------------------------------------------------------------------

def test_criterion1_case1_primal_bound(cache_dir):
    worst, slowest, fails = 0.0, 0.0, []
    for seed in range(DESK["instances"]):
        t0 = time.perf_counter()
        bundle = prepare_instance(desk_spec(1, seed), cache_dir=cache_dir)
        prob = make_problem(bundle)
        x0 = np.zeros(prob.p)
        d = max(float(np.linalg.norm(x0 - bundle.x_ref)), DIST_FLOOR)
        b0 = beta_star(prob.opnorm, d)
        F = run(prob, x0, beta0=b0, k_max=DESK["k_max"], trace_level="primal").primal_values
        slowest = max(slowest, time.perf_counter() - t0)
        (r,), _ = folded_residual(bundle, F)
        spec = BoundSpec(case=1, beta0=b0, opnorm=prob.opnorm, dist_x0=d, M_g=1.0)
        k = np.arange(len(F))
        bound = np.r_[np.inf, [theorem_bound(spec, int(j)) for j in k[1:]]]
        ratio = worst_ratio(r, bound)
        worst = max(worst, ratio)
        if ratio > 1.05:
            fails.append("seed %d ratio %.3g" % (seed, ratio))
    # the cached bundles hide the reference cost, so one reference is solved afresh and added
    t0 = time.perf_counter()
    reference_solve(generate(desk_spec(1, 0)))
    t_ref = time.perf_counter() - t0
    if slowest + t_ref > 60:
        fails.append("instance time %.0fs" % (slowest + t_ref))
    detail = "max residual/bound %.3g (limit 1.05), per instance %.1fs solve + %.1fs reference%s" % (
        worst, slowest, t_ref, "; " + "; ".join(fails) if fails else "")
    record_criterion(1, not fails, detail)
    assert not fails, detail


# criterion 2 -----------------------------------------------------------------------------------

def test_criterion2_case2_bound_and_slopes(cache_dir):
    worst, s2, s1, fails = 0.0, [], [], []
    for seed in range(DESK["instances"]):
        bundle = prepare_instance(desk_spec(3, seed), cache_dir=cache_dir)
        prob = make_problem(bundle)
        x0 = np.zeros(prob.p)
        d = max(float(np.linalg.norm(x0 - bundle.x_ref)), DIST_FLOOR)
        b2 = case2_beta0(prob.opnorm, bundle.rho)
        F2 = run(prob, x0, beta0=b2, k_max=DESK["k_max"], trace_level="primal").primal_values
        F1 = run(prob.general_convex(), x0, beta0=beta_star(prob.opnorm, d), k_max=DESK["k_max"],
                 trace_level="primal").primal_values
        (r2, r1), F_ref = folded_residual(bundle, F2, F1)
        spec = BoundSpec(case=2, beta0=b2, opnorm=prob.opnorm, dist_x0=d, M_g=1.0)
        bound = np.r_[np.inf, [theorem_bound(spec, k) for k in range(1, len(F2))]]
        ratio = worst_ratio(r2, bound)
        worst = max(worst, ratio)
        if ratio > 1.01:
            fails.append("seed %d bound ratio %.3g" % (seed, ratio))
        s2.append(loglog_slope(r2, F_ref))
        s1.append(loglog_slope(r1, F_ref))
    m2, m1 = float(np.median(s2)), float(np.median(s1))
    if not m2 <= -1.5:
        fails.append("case 2 median slope %.2f > -1.5" % m2)
    if not -1.4 <= m1 <= -0.6:
        fails.append("case 1 median slope %.2f outside [-1.4, -0.6]" % m1)
    detail = ("max residual/bound %.3g (limit 1.01); median slope case 2 %.2f, case 1 %.2f "
              "(case 1 range %.2f..%.2f)%s" % (worst, m2, m1, min(s1), max(s1),
                                             "; " + "; ".join(fails) if fails else ""))
    record_criterion(2, not fails, detail)
    assert not fails, detail


# criterion 3 -----------------------------------------------------------------------------------

class _MaxGrad:
    """Largest ``||grad g(K x^k)||`` seen, a Lipschitz constant of g along the run."""

    def __init__(self, b):
        self.b = b
        self.value = 0.0

    def __call__(self, row, state):
        self.value = max(self.value, float(np.linalg.norm(state.Kx - self.b)))


def test_criterion3_case3_linear_rate():
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.MT19937(3))
    p = n = 50
    K = LinearMap(rng.standard_normal((n, p)))
    b = rng.standard_normal(n)
    prob = SaddleProblem(elastic_net(0.1, 0.1), quadratic_conjugate(b), K)
    reg = prob.regime
    assert reg.case == 3 and reg.mu_f == 0.1 and reg.mu_gstar == 1.0
    tau = reg.tau_const
    assert tau == pytest.approx(1 / math.sqrt(1 + prob.opnorm ** 2 / 0.1), rel=1e-12)
    x0 = np.zeros(p)
    ref_track = _MaxGrad(b)
    ref = run(prob, x0, beta0=1.0, k_max=20000, trace_level="primal", observer=ref_track)
    track = _MaxGrad(b)
    F = run(prob, x0, beta0=1.0, k_max=500, trace_level="primal", observer=track).primal_values
    i_ref = int(np.argmin(ref.primal_values))
    F_ref = min(float(ref.primal_values[i_ref]), float(F.min()))
    x_ref = ref.final.x
    r = F - F_ref
    consts = diag.case3_constants(prob, 1.0, tau, x0, np.zeros(n), x_ref=x_ref)
    # g is not globally Lipschitz; its Lipschitz constant on the iterates and the minimizer stands in
    M_g = max(track.value, ref_track.value)
    spec = BoundSpec(case=3, beta0=1.0, opnorm=prob.opnorm, tau=tau, R_p_star=consts["R_p_star"], M_g=M_g)
    bound = np.r_[np.inf, [theorem_bound(spec, k) for k in range(1, 501)]]
    ratio = worst_ratio(r, bound)
    factor = (r[500] / r[50]) ** (1 / 450)
    elapsed = time.perf_counter() - t0
    passed = ratio <= 1.01 and factor <= 1 - tau / 2 and elapsed <= 5
    detail = "max residual/bound %.3g (limit 1.01), contraction %.5f vs 1 - tau/2 = %.5f, %.1fs" % (
        ratio, factor, 1 - tau / 2, elapsed)
    record_criterion(3, passed, detail)
    assert passed, detail


# criterion 4 -----------------------------------------------------------------------------------

def box_ball(seed, rho):
    rng = np.random.Generator(np.random.MT19937(seed))
    p = n = 20
    A = rng.standard_normal((n, p))
    b = 3 * rng.standard_normal(n)
    return SaddleProblem(box_indicator(1.0, dim=p, rho=rho), l2dist_conjugate(b), LinearMap(A)), A, b


def box_ball_solution(A, b, rho):
    """Primal and dual solutions of ``min ||Kx - b|| + rho/2 ||x||^2`` over the unit box.

    Computed by scipy, independently of the solver: bounded least squares
    for ``rho = 0`` and L-BFGS-B otherwise. The residual is nonzero, so the
    dual solution is the unit vector ``(Kx* - b) / ||Kx* - b||``.
    """
    from scipy.optimize import lsq_linear, minimize

    if rho == 0:
        x = lsq_linear(A, b, bounds=(-1.0, 1.0), method="bvls", tol=1e-15).x
    else:
        def fun(x):
            r = A @ x - b
            nr = np.linalg.norm(r)
            return nr + 0.5 * rho * x @ x, A.T @ r / nr + rho * x

        x = minimize(fun, np.zeros(A.shape[1]), jac=True, method="L-BFGS-B", bounds=[(-1, 1)] * A.shape[1],
                     options=dict(ftol=1e-16, gtol=1e-13, maxiter=10000)).x
    r = A @ x - b
    return x, r / np.linalg.norm(r)


def test_criterion4_dual_and_gap_bounds():
    fails, worst = [], {"dual": 0.0, "gap": 0.0}
    for case, rho in ((1, 0.0), (2, 0.5)):
        for seed in range(3):
            prob, A, b = box_ball(seed, rho)
            assert prob.regime.case == case
            p = prob.p
            b0 = 1.0 if case == 1 else case2_beta0(prob.opnorm, rho)
            x_ref, y_ref = box_ball_solution(A, b, rho)
            F_ref, D_ref = diag.primal_value(prob, x_ref), diag.dual_value(prob, y_ref)
            assert F_ref + D_ref <= 1e-9 * max(1.0, abs(F_ref))
            rec = run(prob, np.zeros(p), beta0=b0, k_max=1000)
            D = rec.dual_values
            gap = rec.column("gap_cert")
            kw = dict(case=case, beta0=b0, opnorm=prob.opnorm)
            sd = BoundSpec(M_fstar=prob.f.conj_lipschitz, dist_ycenter=float(np.linalg.norm(y_ref)), **kw)
            sg = BoundSpec(sup_x_dist2=float(p), sup_y_dist2=1.0, **kw)
            for name, resid, spec in (("dual", D - D_ref, sd), ("gap", gap, sg)):
                bound = np.r_[np.inf, [theorem_bound(spec, k, name) for k in range(1, len(D))]]
                ratio = worst_ratio(resid, bound)
                worst[name] = max(worst[name], ratio)
                if ratio > 1.05:
                    fails.append("case %d seed %d %s ratio %.3g" % (case, seed, name, ratio))
    detail = "max dual residual/bound %.3g, max gap/bound %.3g (limit 1.05)%s" % (
        worst["dual"], worst["gap"], "; " + "; ".join(fails) if fails else "")
    record_criterion(4, not fails, detail)
    assert not fails, detail


# criterion 5 -----------------------------------------------------------------------------------

def test_criterion5_invariant_suite():
    rep = run_verification()
    tampered = run_verification(tau_factor=1.05)
    illegal = run_verification(illegal_beta0=True)
    total = sum(rep.counts.values())
    passed = rep.ok and not tampered.ok and not illegal.ok
    detail = "%d checks, %d violations; tampered tau %d violations, illegal beta0 %d violations" % (
        total, len(rep.violations), len(tampered.violations), len(illegal.violations))
    record_criterion(5, passed, detail)
    assert passed, detail


# criterion 7 -----------------------------------------------------------------------------------

def test_criterion7_prox_oracles():
    rng = np.random.default_rng(77)
    fails, count = [], 0
    for h in catalog():
        for v, gamma in draws(rng):
            p = h.prox(v, gamma)
            gap, scale = perturbation_gap(h, p, v, gamma)
            recon = p + gamma * h.conj_prox(v / gamma, 1.0 / gamma)
            ok = gap >= -1e-12 * (1 + scale) and np.allclose(recon, v, rtol=0, atol=1e-10 * (1 + np.abs(v).max()))
            count += 1
            if not ok:
                fails.append(h.name)
    detail = "%d entries x 200 draws, %d failures%s" % (
        len(catalog()), len(fails), " (%s)" % ", ".join(sorted(set(fails))) if fails else "")
    record_criterion(7, not fails, detail)
    assert not fails, detail

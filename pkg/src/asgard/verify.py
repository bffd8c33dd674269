"""Invariant suite: schedule conditions, smoothing properties and per-run inequalities.

Every check is an inequality ``measured <= bound`` recorded as a
`diagnostics.Check`. Two negative controls can be switched on: inflating
every tau by a factor and running the strongly convex primal schedule with a
``beta0`` far below its admissible range.
"""

import math

import numpy as np

from . import diagnostics as diag
from .linops import LinearMap
from .problem import SaddleProblem
from .proxlib import box_indicator, elastic_net, l2dist_conjugate, quadratic_conjugate
from .schedule import CASE2_BETA_FACTOR, Regime, Schedule, check_param_cond, next_tau, omega_window
from .smoothing import SmoothedG, smoothed_grad, smoothed_value
from .solver import run, step, init

__all__ = ["run_verification", "schedule_checks", "sandwich_checks", "smoothing_checks",
           "run_checks", "one_iteration_checks", "toy_problems", "tampered_rule"]

Check = diag.Check
_leq = diag._leq


def tampered_rule(regime, factor):
    """tau rule that inflates the regime's update by `factor` (capped at 1)."""
    return lambda t: min(1.0, factor * next_tau(regime, t))


def _regimes(opnorm=2.0, mu_f=0.1, mu_g=1.0):
    return [
        ("case1", Regime.general_convex(), 1.0),
        ("case2", Regime.strongly_convex_primal(mu_f), CASE2_BETA_FACTOR * opnorm ** 2 / mu_f),
        ("case3", Regime.strongly_convex_both(mu_f, mu_g, opnorm), 1.0),
    ]


def schedule_checks(horizon=10000, tau_factor=None, opnorm=2.0):
    """Step-size conditions at every index and the momentum window from ``k = 2``.

    An inflated tau makes beta decay geometrically, so tampered schedules
    are only followed for 500 indices (violations show up within a few).
    """
    out = []
    if tau_factor:
        horizon = min(horizon, 500)
    for name, reg, beta0 in _regimes(opnorm):
        rule = tampered_rule(reg, tau_factor) if tau_factor else None
        sch = Schedule(reg, beta0, opnorm, tau_rule=rule)
        for st in sch.states(horizon):
            c = check_param_cond(st, reg)
            out.append(_leq(c.index, "eq13_cond1[%s]" % name, -c.slack1, 0.0, 1e-12 * c.scale1))
            out.append(_leq(c.index, "eq13_cond2[%s]" % name, -c.slack2, 0.0, 1e-12 * c.scale2))
            if st.tau_k < 1.0:
                lo, hi = omega_window(st)
                out.append(_leq(c.index, "window_nonempty[%s]" % name, lo, hi, 1e-12 * abs(hi)))
                inv = 1.0 / st.eta_next
                err = abs(inv - hi)
                out.append(_leq(c.index, "inv_eta_at_upper[%s]" % name, err, 0.0, 1e-10 * abs(hi)))
    return out


def sandwich_checks(horizon=100000, opnorm=2.0, mu_f=0.1):
    """tau and beta sandwiches for the general and strongly convex primal schedules."""
    out = []
    rtol = 1e-12
    b0 = 1.0
    st1 = Schedule(Regime.general_convex(), b0, opnorm).states(horizon + 1)
    for s in st1:
        k = s.k
        out.append(_leq(k, "tau_lower[case1]", 1.0 / (k + 1), s.tau_k, rtol / (k + 1)))
        out.append(_leq(k, "tau_upper[case1]", s.tau_k, 2.0 / (k + 2), rtol / (k + 2)))
        out.append(_leq(k, "beta_upper[case1]", s.beta_k, 2.0 * b0 / (k + 2), rtol * b0 / (k + 2)))
    reg = Regime.strongly_convex_primal(mu_f)
    b0 = CASE2_BETA_FACTOR * opnorm ** 2 / mu_f
    st = Schedule(reg, b0, opnorm).states(horizon + 3)
    tau = np.array([s.tau_k for s in st])
    beta = np.array([s.beta_k for s in st])
    t0, t1, t2 = tau[0], tau[1], tau[2]
    theta = 1.0
    for k in range(1, horizon + 1):
        tk, tp = tau[k], tau[k - 1]
        out.append(_leq(k, "tau_recursion[case2]", abs(tk * tk - (1 - tk) * tp * tp), 0.0, 1e-12 * tk * tk))
        out.append(_leq(k, "tau_lower[case2]", 1.0 / (k + 1.0 / t0), tk, rtol * tk))
        # strict upper bound: measured must stay below, no slack allowed
        out.append(_leq(k, "tau_upper_strict[case2]", tk, math.nextafter(2.0 / (k + 2.0 / t0), 0.0), 0.0))
        if k >= 2:
            out.append(_leq(k, "one_minus_tau_lower[case2]", 1.0 / (1.0 + tau[k - 2]), 1.0 - tk, rtol))
            out.append(_leq(k, "one_minus_tau_upper[case2]", 1.0 - tk, 1.0 / (1.0 + tp), rtol))
        theta *= 1.0 - tk
        out.append(_leq(k, "theta_product[case2]", abs(theta - tk * tk / (t0 * t0)), 0.0,
                        1e-9 * theta))
    for k in range(horizon):
        bk = beta[k]
        lo1 = b0 * t0 * t0 / (t1 * t1 * (t0 * (k + 1) + 1.0) ** 2)
        lo2 = b0 * tau[k + 1] ** 2 / (t1 * t1)
        hi1 = b0 * tau[k + 2] ** 2 / (t2 * t2)
        hi2 = 4.0 * b0 * t0 * t0 / (t2 * t2 * (t0 * (k + 2) + 2.0) ** 2)
        out.append(_leq(k, "beta_chain_lo1[case2]", lo1, lo2, rtol * lo2))
        out.append(_leq(k, "beta_chain_lo2[case2]", lo2, bk, rtol * bk))
        out.append(_leq(k, "beta_chain_hi1[case2]", bk, hi1, rtol * hi1))
        out.append(_leq(k, "beta_chain_hi2[case2]", hi1, hi2, rtol * hi2))
    return out


def _ball_point(rng, n, radius=1.0):
    v = rng.standard_normal(n)
    return radius * v / np.linalg.norm(v) * rng.uniform() ** (1.0 / n)


def smoothing_checks(draws=200, seed=7):
    """Smoothing sandwich, gradient Lipschitz bound, monotonicity in beta and the key bound."""
    rng = np.random.default_rng(seed)
    out = []
    n = 6
    for t in range(draws):
        which = t % 2
        b = rng.standard_normal(n)
        yc = 0.5 * _ball_point(rng, n)
        if which == 0:
            gs = l2dist_conjugate(b)
            g = gs.conj_value
            # sup of ||y - ydot||^2 over the unit ball
            Dg2 = (1.0 + np.linalg.norm(yc)) ** 2
            label = "l2"
        else:
            gs = quadratic_conjugate(b)
            g = gs.conj_value
            Dg2 = None
            label = "quad"
        beta = 10.0 ** rng.uniform(-3, 1)
        s = SmoothedG(gs, beta, yc)
        u = 3.0 * rng.standard_normal(n)
        v = 3.0 * rng.standard_normal(n)
        gb = smoothed_value(s, u)
        tol = 1e-10 * max(1.0, abs(gb))
        out.append(_leq(t, "smooth_below[%s]" % label, gb, g(u), tol))
        if Dg2 is not None:
            out.append(_leq(t, "smooth_sandwich[%s]" % label, g(u), gb + 0.5 * beta * Dg2, tol))
        else:
            yu = gs.conj_argmax(u)
            dy = yu - yc
            out.append(_leq(t, "smooth_sandwich[%s]" % label, g(u), gb + 0.5 * beta * float(dy @ dy), tol))
        gu, gv = smoothed_grad(s, u), smoothed_grad(s, v)
        L = 1.0 / (beta + gs.mu)
        out.append(_leq(t, "grad_lipschitz[%s]" % label, np.linalg.norm(gu - gv),
                        L * np.linalg.norm(u - v), 1e-10 * max(1.0, L * np.linalg.norm(u - v))))
        bh = beta * (1.0 + 10.0 * rng.uniform())
        sh = SmoothedG(gs, bh, yc)
        gbh = smoothed_value(sh, u)
        d = gu - yc
        out.append(_leq(t, "beta_monotone[%s]" % label, gbh, gb, tol))
        out.append(_leq(t, "beta_change[%s]" % label, gb, gbh + 0.5 * (bh - beta) * float(d @ d), tol))
        lhs = smoothed_value(s, v) + float(gv @ (u - v))
        rhs = gb - 0.5 * (beta + gs.mu) * float((gv - gu) @ (gv - gu))
        out.append(_leq(t, "key_bound[%s]" % label, lhs, rhs, 1e-9 * max(1.0, abs(rhs))))
    return out


def toy_problems(seed=11):
    """Small certified problems for the run checks, one per regime and domain type."""
    rng = np.random.default_rng(seed)
    probs = []
    n, p = 12, 24
    K = rng.standard_normal((n, p))
    xs = np.zeros(p)
    xs[rng.choice(p, 4, replace=False)] = rng.standard_normal(4)
    b = K @ xs + 0.1 * rng.standard_normal(n)
    L = LinearMap(K)
    probs.append(("lasso_case1", SaddleProblem(elastic_net(0.5), l2dist_conjugate(b), L)))
    probs.append(("lasso_case2", SaddleProblem(elastic_net(0.5, 0.1), l2dist_conjugate(b), L)))
    probs.append(("quad_case3", SaddleProblem(elastic_net(0.5, 0.1), quadratic_conjugate(b), L)))
    Kb = rng.standard_normal((10, 10))
    bb = 3.0 * rng.standard_normal(10)
    Lb = LinearMap(Kb)
    probs.append(("box_case1", SaddleProblem(box_indicator(1.0, dim=10), l2dist_conjugate(bb), Lb)))
    probs.append(("box_case2", SaddleProblem(box_indicator(1.0, dim=10, rho=0.5), l2dist_conjugate(bb), Lb)))
    return probs


def _beta0_for(problem):
    if problem.regime.case == 2:
        return CASE2_BETA_FACTOR * problem.opnorm ** 2 / problem.regime.mu_f
    return problem.opnorm


def run_checks(k_max=300, seed=3, tau_factor=None, illegal_beta0=False):
    """Contraction, weak duality and the saddle-function inequalities along real runs."""
    rng = np.random.default_rng(seed)
    out = []
    runs = []
    for name, prob in toy_problems():
        rule = tampered_rule(prob.regime, tau_factor) if tau_factor else None
        b0 = _beta0_for(prob)
        # a tampered schedule fails the init check by design; run it anyway
        runs.append((name, prob, b0, rule, rule is None))
    if illegal_beta0:
        name, prob = toy_problems()[1]
        runs.append(("illegal_beta0", prob, 1e-3 * _beta0_for(prob), None, False))
    for name, prob, b0, rule, validate in runs:
        x0 = np.zeros(prob.p)
        ref = run(prob, x0, beta0=_beta0_for(prob), k_max=20 * k_max, trace_level="primal")
        x_ref = ref.final.x
        rec = run(prob, x0, beta0=b0, k_max=k_max, keep_iterates=True, validate=validate, tau_rule=rule)
        anchors = [x_ref, prob.f.prox(rng.standard_normal(prob.p), 1.0)]
        for a in anchors:
            out.extend(diag.check_contraction(prob, rec, a, label="contraction[%s]" % name))
        for r in rec.trace:
            if math.isfinite(r.gap_cert):
                out.append(_leq(r.k, "weak_duality[%s]" % name, 0.0, r.gap_cert, 1e-9))
        for st in rec.states[1::max(1, k_max // 10)]:
            beta = st.schedule.beta_prev
            for _ in range(10):
                y = _ball_point(rng, prob.n, 1.0) if prob.gstar.mu == 0 else 3 * rng.standard_normal(prob.n)
                s = diag.smoothing_primal_slack(prob, st.x, y, beta)
                out.append(_leq(st.k, "smoothing_primal[%s]" % name, s, 0.0, 1e-9))
            if prob.f.conj_argmax is not None and prob.f.conj_value is not None:
                y_ref = ref.final.ytilde
                s = diag.smoothing_dual_slack(prob, st.x, st.ytilde, y_ref, beta)
                scale = max(1.0, abs(diag.dual_value(prob, st.ytilde)))
                out.append(_leq(st.k, "smoothing_dual[%s]" % name, s, 0.0, 1e-8 * scale))
    return out


def one_iteration_checks(instances=50, seed=5):
    """One-step estimate at random test points on random small problems."""
    rng = np.random.default_rng(seed)
    out = []
    for t in range(instances):
        p, n = rng.integers(1, 6), rng.integers(1, 6)
        K = LinearMap(rng.standard_normal((n, p)))
        b = rng.standard_normal(n)
        kind = t % 4
        if kind == 0:
            prob = SaddleProblem(elastic_net(0.3), l2dist_conjugate(b), K)
        elif kind == 1:
            prob = SaddleProblem(elastic_net(0.3, 0.2), l2dist_conjugate(b), K)
        elif kind == 2:
            prob = SaddleProblem(elastic_net(0.3, 0.2), quadratic_conjugate(b), K)
        else:
            prob = SaddleProblem(box_indicator(1.0, dim=p), l2dist_conjugate(b), K)
        b0 = _beta0_for(prob)
        x0 = prob.f.prox(rng.standard_normal(p), 1.0)
        st = init(prob, x0, beta0=b0)
        steps = int(rng.integers(1, 30))
        for _ in range(steps):
            nxt = step(st, prob)
            tests = [prob.f.prox(2 * rng.standard_normal(p), 1.0) for _ in range(2)] + [nxt.x]
            for x in tests:
                s, scale = diag.check_one_iteration(prob, st, nxt, x)
                out.append(_leq(st.k, "one_iteration", s, 0.0, 1e-8 * scale))
            st = nxt
    return out


def run_verification(tau_factor=None, illegal_beta0=False, horizon=100000, schedule_horizon=10000,
                     k_max=300):
    """Run every check family and return a `VerificationReport`."""
    rep = diag.VerificationReport()
    rep.extend(schedule_checks(schedule_horizon, tau_factor))
    rep.extend(sandwich_checks(horizon))
    rep.extend(smoothing_checks())
    rep.extend(run_checks(k_max, tau_factor=tau_factor, illegal_beta0=illegal_beta0))
    rep.extend(one_iteration_checks())
    return rep

"""Objective values, certificates, the Lyapunov function and the rate bounds."""

import csv
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import CapabilityError, UsageError
from .smoothing import SmoothedG, smoothed_F, smoothed_grad

__all__ = [
    "primal_value", "dual_value", "gap_certificate", "lagrangian", "smoothed_objective",
    "lyapunov", "check_contraction", "check_one_iteration", "smoothing_primal_slack",
    "smoothing_dual_slack", "BoundSpec", "theorem_bound", "case3_constants", "Check",
    "VerificationReport",
]


def _dot(a, b):
    return float(np.dot(a, b))


def primal_value(problem, x, Kx=None):
    """``F(x) = f(x) + g(Kx)``."""
    fx = problem.f.value(x)
    if not math.isfinite(fx):
        return math.inf
    if Kx is None:
        Kx = problem.K.apply(x)
    return fx + problem.g_value(Kx)


def dual_value(problem, y, KTy=None):
    """``D(y) = f*(-K^T y) + g*(y)``; ``+inf`` when either term is infeasible."""
    if problem.f.conj_value is None:
        raise CapabilityError("dual value needs the conjugate of %s" % problem.f.name)
    gs = problem.gstar.value(y)
    if not math.isfinite(gs):
        return math.inf
    if KTy is None:
        KTy = problem.K.adjoint(y)
    return problem.f.conj_value(-KTy) + gs


def gap_certificate(problem, x, y, Kx=None, KTy=None):
    """``F(x) + D(y)``, the gap over the full domains; nonnegative by weak duality."""
    F = primal_value(problem, x, Kx)
    if not math.isfinite(F):
        return math.inf
    D = dual_value(problem, y, KTy)
    return F + D


def lagrangian(problem, x, y, Kx=None, fx=None):
    if fx is None:
        fx = problem.f.value(x)
    if Kx is None:
        Kx = problem.K.apply(x)
    return fx + _dot(Kx, y) - problem.gstar.value(y)


def smoothed_objective(problem, beta, x, Kx=None):
    """``F_beta(x, ydot)``."""
    return smoothed_F(problem, beta, x, Kx)


def lyapunov(problem, sched, x_k, x_prev, ytilde_k, anchor, Kx=None, K_anchor=None,
             f_anchor=None, F_smoothed=None):
    """Potential ``V_k(anchor)`` built from the index ``k - 1`` parameters of `sched`.

    ``V_k = F_{beta_{k-1}}(x^k) - L(anchor, ytilde^k)
    + (L_{k-1} + mu_f) tau_{k-1}^2 / 2 * ||(x^k - (1 - tau_{k-1}) x^{k-1}) / tau_{k-1} - anchor||^2``
    """
    if sched.k < 1:
        raise UsageError("the Lyapunov function is defined for k >= 1")
    if F_smoothed is None:
        F_smoothed = smoothed_objective(problem, sched.beta_prev, x_k, Kx)
    Lxy = lagrangian(problem, anchor, ytilde_k, Kx=K_anchor, fx=f_anchor)
    tp = sched.tau_prev
    d = (x_k - (1.0 - tp) * x_prev) / tp - anchor
    return F_smoothed - Lxy + 0.5 * (sched.L_prev + problem.regime.mu_f) * tp * tp * _dot(d, d)


class Check(NamedTuple):
    """One evaluated inequality ``measured <= bound`` (up to ``tol``)."""

    k: int
    quantity: str
    measured: float
    bound: float
    slack: float
    passed: bool


def _leq(k, quantity, measured, bound, tol):
    slack = bound - measured
    ok = math.isfinite(measured) and math.isfinite(bound) and slack >= -tol
    return Check(k, quantity, float(measured), float(bound), float(slack), bool(ok))


def check_contraction(problem, record, anchor, rtol=1e-8, label="contraction"):
    """``V_{k+1}(x) <= (1 - tau_k) V_k(x) + rtol * max(1, |V_k(x)|)`` along a run.

    Needs a record produced with ``keep_iterates=True``.
    """
    if record.states is None:
        raise UsageError("check_contraction needs a run recorded with keep_iterates=True")
    anchor = np.asarray(anchor, dtype=float)
    Ka = problem.K.apply(anchor)
    fa = problem.f.value(anchor)
    V = {}
    for st in record.states[1:]:
        V[st.k] = lyapunov(problem, st.schedule, st.x, st.x_prev, st.ytilde, anchor,
                           Kx=st.Kx, K_anchor=Ka, f_anchor=fa)
    out = []
    for st in record.states[1:-1]:
        k = st.k
        lhs = V[k + 1]
        rhs = (1.0 - st.schedule.tau_k) * V[k]
        out.append(_leq(k, label, lhs, rhs, rtol * max(1.0, abs(V[k]))))
    return out


def check_one_iteration(problem, before, after, x):
    """Return ``(lhs - rhs, scale)`` for the one-step estimate at test point ``x``.

    ``before`` is the state at ``k`` and ``after`` the state produced by one
    step from it; the smoothed gradient at ``K x^k`` is recomputed here.
    """
    sch = before.schedule
    tau, beta, beta_prev, L = sch.tau_k, sch.beta_k, sch.beta_prev, sch.L_k
    mu_f, mu_g = problem.regime.mu_f, problem.regime.mu_gstar
    K = problem.K
    x = np.asarray(x, dtype=float)
    xk, xh, x1, y1 = before.x, before.xhat, after.x, after.y
    lhs = smoothed_objective(problem, beta, x1)
    Fprev = smoothed_objective(problem, beta_prev, xk) if tau < 1.0 else 0.0
    grad_k = smoothed_grad(SmoothedG(problem.gstar, beta, problem.ycenter), K.apply(xk))
    u1 = (xh - (1.0 - tau) * xk) / tau - x
    u2 = (x1 - (1.0 - tau) * xk) / tau - x
    dK = K.apply(x1 - xh)
    gy = grad_k - problem.ycenter
    terms = [
        (1.0 - tau) * Fprev,
        tau * lagrangian(problem, x, y1),
        0.5 * L * tau * tau * _dot(u1, u1),
        -0.5 * mu_f * (1.0 - tau) * tau * _dot(x - xk, x - xk),
        -0.5 * tau * tau * (L + mu_f) * _dot(u2, u2),
        -0.5 * L * _dot(x1 - xh, x1 - xh),
        _dot(dK, dK) / (2.0 * (mu_g + beta)),
        -0.5 * (1.0 - tau) * (tau * beta - (beta_prev - beta)) * _dot(gy, gy),
    ]
    rhs = math.fsum(terms)
    scale = max(1.0, abs(lhs), *(abs(t) for t in terms))
    return lhs - rhs, scale


def smoothing_primal_slack(problem, x_bar, y, beta):
    """``L(xbar, y) - F_beta(xbar) - beta/2 ||y - ydot||^2`` (nonpositive)."""
    d = y - problem.ycenter
    return lagrangian(problem, x_bar, y) - smoothed_objective(problem, beta, x_bar) - 0.5 * beta * _dot(d, d)


def smoothing_dual_slack(problem, x_bar, ytilde, y_ref, beta):
    """Slack of ``D(ytilde) - D(y_ref) <= F_beta(xbar) - L(xtilde, ytilde) + beta/2 ||y_ref - ydot||^2``.

    ``xtilde`` is the conjugate argmax of ``f`` at ``-K^T ytilde``. Returns
    ``lhs - rhs`` (nonpositive).
    """
    xt = problem.f.argmax_conj(-problem.K.adjoint(ytilde))
    d = y_ref - problem.ycenter
    lhs = dual_value(problem, ytilde) - dual_value(problem, y_ref)
    rhs = smoothed_objective(problem, beta, x_bar) - lagrangian(problem, xt, ytilde) + 0.5 * beta * _dot(d, d)
    return lhs - rhs


@dataclass(frozen=True)
class BoundSpec:
    """Data entering the rate bounds.

    ``dist_x0`` stands for ``||x^0 - x*||``, ``dist_ycenter`` for
    ``||ydot - y*||``. ``sup_x_dist2`` and ``sup_y_dist2`` are
    ``sup_X ||x^0 - x||^2`` and ``sup_Y ||y - ydot||^2`` for the gap bound.
    ``R_p``, ``R_p_star`` and ``R_d_star`` are the constants of the
    doubly strongly convex case.
    """

    case: int
    beta0: float
    opnorm: float
    dist_x0: Optional[float] = None
    norm_x0: float = 0.0
    M_g: Optional[float] = None
    M_fstar: Optional[float] = None
    norm_ycenter: float = 0.0
    dist_ycenter: Optional[float] = None
    tau: Optional[float] = None
    sup_x_dist2: Optional[float] = None
    sup_y_dist2: Optional[float] = None
    R_p: Optional[float] = None
    R_p_star: Optional[float] = None
    R_d_star: Optional[float] = None

    def __post_init__(self):
        for name in ("dist_x0", "norm_x0", "norm_ycenter", "dist_ycenter", "sup_x_dist2", "sup_y_dist2"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise UsageError("%s must be nonnegative" % name)
        if self.case not in (1, 2, 3):
            raise UsageError("case must be 1, 2 or 3")


def _need(spec, *names):
    vals = []
    for n in names:
        v = getattr(spec, n)
        if v is None:
            raise CapabilityError("bound requires BoundSpec.%s" % n)
        vals.append(v)
    return vals


def theorem_bound(spec, k, which="primal"):
    """Value of the printed rate bound of kind ``gap``, ``primal`` or ``dual`` at ``k >= 1``."""
    if k < 1:
        raise UsageError("bounds are stated for k >= 1")
    if which not in ("gap", "primal", "dual"):
        raise UsageError("which must be gap, primal or dual")
    b0, K2 = spec.beta0, spec.opnorm ** 2
    if spec.case in (1, 2):
        if which == "gap":
            xs, ys = _need(spec, "sup_x_dist2", "sup_y_dist2")
        elif which == "primal":
            d, Mg = _need(spec, "dist_x0", "M_g")
            xs, ys = d * d, (spec.norm_ycenter + Mg) ** 2
        else:
            Mf, dy = _need(spec, "M_fstar", "dist_ycenter")
            xs, ys = (spec.norm_x0 + Mf) ** 2, dy * dy
        if spec.case == 1:
            return K2 * xs / (2.0 * b0 * k) + b0 * ys / (k + 1.0)
        return 2.0 * K2 * xs / (b0 * (k + 1.0) ** 2) + 10.0 * b0 * ys / (k + 3.0) ** 2
    (tau,) = _need(spec, "tau")
    lin = (1.0 - tau) ** k
    geo = 0.5 * b0 / (1.0 + tau) ** k
    if which == "gap":
        R, ys = _need(spec, "R_p", "sup_y_dist2")
        return lin * R + geo * ys
    if which == "primal":
        R, Mg = _need(spec, "R_p_star", "M_g")
        return lin * R + geo * (spec.norm_ycenter + Mg) ** 2
    R, dy = _need(spec, "R_d_star", "dist_ycenter")
    return lin * R + geo * dy * dy


def case3_constants(problem, beta0, tau, x0, ytilde0, x_ref=None, M_fstar=None, sup_x_dist2=None):
    """The constants ``R_p``, ``R_p*`` and ``R_d*`` of the linear-rate bounds.

    ``R_p`` (needs ``sup_x_dist2``) uses ``sup_X -L(x, ytilde^0) = D(ytilde^0)``
    to bound the supremum termwise.
    """
    Fb = smoothed_objective(problem, beta0, x0)
    c = problem.opnorm ** 2 * tau * tau / (2.0 * (problem.regime.mu_gstar + beta0))
    out = {}
    D0 = dual_value(problem, ytilde0) if problem.f.conj_value is not None else math.inf
    if x_ref is not None:
        d = x0 - x_ref
        out["R_p_star"] = (1.0 - tau) * (Fb - lagrangian(problem, x_ref, ytilde0)) + c * _dot(d, d)
    if M_fstar is not None:
        out["R_d_star"] = (1.0 - tau) * (Fb + D0) + c * (np.linalg.norm(x0) + M_fstar) ** 2
    if sup_x_dist2 is not None:
        out["R_p"] = (1.0 - tau) * (Fb + D0) + c * sup_x_dist2
    return out


class VerificationReport:
    """Collects `Check` rows; keeps every violation and the tightest row per quantity."""

    def __init__(self):
        self.counts = {}
        self.violations: List[Check] = []
        self.worst = {}

    def add(self, check):
        q = check.quantity
        self.counts[q] = self.counts.get(q, 0) + 1
        if not check.passed:
            self.violations.append(check)
        w = self.worst.get(q)
        if w is None or _rank(check) < _rank(w):
            self.worst[q] = check

    def extend(self, checks):
        for c in checks:
            self.add(c)

    @property
    def ok(self):
        return not self.violations

    def max_violation(self):
        if not self.violations:
            return None
        return min(self.violations, key=_rank)

    def rows(self):
        seen = set()
        out = []
        for c in list(self.worst.values()) + self.violations:
            key = (c.k, c.quantity, c.measured, c.bound)
            if key not in seen:
                seen.add(key)
                out.append(c)
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "quantity", "measured", "bound", "slack", "pass"])
            for c in self.rows():
                w.writerow([c.k, c.quantity, repr(c.measured), repr(c.bound), repr(c.slack),
                            "1" if c.passed else "0"])
            worst = self.max_violation()
            total = sum(self.counts.values())
            if worst is None:
                w.writerow(["#summary", "checks=%d" % total, "violations=0", "", "", "1"])
            else:
                w.writerow(["#summary", "checks=%d" % total, "violations=%d" % len(self.violations),
                            "worst=%s@k=%d" % (worst.quantity, worst.k), repr(worst.slack), "0"])


def _rank(c):
    if not c.passed:
        return (0, c.slack if math.isfinite(c.slack) else -math.inf)
    return (1, c.slack)

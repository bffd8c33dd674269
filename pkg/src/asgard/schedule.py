"""Parameter schedules for the three convexity regimes.

A `ScheduleState` at index ``k`` carries everything indexed ``k - 1``,
``k`` and ``k + 1`` that the solver and the feasibility checks need, so a
single state is enough to evaluate the step-size conditions at ``k + 1``.
"""

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .errors import UsageError

__all__ = [
    "RegimeTag",
    "Regime",
    "ScheduleState",
    "ParamCondition",
    "Schedule",
    "solve_cubic",
    "next_tau",
    "initial_state",
    "advance",
    "check_param_cond",
    "omega_window",
    "write_schedule_csv",
    "CASE2_BETA_FACTOR",
]

#: lower-bound factor on beta0 for the strongly convex primal regime
CASE2_BETA_FACTOR = 0.382

PARAM_COND_RTOL = 1e-12


class RegimeTag(str, Enum):
    GENERAL_CONVEX = "GeneralConvex"
    STRONGLY_CONVEX_PRIMAL = "StronglyConvexPrimal"
    STRONGLY_CONVEX_BOTH = "StronglyConvexBoth"


@dataclass(frozen=True)
class Regime:
    """Convexity regime together with the moduli the schedule uses.

    The moduli may be smaller than the true moduli of the problem terms
    (e.g. running the general-convex schedule on a strongly convex ``f``).
    """

    tag: RegimeTag
    mu_f: float = 0.0
    mu_gstar: float = 0.0
    kappa_F: float = None

    def __post_init__(self):
        if self.mu_f < 0 or self.mu_gstar < 0:
            raise UsageError("strong-convexity moduli must be nonnegative")
        expected = _tag_for(self.mu_f, self.mu_gstar)
        if RegimeTag(self.tag) is not expected:
            raise UsageError("regime %s inconsistent with mu_f=%g, mu_gstar=%g"
                             % (self.tag, self.mu_f, self.mu_gstar))
        if expected is RegimeTag.STRONGLY_CONVEX_BOTH and self.kappa_F is None:
            raise UsageError("StronglyConvexBoth needs kappa_F")

    @classmethod
    def general_convex(cls):
        return cls(RegimeTag.GENERAL_CONVEX)

    @classmethod
    def strongly_convex_primal(cls, mu_f):
        return cls(RegimeTag.STRONGLY_CONVEX_PRIMAL, mu_f=float(mu_f))

    @classmethod
    def strongly_convex_both(cls, mu_f, mu_gstar, opnorm):
        kappa = opnorm ** 2 / (mu_f * mu_gstar)
        return cls(RegimeTag.STRONGLY_CONVEX_BOTH, float(mu_f), float(mu_gstar), kappa)

    @classmethod
    def from_moduli(cls, mu_f, mu_gstar, opnorm):
        tag = _tag_for(mu_f, mu_gstar)
        if tag is RegimeTag.GENERAL_CONVEX:
            return cls.general_convex()
        if tag is RegimeTag.STRONGLY_CONVEX_PRIMAL:
            return cls.strongly_convex_primal(mu_f)
        if tag is RegimeTag.STRONGLY_CONVEX_BOTH:
            return cls.strongly_convex_both(mu_f, mu_gstar, opnorm)
        raise UsageError("mu_gstar > 0 with mu_f = 0 is not supported; present the "
                         "strongly convex term as f")

    @property
    def case(self):
        return {RegimeTag.GENERAL_CONVEX: 1, RegimeTag.STRONGLY_CONVEX_PRIMAL: 2,
                RegimeTag.STRONGLY_CONVEX_BOTH: 3}[RegimeTag(self.tag)]

    @property
    def tau_const(self):
        """The constant ``1 / sqrt(1 + kappa_F)`` of the doubly strongly convex regime."""
        if self.kappa_F is None:
            return None
        return 1.0 / math.sqrt(1.0 + self.kappa_F)


def _tag_for(mu_f, mu_gstar):
    if mu_f == 0 and mu_gstar == 0:
        return RegimeTag.GENERAL_CONVEX
    if mu_f > 0 and mu_gstar == 0:
        return RegimeTag.STRONGLY_CONVEX_PRIMAL
    if mu_f > 0 and mu_gstar > 0:
        return RegimeTag.STRONGLY_CONVEX_BOTH
    return None


def solve_cubic(tau_prev):
    """Unique root in (0, 1) of ``t^3 + t^2 + tau_prev^2 t - tau_prev^2``.

    The cubic is increasing and convex on (0, 1) and positive at
    ``t = tau_prev``, so Newton started there decreases monotonically to the
    root; iteration stops when it no longer decreases.
    """
    c = tau_prev * tau_prev
    t = tau_prev
    for _ in range(100):
        phi = ((t + 1.0) * t + c) * t - c
        dphi = (3.0 * t + 2.0) * t + c
        t_new = t - phi / dphi
        if not t_new < t:
            break
        t = t_new
    return t


def next_tau(regime, tau_k):
    """Return ``tau_{k+1}`` from ``tau_k`` under the regime's update rule."""
    if not (0.0 < tau_k <= 1.0):
        raise UsageError("tau_k must lie in (0, 1], got %r" % (tau_k,))
    tag = RegimeTag(regime.tag)
    if tag is RegimeTag.GENERAL_CONVEX:
        return solve_cubic(tau_k)
    if tag is RegimeTag.STRONGLY_CONVEX_PRIMAL:
        return 0.5 * tau_k * (math.sqrt(tau_k * tau_k + 4.0) - tau_k)
    return regime.tau_const


def _lipschitz(opnorm, mu_gstar, beta):
    return opnorm * opnorm / (mu_gstar + beta)


def _ratios(L_k, L_next, mu_f):
    den = L_k + mu_f
    if den == 0.0:
        return 1.0, 0.0
    return (L_next + mu_f) / den, L_next / den


def _eta(tau_k, tau_next, m_next):
    return (1.0 - tau_k) * tau_k / (tau_k * tau_k + m_next * tau_next)


@dataclass(frozen=True)
class ScheduleState:
    """Parameters around iteration ``k``.

    ``*_prev``, ``*_k`` and ``*_next`` are the values at ``k - 1``, ``k``
    and ``k + 1``. ``m_next``, ``a_next`` and ``eta_next`` are
    ``m_{k+1}``, ``a_{k+1}`` and ``eta_{k+1}``.
    """

    k: int
    tau_prev: float
    tau_k: float
    tau_next: float
    beta_prev: float
    beta_k: float
    beta_next: float
    L_prev: float
    L_k: float
    L_next: float
    m_next: float
    a_next: float
    eta_next: float


def initial_state(regime, beta0, opnorm, tau0=None, tau_rule=None):
    """State at ``k = 0``.

    ``tau0`` defaults to 1 (general and strongly convex primal regimes) or
    to the constant tau. ``beta_{-1}`` is taken as ``(1 + tau0) beta0`` so
    that the recursion ``beta_k = beta_{k-1} / (1 + tau_k)`` holds from the
    start.
    """
    if beta0 <= 0:
        raise UsageError("beta0 must be positive")
    rule = tau_rule or (lambda t: next_tau(regime, t))
    if tau0 is None:
        tau0 = regime.tau_const if regime.case == 3 else 1.0
    tau_prev = tau0 if regime.case == 3 else math.nan
    tau1 = rule(tau0)
    beta_prev = (1.0 + tau0) * beta0
    beta1 = beta0 / (1.0 + tau1)
    mg = regime.mu_gstar
    L_prev = _lipschitz(opnorm, mg, beta_prev)
    L0 = _lipschitz(opnorm, mg, beta0)
    L1 = _lipschitz(opnorm, mg, beta1)
    m1, a1 = _ratios(L0, L1, regime.mu_f)
    return ScheduleState(0, tau_prev, tau0, tau1, beta_prev, beta0, beta1, L_prev, L0, L1,
                         m1, a1, _eta(tau0, tau1, m1))


def advance(state, regime, opnorm, tau_rule=None):
    """Return the state at ``k + 1``; ``eta`` is computed last, from ``m``."""
    rule = tau_rule or (lambda t: next_tau(regime, t))
    tau_k = state.tau_next
    tau_next = rule(tau_k)
    beta_k = state.beta_next
    beta_next = beta_k / (1.0 + tau_next)
    L_k = state.L_next
    L_next = _lipschitz(opnorm, regime.mu_gstar, beta_next)
    m_next, a_next = _ratios(L_k, L_next, regime.mu_f)
    return ScheduleState(state.k + 1, state.tau_k, tau_k, tau_next, state.beta_k, beta_k, beta_next,
                         state.L_k, L_k, L_next, m_next, a_next, _eta(tau_k, tau_next, m_next))


class ParamCondition(NamedTuple):
    index: int
    passed: bool
    slack1: float
    scale1: float
    slack2: float
    scale2: float


def check_param_cond(state, regime, rtol=PARAM_COND_RTOL):
    """Evaluate both step-size conditions at index ``state.k + 1``.

    Slacks are ``lhs - rhs``; a condition passes when its slack is at
    least ``-rtol * max(|lhs|, |rhs|)``.
    """
    mu = regime.mu_f
    tp, t = state.tau_k, state.tau_next
    Lp, L = state.L_k, state.L_next
    lhs1 = (Lp + mu) * (1.0 - t) * tp * tp + mu * (1.0 - t) * t
    rhs1 = L * t * t
    lhs2 = (Lp + mu) * (L + mu) * t * tp * tp + (L + mu) ** 2 * t * t
    rhs2 = (Lp + mu) * L * tp * tp
    s1, c1 = lhs1 - rhs1, max(abs(lhs1), abs(rhs1))
    s2, c2 = lhs2 - rhs2, max(abs(lhs2), abs(rhs2))
    ok = s1 >= -rtol * c1 and s2 >= -rtol * c2
    return ParamCondition(state.k + 1, bool(ok), s1, c1, s2, c2)


def omega_window(state):
    """Admissible interval for the inverse momentum weight at ``k = state.k + 1``.

    Returns ``(lower, upper)``. With the step-5 momentum rule, ``1 / eta_k``
    sits exactly at ``upper``.
    """
    tp, t = state.tau_k, state.tau_next
    a, m = state.a_next, state.m_next
    if tp >= 1.0:
        raise UsageError("omega window undefined when tau_{k-1} = 1")
    lo1 = (tp + math.sqrt(tp * tp + 4.0 * a)) / (2.0 * (1.0 - tp))
    lo2 = a * t / ((1.0 - t) * (1.0 - tp) * tp)
    hi = (tp * tp + m * t) / (tp * (1.0 - tp))
    return max(lo1, lo2), hi


class Schedule:
    """Lazily generated, cached sequence of `ScheduleState` values."""

    def __init__(self, regime, beta0, opnorm, tau0=None, tau_rule=None):
        self.regime = regime
        self.beta0 = float(beta0)
        self.opnorm = float(opnorm)
        self._rule = tau_rule
        self._states = [initial_state(regime, beta0, opnorm, tau0, tau_rule)]

    def __getitem__(self, k):
        if k < 0:
            raise IndexError(k)
        while len(self._states) <= k:
            self._states.append(advance(self._states[-1], self.regime, self.opnorm, self._rule))
        return self._states[k]

    def states(self, count):
        self[count - 1]
        return self._states[:count]


SCHEDULE_COLUMNS = ("k", "tau", "beta", "L", "m", "eta", "cond1_slack", "cond2_slack",
                    "omega_lo", "omega_hi")


def write_schedule_csv(path, schedule, count):
    """Dump ``count`` rows; row ``k`` holds the conditions checked at ``k``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SCHEDULE_COLUMNS)
        states = schedule.states(count + 1)
        for k in range(count):
            st = states[k]
            if k == 0:
                s1 = s2 = lo = hi = math.nan
                m = math.nan
            else:
                prev = states[k - 1]
                cond = check_param_cond(prev, schedule.regime)
                s1, s2 = cond.slack1, cond.slack2
                m = prev.m_next
                try:
                    lo, hi = omega_window(prev)
                except UsageError:
                    lo = hi = math.nan
            eta = states[k - 1].eta_next if k > 0 else math.nan
            w.writerow([k, repr(st.tau_k), repr(st.beta_k), repr(st.L_k), repr(m), repr(eta),
                        repr(s1), repr(s2), repr(lo), repr(hi)])

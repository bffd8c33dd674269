"""Catalog of prox-friendly convex terms.

Each constructor returns a `ProxFriendlyFn` bundling the value, the
proximal map, the strong-convexity modulus and whatever is known in closed
form about the Fenchel conjugate. All conjugate fields are derived
independently of the prox, so the Moreau identity is a genuine check.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import math

import numpy as np

from .errors import CapabilityError

__all__ = [
    "ProxFriendlyFn",
    "soft_threshold",
    "project_unit_ball",
    "elastic_net",
    "l2dist_conjugate",
    "quadratic_conjugate",
    "box_indicator",
    "l2dist",
    "half_sq_dist",
]

#: absolute slack on indicator constraints
DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class ProxFriendlyFn:
    """A closed convex function with an exact proximal map.

    Attributes
    ----------
    value : callable
        ``x -> h(x)``; ``+inf`` outside the domain.
    prox : callable
        ``(v, gamma) -> argmin_u h(u) + ||u - v||^2 / (2 gamma)``.
    mu : float
        Strong-convexity modulus of ``h``.
    conj_value : callable or None
        ``z -> h*(z)``.
    conj_argmax : callable or None
        ``z -> x`` with ``x`` in the subdifferential of ``h*`` at ``z``.
    conj_prox : callable or None
        Proximal map of ``h*``, derived in closed form.
    conj_lipschitz : float or None
        Lipschitz constant of ``h*`` on its domain (``M_g`` when this term
        is ``g*``, ``M_{f*}`` when it is ``f``).
    """

    name: str
    value: Callable
    prox: Callable
    mu: float = 0.0
    conj_value: Optional[Callable] = None
    conj_argmax: Optional[Callable] = None
    conj_prox: Optional[Callable] = None
    conj_lipschitz: Optional[float] = None

    def __call__(self, x):
        return self.value(x)

    def conjugate(self, z):
        if self.conj_value is None:
            raise CapabilityError("%s has no conjugate value" % self.name)
        return self.conj_value(z)

    def argmax_conj(self, z):
        if self.conj_argmax is None:
            raise CapabilityError("%s has no conjugate argmax" % self.name)
        return self.conj_argmax(z)


def soft_threshold(v, a):
    """``sign(v) * max(|v| - a, 0)``, elementwise."""
    return np.sign(v) * np.maximum(np.abs(v) - a, 0.0)


def _norm(v):
    return math.sqrt(float(np.dot(v, v)))


def project_unit_ball(z):
    nz = _norm(z)
    if nz <= 1.0:
        return np.array(z, dtype=float)
    return z / nz


def _l1(x):
    return float(np.abs(x).sum())


def elastic_net(lam, rho=0.0):
    """``f(x) = lam ||x||_1 + (rho / 2) ||x||^2``."""
    lam = float(lam)
    rho = float(rho)
    if lam <= 0 or rho < 0:
        raise ValueError("elastic_net needs lam > 0 and rho >= 0")

    def value(x):
        return lam * _l1(x) + 0.5 * rho * float(np.dot(x, x))

    def prox(v, gamma):
        return soft_threshold(v, gamma * lam) / (1.0 + gamma * rho)

    if rho > 0:
        def conj_value(z):
            s = soft_threshold(z, lam)
            return float(np.dot(s, s)) / (2.0 * rho)

        def conj_argmax(z):
            return soft_threshold(z, lam) / rho

        def conj_prox(v, gamma):
            # h*(u) = sum (|u_i| - lam)_+^2 / (2 rho): identity inside the
            # dead zone, shrink the excess by rho / (rho + gamma) outside.
            a = np.abs(v)
            out = np.array(v, dtype=float)
            big = a > lam
            out[big] = np.sign(v[big]) * (lam + (a[big] - lam) * rho / (rho + gamma))
            return out
    else:
        def conj_value(z):
            return 0.0 if np.abs(z).max(initial=0.0) <= lam + DOMAIN_TOL else np.inf

        conj_argmax = None

        def conj_prox(v, gamma):
            return np.clip(v, -lam, lam)

    return ProxFriendlyFn("elastic_net(lam=%g, rho=%g)" % (lam, rho), value, prox, mu=rho,
                          conj_value=conj_value, conj_argmax=conj_argmax, conj_prox=conj_prox)


def l2dist(b):
    """``g(u) = ||u - b||``."""
    b = np.asarray(b, dtype=float)

    def value(u):
        return float(_norm(u - b))

    def prox(v, gamma):
        d = v - b
        nd = _norm(d)
        if nd <= gamma:
            return b.copy()
        return b + (1.0 - gamma / nd) * d

    def conj_value(y):
        return float(np.dot(b, y)) if _norm(y) <= 1.0 + DOMAIN_TOL else np.inf

    def conj_argmax(z):
        return project_unit_ball(z)

    def conj_prox(z, gamma):
        return project_unit_ball(z - gamma * b)

    return ProxFriendlyFn("l2dist", value, prox, mu=0.0, conj_value=conj_value,
                          conj_argmax=conj_argmax, conj_prox=conj_prox)


def l2dist_conjugate(b):
    """``g*(y) = <b, y> + indicator(||y|| <= 1)``, the conjugate of ``||u - b||``.

    ``conj_value`` evaluates ``g`` itself and ``conj_argmax`` returns a
    subgradient of ``g`` (the unit vector along ``u - b``, or 0 at ``u = b``).
    """
    b = np.asarray(b, dtype=float)
    primal = l2dist(b)

    def conj_argmax(u):
        d = u - b
        nd = _norm(d)
        return d / nd if nd > 0 else np.zeros_like(d)

    return ProxFriendlyFn("l2dist_conjugate", primal.conj_value, primal.conj_prox, mu=0.0,
                          conj_value=primal.value, conj_argmax=conj_argmax,
                          conj_prox=primal.prox, conj_lipschitz=1.0)


def half_sq_dist(b):
    """``g(u) = ||u - b||^2 / 2``."""
    b = np.asarray(b, dtype=float)

    def value(u):
        d = u - b
        return 0.5 * float(np.dot(d, d))

    def prox(v, gamma):
        return (v + gamma * b) / (1.0 + gamma)

    def conj_value(y):
        return 0.5 * float(np.dot(y, y)) + float(np.dot(b, y))

    def conj_argmax(z):
        return z + b

    def conj_prox(z, gamma):
        return (z - gamma * b) / (1.0 + gamma)

    return ProxFriendlyFn("half_sq_dist", value, prox, mu=1.0, conj_value=conj_value,
                          conj_argmax=conj_argmax, conj_prox=conj_prox)


def quadratic_conjugate(b):
    """``g*(y) = ||y||^2 / 2 + <b, y>``, the conjugate of ``||u - b||^2 / 2``."""
    b = np.asarray(b, dtype=float)
    primal = half_sq_dist(b)

    def conj_argmax(u):
        return u - b

    return ProxFriendlyFn("quadratic_conjugate", primal.conj_value, primal.conj_prox, mu=1.0,
                          conj_value=primal.value, conj_argmax=conj_argmax,
                          conj_prox=primal.prox, conj_lipschitz=None)


def box_indicator(radius, dim=None, rho=0.0):
    """Indicator of ``[-r, r]^p``, optionally plus ``(rho / 2) ||x||^2``.

    With ``dim`` given, ``conj_lipschitz`` is the Euclidean bound ``r sqrt(p)``
    on every subgradient of the conjugate.
    """
    r = float(radius)
    rho = float(rho)
    if r <= 0 or rho < 0:
        raise ValueError("box_indicator needs radius > 0 and rho >= 0")

    def value(x):
        if np.max(np.abs(x), initial=0.0) > r + DOMAIN_TOL:
            return np.inf
        return 0.5 * rho * float(np.dot(x, x))

    def prox(v, gamma):
        return np.clip(v / (1.0 + gamma * rho), -r, r)

    if rho > 0:
        def conj_value(z):
            a = np.abs(z)
            inner = a <= rho * r
            return float(np.sum(np.where(inner, a * a / (2.0 * rho), r * a - 0.5 * rho * r * r)))

        def conj_argmax(z):
            return np.clip(z / rho, -r, r)

        def conj_prox(v, gamma):
            a = np.abs(v)
            return np.where(a <= r * (rho + gamma), v * rho / (rho + gamma), v - gamma * r * np.sign(v))
    else:
        def conj_value(z):
            return r * _l1(z)

        def conj_argmax(z):
            return r * np.sign(z)

        def conj_prox(v, gamma):
            return soft_threshold(v, gamma * r)

    mfs = None if dim is None else r * np.sqrt(dim)
    return ProxFriendlyFn("box_indicator(r=%g, rho=%g)" % (r, rho), value, prox, mu=rho,
                          conj_value=conj_value, conj_argmax=conj_argmax, conj_prox=conj_prox,
                          conj_lipschitz=mfs)

"""Dense linear operators with adjoints and a cached operator-norm bound."""

import numpy as np

from .errors import UsageError

__all__ = ["LinearMap", "apply", "adjoint", "estimate_opnorm", "load_matrix_csv", "save_matrix_csv"]

_START_SEED = 20210

def _power_iteration(mat, max_iters, tol):
    p = mat.shape[1]
    v = np.random.default_rng(_START_SEED).standard_normal(p)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iters):
        w = mat.T @ (mat @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        sigma_new = np.sqrt(nw)
        v = w / nw
        if abs(sigma_new - sigma) <= 0.01 * tol * sigma_new:
            sigma = sigma_new
            break
        sigma = sigma_new
    # Rayleigh quotient at the final vector is the sharper estimate.
    return float(max(sigma, np.linalg.norm(mat @ v)))


class LinearMap:
    """A dense matrix ``K`` viewed as a map from R^p to R^n.

    Parameters
    ----------
    matrix : array_like, shape (n, p)
        Row-major operator entries. The array is copied and frozen.
    opnorm_tol : float
        Relative accuracy requested from the power iteration that supplies
        ``opnorm``.
    """

    def __init__(self, matrix, opnorm_tol=1e-6, opnorm_max_iters=5000):
        mat = np.array(matrix, dtype=float, order="C", copy=True)
        if mat.ndim != 2 or min(mat.shape) < 1:
            raise UsageError("LinearMap needs a non-empty 2-D matrix, got shape %r" % (mat.shape,))
        mat.setflags(write=False)
        self._mat = mat
        self._matT = mat.T
        self.opnorm_tol = float(opnorm_tol)
        self._opnorm_max_iters = int(opnorm_max_iters)
        self._opnorm = None

    @classmethod
    def identity(cls, dim, **kwargs):
        return cls(np.eye(dim), **kwargs)

    @classmethod
    def diag(cls, entries, **kwargs):
        return cls(np.diag(np.asarray(entries, dtype=float)), **kwargs)

    @property
    def rows(self):
        return self._mat.shape[0]

    @property
    def cols(self):
        return self._mat.shape[1]

    @property
    def matrix(self):
        return self._mat

    def apply(self, x):
        """Return ``K @ x``."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise UsageError("apply expects a vector of length %d, got shape %r" % (self.cols, x.shape))
        return self._mat @ x

    def adjoint(self, y):
        """Return ``K.T @ y``."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rows,):
            raise UsageError("adjoint expects a vector of length %d, got shape %r" % (self.rows, y.shape))
        return self._matT @ y

    # Unchecked fast paths for the solver inner loop.
    def _fwd(self, x):
        return self._mat @ x

    def _adj(self, y):
        return self._matT @ y

    @property
    def opnorm(self):
        """Certified upper bound on the spectral norm, ``(1 + tol)`` times the estimate."""
        if self._opnorm is None:
            est = estimate_opnorm(self, self._opnorm_max_iters, self.opnorm_tol)
            self._opnorm = est * (1.0 + self.opnorm_tol)
        return self._opnorm

    @property
    def opnorm_est(self):
        return self.opnorm

    def scaled(self, c):
        return LinearMap(c * self._mat, opnorm_tol=self.opnorm_tol, opnorm_max_iters=self._opnorm_max_iters)

    def __repr__(self):
        return "LinearMap(n=%d, p=%d)" % (self.rows, self.cols)


def apply(linmap, x):
    return linmap.apply(x)


def adjoint(linmap, y):
    return linmap.adjoint(y)


def estimate_opnorm(linmap, max_iters=5000, tol=1e-6):
    """Estimate ``||K||`` by power iteration on ``K.T K``.

    The start vector comes from a fixed seed, so the result is a
    deterministic function of the matrix. Returns 0 for the zero operator.
    The raw estimate is returned; `LinearMap.opnorm` inflates it by
    ``1 + tol`` so that step sizes computed from it stay valid.
    """
    if max_iters < 1:
        raise UsageError("max_iters must be >= 1")
    if tol <= 0:
        raise UsageError("tol must be positive")
    mat = linmap.matrix if isinstance(linmap, LinearMap) else np.asarray(linmap, dtype=float)
    if not np.any(mat):
        return 0.0
    return _power_iteration(mat, int(max_iters), float(tol))


def save_matrix_csv(path, mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    np.savetxt(path, mat, delimiter=",", fmt="%.17g")


def load_matrix_csv(path):
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float, ndmin=2))

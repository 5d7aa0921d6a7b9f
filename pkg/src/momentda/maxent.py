"""One-dimensional maximum-entropy densities on [0, 1].

Densities have the exponential-family form ``c(lam) * exp(-<lam, eta(x)>)``
where ``eta = (eta_1, ..., eta_m)`` are the orthonormal shifted Legendre
polynomials on [0, 1].  Note the minus sign: a positive ``lam_1`` tilts the
density towards 0.

Fitting minimizes the convex dual ``<lam, mu> - log c(lam)`` by damped
Newton steps.  Its gradient is ``mu - E_q[eta]`` and its Hessian is the
covariance of ``eta`` under the current density; both are evaluated by
Gauss-Legendre quadrature.
"""

from dataclasses import dataclass
from math import sqrt

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import logsumexp

from .errors import ConvergenceFailure, InvalidArgument

MAX_ORDER = 5
DEFAULT_NODES = 256

# coefficients in increasing powers of x
_LEGENDRE_COEFFS = (
    (sqrt(3), (-1, 2)),
    (sqrt(5), (1, -6, 6)),
    (sqrt(7), (-1, 12, -30, 20)),
    (3.0, (1, -20, 90, -140, 70)),
    (sqrt(11), (-1, 30, -210, 560, -630, 252)),
)

ARMIJO = 1e-4
MAX_HALVINGS = 40
ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre nodes and weights mapped to [0, 1]."""
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, n=DEFAULT_NODES):
        x, w = np.polynomial.legendre.leggauss(n)
        return cls(nodes=(x + 1.0) / 2.0, weights=w / 2.0)

    @property
    def count(self):
        return len(self.nodes)

    def integrate(self, values):
        """Integral over [0, 1] of a function sampled at the nodes (axis 0)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


_DEFAULT_GRID = None


def default_grid():
    global _DEFAULT_GRID
    if _DEFAULT_GRID is None:
        _DEFAULT_GRID = QuadratureGrid.gauss_legendre(DEFAULT_NODES)
    return _DEFAULT_GRID


@dataclass(frozen=True)
class LegendreBasis:
    """Orthonormal Legendre polynomials eta_1..eta_order on [0, 1]."""
    order: int

    def __post_init__(self):
        if not 1 <= self.order <= MAX_ORDER:
            raise InvalidArgument(f"basis order must be in 1..{MAX_ORDER}")

    @property
    def coefficients(self):
        """(order, order+1) table; row j-1 holds eta_j in increasing powers."""
        table = np.zeros((self.order, self.order + 1))
        for j, (scale, coeffs) in enumerate(_LEGENDRE_COEFFS[:self.order]):
            table[j, :len(coeffs)] = scale * np.asarray(coeffs, dtype=float)
        return table

    def __call__(self, x):
        """Feature matrix with shape ``x.shape + (order,)``."""
        x = np.asarray(x, dtype=float)
        return np.stack([P.polyval(x, row) for row in self.coefficients], axis=-1)


def legendre_eval(basis, j, x):
    if not 1 <= j <= basis.order:
        raise InvalidArgument(f"polynomial index {j} outside 1..{basis.order}")
    _check_unit_interval(x)
    return P.polyval(np.asarray(x, dtype=float), basis.coefficients[j - 1])


def _check_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise InvalidArgument("values must lie in [0, 1]; min-max normalize first")
    return x


def empirical_legendre_moments(X, basis):
    """Sample means of eta_1..eta_m over a 1-D sample in [0, 1]."""
    X = _check_unit_interval(np.ravel(X))
    if X.size == 0:
        raise InvalidArgument("empty sample")
    return basis(X).mean(axis=0)


@dataclass(frozen=True)
class MaxEntModel:
    basis: LegendreBasis
    lam: np.ndarray
    log_norm: float
    iterations: int = 0

    @classmethod
    def from_lambda(cls, lam, grid=None):
        """Model with natural parameters ``lam``, normalized on ``grid``."""
        lam = np.asarray(lam, dtype=float)
        grid = grid or default_grid()
        basis = LegendreBasis(len(lam))
        log_z = logsumexp(-basis(grid.nodes) @ lam, b=grid.weights)
        return cls(basis=basis, lam=lam, log_norm=float(-log_z))

    def log_density(self, x):
        return self.log_norm - self.basis(x) @ self.lam

    def __call__(self, x):
        return np.exp(self.log_density(x))

    def moments(self, grid=None):
        grid = grid or default_grid()
        return grid.integrate(self(grid.nodes)[:, None] * self.basis(grid.nodes))

    def entropy(self, grid=None):
        return entropy(self, grid)


def density_eval(model, x):
    _check_unit_interval(x)
    return model(x)


def _dual_parts(lam, mu, feats, grid):
    """Dual value, gradient, Hessian and log-normalizer at ``lam``."""
    expo = -feats @ lam
    log_z = logsumexp(expo, b=grid.weights)
    q = grid.weights * np.exp(expo - log_z)
    mean = q @ feats
    centered = feats - mean
    hess = (centered * q[:, None]).T @ centered
    return lam @ mu + log_z, mu - mean, hess, -log_z


def fit_maxent(mu, basis=None, tol=1e-9, max_iter=100, grid=None, trace=None):
    """Maximum-entropy density whose Legendre moments equal ``mu``.

    Raises ConvergenceFailure (with the last gradient norm) when Newton
    stalls, which happens when ``mu`` lies outside or very near the boundary
    of the attainable moment set.  ``trace``, if a list, receives the dual
    objective at every accepted iterate; it never increases by more than
    the rounding level ``ROUNDOFF * |value|``.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    if not np.all(np.isfinite(mu)):
        raise InvalidArgument("moment vector must be finite")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    basis = basis or LegendreBasis(len(mu))
    if len(mu) != basis.order:
        raise InvalidArgument(f"need {basis.order} moments, got {len(mu)}")
    grid = grid or default_grid()
    feats = basis(grid.nodes)

    lam = np.zeros(basis.order)
    value, grad, hess, log_norm = _dual_parts(lam, mu, feats, grid)
    if trace is not None:
        trace.append(value)
    for it in range(max_iter + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= tol:
            return MaxEntModel(basis, lam, float(log_norm), it)
        if it == max_iter:
            break
        try:
            step = -cho_solve(cho_factor(hess), grad)
        except LinAlgError:
            step = -grad
        slope = grad @ step
        if slope >= 0:
            step, slope = -grad, -(grad @ grad)
        t = 1.0
        cand = _dual_parts(lam + step, mu, feats, grid)
        # near the optimum the predicted decrease drops below the rounding
        # error of the dual value; the Armijo test is then meaningless
        flat = -slope <= ROUNDOFF * max(1.0, abs(value)) and np.isfinite(cand[0])
        for _ in range(0 if flat else MAX_HALVINGS):
            if np.isfinite(cand[0]) and cand[0] <= value + ARMIJO * t * slope:
                break
            t *= 0.5
            cand = _dual_parts(lam + t * step, mu, feats, grid)
        else:
            if not flat:
                raise ConvergenceFailure(
                    f"line search failed at iteration {it}; moments may be infeasible",
                    gnorm)
        lam = lam + t * step
        value, grad, hess, log_norm = cand
        if trace is not None:
            trace.append(value)
    raise ConvergenceFailure(
        f"no convergence in {max_iter} iterations (gradient norm {gnorm:.3g})",
        gnorm)


def fit_marginals(X, m, **kwargs):
    """Independent maxent fits per column of a sample already scaled to [0,1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    basis = LegendreBasis(m)
    return [fit_maxent(empirical_legendre_moments(col, basis), basis, **kwargs)
            for col in X.T]


def _on_grid(fn, grid):
    return np.asarray(fn(grid.nodes), dtype=float)


def entropy(p, grid=None):
    """Differential entropy ``-int p log p`` of a density callable."""
    grid = grid or default_grid()
    values = _on_grid(p, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(values > 0, values * np.log(values), 0.0)
    return float(-grid.integrate(integrand))


def kl(p, q, grid=None):
    """``int p log(p/q)`` by quadrature; both densities must be positive."""
    grid = grid or default_grid()
    pv, qv = _on_grid(p, grid), _on_grid(q, grid)
    if np.any(pv <= 0) or np.any(qv <= 0):
        raise InvalidArgument("kl needs strictly positive densities on the grid")
    return float(grid.integrate(pv * (np.log(pv) - np.log(qv))))


def l1(p, q, grid=None):
    grid = grid or default_grid()
    return float(grid.integrate(np.abs(_on_grid(p, grid) - _on_grid(q, grid))))


def minmax_scale(X, lo=None, hi=None):
    """Scale columns to [0, 1]; returns the scaled data and the (lo, hi) used."""
    X = np.asarray(X, dtype=float)
    lo = X.min(axis=0) if lo is None else np.asarray(lo, dtype=float)
    hi = X.max(axis=0) if hi is None else np.asarray(hi, dtype=float)
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip((X - lo) / span, 0.0, 1.0), (lo, hi)

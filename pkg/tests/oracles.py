"""Independent reference computations shared by the test modules."""

import numpy as np
from scipy import integrate
from scipy.optimize import minimize

from momentda.mann import LabeledBatch, NetParams


def truncated_gaussian(loc, scale):
    """Density on [0, 1] normalized by adaptive quadrature (independent of GRID)."""
    z, _ = integrate.quad(lambda x: np.exp(-0.5 * ((x - loc) / scale) ** 2), 0, 1,
                          epsabs=1e-13, epsrel=1e-12)
    return lambda x: np.exp(-0.5 * ((np.asarray(x) - loc) / scale) ** 2) / z


def random_instance(rng, d=None, w=None, c=None, n=None):
    d = d or rng.integers(1, 5)
    w = w or rng.integers(1, 6)
    c = c or rng.integers(2, 4)
    n = n or rng.integers(2, 7)
    params = NetParams(rng.normal(size=(w, d)), rng.normal(size=w),
                       rng.normal(size=(c, w)), rng.normal(size=c))
    labels = rng.dirichlet(np.ones(c), size=n)
    batch = LabeledBatch(rng.normal(size=(n, d)), labels)
    Xt = rng.normal(0.5, 1.5, size=(rng.integers(2, 7), d))
    return params, batch, Xt


def finite_difference(fn, params, h=1e-5):
    d, w, c = params.shape
    theta = params.flat()
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (fn(NetParams.from_flat(theta + e, d, w, c))
                   - fn(NetParams.from_flat(theta - e, d, w, c))) / (2 * h)
    return grad


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def regression_data(seed, n=40, d=6, shift=1.0):
    rng = np.random.default_rng(seed)
    Xp = rng.normal(size=(n, d)) @ rng.normal(size=(d, d))
    y = Xp @ rng.normal(size=d) + 0.1 * rng.normal(size=n)
    Xq = rng.normal(size=(n, d)) @ rng.normal(size=(d, d)) + shift
    return Xp, y, Xq


def krylov_pls(X, y, s):
    """PLS1 regression vector as least squares over the Krylov space of S'S and S'y."""
    S, yc = X - X.mean(0), y - y.mean()
    K = [S.T @ yc]
    for _ in range(s - 1):
        K.append(S.T @ (S @ K[-1]))
    K = np.column_stack(K)
    K, _ = np.linalg.qr(K)
    return K @ np.linalg.solve(K.T @ S.T @ S @ K, K.T @ S.T @ yc)


def sphere_objective(w, S, y, Lam, gamma):
    return np.sum((S - np.outer(y, w)) ** 2) + gamma * w @ Lam @ w


def sphere_minimizer(S, y, Lam, gamma, starts=8, seed=0):
    rng = np.random.default_rng(seed)
    best = None
    f = lambda v: sphere_objective(v / np.linalg.norm(v), S, y, Lam, gamma)  # noqa: E731
    for x0 in [S.T @ y] + list(rng.normal(size=(starts, S.shape[1]))):
        res = minimize(f, x0, method="BFGS", options={"gtol": 1e-12, "maxiter": 5000})
        if best is None or res.fun < best.fun:
            best = res
    w = best.x / np.linalg.norm(best.x)
    return w if w @ (S.T @ y) >= 0 else -w

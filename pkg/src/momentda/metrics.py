"""Sample-based distances between empirical distributions.

Central moment discrepancy (CMD), maximum mean discrepancy (MMD), the CORAL
covariance distance and the l1 distance between raw marginal moments.

All functions accept array-likes with rows as observations.  A 1-D array is
treated as a single feature column.
"""

from dataclasses import dataclass, field
from math import comb, sqrt

import numpy as np

from .errors import InvalidArgument

DEFAULT_ORDER = 5

# pairwise kernel evaluation is chunked to keep the n x m block small
_CHUNK = 2048
# largest d**degree for which the explicit polynomial feature route is used
_MAX_TENSOR_SIZE = 4096


def as_sample(X, name="X"):
    """Validate ``X`` and return it as a float (n, d) array."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgument(f"{name} must be 1-D or 2-D, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidArgument(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument(f"{name} contains non-finite entries")
    return X


def _pair(Xp, Xq):
    Xp = as_sample(Xp, "Xp")
    Xq = as_sample(Xq, "Xq")
    if Xp.shape[1] != Xq.shape[1]:
        raise InvalidArgument(
            f"dimension mismatch: {Xp.shape[1]} vs {Xq.shape[1]} features")
    return Xp, Xq


@dataclass(frozen=True)
class MomentSummary:
    """Mean vector plus coordinate-wise central moments of orders 2..m."""
    order: int
    mean: np.ndarray
    central: list = field(default_factory=list)

    def vector(self, j):
        """Moment vector of order ``j`` (1 is the mean)."""
        if not 1 <= j <= self.order:
            raise InvalidArgument(f"order {j} outside 1..{self.order}")
        return self.mean if j == 1 else self.central[j - 2]


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    degree: int = 2
    bias: float = 1.0
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise InvalidArgument(f"unknown kernel {self.kind!r}")
        if self.kind == "polynomial" and self.degree < 1:
            raise InvalidArgument("polynomial degree must be >= 1")
        if self.kind == "gaussian" and not self.bandwidth > 0:
            raise InvalidArgument("gaussian bandwidth must be > 0")

    @classmethod
    def parse(cls, text):
        """Build a kernel from ``linear``, ``poly:DEG[:BIAS]`` or ``gauss:SIGMA``."""
        kind, *args = text.split(":")
        if kind == "linear":
            return cls("linear")
        if kind in ("poly", "polynomial"):
            degree = int(args[0]) if args else 2
            bias = float(args[1]) if len(args) > 1 else 1.0
            return cls("polynomial", degree=degree, bias=bias)
        if kind in ("gauss", "gaussian", "rbf"):
            return cls("gaussian", bandwidth=float(args[0]) if args else 1.0)
        raise InvalidArgument(f"unknown kernel {text!r}")

    def __call__(self, A, B):
        """Gram block k(A_i, B_j)."""
        if self.kind == "gaussian":
            sq = (np.sum(A**2, 1)[:, None] + np.sum(B**2, 1)[None, :]
                  - 2.0 * A @ B.T)
            np.maximum(sq, 0.0, out=sq)
            return np.exp(-sq / (2.0 * self.bandwidth**2))
        G = A @ B.T
        if self.kind == "linear":
            return G
        return (G + self.bias) ** self.degree


def central_moments(X, m=DEFAULT_ORDER):
    """Column means and coordinate-wise central moments up to order ``m``.

    These are the biased plug-in estimates ``mean((x - mean)**j)``.
    """
    if m < 1:
        raise InvalidArgument("moment order must be >= 1")
    X = as_sample(X)
    mean = X.mean(axis=0)
    centered = X - mean
    central = []
    power = centered.copy()
    for _ in range(2, m + 1):
        power *= centered
        central.append(power.mean(axis=0))
    return MomentSummary(order=m, mean=mean, central=central)


def default_weights(a, b, m=DEFAULT_ORDER):
    """Weights ``1/|b-a|**j`` for samples supported on ``[a, b]^d``."""
    if m < 1:
        raise InvalidArgument("moment order must be >= 1")
    width = abs(b - a)
    if width == 0 or not np.isfinite(width):
        raise InvalidArgument("degenerate range: a == b")
    return width ** -np.arange(1, m + 1, dtype=float)


def cmd_term_bound(j, d):
    """Upper bound on the j-th weighted CMD term for d-dimensional data."""
    if j < 1 or d < 1:
        raise InvalidArgument("j and d must be >= 1")
    return 2.0 * sqrt(d) * ((j / (j + 1)) ** j / (j + 1) + 0.5 ** (1 + j))


def _check_weights(weights, m):
    if weights is None:
        return np.ones(m)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (m,):
        raise InvalidArgument(f"need {m} weights, got shape {weights.shape}")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise InvalidArgument("weights must be finite and nonnegative")
    return weights


def cmd_terms(Xp, Xq, m=DEFAULT_ORDER, weights=None, cross_variance=False):
    """Per-order weighted terms ``a_j * ||c_j(Xp) - c_j(Xq)||_2``.

    With ``cross_variance`` the order-2 term compares the full (biased)
    covariance matrices instead of the marginal variances.
    """
    Xp, Xq = _pair(Xp, Xq)
    if m < 1:
        raise InvalidArgument("moment order must be >= 1")
    weights = _check_weights(weights, m)
    sp = central_moments(Xp, m)
    sq = central_moments(Xq, m)
    terms = np.empty(m)
    for j in range(1, m + 1):
        if j == 2 and cross_variance:
            cp = Xp - sp.mean
            cq = Xq - sq.mean
            diff = cp.T @ cp / len(cp) - cq.T @ cq / len(cq)
        else:
            diff = sp.vector(j) - sq.vector(j)
        terms[j - 1] = weights[j - 1] * np.linalg.norm(diff)
    return terms


def cmd(Xp, Xq, m=DEFAULT_ORDER, weights=None, cross_variance=False):
    """Central moment discrepancy estimate between two samples."""
    return float(np.sum(cmd_terms(Xp, Xq, m, weights, cross_variance)))


def _tensor_moments(X, degree):
    """Sample means of x^{(x)k} (flattened) for k = 1..degree."""
    n, d = X.shape
    sums = [np.zeros(d**k) for k in range(1, degree + 1)]
    rows = max(1, 2**22 // d**degree)
    for start in range(0, n, rows):
        block = X[start:start + rows]
        T = block
        sums[0] += T.sum(axis=0)
        for k in range(2, degree + 1):
            T = (T[:, :, None] * block[:, None, :]).reshape(len(block), -1)
            sums[k - 1] += T.sum(axis=0)
    return [s / n for s in sums]


def _mean_gram(kernel, A, B):
    total = 0.0
    for i in range(0, len(A), _CHUNK):
        for j in range(0, len(B), _CHUNK):
            total += kernel(A[i:i + _CHUNK], B[j:j + _CHUNK]).sum()
    return total / (len(A) * len(B))


def mmd_squared_pairwise(Xp, Xq, kernel):
    """Biased V-statistic MMD^2 by explicit (chunked) Gram sums."""
    Xp, Xq = _pair(Xp, Xq)
    return (_mean_gram(kernel, Xp, Xp) + _mean_gram(kernel, Xq, Xq)
            - 2.0 * _mean_gram(kernel, Xp, Xq))


def mmd_squared(Xp, Xq, kernel=None):
    """Biased V-statistic estimate of the squared MMD.

    Linear and low-dimensional polynomial kernels go through their finite
    feature expansion, which gives the same V-statistic in O(n) time:
    ``(x.y + c)^p = sum_k C(p,k) c^(p-k) <x^{(x)k}, y^{(x)k}>``.
    """
    kernel = kernel or KernelSpec()
    Xp, Xq = _pair(Xp, Xq)
    d = Xp.shape[1]
    if kernel.kind == "linear":
        return float(np.sum((Xp.mean(0) - Xq.mean(0)) ** 2))
    if kernel.kind == "polynomial" and d**kernel.degree <= _MAX_TENSOR_SIZE:
        mp = _tensor_moments(Xp, kernel.degree)
        mq = _tensor_moments(Xq, kernel.degree)
        p = kernel.degree
        return float(sum(
            comb(p, k) * kernel.bias ** (p - k) * np.sum((mp[k - 1] - mq[k - 1]) ** 2)
            for k in range(1, p + 1)))
    return float(mmd_squared_pairwise(Xp, Xq, kernel))


def coral(Xp, Xq):
    """Frobenius norm between the two sample covariance matrices (ddof=1)."""
    Xp, Xq = _pair(Xp, Xq)
    if len(Xp) < 2 or len(Xq) < 2:
        raise InvalidArgument("coral needs at least 2 rows per sample")
    cp = np.cov(Xp, rowvar=False, ddof=1).reshape(Xp.shape[1], -1)
    cq = np.cov(Xq, rowvar=False, ddof=1).reshape(Xq.shape[1], -1)
    return float(np.linalg.norm(cp - cq, "fro"))


def raw_moments(X, m):
    """Stacked sample means of x_i**j, ordered by feature then power."""
    X = as_sample(X)
    powers = np.arange(1, m + 1)
    return np.mean(X[:, :, None] ** powers, axis=0).ravel()


def l1_moment_distance(Xp, Xq, m=DEFAULT_ORDER):
    """l1 distance between the stacked raw marginal moments of two samples."""
    Xp, Xq = _pair(Xp, Xq)
    if m < 1:
        raise InvalidArgument("moment order must be >= 1")
    return float(np.sum(np.abs(raw_moments(Xp, m) - raw_moments(Xq, m))))

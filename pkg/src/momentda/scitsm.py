"""Scenario-invariant time series mapping (ScITSM).

Three steps: smoothed per-domain mean curves, linear correction functions
of the scenario parameters fitted at equidistant anchor time steps, and a
smooth connection of the anchor corrections by nested linear interpolation.

Time indices are 0-based throughout: anchors are integers in ``[0, t-1]``.
"""

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .errors import InvalidArgument


@dataclass(frozen=True)
class DomainSeries:
    data: np.ndarray   # (k, d, t)
    rho: np.ndarray    # (z,)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 2:
            data = data[:, None, :]
        if data.ndim != 3:
            raise InvalidArgument("series data must have shape (k, d, t)")
        if data.shape[2] < 2 or not np.all(np.isfinite(data)):
            raise InvalidArgument("series need t >= 2 finite time steps")
        rho = np.atleast_1d(np.asarray(self.rho, dtype=float))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "rho", rho)


def smooth_curve(y, smooth):
    """Penalized least squares ``argmin ||y - f||^2 + smooth * ||D2 f||^2`` on the grid."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if smooth == 0:
        return y.copy()
    if n < 4:
        warnings.warn("series too short for cubic smoothing; using raw means",
                      RuntimeWarning, stacklevel=2)
        return y.copy()
    # I + smooth * D'D is pentadiagonal; upper banded storage
    D = np.zeros((n - 2, n))
    idx = np.arange(n - 2)
    D[idx, idx], D[idx, idx + 1], D[idx, idx + 2] = 1.0, -2.0, 1.0
    A = np.eye(n) + smooth * D.T @ D
    ab = np.zeros((3, n))
    for k in range(3):
        ab[2 - k, k:] = np.diagonal(A, k)
    return solveh_banded(ab, y)


def fit_mean_curves(domains, smooth=0.0):
    """(s, d, t) tensor of smoothed pointwise means, one row per domain."""
    if smooth < 0:
        raise InvalidArgument("smooth must be >= 0")
    if not domains:
        raise InvalidArgument("need at least one domain")
    shape = domains[0].data.shape[1:]
    if any(dom.data.shape[1:] != shape for dom in domains):
        raise InvalidArgument("domains must share feature count and length")
    out = np.empty((len(domains),) + shape)
    for i, dom in enumerate(domains):
        means = dom.data.mean(axis=0)
        for f in range(shape[0]):
            out[i, f] = smooth_curve(means[f], smooth)
    return out


def equidistant_anchors(t, b):
    if b < 2:
        raise InvalidArgument("need at least 2 anchors")
    if b > t:
        raise InvalidArgument(f"{b} anchors do not fit in {t} time steps")
    anchors = np.rint(np.linspace(0, t - 1, b)).astype(int)
    if np.any(np.diff(anchors) <= 0):
        raise InvalidArgument("anchors are not strictly increasing")
    return anchors


@dataclass(frozen=True)
class CorrectionConfig:
    n_anchors: int = 10
    alpha: float = 1.0
    beta: float = 0.01
    delta: float = 0.9
    u: int = 2
    squared_data_term: bool = False
    tol: float = 1e-7
    max_iter: int = 5000

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.u < 0:
            raise InvalidArgument("alpha, beta and u must be >= 0")
        if not 0 < self.delta <= 1:
            raise InvalidArgument("delta must lie in (0, 1]")


@dataclass(frozen=True)
class SmoothingConfig:
    gamma: float = 1.0
    u: int = 2
    channel: int = 0
    weight_index: str = "rank"   # or "element"

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise InvalidArgument("gamma must lie in (0, 1]")
        if self.u < 0:
            raise InvalidArgument("u must be >= 0")
        if self.weight_index not in ("rank", "element"):
            raise InvalidArgument("weight_index must be 'rank' or 'element'")


@dataclass(frozen=True)
class CorrectionModel:
    anchors: np.ndarray   # (b,)
    theta: np.ndarray     # (b, z, d)
    bias: np.ndarray      # (b, d)
    config: CorrectionConfig = CorrectionConfig()
    objective: float = float("nan")
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=int)
        if len(anchors) < 2 or np.any(np.diff(anchors) <= 0):
            raise InvalidArgument("anchors must be >= 2 strictly increasing indices")
        object.__setattr__(self, "anchors", anchors)

    def corrections(self, rho):
        """(b, d) anchor corrections for scenario parameters ``rho``."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if rho.shape != (self.theta.shape[1],):
            raise InvalidArgument(f"rho must have length {self.theta.shape[1]}")
        return np.einsum("z,bzd->bd", rho, self.theta) + self.bias

    @classmethod
    def zero(cls, anchors, z, d):
        b = len(anchors)
        return cls(anchors, np.zeros((b, z, d)), np.zeros((b, d)))

    def to_dict(self):
        return {"anchors": self.anchors.tolist(), "theta": self.theta.tolist(),
                "bias": self.bias.tolist(), "config": asdict(self.config),
                "objective": self.objective, "converged": self.converged,
                "iterations": self.iterations}

    @classmethod
    def from_dict(cls, obj):
        return cls(np.asarray(obj["anchors"], int), np.asarray(obj["theta"], float),
                   np.asarray(obj["bias"], float), CorrectionConfig(**obj["config"]),
                   obj.get("objective", float("nan")), obj.get("converged", True),
                   obj.get("iterations", 0))

    def save(self, path, smoothing=None):
        obj = self.to_dict()
        if smoothing is not None:
            obj["smoothing"] = asdict(smoothing)
        with open(path, "w") as fh:
            json.dump(obj, fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            obj = json.load(fh)
        smoothing = SmoothingConfig(**obj["smoothing"]) if "smoothing" in obj else None
        return cls.from_dict(obj), smoothing


class _Objective:
    """Pieces of the correction objective for fixed curves and parameters.

    ``mu > 0`` replaces each data norm ``||r||`` by ``sqrt(||r||^2 + mu^2) - mu``.
    """

    def __init__(self, targets, rhos, cfg):
        self.Y = targets                    # (b, s, d)
        self.R = rhos                       # (s, z)
        self.cfg = cfg
        b = targets.shape[0]
        # C[j, r]: weight of ||theta_j - theta_r||^2 in the window sum of anchor j
        C = np.zeros((b, b))
        for j in range(b):
            for r in range(max(0, j - cfg.u), min(j + cfg.u, b - 1) + 1):
                if r != j:
                    C[j, r] = 1.0 / cfg.delta ** (abs(j - r) - 1)
        self.C = C
        sym = C + C.T
        self.lap = np.diag(sym.sum(1)) - sym

    def residuals(self, theta, bias):
        pred = np.einsum("sz,bzd->bsd", self.R, theta) + bias[:, None, :]
        return self.Y - pred

    def smooth_value(self, theta, bias, mu=0.0):
        res = self.residuals(theta, bias)
        if self.cfg.squared_data_term:
            data = np.sum(res**2)
        else:
            norms = np.linalg.norm(res, axis=2)
            data = np.sum(np.sqrt(norms**2 + mu**2) - mu) if mu > 0 else np.sum(norms)
        flat = theta.reshape(len(theta), -1)
        sq = np.sum(flat**2, 1)
        dist = np.maximum(sq[:, None] + sq[None, :] - 2 * flat @ flat.T, 0.0)
        return data + self.cfg.alpha * np.sum(self.C * dist)

    def value(self, theta, bias, mu=0.0):
        return self.smooth_value(theta, bias, mu) + self.cfg.beta * np.abs(theta).sum()

    def grad(self, theta, bias, mu=0.0):
        res = self.residuals(theta, bias)
        if self.cfg.squared_data_term:
            G = -2.0 * res
        else:
            norms = np.linalg.norm(res, axis=2, keepdims=True)
            if mu > 0:
                G = -res / np.sqrt(norms**2 + mu**2)
            else:
                safe = np.where(norms > 1e-15, norms, 1.0)
                G = np.where(norms > 1e-15, -res / safe, 0.0)
        g_theta = np.einsum("sz,bsd->bzd", self.R, G)
        g_bias = G.sum(axis=1)
        flat = theta.reshape(len(theta), -1)
        g_theta = g_theta + (2 * self.cfg.alpha * self.lap @ flat).reshape(theta.shape)
        return g_theta, g_bias


# accepted steps without strict decrease before the solve counts as stalled
_MAX_FLAT = 20


def _soft_threshold(x, k):
    return np.sign(x) * np.maximum(np.abs(x) - k, 0.0)


def _prox_grad_stage(obj, theta, bias, mu, tol, budget, step, trace):
    """Accelerated proximal gradient on the mu-smoothed objective.

    Momentum steps are kept only when they do not increase the exact
    objective; otherwise the momentum restarts from the current iterate,
    where a plain step must pass both the sufficient-decrease test for the
    smoothed part and the exact-objective test.  Returns the iterate plus a
    status: ``"tol"`` (gradient map below ``tol``), ``"stalled"`` (no
    admissible step; the exact objective cannot be lowered at working
    precision) or ``"budget"``.
    """
    beta = obj.cfg.beta
    value = obj.value(theta, bias)
    y_theta, y_bias, mom = theta, bias, 1.0
    it, status, flat = 0, "budget", 0
    for it in range(1, budget + 1):
        plain = mom == 1.0
        g_theta, g_bias = obj.grad(y_theta, y_bias, mu)
        base = obj.smooth_value(y_theta, y_bias, mu)
        for _ in range(60):
            new_theta = _soft_threshold(y_theta - step * g_theta, step * beta)
            new_bias = y_bias - step * g_bias
            dt, db = new_theta - y_theta, new_bias - y_bias
            bound = (base + np.sum(g_theta * dt) + np.sum(g_bias * db)
                     + (np.sum(dt**2) + np.sum(db**2)) / (2 * step))
            new_value = obj.value(new_theta, new_bias)
            if (obj.smooth_value(new_theta, new_bias, mu) <= bound
                    and (not plain or new_value <= value)):
                break
            step *= 0.5
        else:
            return theta, bias, value, "stalled", it, 1.0
        gmap = np.sqrt(np.sum(dt**2) + np.sum(db**2)) / step
        if new_value <= value:
            flat = flat + 1 if new_value >= value else 0
            nxt = (1.0 + np.sqrt(1.0 + 4.0 * mom**2)) / 2.0
            c = (mom - 1.0) / nxt
            y_theta = new_theta + c * (new_theta - theta)
            y_bias = new_bias + c * (new_bias - bias)
            theta, bias, value, mom = new_theta, new_bias, new_value, nxt
        else:
            y_theta, y_bias, mom = theta, bias, 1.0
        if flat >= _MAX_FLAT:
            return theta, bias, value, "stalled", it, 1.0
        if trace is not None:
            trace.append(value)
        if gmap <= tol and new_value <= value:
            status = "tol"
            break
        step *= 2.0
    return theta, bias, value, status, it, step


def fit_corrections(curves, rhos, cfg=None, trace=None):
    """Fit per-anchor linear corrections ``Phi_j(rho) = theta_j' rho + c_j``.

    Minimizes, over anchors j, the sum of
    ``sum_i ||curve_i(t_j) - Phi_j(rho_i)||_2``,
    ``alpha * sum_{|r-j|<=u} ||theta_j - theta_r||^2 / delta^(|j-r|-1)`` and
    ``beta * ||theta_j||_1``.

    Solved by accelerated proximal gradient (soft-thresholding for the l1
    part, momentum restarted whenever it would raise the objective).  The
    non-squared data norms are smoothed with a parameter mu that shrinks
    by 10x per stage; the last stage uses the exact norms with the zero
    subgradient at a vanishing residual.  Accepted iterates never increase
    the exact objective.  The solve also ends once no step can lower the
    exact objective at working precision.  ``converged`` is False only when
    ``cfg.max_iter`` runs out first.
    """
    cfg = cfg or CorrectionConfig()
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 3:
        raise InvalidArgument("curves must have shape (s, d, t)")
    s, d, t = curves.shape
    R = np.asarray(rhos, dtype=float).reshape(s, -1)
    anchors = equidistant_anchors(t, min(cfg.n_anchors, t))
    targets = np.transpose(curves[:, :, anchors], (2, 0, 1))   # (b, s, d)
    obj = _Objective(targets, R, cfg)
    b, z = len(anchors), R.shape[1]
    # start from intercept-only corrections: the mean anchor value over domains
    theta, bias = np.zeros((b, z, d)), targets.mean(axis=1)
    if trace is not None:
        trace.append(obj.value(theta, bias))

    if cfg.squared_data_term:
        mus = [0.0]
    else:
        scale = max(float(np.abs(targets).max()), 1e-12)
        mus = [scale * 10.0**-k for k in range(1, 12)] + [0.0]
    used, step, status = 0, 1.0, "budget"
    for mu in mus:
        theta, bias, value, status, it, step = _prox_grad_stage(
            obj, theta, bias, mu, max(cfg.tol, mu), cfg.max_iter - used, step, trace)
        used += it
        if status != "tol":
            break
    converged = status != "budget"
    return CorrectionModel(anchors, theta, bias, cfg, float(obj.value(theta, bias)),
                           bool(converged), used)


def pair_set(v, anchors, u):
    """Nested anchor-index pairs around time ``v``, outermost first.

    The innermost pair holds the nearest anchors at or below and at or
    above ``v`` (both equal the anchor when ``v`` coincides with one); each
    further pair widens by one anchor on both sides, up to ``u`` extra pairs.
    Pairs reaching past the first or last anchor are dropped.
    """
    anchors = np.asarray(anchors)
    b = len(anchors)
    if v < anchors[0] or v > anchors[-1]:
        warnings.warn(f"time {v} outside the anchor hull; clamped", RuntimeWarning,
                      stacklevel=2)
        v = min(max(v, anchors[0]), anchors[-1])
    lo = int(np.searchsorted(anchors, v, side="right") - 1)
    hi = int(np.searchsorted(anchors, v, side="left"))
    pairs = [(lo - r, hi + r) for r in range(u, -1, -1)
             if lo - r >= 0 and hi + r <= b - 1]
    return pairs, v


def pair_weights(pairs, gamma, weight_index="rank"):
    """Normalized weights ``gamma^((|R| - 2i + 2)/2)`` for the pairs in order.

    ``i`` is the 1-based position of the pair (``"rank"``) or the 1-based
    anchor index of its left element (``"element"``).
    """
    size = len(pairs)
    if weight_index == "rank":
        idx = np.arange(1, size + 1, dtype=float)
    else:
        idx = np.array([p[0] + 1 for p in pairs], dtype=float)
    logw = (size - 2 * idx + 2) / 2 * np.log(gamma)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def correction_curve(model, rho, t, smoothing=None):
    """(d, t) smoothly connected correction for scenario ``rho``."""
    smoothing = smoothing or SmoothingConfig()
    phi = model.corrections(rho)           # (b, d)
    anchors = model.anchors
    if anchors[-1] > t - 1:
        raise InvalidArgument("model anchors exceed the series length")
    out = np.zeros((phi.shape[1], t))
    n_clamped = int(anchors[0] + max(0, t - 1 - anchors[-1]))
    if n_clamped:
        warnings.warn(f"{n_clamped} time steps outside the anchor hull were clamped",
                      RuntimeWarning, stacklevel=2)
    for v in range(t):
        vv = min(max(v, anchors[0]), anchors[-1])
        pairs, _ = pair_set(vv, anchors, smoothing.u)
        weights = pair_weights(pairs, smoothing.gamma, smoothing.weight_index)
        total = np.zeros(phi.shape[1])
        for w, (i, j) in zip(weights, pairs):
            if i == j:
                interp = phi[i]
            else:
                ti, tj = anchors[i], anchors[j]
                interp = phi[i] + (vv - ti) * (phi[j] - phi[i]) / (tj - ti)
            total += w * interp
        out[:, v] = total
    return out


def transform(x, rho, model, smoothing=None):
    """Corrected series ``x_v - correction_v(rho)`` on the configured channel."""
    smoothing = smoothing or SmoothingConfig()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    d, t = x.shape
    if not 0 <= smoothing.channel < d:
        raise InvalidArgument(f"channel {smoothing.channel} outside 0..{d - 1}")
    corr = correction_curve(model, rho, t, smoothing)
    return x[smoothing.channel] - corr[smoothing.channel]


def transform_domain(domain, model, smoothing=None):
    """(k, t) corrected series for every series of one domain."""
    smoothing = smoothing or SmoothingConfig()
    corr = correction_curve(model, domain.rho, domain.data.shape[2], smoothing)
    return domain.data[:, smoothing.channel, :] - corr[smoothing.channel]


def fit(domains, cfg=None, smooth=0.0):
    """Mean curves followed by the correction fit."""
    curves = fit_mean_curves(domains, smooth)
    return fit_corrections(curves, [dom.rho for dom in domains], cfg)

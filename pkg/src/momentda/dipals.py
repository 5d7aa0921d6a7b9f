"""Domain-invariant iterative partial least squares (DIPALS).

NIPALS for a single response, with each weight direction pulled towards
directions along which source and target have similar variance.  The pull
is the penalty ``gamma * w' Lam w``, where ``Lam`` replaces the eigenvalues of
the covariance difference by their absolute values.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import (DegenerateComponentError, IllConditionedError,
                     InvalidArgument, RankError)
from .metrics import as_sample

JACOBI_TOL = 1e-12
MAX_CONDITION = 1e12


def jacobi_eigh(A, tol=JACOBI_TOL, max_sweeps=100):
    """Eigenvalues and eigenvectors of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` with ``A = V diag(values) V'``; values are
    sorted ascending.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise InvalidArgument("matrix must be square")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = max(np.linalg.norm(A), np.finfo(float).tiny)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(A, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J' A J with the rotation acting on rows/cols p, q
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * rp - s * rq, s * rp + c * rq
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * cp - s * cq, s * cp + c * cq
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p], V[:, q] = c * vp - s * vq, s * vp + c * vq
    values = np.diag(A).copy()
    order = np.argsort(values)
    return values[order], V[:, order]


def _covariance_difference(Sp, Sq):
    Sp = Sp - Sp.mean(0)
    Sq = Sq - Sq.mean(0)
    return Sp.T @ Sp / (len(Sp) - 1) - Sq.T @ Sq / (len(Sq) - 1)


def lambda_matrix(Sp, Sq):
    """``K diag(|lambda|) K'`` for the eigendecomposition of Cov(Sp) - Cov(Sq)."""
    Sp, Sq = as_sample(Sp, "Sp"), as_sample(Sq, "Sq")
    if Sp.shape[1] != Sq.shape[1]:
        raise InvalidArgument("source and target must share the feature dimension")
    if len(Sp) < 2 or len(Sq) < 2:
        raise InvalidArgument("need at least 2 rows per domain")
    values, K = jacobi_eigh(_covariance_difference(Sp, Sq))
    L = (K * np.abs(values)) @ K.T
    return 0.5 * (L + L.T)


def direction(S, y, Lam, gamma):
    """Unit weight vector ``normalize((I + gamma/y'y Lam)^-1 S'y / y'y)``."""
    S = np.asarray(S, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    yy = float(y @ y)
    if yy <= 0:
        raise InvalidArgument("response has zero variance")
    d = S.shape[1]
    M = np.eye(d) + (gamma / yy) * np.asarray(Lam, dtype=float)
    cond = np.linalg.cond(M)
    if not cond <= MAX_CONDITION:
        raise IllConditionedError(f"regularized system has condition number {cond:.3g}")
    try:
        v = cho_solve(cho_factor(M), S.T @ y / yy)
    except LinAlgError as exc:
        raise IllConditionedError(str(exc)) from exc
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidArgument("response is orthogonal to every input column")
    return v / norm


def gamma_heuristic(S, y, Lam):
    """Weight making both objective terms equal along the unpenalized direction.

    Returns 0 and emits a warning when ``w0' Lam w0 == 0``.
    """
    S = np.asarray(S, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    w0 = direction(S, y, Lam, 0.0)
    denom = float(w0 @ Lam @ w0)
    if denom <= 0:
        warnings.warn("regularizer is inactive along the NIPALS direction; gamma set to 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.sum((S - np.outer(y, w0)) ** 2) / denom)


@dataclass(frozen=True)
class DiplsConfig:
    n_components: int = 5
    gamma: object = "heuristic"   # float >= 0, "heuristic" or "zero"

    def __post_init__(self):
        if self.n_components < 1:
            raise InvalidArgument("n_components must be >= 1")
        if isinstance(self.gamma, str):
            if self.gamma not in ("heuristic", "zero"):
                raise InvalidArgument(f"unknown gamma mode {self.gamma!r}")
        elif not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise InvalidArgument("fixed gamma must be finite and >= 0")

    @classmethod
    def parse_gamma(cls, text):
        if text in ("heuristic", "zero"):
            return text
        value = float(text)
        return "zero" if value == 0 else value


@dataclass(frozen=True)
class DiplsModel:
    W: np.ndarray
    P: np.ndarray
    c: np.ndarray
    b: np.ndarray
    x_mean_source: np.ndarray
    x_mean_target: np.ndarray
    y_mean: float
    gammas: np.ndarray = None
    scores: np.ndarray = None
    var_diff: np.ndarray = None
    source_norms: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {k: getattr(self, k) for k in ("W", "P", "c", "b", "x_mean_source",
                                             "x_mean_target", "gammas", "var_diff")}
        out = {k: np.asarray(v).tolist() for k, v in out.items() if v is not None}
        out["y_mean"] = float(self.y_mean)
        return out

    @classmethod
    def from_dict(cls, obj):
        arr = {k: np.asarray(v, dtype=float) for k, v in obj.items() if k != "y_mean"}
        return cls(W=arr["W"], P=arr["P"], c=arr["c"], b=arr["b"],
                   x_mean_source=arr["x_mean_source"], x_mean_target=arr["x_mean_target"],
                   y_mean=float(obj["y_mean"]), gammas=arr.get("gammas"),
                   var_diff=arr.get("var_diff"))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def fit(Xp, y, Xq, config=None):
    """Fit DIPALS on labeled source ``Xp, y`` and unlabeled target ``Xq``.

    The target loading uses ``(t_p' t_q)^-1 t_q' T`` as in the original
    algorithm, so source and target need the same number of rows.  A warning
    is emitted when ``t_p' t_q`` is nearly zero relative to the score norms.
    """
    config = config or DiplsConfig()
    Xp, Xq = as_sample(Xp, "Xp"), as_sample(Xq, "Xq")
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != len(Xp):
        raise InvalidArgument("y must have one entry per source row")
    if Xp.shape[1] != Xq.shape[1]:
        raise InvalidArgument("source and target must share the feature dimension")
    if len(Xp) != len(Xq):
        raise InvalidArgument("source and target need the same number of rows")
    s, d = config.n_components, Xp.shape[1]
    if s > d:
        raise InvalidArgument(f"n_components={s} exceeds the {d} features")

    x_mean_s, x_mean_t, y_mean = Xp.mean(0), Xq.mean(0), float(y.mean())
    S, T, yi = Xp - x_mean_s, Xq - x_mean_t, y - y_mean
    W, Pm = np.zeros((d, s)), np.zeros((d, s))
    c, gammas, var_diff = np.zeros(s), np.zeros(s), np.zeros(s)
    scores = np.zeros((len(Xp), s))
    norms = [np.linalg.norm(S)]
    k = len(Xp)

    for i in range(s):
        diffcov = S.T @ S / (k - 1) - T.T @ T / (k - 1)
        values, K = jacobi_eigh(diffcov)
        Lam = (K * np.abs(values)) @ K.T
        if config.gamma == "zero":
            gamma = 0.0
        elif config.gamma == "heuristic":
            gamma = gamma_heuristic(S, yi, Lam)
        else:
            gamma = float(config.gamma)
        w = direction(S, yi, Lam, gamma)
        tp, tq = S @ w, T @ w
        tptp = float(tp @ tp)
        if tptp < 1e-14:
            raise DegenerateComponentError(
                f"source score of component {i + 1} vanished", i + 1)
        tptq = float(tp @ tq)
        if abs(tptq) < 1e-8 * np.sqrt(tptp * float(tq @ tq)) or tptq == 0:
            warnings.warn(f"component {i + 1}: source and target scores nearly "
                          "orthogonal; target deflation is ill-conditioned",
                          RuntimeWarning, stacklevel=2)
        c[i] = tp @ yi / tptp
        p = S.T @ tp / tptp
        S = S - np.outer(tp, p)
        if tptq != 0:
            T = T - np.outer(tq, T.T @ tq / tptq)
        yi = yi - c[i] * tp
        W[:, i], Pm[:, i], gammas[i], scores[:, i] = w, p, gamma, tp
        var_diff[i] = w @ diffcov @ w
        norms.append(np.linalg.norm(S))

    PtW = Pm.T @ W
    if np.linalg.matrix_rank(PtW) < s:
        raise RankError("P'W is singular")
    b = W @ np.linalg.solve(PtW, c)
    return DiplsModel(W=W, P=Pm, c=c, b=b, x_mean_source=x_mean_s,
                      x_mean_target=x_mean_t, y_mean=y_mean, gammas=gammas,
                      scores=scores, var_diff=var_diff, source_norms=np.asarray(norms))


def predict(model, X):
    X = as_sample(X)
    if X.shape[1] != len(model.b):
        raise InvalidArgument(f"expected {len(model.b)} features, got {X.shape[1]}")
    return (X - model.x_mean_source) @ model.b + model.y_mean

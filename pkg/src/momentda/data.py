"""Synthetic data generators and CSV helpers.

Every generator draws from ``numpy.random.Philox`` (a counter-based
bit generator) seeded with the given integer, so a seed fixes the output
bit-for-bit on every platform numpy supports.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .mann import LabeledBatch
from .scitsm import DomainSeries


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def load_csv(path):
    """Float matrix from a headerless or single-header CSV file."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidArgument(f"{path} is empty")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise InvalidArgument(f"{path}: non-numeric cell ({exc})") from exc
    if data.ndim != 2 or data.size == 0:
        raise InvalidArgument(f"{path} has ragged or empty rows")
    return data


def save_csv(path, data, header=None):
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        for row in data:
            writer.writerow([repr(float(v)) for v in row])


def load_labels(path, n_classes=None):
    """Labels from a CSV: one integer column or an (n, c) probability matrix."""
    Y = load_csv(path)
    if Y.shape[1] == 1:
        y = Y[:, 0].astype(int)
        return np.eye(n_classes or int(y.max()) + 1)[y]
    return Y


@dataclass(frozen=True)
class ToyData:
    source: LabeledBatch
    target: np.ndarray
    target_labels: np.ndarray


TOY_CENTERS = np.array([[-1.5, 0.0], [1.5, 0.0], [0.0, 2.2]])


def gen_toy(seed=0, n_per_class=213, angle=0.0, shift=(0.0, 1.2), spread=0.5):
    """Three 2-D Gaussian classes; the target is the source law rotated by
    ``angle`` radians about the source centroid and then shifted.

    Source and target are drawn independently.  With ``angle=0`` and
    ``shift=(0, 0)`` both follow the same distribution.
    """
    if n_per_class < 10:
        raise InvalidArgument("n_per_class must be >= 10")
    rng = make_rng(seed)
    src_rng, tgt_rng = rng.spawn(2)

    def draw(r):
        X = np.concatenate([c + spread * r.standard_normal((n_per_class, 2))
                            for c in TOY_CENTERS])
        y = np.repeat(np.arange(len(TOY_CENTERS)), n_per_class)
        return X, y

    Xs, ys = draw(src_rng)
    Xt, yt = draw(tgt_rng)
    center = TOY_CENTERS.mean(axis=0)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    Xt = (Xt - center) @ rot.T + center + np.asarray(shift, dtype=float)
    return ToyData(LabeledBatch.from_classes(Xs, ys, 3), Xt, yt)


def gen_overpenalization(seed=0, n=10**6):
    """Samples of p = 0.8 Y + 0.1, qL = N(0.5, 0.27^2) and qR = 0.8 Y + 0.12.

    p and qR are built from the same Beta(0.4, 0.4) draws Y, so their
    difference is exactly the 0.02 shift.
    """
    rng = make_rng(seed)
    y = rng.beta(0.4, 0.4, n)
    p = 0.8 * y + 0.1
    qL = rng.normal(0.5, 0.27, n)
    qR = 0.8 * y + 0.12
    return p, qL, qR


def base_signal(t, d):
    """Shared smooth (d, t) signal."""
    v = np.linspace(0.0, 1.0, t)
    return np.stack([np.sin(2 * np.pi * (v + 0.15 * f)) + 0.5 * v for f in range(d)])


def gen_multidomain_ts(seed=0, s_domains=4, k=50, d=2, t=60, rhos=None, noise=0.1,
                       offset=(1.0, -0.5), trend=(0.5, 0.25)):
    """Domains sharing one base signal plus an offset linear in ``rho``.

    Series ``n`` of domain ``i``, feature ``f`` at time ``v`` (0..t-1)::

        base_f(v) + rho_i . (offset_f + trend_f * v / (t - 1)) + noise * e

    with standard normal ``e``.  ``rhos`` defaults to ``linspace(0, 1, s)``
    as 1-D parameters; ``offset`` and ``trend`` give one coefficient per
    feature (cycled) applied to every entry of rho.
    """
    if s_domains < 2:
        raise InvalidArgument("need at least 2 domains")
    rng = make_rng(seed)
    if rhos is None:
        rhos = np.linspace(0.0, 1.0, s_domains)[:, None]
    rhos = np.asarray(rhos, dtype=float).reshape(s_domains, -1)
    v = np.arange(t) / max(t - 1, 1)
    off = np.resize(np.asarray(offset, float), d)
    tr = np.resize(np.asarray(trend, float), d)
    base = base_signal(t, d)
    domains = []
    for rho in rhos:
        shift = rho.sum() * (off[:, None] + tr[:, None] * v[None, :])
        data = base + shift + noise * rng.standard_normal((k, d, t))
        domains.append(DomainSeries(data, rho))
    return domains


def true_offset(rho, d, t, offset=(1.0, -0.5), trend=(0.5, 0.25)):
    """Noise-free (d, t) offset added to a domain with parameters ``rho``."""
    v = np.arange(t) / max(t - 1, 1)
    off = np.resize(np.asarray(offset, float), d)
    tr = np.resize(np.asarray(trend, float), d)
    return np.sum(rho) * (off[:, None] + tr[:, None] * v[None, :])


def gen_dipals(seed=0, n=100, d=8, shift=1.5, noise=0.05):
    """Regression data whose target domain inflates variance along extra
    directions that carry no signal.

    Returns ``(Xs, ys, Xt, yt)``.
    """
    rng = make_rng(seed)
    latent = rng.standard_normal((d, 3))
    beta = rng.standard_normal(3)

    def draw(extra):
        z = rng.standard_normal((n, 3))
        X = z @ latent.T + 0.1 * rng.standard_normal((n, d))
        X[:, -2:] += extra * rng.standard_normal((n, 2))
        y = z @ beta + noise * rng.standard_normal(n)
        return X, y

    Xs, ys = draw(0.0)
    Xt, yt = draw(shift)
    return Xs, ys, Xt, yt

"""Single-hidden-layer softmax classifier with a CMD penalty on the hidden layer.

Training minimizes ``CE(source) + reg_weight * cmd_m(h(Xs_batch), h(Xt_batch))``
over random minibatches, where ``h`` is the sigmoid hidden layer.  Setting
``reg_weight = 0`` gives plain supervised SGD.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DivergenceError, InvalidArgument
from .metrics import as_sample, default_weights

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class NetParams:
    W0: np.ndarray  # (w, d)
    b0: np.ndarray  # (w,)
    W1: np.ndarray  # (c, w)
    b1: np.ndarray  # (c,)

    @property
    def shape(self):
        """(d, w, c)"""
        return self.W0.shape[1], self.W0.shape[0], self.W1.shape[0]

    def arrays(self):
        return (self.W0, self.b0, self.W1, self.b1)

    def map(self, fn, *others):
        return NetParams(*(fn(*xs) for xs in zip(self.arrays(),
                                                   *(o.arrays() for o in others))))

    def __add__(self, other):
        return self.map(np.add, other)

    def __sub__(self, other):
        return self.map(np.subtract, other)

    def __mul__(self, scalar):
        return self.map(lambda a: a * scalar)

    __rmul__ = __mul__

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, vec, d, w, c):
        sizes = [w * d, w, c * w, c]
        parts = np.split(np.asarray(vec, dtype=float), np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(w, d), parts[1], parts[2].reshape(c, w), parts[3])

    @classmethod
    def zeros(cls, d, w, c):
        return cls(np.zeros((w, d)), np.zeros(w), np.zeros((c, w)), np.zeros(c))

    @classmethod
    def init(cls, d, w, c, rng):
        """Uniform in [-r, r] with r = sqrt(6 / (fan_in + fan_out)); zero biases."""
        r0 = np.sqrt(6.0 / (d + w))
        r1 = np.sqrt(6.0 / (w + c))
        return cls(rng.uniform(-r0, r0, (w, d)), np.zeros(w),
                   rng.uniform(-r1, r1, (c, w)), np.zeros(c))

    def to_dict(self):
        d, w, c = self.shape
        return {"shape": {"d": d, "w": w, "c": c},
                "W0": self.W0.ravel().tolist(), "b0": self.b0.tolist(),
                "W1": self.W1.ravel().tolist(), "b1": self.b1.tolist()}

    @classmethod
    def from_dict(cls, obj):
        d, w, c = (obj["shape"][k] for k in ("d", "w", "c"))
        return cls(np.asarray(obj["W0"], float).reshape(w, d), np.asarray(obj["b0"], float),
                   np.asarray(obj["W1"], float).reshape(c, w), np.asarray(obj["b1"], float))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = as_sample(self.inputs, "inputs")
        Y = np.asarray(self.labels, dtype=float)
        if Y.ndim != 2 or len(Y) != len(X):
            raise InvalidArgument("labels must be an (n, c) matrix matching the inputs")
        if np.any(Y < 0) or np.any(Y > 1) or np.any(np.abs(Y.sum(1) - 1) > 1e-9):
            raise InvalidArgument("label rows must be probability vectors")
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "labels", Y)

    @classmethod
    def from_classes(cls, X, y, n_classes=None):
        y = np.asarray(y, dtype=int).ravel()
        n_classes = n_classes or int(y.max()) + 1
        return cls(X, np.eye(n_classes)[y])

    def __len__(self):
        return len(self.inputs)

    def take(self, idx):
        return LabeledBatch(self.inputs[idx], self.labels[idx])


@dataclass(frozen=True)
class TrainConfig:
    hidden_width: int = 15
    cmd_order: int = 5
    reg_weight: float = 1.0
    batch_size: int = 64
    max_iters: int = 10000
    optimizer: str = "adadelta"
    learning_rate: float = 1.0
    decay: float = 0.95
    epsilon: float = 1e-6
    rng_seed: int = 0
    # None means unit weights, which are the default weights for sigmoid
    # activations in [0, 1]
    cmd_weights: tuple = None

    def __post_init__(self):
        if self.reg_weight < 0:
            raise InvalidArgument("reg_weight must be >= 0")
        if self.reg_weight > 0 and self.batch_size < 2:
            raise InvalidArgument("batch_size must be >= 2 when the CMD penalty is on")
        if self.batch_size < 1 or self.hidden_width < 1 or self.cmd_order < 1:
            raise InvalidArgument("batch_size, hidden_width and cmd_order must be >= 1")
        if not 0 < self.decay < 1:
            raise InvalidArgument("decay must lie in (0, 1)")
        if self.optimizer not in ("sgd", "adagrad", "adadelta"):
            raise InvalidArgument(f"unknown optimizer {self.optimizer!r}")

    def replace(self, **changes):
        return TrainConfig(**{**asdict(self), **changes})

    def weights(self):
        if self.cmd_weights is None:
            return default_weights(0.0, 1.0, self.cmd_order)
        return np.asarray(self.cmd_weights, dtype=float)


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_inputs(params, X):
    X = as_sample(X)
    if X.shape[1] != params.W0.shape[1]:
        raise InvalidArgument(
            f"input has {X.shape[1]} features, network expects {params.W0.shape[1]}")
    return X


def hidden(params, X):
    return sigmoid(X @ params.W0.T + params.b0)


def forward(params, X):
    """Hidden activations and class probabilities for the rows of ``X``."""
    X = _check_inputs(params, X)
    H = hidden(params, X)
    return H, softmax(H @ params.W1.T + params.b1)


def predict(params, X):
    """Class indices; ties go to the lowest index."""
    return np.argmax(forward(params, X)[1], axis=1)


def accuracy(params, X, y):
    y = np.asarray(y)
    if y.ndim == 2:
        y = np.argmax(y, axis=1)
    return float(np.mean(predict(params, X) == y))


def cross_entropy(params, batch):
    _, probs = forward(params, batch.inputs)
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.sum(batch.labels * np.log(probs), axis=1)))


def _ce_loss_grad(params, batch):
    X, Y = _check_inputs(params, batch.inputs), batch.labels
    H, probs = forward(params, X)
    n = len(X)
    with np.errstate(divide="ignore"):
        loss = -np.sum(Y * np.log(probs)) / n
    delta = (probs - Y) / n
    dA = (delta @ params.W1) * H * (1.0 - H)
    grad = NetParams(dA.T @ X, dA.sum(axis=0), delta.T @ H, delta.sum(axis=0))
    return loss, grad


def ce_grad(params, batch):
    """Gradient of the mean cross-entropy over ``batch``."""
    return _ce_loss_grad(params, batch)[1]


def _hidden_cmd_grad(Hs, Ht, m, weights):
    """CMD value and its gradient w.r.t. the hidden activations of both batches."""
    ns, nt = len(Hs), len(Ht)
    ms, mt = Hs.mean(0), Ht.mean(0)
    Cs, Ct = Hs - ms, Ht - mt
    Gs = np.zeros_like(Hs)
    Gt = np.zeros_like(Ht)
    value = 0.0

    diff = ms - mt
    norm = np.linalg.norm(diff)
    value += weights[0] * norm
    if norm > _ZERO_NORM:
        u = weights[0] * diff / norm
        Gs += u / ns
        Gt -= u / nt

    # powers of the centered activations: pow[k] = C**k
    pow_s, pow_t = [np.ones_like(Cs), Cs], [np.ones_like(Ct), Ct]
    for j in range(2, m + 1):
        pow_s.append(pow_s[-1] * Cs)
        pow_t.append(pow_t[-1] * Ct)
        diff = pow_s[j].mean(0) - pow_t[j].mean(0)
        norm = np.linalg.norm(diff)
        value += weights[j - 1] * norm
        if norm <= _ZERO_NORM:
            continue
        u = weights[j - 1] * diff / norm
        # d/dh_ik mean_i (h_ik - mean_k)^j = j/n (C^{j-1}_ik - mean_i C^{j-1}_ik)
        Gs += u * j / ns * (pow_s[j - 1] - pow_s[j - 1].mean(0))
        Gt -= u * j / nt * (pow_t[j - 1] - pow_t[j - 1].mean(0))
    return value, Gs, Gt


def hidden_cmd(params, Xs, Xt, m=5, weights=None):
    weights = default_weights(0, 1, m) if weights is None else np.asarray(weights, float)
    Hs, Ht = hidden(params, as_sample(Xs)), hidden(params, as_sample(Xt))
    return _hidden_cmd_grad(Hs, Ht, m, weights)[0]


def _cmd_loss_grad(params, Xs, Xt, m, weights):
    Xs, Xt = _check_inputs(params, Xs), _check_inputs(params, Xt)
    if len(Xs) < 2 or len(Xt) < 2:
        raise InvalidArgument("CMD gradient needs at least 2 rows per batch")
    Hs, Ht = hidden(params, Xs), hidden(params, Xt)
    value, Gs, Gt = _hidden_cmd_grad(Hs, Ht, m, weights)
    As = Gs * Hs * (1.0 - Hs)
    At = Gt * Ht * (1.0 - Ht)
    gW0 = As.T @ Xs + At.T @ Xt
    gb0 = As.sum(0) + At.sum(0)
    return value, NetParams(gW0, gb0, np.zeros_like(params.W1), np.zeros_like(params.b1))


def cmd_grad(params, Xs, Xt, m=5, weights=None):
    """Gradient of the hidden-layer CMD; the output-layer blocks are zero.

    A moment term whose difference norm is below 1e-12 contributes nothing
    (the zero subgradient at the kink of the norm).
    """
    weights = default_weights(0, 1, m) if weights is None else np.asarray(weights, float)
    return _cmd_loss_grad(params, Xs, Xt, m, weights)[1]


def objective(params, batch, Xt, config):
    """``CE + reg_weight * cmd`` on one source batch and one target batch."""
    value = cross_entropy(params, batch)
    if config.reg_weight > 0:
        value += config.reg_weight * hidden_cmd(
            params, batch.inputs, Xt, config.cmd_order, config.weights())
    return value


def objective_grad(params, batch, Xt, config):
    loss, grad = _ce_loss_grad(params, batch)
    if config.reg_weight > 0:
        reg, g_cmd = _cmd_loss_grad(params, batch.inputs, Xt,
                                    config.cmd_order, config.weights())
        loss += config.reg_weight * reg
        grad = grad + config.reg_weight * g_cmd
    return loss, grad


@dataclass(frozen=True)
class OptimizerState:
    z: NetParams = None
    v: NetParams = None
    step: int = 0

    @classmethod
    def create(cls, params, config):
        zeros = params.map(np.zeros_like)
        if config.optimizer == "adagrad":
            return cls(z=params.map(np.ones_like), step=0)
        if config.optimizer == "adadelta":
            return cls(z=zeros, v=zeros, step=0)
        return cls(step=0)


def optimizer_step(state, params, grad, config):
    """Apply one update; returns ``(params, state)``.

    adagrad: ``z += g**2`` first, then ``params -= lr * g / sqrt(z)`` (z starts at 1).
    adadelta: ``z = w z + (1-w) g**2``, ``dx = sqrt(v + eps) / sqrt(z + eps) * g``,
    ``v = w v + (1-w) dx**2``, ``params -= lr * dx``.
    """
    lr = config.learning_rate
    if config.optimizer == "sgd":
        return params - lr * grad, OptimizerState(step=state.step + 1)
    if config.optimizer == "adagrad":
        z = state.z.map(lambda z, g: z + g * g, grad)
        update = grad.map(lambda g, z: g / np.sqrt(z), z)
        return params - lr * update, OptimizerState(z=z, step=state.step + 1)
    omega, eps = config.decay, config.epsilon
    z = state.z.map(lambda z, g: omega * z + (1 - omega) * g * g, grad)
    update = grad.map(lambda g, z, v: np.sqrt(v + eps) / np.sqrt(z + eps) * g, z, state.v)
    v = state.v.map(lambda v, u: omega * v + (1 - omega) * u * u, update)
    return params - lr * update, OptimizerState(z=z, v=v, step=state.step + 1)


class _EpochSampler:
    """Minibatch indices from reshuffled passes over ``n`` rows."""

    def __init__(self, n, batch_size, rng):
        self.n, self.size, self.rng = n, min(batch_size, n), rng
        self.order, self.pos = rng.permutation(n), 0

    def next(self):
        if self.pos + self.size > self.n:
            self.order, self.pos = self.rng.permutation(self.n), 0
        idx = self.order[self.pos:self.pos + self.size]
        self.pos += self.size
        return idx


def _run(config, source, target, init, callback):
    root = np.random.Generator(np.random.Philox(config.rng_seed))
    init_rng, src_rng, tgt_rng = root.spawn(3)
    d, c = source.inputs.shape[1], source.labels.shape[1]
    params = init if init is not None else NetParams.init(d, config.hidden_width, c, init_rng)
    state = OptimizerState.create(params, config)
    src = _EpochSampler(len(source), config.batch_size, src_rng)
    tgt = _EpochSampler(len(target), config.batch_size, tgt_rng) if target is not None else None
    for it in range(config.max_iters):
        batch = source.take(src.next())
        if tgt is not None and config.reg_weight > 0:
            loss, grad = objective_grad(params, batch, target[tgt.next()], config)
        else:
            loss, grad = _ce_loss_grad(params, batch)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {it}", it)
        params, state = optimizer_step(state, params, grad, config)
        if callback is not None:
            callback(it, params, loss)
    return params


def sgd_train(config, source, init=None, callback=None):
    """Plain supervised minibatch training on the source data."""
    return _run(config, source, None, init, callback)


def train(config, source, target, init=None, callback=None):
    """Minibatch training of ``CE + reg_weight * cmd`` for ``config.max_iters`` steps.

    Deterministic for a fixed ``config.rng_seed``.  With ``reg_weight == 0``
    the trajectory is identical to :func:`sgd_train`.
    """
    target = as_sample(target, "target")
    if target.shape[1] != source.inputs.shape[1]:
        raise InvalidArgument("source and target must share the feature dimension")
    return _run(config, source, target, init, callback)


def split_indices(n, split, rng):
    """Shuffled (train, validation) index arrays with ``round(split * n)`` training rows."""
    if not 0 < split < 1:
        raise InvalidArgument("split must lie in (0, 1)")
    n_train = int(round(split * n))
    if n_train < 2 or n - n_train < 1:
        raise InvalidArgument(f"split {split} of {n} rows leaves an empty part")
    order = rng.permutation(n)
    return order[:n_train], order[n_train:]


def reverse_validation(config, source, target, split=0.9, init=None):
    """Reverse-validation error: an unsupervised proxy for the target risk.

    A forward model is trained on the source/target training splits and used
    to pseudo-label the target split; a reverse model is then trained with
    the roles swapped and scored on the held-out source rows.
    """
    target = as_sample(target, "target")
    rng = np.random.Generator(np.random.Philox(config.rng_seed)).spawn(1)[0]
    s_train, s_val = split_indices(len(source), split, rng)
    t_train, _ = split_indices(len(target), split, rng)
    S, T = source.take(s_train), target[t_train]
    forward_model = train(config, S, T, init=init)
    pseudo = LabeledBatch.from_classes(T, predict(forward_model, T), source.labels.shape[1])
    reverse_model = train(config, pseudo, S.inputs)
    val = source.take(s_val)
    return 1.0 - accuracy(reverse_model, val.inputs, val.labels)

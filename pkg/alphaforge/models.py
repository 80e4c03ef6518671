import logging

import numpy as np

from alphaforge import grad_engine as ge
from alphaforge.errors import NumericalError

logger = logging.getLogger(__name__)


def xavier_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class NeuralModel:
    """Shared parameter bookkeeping; subclasses fill self.params in a fixed order"""

    kind = None

    def __init__(self):
        self.params = {}

    def _add(self, name, data):
        self.params[name] = ge.Parameter(data, name)

    def _dense(self, prefix, fan_in, fan_out, rng, init):
        if init == "zeros":
            weight = np.zeros((fan_out, fan_in))
        else:
            weight = xavier_uniform(rng, (fan_out, fan_in), fan_in, fan_out)
        self._add(f"{prefix}.weight", weight)
        self._add(f"{prefix}.bias", np.zeros(fan_out))

    def _layer(self, prefix, x):
        return ge.affine(x, self.params[f"{prefix}.weight"], self.params[f"{prefix}.bias"])

    def parameters(self):
        return list(self.params.values())

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise KeyError(f"parameter names differ: {sorted(missing)}")
        for name, p in self.params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise ge.ShapeError(f"{name}: stored {value.shape} vs model {p.data.shape}")
            p.data = value.copy()
            p.grad = np.zeros_like(p.data)

    def predict(self, X):
        """Regression output for every row of X, dropout off"""
        reg = self.forward(np.asarray(X, dtype=np.float64), training=False)[0]
        return reg.data.reshape(-1)


class DualTaskMLP(NeuralModel):
    """
    Shared trunk F -> 64 -> 32 (ReLU, dropout) feeding two heads:
    a linear return regressor and a sigmoid up/down classifier
    """

    kind = "mlp"

    def __init__(self, n_features, hidden=(64, 32), dropout=0.1, rng=None, init="xavier"):
        super().__init__()
        rng = rng or np.random.Generator(np.random.PCG64(0))
        self.n_features = n_features
        self.hidden = tuple(hidden)
        self.dropout = dropout
        sizes = (n_features,) + self.hidden
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
            self._dense(f"layer{i}", fan_in, fan_out, rng, init)
        self._dense("reg_head", self.hidden[-1], 1, rng, init)
        self._dense("cls_head", self.hidden[-1], 1, rng, init)

    def forward(self, X, training=False, rng=None):
        h = X
        for i in range(1, len(self.hidden) + 1):
            h = ge.relu(self._layer(f"layer{i}", h))
            h = ge.dropout(h, self.dropout, rng, training)
        return self._layer("reg_head", h), ge.sigmoid(self._layer("cls_head", h))

    def loss(self, X, y, label_up, cls_weight=0.5, training=False, rng=None):
        reg, prob = self.forward(X, training, rng)
        reg_loss = ge.mse(reg, y)
        cls_loss = ge.bce(prob, label_up)
        return ge.combined(reg_loss, cls_loss, cls_weight), reg_loss, cls_loss

    def predict_proba(self, X):
        return self.forward(np.asarray(X, dtype=np.float64), training=False)[1].data.reshape(-1)

    def config(self):
        return {"hidden": list(self.hidden), "dropout": self.dropout}


class Cnn1D(NeuralModel):
    """Treats the factor vector as a length-F sequence: conv(k=3, 8 ch) -> dense 32 -> 1"""

    kind = "cnn"

    def __init__(self, n_features, channels=8, kernel=3, hidden=32, rng=None, init="xavier"):
        super().__init__()
        if n_features < kernel:
            raise ge.ShapeError(f"cnn needs at least {kernel} features, got {n_features}")
        rng = rng or np.random.Generator(np.random.PCG64(0))
        self.n_features = n_features
        self.channels = channels
        self.kernel = kernel
        self.hidden = hidden
        if init == "zeros":
            self._add("conv.weight", np.zeros((channels, kernel)))
        else:
            self._add("conv.weight", xavier_uniform(rng, (channels, kernel), kernel, channels * kernel))
        self._add("conv.bias", np.zeros(channels))
        self._dense("dense", channels * self.conv_length, hidden, rng, init)
        self._dense("out", hidden, 1, rng, init)

    @property
    def conv_length(self):
        return self.n_features - self.kernel + 1

    def forward(self, X, training=False, rng=None):
        h = ge.relu(ge.conv1d(X, self.params["conv.weight"], self.params["conv.bias"]))
        h = ge.relu(self._layer("dense", ge.flatten(h)))
        return (self._layer("out", h),)

    def loss(self, X, y, label_up=None, cls_weight=0.0, training=False, rng=None):
        reg_loss = ge.mse(self.forward(X, training, rng)[0], y)
        return reg_loss, reg_loss, None

    def config(self):
        return {"channels": self.channels, "kernel": self.kernel, "hidden": self.hidden}


class LinearSVR:
    """
    Linear epsilon-insensitive regression

    Minimises J(w, b) = 0.5 * ||w||^2 + C * mean(max(0, |y/s - X w - b| - eps))
    where s is the training-target std (1 when standardize_target is off).
    Solved by normalised subgradient descent with step step0 / (1 + t),
    returning the best iterate seen.
    """

    kind = "svr"

    def __init__(self, n_features, C=1.0, epsilon=0.1, standardize_target=True):
        self.n_features = n_features
        self.C = C
        self.epsilon = epsilon
        self.standardize_target = standardize_target
        self.weight = np.zeros(n_features)
        self.bias = 0.0
        self.target_scale = 1.0

    def objective(self, X, y_scaled, weight=None, bias=None):
        weight = self.weight if weight is None else weight
        bias = self.bias if bias is None else bias
        residual = y_scaled - X @ weight - bias
        hinge = np.maximum(np.abs(residual) - self.epsilon, 0.0)
        return 0.5 * float(weight @ weight) + self.C * float(hinge.mean())

    def fit(self, X, y, n_iter=3000, step0=1.0):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.target_scale = 1.0
        if self.standardize_target:
            std = float(np.std(y))
            self.target_scale = std if std > 1e-12 else 1.0
        ys = y / self.target_scale

        w = np.zeros(X.shape[1])
        b = 0.0
        best = (np.inf, w.copy(), b)
        n = len(ys)
        for t in range(n_iter):
            residual = ys - X @ w - b
            outside = np.abs(residual) > self.epsilon
            value = 0.5 * float(w @ w) + self.C * float(np.maximum(np.abs(residual) - self.epsilon, 0.0).mean())
            if not np.isfinite(value):
                raise NumericalError(f"svr objective became non-finite at iteration {t}")
            if value < best[0]:
                best = (value, w.copy(), b)
            direction = np.sign(residual) * outside
            grad_w = w - self.C * (X.T @ direction) / n
            grad_b = -self.C * float(direction.sum()) / n
            norm = np.sqrt(float(grad_w @ grad_w) + grad_b ** 2)
            if norm == 0.0:
                break
            step = step0 / (1.0 + t)
            w = w - step * grad_w / norm
            b = b - step * grad_b / norm

        final = self.objective(X, ys, w, b)
        if final < best[0]:
            best = (final, w.copy(), b)
        self.objective_value, self.weight, self.bias = best[0], best[1], float(best[2])
        logger.info("SVR fit: objective %.6g after %d iterations", self.objective_value, n_iter)
        return self

    def predict(self, X):
        return (np.asarray(X, dtype=np.float64) @ self.weight + self.bias) * self.target_scale

    def state_dict(self):
        return {
            "weight": self.weight.copy(),
            "bias": np.array([self.bias]),
            "target_scale": np.array([self.target_scale]),
        }

    def load_state_dict(self, state):
        self.weight = np.asarray(state["weight"], dtype=np.float64).copy()
        self.bias = float(np.asarray(state["bias"])[0])
        self.target_scale = float(np.asarray(state["target_scale"])[0])

    def config(self):
        return {"C": self.C, "epsilon": self.epsilon, "standardize_target": self.standardize_target}


MODEL_KINDS = ("mlp", "cnn", "svr")


def build_model(kind, n_features, config=None, rng=None, init="xavier"):
    """Instantiate a model from its kind and the `config()` dict saved with it"""
    config = config or {}
    if kind == "mlp":
        return DualTaskMLP(n_features, hidden=tuple(config.get("hidden", (64, 32))),
                           dropout=config.get("dropout", 0.1), rng=rng, init=init)
    if kind == "cnn":
        return Cnn1D(n_features, channels=config.get("channels", 8), kernel=config.get("kernel", 3),
                     hidden=config.get("hidden", 32), rng=rng, init=init)
    if kind == "svr":
        return LinearSVR(n_features, C=config.get("C", 1.0), epsilon=config.get("epsilon", 0.1),
                         standardize_target=config.get("standardize_target", True))
    raise ValueError(f"unknown model kind {kind}")

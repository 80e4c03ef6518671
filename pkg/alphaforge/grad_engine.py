"""
Small reverse-mode differentiation engine for the three model topologies

A Function records its inputs on the forward pass; Tensor.backward() walks
the recorded graph in reverse topological order and accumulates gradients.
Everything is float64.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from alphaforge.errors import GradientError, NumericalError

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7


class ShapeError(ValueError):
    pass


class Tensor:
    def __init__(self, data, requires_grad=False, name=None, ctx=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.name = name
        self._ctx = ctx

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self):
        return float(self.data)

    def __add__(self, other):
        return Add.apply(self, other)

    def __mul__(self, scalar):
        return Scale.apply(self, scale=float(scalar))

    __rmul__ = __mul__

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape}>"

    def _graph(self):
        order, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._ctx is not None:
                for parent in node._ctx.parents:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self):
        """Accumulate d(self)/d(leaf) into every leaf that requires grad"""
        if self._ctx is None:
            raise GradientError("backward() needs a recorded forward pass")
        if self.data.size != 1:
            raise GradientError(f"backward() starts from a scalar loss, got shape {self.shape}")
        order = self._graph()
        for node in order:
            if node._ctx is not None:
                node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._ctx is None:
                continue
            grads = node._ctx.backward(node.grad)
            for parent, grad in zip(node._ctx.parents, grads):
                if parent.requires_grad and grad is not None:
                    parent.grad += grad


def Parameter(data, name):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    def __init__(self, *parents):
        self.parents = parents

    @classmethod
    def apply(cls, *inputs, **kwargs):
        parents = tuple(as_tensor(x) for x in inputs)
        ctx = cls(*parents)
        data = ctx.forward(*[p.data for p in parents], **kwargs)
        requires_grad = any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=requires_grad, ctx=ctx if requires_grad else None)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError


class Affine(Function):
    def forward(self, x, weight, bias):
        if weight.ndim != 2 or x.shape[-1] != weight.shape[1] or bias.shape != (weight.shape[0],):
            raise ShapeError(f"affine: input {x.shape} does not fit weight {weight.shape} / bias {bias.shape}")
        self.x, self.weight = x, weight
        return x @ weight.T + bias

    def backward(self, grad):
        if self.x.ndim == 1:
            return grad @ self.weight, np.outer(grad, self.x), grad
        return grad @ self.weight, grad.T @ self.x, grad.sum(axis=0)


class ReLU(Function):
    def forward(self, z):
        # subgradient at exactly 0 is 0
        self.mask = z > 0
        return np.where(self.mask, z, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, z):
        e = np.exp(-np.abs(z))
        self.out = np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Conv1D(Function):
    """Valid, stride-1 convolution of N single-channel rows with C kernels: N x L -> N x C x (L - k + 1)"""

    def forward(self, x, kernels, bias):
        if x.ndim != 2 or kernels.ndim != 2 or bias.shape != (kernels.shape[0],):
            raise ShapeError(f"conv1d: input {x.shape} does not fit kernels {kernels.shape} / bias {bias.shape}")
        if kernels.shape[1] > x.shape[1]:
            raise ShapeError(f"conv1d: kernel {kernels.shape} longer than input {x.shape}")
        self.kernels = kernels
        self.input_shape = x.shape
        self.windows = sliding_window_view(x, kernels.shape[1], axis=1)
        return np.einsum("nlk,ck->ncl", self.windows, kernels) + bias[None, :, None]

    def backward(self, grad):
        k = self.kernels.shape[1]
        out_len = grad.shape[2]
        grad_x = np.zeros(self.input_shape)
        for j in range(k):
            grad_x[:, j:j + out_len] += np.einsum("ncl,c->nl", grad, self.kernels[:, j])
        grad_kernels = np.einsum("ncl,nlk->ck", grad, self.windows)
        return grad_x, grad_kernels, grad.sum(axis=(0, 2))


class Flatten(Function):
    def forward(self, x):
        self.input_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return (grad.reshape(self.input_shape),)


class Dropout(Function):
    def forward(self, x, mask):
        self.mask = mask
        return x * mask

    def backward(self, grad):
        return (grad * self.mask,)


class Add(Function):
    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeError(f"add: {a.shape} vs {b.shape}")
        return a + b

    def backward(self, grad):
        return grad, grad


class Scale(Function):
    def forward(self, x, scale):
        self.scale = scale
        return x * scale

    def backward(self, grad):
        return (grad * self.scale,)


class MSE(Function):
    def forward(self, pred, target):
        self.pred_shape = pred.shape
        pred, target = pred.reshape(-1), target.reshape(-1)
        if pred.shape != target.shape:
            raise ShapeError(f"mse: predictions {pred.shape} vs targets {target.shape}")
        self.residual = pred - target
        return np.mean(self.residual ** 2)

    def backward(self, grad):
        g = 2.0 * self.residual / self.residual.size
        return (grad * g).reshape(self.pred_shape), None


class BCE(Function):
    def forward(self, prob, target):
        self.prob_shape = prob.shape
        prob, target = prob.reshape(-1), target.reshape(-1)
        if prob.shape != target.shape:
            raise ShapeError(f"bce: probabilities {prob.shape} vs targets {target.shape}")
        self.clamped = np.clip(prob, BCE_CLAMP, 1.0 - BCE_CLAMP)
        self.inside = (prob > BCE_CLAMP) & (prob < 1.0 - BCE_CLAMP)
        self.target = target
        return -np.mean(target * np.log(self.clamped) + (1.0 - target) * np.log(1.0 - self.clamped))

    def backward(self, grad):
        p, y = self.clamped, self.target
        g = (-y / p + (1.0 - y) / (1.0 - p)) / p.size * self.inside
        return (grad * g).reshape(self.prob_shape), None


def affine(x, weight, bias):
    return Affine.apply(x, weight, bias)


def relu(z):
    return ReLU.apply(z)


def sigmoid(z):
    return Sigmoid.apply(z)


def conv1d(x, kernels, bias):
    return Conv1D.apply(x, kernels, bias)


def flatten(x):
    return Flatten.apply(x)


def dropout(x, rate, rng, training):
    """Inverted dropout: kept units are scaled by 1 / (1 - rate) at train time"""
    if not training or rate == 0:
        return as_tensor(x)
    x = as_tensor(x)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return Dropout.apply(x, mask=mask)


def mse(pred, target):
    return MSE.apply(pred, target)


def bce(prob, target):
    return BCE.apply(prob, target)


def combined(reg_loss, cls_loss, cls_weight=0.5):
    return reg_loss + cls_weight * cls_loss


def global_grad_norm(params):
    return float(np.sqrt(sum(float(np.sum(p.grad ** 2)) for p in params)))


def check_finite_grads(params):
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient in parameter {p.name}")


def clip_grad_norm(params, max_norm=0.5):
    """Rescale all gradients together so their global L2 norm is at most max_norm; returns the norm before"""
    check_finite_grads(params)
    norm = global_grad_norm(params)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


@dataclass
class OptimizerState:
    lr: float = 5e-4
    weight_decay: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    decoupled: bool = False
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


class Adam:
    """
    Adam with L2 weight decay added to the gradient before the moment updates

    With `decoupled=True` the decay is applied to the weights directly instead.
    """

    def __init__(self, params, lr=5e-4, weight_decay=1e-3, betas=(0.9, 0.999), eps=1e-8, decoupled=False):
        self.params = list(params)
        self.state = OptimizerState(lr, weight_decay, tuple(betas), eps, decoupled)
        for p in self.params:
            self.state.first_moment[p.name] = np.zeros_like(p.data)
            self.state.second_moment[p.name] = np.zeros_like(p.data)

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        check_finite_grads(self.params)
        state = self.state
        beta1, beta2 = state.betas
        state.step += 1
        bias1 = 1.0 - beta1 ** state.step
        bias2 = 1.0 - beta2 ** state.step
        for p in self.params:
            grad = p.grad
            if state.weight_decay and not state.decoupled:
                grad = grad + state.weight_decay * p.data
            m = state.first_moment[p.name]
            v = state.second_moment[p.name]
            m *= beta1
            m += (1.0 - beta1) * grad
            v *= beta2
            v += (1.0 - beta2) * grad ** 2
            if state.weight_decay and state.decoupled:
                p.data -= state.lr * state.weight_decay * p.data
            p.data -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


@dataclass
class SchedulerState:
    best: float = float("inf")
    bad_epochs: int = 0
    factor: float = 0.7
    patience: int = 5
    min_delta: float = 1e-5


class PlateauScheduler:
    """Multiplies the optimizer LR by `factor` after `patience` epochs without an improvement of min_delta"""

    def __init__(self, optimizer, factor=0.7, patience=5, min_delta=1e-5):
        self.optimizer = optimizer
        self.state = SchedulerState(factor=factor, patience=patience, min_delta=min_delta)

    def step(self, metric):
        """Returns True when the learning rate was reduced"""
        state = self.state
        if metric < state.best - state.min_delta:
            state.best = metric
            state.bad_epochs = 0
            return False
        state.bad_epochs += 1
        if state.bad_epochs >= state.patience:
            old = self.optimizer.lr
            self.optimizer.lr = old * state.factor
            state.bad_epochs = 0
            logger.info("Validation plateau: learning rate %.3g -> %.3g", old, self.optimizer.lr)
            return True
        return False


def numerical_gradient(fn, array, h=1e-4):
    """Central finite differences of scalar fn() with respect to `array`, perturbed in place"""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = fn()
        flat[i] = original - h
        lower = fn()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic, numeric):
    """Norm-wise relative error ||a - n|| / max(||a|| + ||n||, 1e-12)"""
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12))

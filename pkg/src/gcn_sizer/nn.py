"""Minimal dense/graph-convolution stack with reverse-mode differentiation.

All values are float64 numpy arrays. Network inputs are either one (n, d)
node-feature matrix or a batch (b, n, d); every op below handles both. A
forward pass records closures; Tensor.backward() replays them in reverse
topological order. There is no GPU path and no sparsity: component graphs
stay small (n up to ~100).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import AutodiffError


class Tensor:
    """A value in a recorded computation graph."""

    __slots__ = ("data", "grad", "_parents", "_backward_fn")

    def __init__(self, data, _parents=(), _backward_fn=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every upstream tensor."""
        if self.data.size != 1:
            raise AutodiffError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        if self._backward_fn is None:
            raise AutodiffError("backward() called without a recorded forward computation")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative: deep graphs would blow the recursion limit
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """x @ w with w a 2-d weight; x may carry a leading batch axis."""
    out = x.data @ w.data

    def backward_fn(g):
        x.grad += g @ np.swapaxes(w.data, -1, -2)
        # collapse any batch axes before contracting into the 2-d weight grad
        w.grad += x.data.reshape(-1, x.data.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    return Tensor(out, (x, w), backward_fn)


def propagate(a: np.ndarray, x: Tensor) -> Tensor:
    """Left-multiply node features by a constant (n, n) propagation matrix."""
    out = a @ x.data

    def backward_fn(g):
        x.grad += a.T @ g

    return Tensor(out, (x,), backward_fn)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    out = x.data + b.data

    def backward_fn(g):
        x.grad += g
        b.grad += g.reshape(-1, g.shape[-1]).sum(axis=0)

    return Tensor(out, (x, b), backward_fn)


def add(x: Tensor, y: Tensor) -> Tensor:
    out = x.data + y.data

    def backward_fn(g):
        x.grad += g
        y.grad += g

    return Tensor(out, (x, y), backward_fn)


def sub(x: Tensor, y: Tensor) -> Tensor:
    out = x.data - y.data

    def backward_fn(g):
        x.grad += g
        y.grad -= g

    return Tensor(out, (x, y), backward_fn)


def mul(x: Tensor, y: Tensor) -> Tensor:
    out = x.data * y.data

    def backward_fn(g):
        x.grad += g * y.data
        y.grad += g * x.data

    return Tensor(out, (x, y), backward_fn)


def scale(x: Tensor, c: float) -> Tensor:
    out = x.data * c

    def backward_fn(g):
        x.grad += g * c

    return Tensor(out, (x,), backward_fn)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)

    def backward_fn(g):
        x.grad += g * (x.data > 0.0)

    return Tensor(out, (x,), backward_fn)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward_fn(g):
        x.grad += g * (1.0 - out * out)

    return Tensor(out, (x,), backward_fn)


def identity(x: Tensor) -> Tensor:
    return x


def concat(xs: list[Tensor]) -> Tensor:
    """Concatenate along the last axis."""
    out = np.concatenate([t.data for t in xs], axis=-1)
    sizes = [t.data.shape[-1] for t in xs]

    def backward_fn(g):
        offset = 0
        for t, size in zip(xs, sizes):
            t.grad += g[..., offset:offset + size]
            offset += size

    return Tensor(out, tuple(xs), backward_fn)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows (axis -2) by unique indices."""
    out = x.data[..., idx, :]

    def backward_fn(g):
        x.grad[..., idx, :] += g

    return Tensor(out, (x,), backward_fn)


def place_rows(x: Tensor, idx: np.ndarray, n_rows: int, col_start: int, n_cols: int) -> Tensor:
    """Embed rows into a zero matrix of n_rows x n_cols at idx / column offset."""
    width = x.data.shape[-1]
    out = np.zeros(x.data.shape[:-2] + (n_rows, n_cols))
    out[..., idx, col_start:col_start + width] = x.data

    def backward_fn(g):
        x.grad += g[..., idx, col_start:col_start + width]

    return Tensor(out, (x,), backward_fn)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    out = x.data[..., start:stop]

    def backward_fn(g):
        x.grad[..., start:stop] += g

    return Tensor(out, (x,), backward_fn)


def squeeze_last(x: Tensor) -> Tensor:
    """(..., 1) -> (...)."""
    out = x.data[..., 0]

    def backward_fn(g):
        x.grad[..., 0] += g

    return Tensor(out, (x,), backward_fn)


def mean_last(x: Tensor) -> Tensor:
    """Mean over the final axis."""
    count = x.data.shape[-1]
    out = x.data.mean(axis=-1)

    def backward_fn(g):
        x.grad += np.expand_dims(g, -1) / count

    return Tensor(out, (x,), backward_fn)


def mean_all(x: Tensor) -> Tensor:
    out = x.data.mean()

    def backward_fn(g):
        x.grad += g / x.data.size

    return Tensor(out, (x,), backward_fn)


def glorot_uniform(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-limit, limit, size=(d_in, d_out))


class DenseLayer:
    """Fully connected layer with bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform(rng, d_in, d_out))
        self.bias = Tensor(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return add_bias(matmul(x, self.weight), self.bias)

    @property
    def params(self) -> tuple[Tensor, ...]:
        return (self.weight, self.bias)


class GcnLayer:
    """Graph convolution: propagation matrix times features times weight, no bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        self.weight = Tensor(glorot_uniform(rng, d_in, d_out))

    def __call__(self, x: Tensor, prop: np.ndarray) -> Tensor:
        return propagate(prop, matmul(x, self.weight))

    @property
    def params(self) -> tuple[Tensor, ...]:
        return (self.weight,)


def gcn_forward(h: Tensor, prop: np.ndarray, layer: GcnLayer, activation=relu) -> Tensor:
    """One graph convolution step: activation(prop @ h @ W)."""
    return activation(layer(h, prop))


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization of the self-loop-augmented adjacency.

    Every row gains a self loop, so degrees are at least one and the result
    is always defined. Entry (i, j) equals 1/sqrt(d_i d_j) wherever the
    augmented adjacency is one.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"adjacency must be square, got {a.shape}")
    if np.any(np.diag(a) != 0.0):
        raise ValueError("adjacency must have a zero diagonal")
    if not np.array_equal(a, a.T):
        raise ValueError("adjacency must be symmetric")
    if not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("adjacency entries must be 0 or 1")
    a_tilde = a + np.eye(a.shape[0])
    deg = a_tilde.sum(axis=1)
    # single rounding per entry: matches the 1/sqrt(d_i d_j) closed form exactly
    return a_tilde / np.sqrt(np.outer(deg, deg))


class Adam:
    """Adaptive-moment parameter updater."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise AutodiffError("non-finite gradient in parameter update")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.step_count)
            v_hat = v / (1.0 - self.beta2 ** self.step_count)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

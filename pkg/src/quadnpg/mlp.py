"""Dense tanh network with exact forward pass, parameter Jacobian and Huber-loss gradient.

Parameter ordering (the flat ``ParamVector``): layer by layer, the weight
matrix first (shape ``(n_in, n_out)``, row-major) and then the bias vector.
The forward pass of one layer is ``x @ W + b``.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_HEADER = "quadnpg-mlp 1"


@dataclass(frozen=True)
class HuberSpec:
    delta: float = 1.0

    def loss(self, r):
        a = np.abs(r)
        return np.where(a <= self.delta, 0.5 * r * r, self.delta * (a - 0.5 * self.delta))

    def grad(self, r):
        return np.clip(r, -self.delta, self.delta)


class Mlp:
    """Feedforward net: tanh on hidden layers, affine output layer."""

    def __init__(self, layer_sizes, params=None):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"invalid layer sizes {layer_sizes}")
        self._shapes = list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))
        if params is None:
            params = np.zeros(self.num_params)
        self.set_params(params)

    @property
    def num_params(self):
        return sum(i * o + o for i, o in self._shapes)

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @classmethod
    def init_random(cls, layer_sizes, rng, zero_output=True):
        """Uniform(+-1/sqrt(fan_in)) weights, zero biases, optionally zero output layer."""
        net = cls(layer_sizes)
        weights, biases = [], []
        for li, (i, o) in enumerate(net._shapes):
            s = 1.0 / np.sqrt(i)
            W = rng.uniform(-s, s, size=(i, o))
            if zero_output and li == len(net._shapes) - 1:
                W = np.zeros((i, o))
            weights.append(W)
            biases.append(np.zeros(o))
        net.weights, net.biases = weights, biases
        return net

    def params(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def set_params(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got shape {v.shape}")
        self.weights, self.biases = unflatten(self.layer_sizes, v)

    def copy(self):
        return Mlp(self.layer_sizes, self.params())

    def with_params(self, v):
        return Mlp(self.layer_sizes, v)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return forward(self, x) if x.ndim == 1 else batch_forward(self, x)

    def __repr__(self):
        return f"Mlp({list(self.layer_sizes)})"


def unflatten(layer_sizes, v):
    weights, biases = [], []
    k = 0
    for i, o in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(v[k : k + i * o].reshape(i, o).copy())
        k += i * o
        biases.append(v[k : k + o].copy())
        k += o
    return weights, biases


def _check_input(net, x):
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"input has length {x.shape[-1]}, network expects {net.input_dim}")


def batch_forward(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("batch_forward expects a 2-D array of row vectors")
    _check_input(net, X)
    h = X
    last = len(net.weights) - 1
    for li, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W
        h += b
        if li < last:
            np.tanh(h, out=h)
    return h


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a 1-D input vector")
    return batch_forward(net, x[None, :])[0]


def _activations(net, X):
    """Inputs to every layer (X, h1, ..., h_{L-1}) and the output."""
    hs = [X]
    h = X
    last = len(net.weights) - 1
    for li, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W
        h += b
        if li < last:
            np.tanh(h, out=h)
            hs.append(h)
    return hs, h


def batch_output_jacobian(net, X):
    """Jacobians d out / d params for a batch, shape ``(B, out_dim, num_params)``."""
    X = np.asarray(X, dtype=np.float64)
    _check_input(net, X)
    B = X.shape[0]
    hs, _ = _activations(net, X)
    n_out = net.output_dim
    # delta[b, i, :] = d out_i / d pre-activation of the current layer
    delta = np.broadcast_to(np.eye(n_out), (B, n_out, n_out))
    blocks = []
    for li in range(len(net.weights) - 1, -1, -1):
        h_in = hs[li]
        gW = delta[:, :, None, :] * h_in[:, None, :, None]  # (B, out, n_in, n_out)
        blocks.append((gW.reshape(B, n_out, -1), delta))
        if li > 0:
            delta = (delta @ net.weights[li].T) * (1.0 - hs[li] ** 2)[:, None, :]
    cols = []
    for gW, gb in reversed(blocks):
        cols.append(gW)
        cols.append(gb)
    return np.concatenate(cols, axis=2)


def output_jacobian(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("output_jacobian expects a 1-D input vector")
    return batch_output_jacobian(net, x[None, :])[0]


def loss_and_gradient(net, X, targets, loss=HuberSpec()):
    """Mean Huber loss of a scalar-output net and its gradient w.r.t. the parameters."""
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64).ravel()
    if net.output_dim != 1:
        raise ValueError("loss_gradient requires a scalar-output network")
    if X.ndim != 2 or X.shape[0] != targets.shape[0]:
        raise ValueError("need one scalar target per input row")
    _check_input(net, X)
    n = X.shape[0]
    hs, out = _activations(net, X)
    r = out[:, 0] - targets
    value = float(np.mean(loss.loss(r)))
    g = (loss.grad(r) / n)[:, None]  # d loss / d output
    grads = []
    for li in range(len(net.weights) - 1, -1, -1):
        grads.append((hs[li].T @ g, g.sum(axis=0)))
        if li > 0:
            g = g @ net.weights[li].T
            g *= 1.0 - hs[li] * hs[li]
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
    return value, flat


def loss_gradient(net, X, targets, loss=HuberSpec()):
    return loss_and_gradient(net, X, targets, loss)[1]


def save(net, path):
    """Text format: header line, layer sizes line, then one parameter per line."""
    lines = [FORMAT_HEADER, " ".join(str(n) for n in net.layer_sizes)]
    lines += [repr(float(p)) for p in net.params()]
    Path(path).write_text("\n".join(lines) + "\n")


def load(path, expect_sizes=None):
    text = Path(path).read_text().split("\n")
    if text[0].strip() != FORMAT_HEADER:
        raise ValueError(f"{path}: not a network file (bad header)")
    sizes = tuple(int(s) for s in text[1].split())
    if expect_sizes is not None and (sizes[0], sizes[-1]) != (expect_sizes[0], expect_sizes[-1]):
        raise ValueError(f"{path}: network maps {sizes[0]}->{sizes[-1]}, expected {expect_sizes[0]}->{expect_sizes[-1]}")
    values = np.array([float(s) for s in text[2:] if s.strip()])
    return Mlp(sizes, values)

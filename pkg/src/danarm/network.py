"""Minimal feedforward engine for the danger classifier.

Fixed topology: an m / 64 / 64 / 1 fully connected stack with batch
normalization after every layer except the output, ReLU in the middle
and a sigmoid head, trained with binary cross entropy.  Everything is
plain float64 numpy; gradients (including gradients with respect to the
input vector) are hand-rolled backprop for exactly this topology.

Commands enter in raw mm and are scaled per muscle to roughly [-1, 1]
by an affine normalizer stored with the weights, so callers never see
the normalization.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
HIDDEN = (64, 64)
WEIGHT_FORMAT_VERSION = 1
_MAGIC = b"DANW"

# Reported probabilities stay strictly inside (0, 1) even when the
# sigmoid saturates in float64.
_P_CLIP = 1e-12


class WeightFormatError(ValueError):
    """Raised when a weight buffer cannot be decoded."""


@dataclass
class TrainBatch:
    """Training data: command rows (mm) and binary danger labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.inputs.ndim != 2 or len(self.inputs) != len(self.labels):
            raise ValueError("inputs must be (N, m) with one label per row")
        if len(self.inputs) < 1:
            raise ValueError("training data is empty")
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise ValueError("labels must be binary")

    def __len__(self) -> int:
        return len(self.inputs)


class _BatchNorm:
    def __init__(self, width: int):
        self.gamma = np.ones(width)
        self.beta = np.zeros(width)
        self.run_mean = np.zeros(width)
        self.run_var = np.ones(width)

    def forward(self, x: np.ndarray, use_batch_stats: bool):
        if use_batch_stats:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
        else:
            mean, var = self.run_mean, self.run_var
        inv_sd = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean) * inv_sd
        return self.gamma * xhat + self.beta, (xhat, inv_sd, use_batch_stats)

    def backward(self, dout: np.ndarray, cache):
        xhat, inv_sd, used_batch = cache
        dgamma = (dout * xhat).sum(axis=0)
        dbeta = dout.sum(axis=0)
        if used_batch:
            dx = self.gamma * inv_sd * (
                dout - dout.mean(axis=0) - xhat * (dout * xhat).mean(axis=0))
        else:
            dx = dout * self.gamma * inv_sd
        return dx, dgamma, dbeta

    def update_running(self, x: np.ndarray):
        self.run_mean = BN_MOMENTUM * self.run_mean + (1 - BN_MOMENTUM) * x.mean(axis=0)
        self.run_var = BN_MOMENTUM * self.run_var + (1 - BN_MOMENTUM) * x.var(axis=0)


class DangerNet:
    """Danger-probability classifier over muscle-length commands."""

    def __init__(self, m: int, norm_center: np.ndarray | None = None,
                 norm_scale: np.ndarray | None = None, seed: int = 0):
        self.m = int(m)
        self.norm_center = (np.zeros(m) if norm_center is None
                            else np.asarray(norm_center, dtype=float).copy())
        self.norm_scale = (np.ones(m) if norm_scale is None
                           else np.asarray(norm_scale, dtype=float).copy())
        if self.norm_center.shape != (m,) or self.norm_scale.shape != (m,):
            raise ValueError("normalizer must have one entry per muscle")
        if np.any(self.norm_scale <= 0):
            raise ValueError("normalizer scale must be positive")
        widths = (m,) + HIDDEN
        self.bn = [_BatchNorm(w) for w in widths]
        self.rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        fan_ins = (m,) + HIDDEN
        fan_outs = HIDDEN + (1,)
        for fan_in, fan_out in zip(fan_ins, fan_outs):
            limit = np.sqrt(6.0 / fan_in)
            self.weights.append(self.rng.uniform(-limit, limit, (fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))
        self.mode = "eval"

    @classmethod
    def for_arm(cls, arm_cfg, seed: int = 0) -> "DangerNet":
        """Net whose normalizer maps the arm's reachable lengths to ~[-1, 1]."""
        lo, hi = arm_cfg.reachable_length_bounds()
        center = 0.5 * (lo + hi)
        scale = np.maximum(0.5 * (hi - lo), 1e-6)
        return cls(arm_cfg.n_muscles, center, scale, seed=seed)

    # --- parameter access (order matters for optimizers and serialization) ---

    def parameters(self) -> list[np.ndarray]:
        params = []
        for i in range(3):
            params += [self.bn[i].gamma, self.bn[i].beta,
                       self.weights[i], self.biases[i]]
        return params

    def set_parameters(self, values: list[np.ndarray]) -> None:
        for target, value in zip(self.parameters(), values):
            target[...] = value

    def clone(self) -> "DangerNet":
        return load_weights(save_weights(self))

    # --- forward / backward ---

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm_center) / self.norm_scale

    def _forward(self, x: np.ndarray, use_batch_stats: bool):
        """Shared forward pass; returns logits (B, 1) and the backprop cache."""
        xn = self._normalize(x)
        h0, c0 = self.bn[0].forward(xn, use_batch_stats)
        z1 = h0 @ self.weights[0].T + self.biases[0]
        b1, c1 = self.bn[1].forward(z1, use_batch_stats)
        h1 = np.maximum(b1, 0.0)
        z2 = h1 @ self.weights[1].T + self.biases[1]
        b2, c2 = self.bn[2].forward(z2, use_batch_stats)
        h2 = np.maximum(b2, 0.0)
        z3 = h2 @ self.weights[2].T + self.biases[2]
        cache = (xn, z1, z2, h0, c0, b1, h1, c1, b2, h2, c2)
        return z3, cache

    def _backward(self, dz3: np.ndarray, cache):
        """Gradients for every parameter plus the (normalized) input."""
        _, _, _, h0, c0, b1, h1, c1, b2, h2, c2 = cache
        dW3 = dz3.T @ h2
        db3 = dz3.sum(axis=0)
        dh2 = dz3 @ self.weights[2]
        db2_out = dh2 * (b2 > 0.0)
        dz2, dg2, dbeta2 = self.bn[2].backward(db2_out, c2)
        dW2 = dz2.T @ h1
        db2 = dz2.sum(axis=0)
        dh1 = dz2 @ self.weights[1]
        db1_out = dh1 * (b1 > 0.0)
        dz1, dg1, dbeta1 = self.bn[1].backward(db1_out, c1)
        dW1 = dz1.T @ h0
        db1 = dz1.sum(axis=0)
        dh0 = dz1 @ self.weights[0]
        dxn, dg0, dbeta0 = self.bn[0].backward(dh0, c0)
        grads = [dg0, dbeta0, dW1, db1,
                 dg1, dbeta1, dW2, db2,
                 dg2, dbeta2, dW3, db3]
        return grads, dxn


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(net: DangerNet, x: np.ndarray) -> float | np.ndarray:
    """Danger probability of command(s) `x` in mm.

    Predictions always use the running batch-norm statistics, so the
    result is a pure function of (net, x).  Accepts a single command
    (m,) -> float or a batch (B, m) -> (B,).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != net.m:
        raise ValueError(f"input has {xb.shape[1]} entries, net expects {net.m}")
    if not np.all(np.isfinite(xb)):
        raise ValueError("input contains non-finite values")
    z3, _ = net._forward(xb, use_batch_stats=False)
    p = np.clip(_sigmoid(z3[:, 0]), _P_CLIP, 1.0 - _P_CLIP)
    return float(p[0]) if single else p


# Loss callable for input gradients: (x, p) -> (value, dvalue/dp, dvalue/dx).
# The third element may be None when the loss has no direct x dependence.
InputLoss = Callable[[np.ndarray, float], tuple[float, float, np.ndarray | None]]


def input_gradient(net: DangerNet, x: np.ndarray, loss: InputLoss) -> np.ndarray:
    """Gradient of `loss(x, forward(net, x))` with respect to `x`, in 1/mm.

    The net must be in eval mode (frozen batch-norm statistics).
    """
    if net.mode != "eval":
        raise RuntimeError("input gradients require eval mode (frozen batch norm)")
    x = np.asarray(x, dtype=float)
    z3, cache = net._forward(x[None, :], use_batch_stats=False)
    p_raw = _sigmoid(z3[0, 0])
    p = float(np.clip(p_raw, _P_CLIP, 1.0 - _P_CLIP))
    _, dl_dp, dl_dx = loss(x, p)
    dz3 = np.array([[dl_dp * p_raw * (1.0 - p_raw)]])
    _, dxn = net._backward(dz3, cache)
    grad = dxn[0] / net.norm_scale
    if dl_dx is not None:
        grad = grad + dl_dx
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite input gradient")
    return grad


def probability_loss(x: np.ndarray, p: float):
    """Loss equal to the predicted danger probability itself."""
    return p, 1.0, None


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> float:
    """Numerically stable mean binary cross entropy from logits."""
    return float(np.mean(np.logaddexp(0.0, z) - z * y))


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m_state: list[np.ndarray] | None = None
        self.v_state: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m_state is None:
            self.m_state = [np.zeros_like(p) for p in params]
            self.v_state = [np.zeros_like(p) for p in params]
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m_state, self.v_state):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class MomentumSGD:
    def __init__(self, lr: float = 0.01, momentum: float = 0.9):
        self.lr, self.momentum = lr, momentum
        self.velocity: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v -= self.lr * g
            p += v


def make_optimizer(name: str):
    if name == "adam":
        return Adam()
    if name == "momentum_sgd":
        return MomentumSGD()
    raise ValueError(f"unknown optimizer {name!r}")


def train_epochs(net: DangerNet, data: TrainBatch, optimizer,
                 epochs: int, batch_size: int,
                 update_running_stats: bool = True) -> list[float]:
    """Minibatch BCE training; returns the mean loss of each epoch.

    `optimizer` is "adam" / "momentum_sgd" or an optimizer instance.
    Batches of one sample fall back to running statistics (batch
    variance is undefined) and leave the running stats untouched.
    `update_running_stats=False` keeps the prediction-time batch-norm
    statistics frozen; fine-tuning on a small non-stationary buffer must
    not re-estimate the global input distribution.
    """
    if isinstance(optimizer, str):
        optimizer = make_optimizer(optimizer)
    n = len(data)
    if batch_size < 1 or epochs < 1:
        raise ValueError("epochs and batch_size must be >= 1")
    history = []
    params = net.parameters()
    net.mode = "train"
    try:
        for epoch in range(epochs):
            order = net.rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch_size):
                idx = order[start:start + batch_size]
                xb = data.inputs[idx]
                yb = data.labels[idx]
                use_batch = len(idx) >= 2
                z3, cache = net._forward(xb, use_batch_stats=use_batch)
                loss = bce_with_logits(z3[:, 0], yb)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite loss {loss} at epoch {epoch}, "
                        f"batch starting {start}")
                total += loss * len(idx)
                if use_batch and update_running_stats:
                    xn, z1, z2 = cache[0], cache[1], cache[2]
                    net.bn[0].update_running(xn)
                    net.bn[1].update_running(z1)
                    net.bn[2].update_running(z2)
                dz3 = ((_sigmoid(z3[:, 0]) - yb) / len(idx))[:, None]
                grads, _ = net._backward(dz3, cache)
                optimizer.step(params, grads)
            history.append(total / n)
    finally:
        net.mode = "eval"
    return history


# --- weight serialization (format documented in README) ---

def save_weights(net: DangerNet) -> bytes:
    """Serialize to the versioned little-endian binary weight format."""
    buf = io.BytesIO()
    widths = (net.m,) + HIDDEN + (1,)
    buf.write(_MAGIC)
    buf.write(struct.pack("<III", WEIGHT_FORMAT_VERSION, net.m, len(widths)))
    buf.write(struct.pack(f"<{len(widths)}I", *widths))
    for arr in _weight_arrays(net):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def _weight_arrays(net: DangerNet):
    yield net.norm_center
    yield net.norm_scale
    for i in range(3):
        yield net.bn[i].gamma
        yield net.bn[i].beta
        yield net.bn[i].run_mean
        yield net.bn[i].run_var
        yield net.weights[i]
        yield net.biases[i]


def load_weights(data: bytes, expected_m: int | None = None) -> DangerNet:
    """Decode `save_weights` output; exact round trip of every array."""
    if len(data) < 4 or data[:4] != _MAGIC:
        raise WeightFormatError("bad magic: not a danger-net weight buffer")
    off = 4
    try:
        version, m, n_widths = struct.unpack_from("<III", data, off)
        off += 12
        widths = struct.unpack_from(f"<{n_widths}I", data, off)
        off += 4 * n_widths
    except struct.error as exc:
        raise WeightFormatError(f"truncated header: {exc}") from None
    if version != WEIGHT_FORMAT_VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    if widths != (m,) + HIDDEN + (1,):
        raise WeightFormatError(f"unsupported layer widths {widths}")
    if expected_m is not None and m != expected_m:
        raise WeightFormatError(
            f"field 'm': weight file has {m} muscles, config expects {expected_m}")
    net = DangerNet(m)
    targets = list(_weight_arrays(net))
    need = off + 8 * sum(a.size for a in targets)
    if len(data) != need:
        raise WeightFormatError(
            f"buffer has {len(data)} bytes, format requires {need} "
            f"({'truncated' if len(data) < need else 'trailing data'})")
    for arr in targets:
        flat = np.frombuffer(data, dtype="<f8", count=arr.size, offset=off)
        arr[...] = flat.reshape(arr.shape)
        off += 8 * arr.size
    return net


def save_weights_file(net: DangerNet, path) -> None:
    with open(path, "wb") as fh:
        fh.write(save_weights(net))


def load_weights_file(path, expected_m: int | None = None) -> DangerNet:
    with open(path, "rb") as fh:
        return load_weights(fh.read(), expected_m=expected_m)

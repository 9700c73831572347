"""Fixed-operator layer set: conv, batchnorm, relu, maxpool, linear, log-softmax.

Each layer binds views into the network's flat parameter/gradient vectors and
implements forward/backward as plain ndarray transforms. Convolutions use
im2col + batched BLAS matmuls; col2im is a sum of k*k shifted slice adds.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ConfigError, InputError


class BatchNormState:
    """Per-channel running statistics shared by train and eval passes."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        if not 0.0 < momentum <= 1.0:
            raise ConfigError(f"batchnorm momentum must be in (0, 1], got {momentum}")
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps


def batchnorm_apply(x: np.ndarray, state: BatchNormState, gamma: np.ndarray, beta: np.ndarray, mode: str):
    """Normalize per channel (axis 1); train mode uses batch statistics and
    updates the running ones, eval mode uses the running statistics only.

    Returns (y, cache); cache is None in eval mode.
    """
    if mode not in ("train", "eval"):
        raise InputError(f"mode must be 'train' or 'eval', got {mode!r}")
    b = x.shape[0]
    c = x.shape[1]
    xr = x.reshape(b, c, -1)
    if mode == "eval":
        scale = gamma / np.sqrt(state.running_var + state.eps)
        shift = beta - state.running_mean * scale
        y = xr * scale[None, :, None] + shift[None, :, None]
        return y.reshape(x.shape), None
    if b < 2:
        raise ConfigError("batchnorm in train mode requires batch size >= 2")
    n = xr.shape[0] * xr.shape[2]
    mu = xr.mean(axis=(0, 2))
    var = xr.var(axis=(0, 2))
    inv_std = 1.0 / np.sqrt(var + state.eps)
    xhat = (xr - mu[None, :, None]) * inv_std[None, :, None]
    y = xhat * gamma[None, :, None] + beta[None, :, None]
    m = state.momentum
    state.running_mean += m * (mu - state.running_mean)
    unbiased = var * (n / (n - 1.0))
    state.running_var += m * (unbiased - state.running_var)
    cache = (xhat, inv_std)
    return y.reshape(x.shape), cache


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    # (B, C, H, W) -> (B, C*k*k, OH*OW); stride-1 windows, copy on reshape
    b, c, h, w = x.shape
    oh, ow = h - k + 1, w - k + 1
    s0, s1, s2, s3 = x.strides
    windows = as_strided(x, shape=(b, c, k, k, oh, ow), strides=(s0, s1, s2, s3, s2, s3))
    return windows.reshape(b, c * k * k, oh * ow)


class Layer:
    kind = "layer"

    def param_specs(self):
        return []

    def bind(self, views: dict):
        self.p = views

    def init_params(self, rng):
        pass

    def out_shape(self, in_shape: tuple) -> tuple:
        return in_shape

    def forward(self, x, mode, cache):
        raise NotImplementedError

    def backward(self, dy, cache, grads, need_input_grad=True):
        raise NotImplementedError


class Conv2d(Layer):
    kind = "conv"

    def __init__(self, in_ch: int, out_ch: int, kernel: int, padding: int):
        self.in_ch, self.out_ch, self.kernel, self.padding = in_ch, out_ch, kernel, padding

    def param_specs(self):
        return [("weight", (self.out_ch, self.in_ch * self.kernel * self.kernel)), ("bias", (self.out_ch,))]

    def init_params(self, rng):
        fan_in = self.in_ch * self.kernel * self.kernel
        bound = np.sqrt(6.0 / fan_in)
        w = self.p["weight"]
        w[...] = rng.uniform(-bound, bound, size=w.shape).astype(w.dtype)
        self.p["bias"][...] = 0.0

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise ConfigError(f"conv expects {self.in_ch} input channels, layer spec gives {c}")
        k, p = self.kernel, self.padding
        return (self.out_ch, h + 2 * p - k + 1, w + 2 * p - k + 1)

    def forward(self, x, mode, cache):
        k, pad = self.kernel, self.padding
        if pad:
            x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        cols = _im2col(x, k)
        y = np.matmul(self.p["weight"], cols) + self.p["bias"][None, :, None]
        b = x.shape[0]
        oh, ow = x.shape[2] - k + 1, x.shape[3] - k + 1
        if cache is not None:
            cache["cols"] = cols
            cache["x_padded_shape"] = x.shape
        return y.reshape(b, self.out_ch, oh, ow)

    def backward(self, dy, cache, grads, need_input_grad=True):
        b, _, oh, ow = dy.shape
        dyr = dy.reshape(b, self.out_ch, oh * ow)
        if grads is not None:
            cols = cache["cols"]
            grads["weight"][...] = np.matmul(dyr, cols.transpose(0, 2, 1)).sum(axis=0)
            grads["bias"][...] = dyr.sum(axis=(0, 2))
        if not need_input_grad:
            return None
        k, pad = self.kernel, self.padding
        dcols = np.matmul(self.p["weight"].T, dyr)
        dcols = dcols.reshape(b, self.in_ch, k, k, oh, ow)
        _, _, hp, wp = cache["x_padded_shape"]
        dxp = np.zeros((b, self.in_ch, hp, wp), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + oh, j : j + ow] += dcols[:, :, i, j]
        if pad:
            return dxp[:, :, pad:-pad, pad:-pad]
        return dxp


class BatchNorm(Layer):
    """Pre-activation batchnorm over axis 1; covers both NCHW and NF inputs."""

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.state = None  # allocated when the network fixes its dtype

    def param_specs(self):
        return [("gamma", (self.channels,)), ("beta", (self.channels,))]

    def init_params(self, rng):
        self.p["gamma"][...] = 1.0
        self.p["beta"][...] = 0.0

    def alloc_state(self, dtype):
        self.state = BatchNormState(self.channels, self.momentum, self.eps, dtype=dtype)

    def forward(self, x, mode, cache):
        y, bn_cache = batchnorm_apply(x, self.state, self.p["gamma"], self.p["beta"], mode)
        if cache is not None:
            cache["mode"] = mode
            if mode == "train":
                cache["bn"] = bn_cache
            else:
                # eval normalizes with constants; keep xhat for dgamma
                b, c = x.shape[0], x.shape[1]
                inv_std = 1.0 / np.sqrt(self.state.running_var + self.state.eps)
                xhat = (x.reshape(b, c, -1) - self.state.running_mean[None, :, None]) * inv_std[None, :, None]
                cache["bn"] = (xhat, inv_std)
        return y

    def backward(self, dy, cache, grads, need_input_grad=True):
        b, c = dy.shape[0], dy.shape[1]
        dyr = dy.reshape(b, c, -1)
        xhat, inv_std = cache["bn"]
        if grads is not None:
            grads["gamma"][...] = (dyr * xhat).sum(axis=(0, 2))
            grads["beta"][...] = dyr.sum(axis=(0, 2))
        if not need_input_grad:
            return None
        if cache["mode"] == "eval":
            # running stats are constants: a plain per-channel affine
            scale = self.p["gamma"] * inv_std
            return (dyr * scale[None, :, None]).reshape(dy.shape)
        dxhat = dyr * self.p["gamma"][None, :, None]
        mean_dxhat = dxhat.mean(axis=(0, 2), keepdims=True)
        mean_dxhat_xhat = (dxhat * xhat).mean(axis=(0, 2), keepdims=True)
        dx = inv_std[None, :, None] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
        return dx.reshape(dy.shape)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode, cache):
        y = np.maximum(x, 0.0)
        if cache is not None:
            cache["mask"] = x > 0.0
        return y

    def backward(self, dy, cache, grads, need_input_grad=True):
        if not need_input_grad:
            return None
        return dy * cache["mask"]


class MaxPool2(Layer):
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""

    kind = "maxpool"

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h // 2, w // 2)

    def forward(self, x, mode, cache):
        b, c, h, w = x.shape
        oh, ow = h // 2, w // 2
        x = x[:, :, : oh * 2, : ow * 2]
        v = x.reshape(b, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow, 4)
        idx = v.argmax(axis=-1)
        y = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
        if cache is not None:
            cache["idx"] = idx
            cache["in_shape"] = (b, c, h, w)
        return y

    def backward(self, dy, cache, grads, need_input_grad=True):
        if not need_input_grad:
            return None
        b, c, h, w = cache["in_shape"]
        oh, ow = h // 2, w // 2
        dv = np.zeros((b, c, oh, ow, 4), dtype=dy.dtype)
        np.put_along_axis(dv, cache["idx"][..., None], dy[..., None], axis=-1)
        dx = dv.reshape(b, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh * 2, ow * 2)
        if oh * 2 != h or ow * 2 != w:
            full = np.zeros((b, c, h, w), dtype=dy.dtype)
            full[:, :, : oh * 2, : ow * 2] = dx
            return full
        return dx


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        n = 1
        for d in in_shape:
            n *= d
        return (n,)

    def forward(self, x, mode, cache):
        if cache is not None:
            cache["in_shape"] = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, cache, grads, need_input_grad=True):
        if not need_input_grad:
            return None
        return dy.reshape(cache["in_shape"])


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features: int, out_features: int):
        self.in_features, self.out_features = in_features, out_features

    def param_specs(self):
        return [("weight", (self.out_features, self.in_features)), ("bias", (self.out_features,))]

    def init_params(self, rng):
        bound = np.sqrt(6.0 / self.in_features)
        w = self.p["weight"]
        w[...] = rng.uniform(-bound, bound, size=w.shape).astype(w.dtype)
        self.p["bias"][...] = 0.0

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ConfigError(f"linear expects ({self.in_features},) input, layer spec gives {in_shape}")
        return (self.out_features,)

    def forward(self, x, mode, cache):
        if cache is not None:
            cache["x"] = x
        return x @ self.p["weight"].T + self.p["bias"]

    def backward(self, dy, cache, grads, need_input_grad=True):
        if grads is not None:
            grads["weight"][...] = dy.T @ cache["x"]
            grads["bias"][...] = dy.sum(axis=0)
        if not need_input_grad:
            return None
        return dy @ self.p["weight"]


class LogSoftmax(Layer):
    kind = "log-softmax"

    def forward(self, x, mode, cache):
        zmax = x.max(axis=1, keepdims=True)
        z = x - zmax
        logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
        y = z - logsum
        if cache is not None:
            cache["logp"] = y
        return y

    def backward(self, dy, cache, grads, need_input_grad=True):
        if not need_input_grad:
            return None
        p = np.exp(cache["logp"])
        return dy - p * dy.sum(axis=1, keepdims=True)

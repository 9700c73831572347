"""Model specifications and the network engine (forward / backward / predict).

Two fixed architectures are supported. Parameters live in one flat vector;
layers hold reshaped views into it, so the optimizer can update in place.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, InputError, NumericalError
from ..rng import substream
from .layers import BatchNorm, Conv2d, Flatten, Layer, Linear, LogSoftmax, MaxPool2, ReLU
from .tensor import Tensor, as_array

ARCHITECTURES = ("mnist-2conv", "gtsrb-5conv")


@dataclass
class ModelSpec:
    architecture: str
    input_shape: tuple  # (C, H, W)
    num_classes: int
    layer_defs: list
    param_count: int = 0
    shape_walk: list = field(default_factory=list)

    def validate(self) -> "ModelSpec":
        layers = build_layers(self)
        shape = self.input_shape
        self.shape_walk = []
        for i, layer in enumerate(layers):
            shape = layer.out_shape(shape)
            self.shape_walk.append(shape)
        if shape != (self.num_classes,):
            raise ConfigError(f"layer stack ends at shape {shape}, expected ({self.num_classes},)")
        for i, d in enumerate(self.layer_defs):
            if d["kind"] == "batchnorm":
                nxt = self.layer_defs[i + 1] if i + 1 < len(self.layer_defs) else None
                if nxt is None or nxt["kind"] != "relu":
                    raise ConfigError(f"batchnorm at layer {i} must directly precede its activation")
        self.param_count = sum(
            int(np.prod(shape)) for layer in layers for _, shape in layer.param_specs()
        )
        return self


def _conv_block(cin, cout, pad):
    return [
        {"kind": "conv", "in": cin, "out": cout, "k": 3, "pad": pad},
        {"kind": "batchnorm", "channels": cout},
        {"kind": "relu"},
    ]


def model_spec(architecture: str, conv_channels=None, fc_width: int | None = None) -> ModelSpec:
    """Build the layer table for one of the two supported architectures.

    Channel widths and the FC width are configurable; the defaults below are
    the shipped configuration.
    """
    if architecture == "mnist-2conv":
        ch = tuple(conv_channels) if conv_channels else (32, 64)
        fc = fc_width or 128
        if len(ch) != 2:
            raise ConfigError(f"mnist-2conv takes 2 conv widths, got {ch}")
        h = 28 - 2 - 2  # two valid 3x3 convs
        flat = ch[1] * (h // 2) * (h // 2)
        defs = (
            _conv_block(1, ch[0], 0)
            + _conv_block(ch[0], ch[1], 0)
            + [
                {"kind": "maxpool"},
                {"kind": "flatten"},
                {"kind": "linear", "in": flat, "out": fc},
                {"kind": "batchnorm", "channels": fc},
                {"kind": "relu"},
                {"kind": "linear", "in": fc, "out": 10},
                {"kind": "log-softmax"},
            ]
        )
        return ModelSpec(architecture, (1, 28, 28), 10, defs).validate()
    if architecture == "gtsrb-5conv":
        ch = tuple(conv_channels) if conv_channels else (32, 32, 64, 64, 128)
        fc = fc_width or 256
        if len(ch) != 5:
            raise ConfigError(f"gtsrb-5conv takes 5 conv widths, got {ch}")
        defs = []
        cin = 3
        for i, cout in enumerate(ch):
            defs += _conv_block(cin, cout, 1)
            if i in (1, 3, 4):  # pool after blocks 2, 4, 5
                defs.append({"kind": "maxpool"})
            cin = cout
        flat = ch[4] * 4 * 4  # 32 -> 16 -> 8 -> 4 through the three pools
        defs += [
            {"kind": "flatten"},
            {"kind": "linear", "in": flat, "out": fc},
            {"kind": "batchnorm", "channels": fc},
            {"kind": "relu"},
            {"kind": "linear", "in": fc, "out": 43},
            {"kind": "log-softmax"},
        ]
        return ModelSpec(architecture, (3, 32, 32), 43, defs).validate()
    raise ConfigError(f"unknown architecture {architecture!r}; known: {ARCHITECTURES}")


def build_layers(spec: ModelSpec) -> list:
    out = []
    for d in spec.layer_defs:
        kind = d["kind"]
        if kind == "conv":
            out.append(Conv2d(d["in"], d["out"], d["k"], d["pad"]))
        elif kind == "batchnorm":
            out.append(BatchNorm(d["channels"]))
        elif kind == "relu":
            out.append(ReLU())
        elif kind == "maxpool":
            out.append(MaxPool2())
        elif kind == "flatten":
            out.append(Flatten())
        elif kind == "linear":
            out.append(Linear(d["in"], d["out"]))
        elif kind == "log-softmax":
            out.append(LogSoftmax())
        else:
            raise ConfigError(f"unknown layer kind {kind!r}")
    return out


class Network:
    """Instantiated model: flat parameter vector + layer stack over it.

    forward(eval) is a pure function of (parameters, running stats, input);
    forward/backward with mode="train" update batchnorm running statistics,
    so exactly one train-mode pass should run per optimizer step.
    """

    def __init__(self, spec: ModelSpec, dtype=np.float32, init_seed: int = 0):
        spec.validate()
        self.spec = spec
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.float32, np.float64):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")
        self.layers = build_layers(spec)
        self.params = np.zeros(spec.param_count, dtype=self.dtype)
        self._grads = np.zeros(spec.param_count, dtype=self.dtype)
        off = 0
        for i, layer in enumerate(self.layers):
            views, gviews = {}, {}
            for name, shape in layer.param_specs():
                n = int(np.prod(shape))
                views[name] = self.params[off : off + n].reshape(shape)
                gviews[name] = self._grads[off : off + n].reshape(shape)
                off += n
            layer.bind(views)
            layer.gviews = gviews
            if isinstance(layer, BatchNorm):
                layer.alloc_state(self.dtype)
            layer.init_params(substream(init_seed, "init", i))
        assert off == spec.param_count

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        if batch.ndim != 4 or batch.shape[1:] != self.spec.input_shape:
            raise ConfigError(
                f"batch shape {batch.shape} does not match model input (B, {', '.join(map(str, self.spec.input_shape))})"
            )
        if batch.dtype != self.dtype:
            batch = batch.astype(self.dtype)
        return batch

    def _run(self, x, mode, caches):
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, mode, caches[i] if caches is not None else None)
        return x

    def forward(self, batch, mode: str = "eval") -> Tensor:
        """Log-probabilities for a batch; every output row logsumexps to 0."""
        if mode not in ("train", "eval"):
            raise InputError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = self._check_batch(as_array(batch))
        y = self._run(x, mode, None)
        if not np.isfinite(y).all():
            self._locate_nonfinite(x, mode)
        return Tensor(y)

    def _locate_nonfinite(self, x, mode):
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, mode, None)
            if not np.isfinite(x).all():
                raise NumericalError(f"non-finite activation after layer {i} ({layer.kind})")
        raise NumericalError("non-finite activation")

    def backward(self, batch, labels, mode: str = "train", need_param_grads: bool = True, need_input_grad: bool = True):
        """One forward/backward pass with mean NLL loss.

        Returns (param_grads, input_grad, loss_value); param_grads is a flat
        copy, input_grad a Tensor the shape of the batch. Either output can
        be switched off to save work.
        """
        x = self._check_batch(as_array(batch))
        labels = np.asarray(labels)
        if labels.shape != (x.shape[0],):
            raise InputError(f"labels shape {labels.shape} does not match batch size {x.shape[0]}")
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise InputError(f"labels must lie in [0, {self.num_classes})")
        b = x.shape[0]
        caches = [{} for _ in self.layers]
        logp = self._run(x, mode, caches)
        if not np.isfinite(logp).all():
            self._locate_nonfinite(x, mode)
        loss = float(-logp[np.arange(b), labels].mean())
        dy = np.zeros_like(logp)
        dy[np.arange(b), labels] = -1.0 / b
        dx = dy
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            need_dx = need_input_grad or i > 0
            dx = layer.backward(dx, caches[i], layer.gviews if need_param_grads else None, need_dx)
        input_grad = None
        if need_input_grad:
            if not np.isfinite(dx).all():
                raise NumericalError("non-finite input gradient")
            input_grad = Tensor(dx)
        grads = self._grads.copy() if need_param_grads else None
        return grads, input_grad, loss

    def predict(self, batch) -> np.ndarray:
        """Argmax class per row; ties resolve to the lowest class index."""
        logp = self.forward(batch, mode="eval").array
        return np.argmax(logp, axis=1)

    def running_stats(self) -> np.ndarray:
        """Concatenated (mean, var) per batchnorm layer, in layer order."""
        parts = []
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                parts.append(layer.state.running_mean)
                parts.append(layer.state.running_var)
        if not parts:
            return np.zeros(0, dtype=self.dtype)
        return np.concatenate(parts)

    def set_running_stats(self, vec: np.ndarray) -> None:
        expected = self.running_stats().size
        if vec.size != expected:
            raise ConfigError(f"running stats length {vec.size}, expected {expected}")
        off = 0
        for layer in self.layers:
            if isinstance(layer, BatchNorm):
                c = layer.channels
                layer.state.running_mean[...] = vec[off : off + c]
                layer.state.running_var[...] = vec[off + c : off + 2 * c]
                off += 2 * c

"""Versioned binary checkpoint: magic "CTXF", little-endian layout.

    CTXF | u32 version | u16 len + arch tag | u64 param count |
    f32[P] params | u32 S | f32[S] running stats |
    u64 adam step | f32 lr, beta1, beta2, eps, weight_decay | f32[P] m | f32[P] v

A writer/reader round-trip is bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import ConfigError, FormatError
from .adam import AdamState
from .model import ModelSpec, Network, model_spec

MAGIC = b"CTXF"
VERSION = 1


def save_checkpoint(path, net: Network, adam: AdamState) -> None:
    arch = net.spec.architecture.encode("utf-8")
    stats = net.running_stats().astype("<f4")
    params = net.params.astype("<f4")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<H", len(arch)))
        f.write(arch)
        f.write(struct.pack("<Q", params.size))
        f.write(params.tobytes())
        f.write(struct.pack("<I", stats.size))
        f.write(stats.tobytes())
        f.write(struct.pack("<Q", adam.step))
        f.write(struct.pack("<fffff", adam.lr, adam.beta1, adam.beta2, adam.eps, adam.weight_decay))
        f.write(adam.m.astype("<f4").tobytes())
        f.write(adam.v.astype("<f4").tobytes())


def _read(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"checkpoint truncated while reading {what}")
    return buf


def load_checkpoint(path, dtype=np.float32, spec: ModelSpec | None = None):
    """Rebuild (network, adam state) from a checkpoint file.

    The architecture tag selects the default model spec unless an explicit
    spec (e.g. with non-default widths) is supplied.
    """
    with open(path, "rb") as f:
        magic = _read(f, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}, expected {MAGIC!r}")
        (version,) = struct.unpack("<I", _read(f, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (arch_len,) = struct.unpack("<H", _read(f, 2, "architecture tag length"))
        arch = _read(f, arch_len, "architecture tag").decode("utf-8")
        (param_count,) = struct.unpack("<Q", _read(f, 8, "parameter count"))
        if spec is None:
            spec = model_spec(arch)
        elif spec.architecture != arch:
            raise ConfigError(f"checkpoint is for {arch!r}, requested spec is {spec.architecture!r}")
        if spec.param_count != param_count:
            raise ConfigError(
                f"checkpoint has {param_count} parameters but the {arch!r} spec has "
                f"{spec.param_count}; widths differ from the saved model"
            )
        params = np.frombuffer(_read(f, 4 * param_count, "parameters"), dtype="<f4")
        (n_stats,) = struct.unpack("<I", _read(f, 4, "stats count"))
        stats = np.frombuffer(_read(f, 4 * n_stats, "running stats"), dtype="<f4")
        (step,) = struct.unpack("<Q", _read(f, 8, "adam step"))
        lr, b1, b2, eps, wd = struct.unpack("<fffff", _read(f, 20, "adam scalars"))
        m = np.frombuffer(_read(f, 4 * param_count, "adam m"), dtype="<f4")
        v = np.frombuffer(_read(f, 4 * param_count, "adam v"), dtype="<f4")
        if f.read(1):
            raise FormatError("trailing bytes after checkpoint payload")
    net = Network(spec, dtype=dtype)
    net.params[...] = params.astype(dtype)
    net.set_running_stats(stats.astype(dtype))
    adam = AdamState(param_count, lr=lr, weight_decay=wd, beta1=b1, beta2=b2, eps=eps, dtype=dtype)
    adam.step = int(step)
    adam.m[...] = m.astype(dtype)
    adam.v[...] = v.astype(dtype)
    return net, adam

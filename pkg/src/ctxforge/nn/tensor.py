"""Flat-data tensor carrier for activations, parameters, and input gradients."""

from __future__ import annotations

import numpy as np

from ..errors import InputError, NumericalError


class Tensor:
    """An n-dimensional float array with an optional gradient slot.

    `array` is the shaped view, `data` the flat row-major view of the same
    memory. `grad`, when present, is flat and the same length as `data`.
    """

    __slots__ = ("array", "grad")

    def __init__(self, array, grad=None):
        self.array = np.ascontiguousarray(array)
        if self.array.dtype not in (np.float32, np.float64):
            self.array = self.array.astype(np.float32)
        self.grad = None
        if grad is not None:
            grad = np.asarray(grad).reshape(-1)
            if grad.size != self.array.size:
                raise InputError(f"grad length {grad.size} != data length {self.array.size}")
            self.grad = grad

    @property
    def shape(self) -> tuple:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        return self.array.reshape(-1)

    def check_finite(self, what: str = "tensor") -> "Tensor":
        if not np.isfinite(self.array).all():
            raise NumericalError(f"non-finite values in {what}")
        return self


def as_array(batch) -> np.ndarray:
    """Accept Tensor or ndarray and return the shaped ndarray."""
    return batch.array if isinstance(batch, Tensor) else np.asarray(batch)

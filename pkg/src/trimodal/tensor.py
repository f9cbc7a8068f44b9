"""Dense float64 tensor, the carrier of activations, kernels, and gradients.

A Tensor is a thin shape-checked wrapper around a contiguous numpy array.
All numeric work in the package happens in double precision; gradient
verification at 1e-4 relative tolerance depends on that.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeError


class Tensor:
    """Row-major dense array with explicit dims.

    Invariants: len(data) == prod(dims), every dim positive, and values
    stay finite through forward and backward passes (checked by the
    network code after each pass).
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray | Sequence | float):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if any(d <= 0 for d in arr.shape):
            raise ShapeError(f"tensor dims must be positive, got {arr.shape}")
        self.data = np.ascontiguousarray(arr)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @classmethod
    def zeros(cls, dims: Iterable[int]) -> "Tensor":
        return cls(np.zeros(tuple(dims), dtype=np.float64))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy())

    def reshape(self, dims: Iterable[int]) -> "Tensor":
        dims = tuple(dims)
        if int(np.prod(dims)) != self.size:
            raise ShapeError(f"cannot reshape {self.dims} to {dims}")
        return Tensor(self.data.reshape(dims))

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def assert_finite(self, where: str = "") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            suffix = f" in {where}" if where else ""
            raise ShapeError(f"non-finite values{suffix}")
        return self

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.data, other.data))

    def allclose(self, other: "Tensor", rtol: float = 1e-9, atol: float = 1e-12) -> bool:
        return self.dims == other.dims and bool(
            np.allclose(self.data, other.data, rtol=rtol, atol=atol)
        )


def as_tensor(x: "Tensor | np.ndarray | Sequence | float") -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)

"""Dense float32 tensor and the arithmetic-work counter.

The tensor is a thin wrapper over a C-contiguous (row-major) numpy
float32 array plus an optional gradient buffer of the same shape. All
layer kernels in :mod:`convreuse.ops` consume and produce these.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError


class Tensor:
    """Rank-N dense array of 32-bit floats with an optional grad slot."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad: np.ndarray | None = None):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if grad is not None:
            grad = np.ascontiguousarray(grad, dtype=np.float32)
            if grad.shape != arr.shape:
                raise ShapeMismatchError(
                    f"grad shape {grad.shape} != data shape {arr.shape}"
                )
        self.data = arr
        self.grad = grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(),
                      None if self.grad is None else self.grad.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={'set' if self.grad is not None else 'none'})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class OpCounter:
    """Multiply-accumulate and update counts for one trial.

    Counts are the closed-form algorithmic MACs of conv and dense layers
    (activation, pooling and loss layers count zero), not the physical
    multiplies of any particular kernel. This makes the totals machine-
    and implementation-independent, so frozen-prefix savings can be
    asserted as exact integer identities.
    """

    forward_macs: int = 0
    backward_macs: int = 0
    param_updates: int = 0

    def merge(self, other: "OpCounter") -> None:
        self.forward_macs += other.forward_macs
        self.backward_macs += other.backward_macs
        self.param_updates += other.param_updates

    def snapshot(self) -> dict:
        return {
            "forward_macs": self.forward_macs,
            "backward_macs": self.backward_macs,
            "param_updates": self.param_updates,
        }


def conv_macs(n: int, c: int, f: int, k: int, h_out: int, w_out: int) -> int:
    """MACs of one valid-padding stride-1 conv pass: N*F*C*k^2*Hout*Wout."""
    return n * f * c * k * k * h_out * w_out


def dense_macs(n: int, d: int, u: int) -> int:
    """MACs of one dense (matrix product) pass: N*D*U."""
    return n * d * u

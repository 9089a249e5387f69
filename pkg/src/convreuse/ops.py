"""Forward and backward kernels for every layer the networks use.

All kernels are pure functions of their inputs: same inputs, same bits.
Convolution is implemented as im2col plus a single matrix product; the
test suite holds a naive quadruple-loop reference that any optimized
kernel here must continue to match.

When an :class:`OpCounter` is passed, each kernel adds its closed-form
MAC count (see :mod:`convreuse.tensor`), regardless of how the actual
arithmetic is organized.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatchError
from .tensor import OpCounter, Tensor, conv_macs, dense_macs


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ShapeMismatchError(message)


def im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Unfold valid stride-1 k x k windows of (N,C,H,W) into (N*Ho*Wo, C*k*k) rows."""
    n, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (N,C,Ho,Wo,k,k)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * ho * wo, c * k * k)


def conv2d_forward(x: Tensor, w: Tensor, b: Tensor,
                   counter: OpCounter | None = None,
                   cols_out: list | None = None) -> Tensor:
    """Valid (no padding), stride-1 cross-correlation plus per-filter bias.

    x: (N,C,H,W), w: (F,C,k,k), b: (F,) -> (N,F,H-k+1,W-k+1).
    If `cols_out` is given, the im2col matrix is appended to it so the
    matching backward call can skip recomputing it.
    """
    _require(x.data.ndim == 4, f"conv input must be rank 4, got shape {x.shape}")
    _require(w.data.ndim == 4, f"conv weight must be rank 4, got shape {w.shape}")
    n, c, h, wd = x.shape
    f, cw, k, k2 = w.shape
    _require(k == k2, f"conv kernel must be square, got {k}x{k2}")
    _require(c == cw, f"input channels {c} != weight channels {cw}")
    _require(k <= h and k <= wd, f"kernel {k} exceeds input spatial dims {h}x{wd}")
    _require(b.shape == (f,), f"bias shape {b.shape} != ({f},)")

    ho, wo = h - k + 1, wd - k + 1
    cols = im2col(x.data, k)
    if cols_out is not None:
        cols_out.append(cols)
    y = cols @ w.data.reshape(f, -1).T + b.data
    y = np.ascontiguousarray(y.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))
    if counter is not None:
        counter.forward_macs += conv_macs(n, c, f, k, ho, wo)
    return Tensor(y)


def conv2d_backward(x: Tensor, w: Tensor, dy: Tensor,
                    counter: OpCounter | None = None,
                    need_dx: bool = True,
                    cols: np.ndarray | None = None,
                    ) -> tuple[Tensor | None, Tensor, Tensor]:
    """Gradients of conv2d_forward: (dx, dw, db). dw and db accumulate over the batch.

    With need_dx=False the input gradient is neither computed nor counted;
    the caller uses this when the layer below needs no gradient (the first
    layer, or the layer just above a frozen prefix).
    """
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = h - k + 1, wd - k + 1
    _require(dy.shape == (n, f, ho, wo),
             f"upstream grad shape {dy.shape} != expected {(n, f, ho, wo)}")

    dy_mat = np.ascontiguousarray(dy.data.transpose(0, 2, 3, 1)).reshape(n * ho * wo, f)
    db = dy_mat.sum(axis=0)
    if cols is None:
        cols = im2col(x.data, k)
    dw = (dy_mat.T @ cols).reshape(f, c, k, k)

    macs = conv_macs(n, c, f, k, ho, wo)  # dw work
    dx = None
    if need_dx:
        dx_cols = (dy_mat @ w.data.reshape(f, -1)).reshape(n, ho, wo, c, k, k)
        dx_cols = dx_cols.transpose(0, 3, 1, 2, 4, 5)
        dx_arr = np.zeros((n, c, h, wd), dtype=np.float32)
        for i in range(k):
            for j in range(k):
                dx_arr[:, :, i:i + ho, j:j + wo] += dx_cols[:, :, :, :, i, j]
        dx = Tensor(dx_arr)
        macs += conv_macs(n, c, f, k, ho, wo)  # dx work equals dw work
    if counter is not None:
        counter.backward_macs += macs
    return dx, Tensor(dw), Tensor(db)


def maxpool2_forward(x: Tensor,
                     counter: OpCounter | None = None) -> tuple[Tensor, np.ndarray]:
    """2x2 window, stride-2 max; trailing odd row/column dropped.

    Returns the pooled tensor and a uint8 index array (same shape as the
    output) holding the row-major offset 0..3 of each window's maximum.
    Ties break toward the first element in window scan order.
    """
    _require(x.data.ndim == 4, f"pool input must be rank 4, got shape {x.shape}")
    n, c, h, w = x.shape
    _require(h >= 2 and w >= 2, f"pool needs spatial dims >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    win = x.data[:, :, :2 * ho, :2 * wo].reshape(n, c, ho, 2, wo, 2)
    win = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 3, 5)).reshape(n, c, ho, wo, 4)
    idx = win.argmax(axis=-1).astype(np.uint8)
    y = win.max(axis=-1)
    return Tensor(y), idx


def maxpool2_backward(argmax_indices: np.ndarray, dy: Tensor,
                      input_shape: tuple[int, ...],
                      counter: OpCounter | None = None) -> Tensor:
    """Route dy to the recorded argmax positions, zeros elsewhere."""
    n, c, h, w = input_shape
    ho, wo = h // 2, w // 2
    _require(dy.shape == (n, c, ho, wo),
             f"upstream grad shape {dy.shape} != pooled shape {(n, c, ho, wo)}")
    _require(argmax_indices.shape == (n, c, ho, wo),
             f"index shape {argmax_indices.shape} != pooled shape {(n, c, ho, wo)}")
    if argmax_indices.max(initial=0) > 3:
        raise ShapeMismatchError("argmax index out of range for a 2x2 window")

    routed = np.zeros((n, c, ho, wo, 4), dtype=np.float32)
    np.put_along_axis(routed, argmax_indices[..., None].astype(np.intp),
                      dy.data[..., None], axis=-1)
    dx = np.zeros((n, c, h, w), dtype=np.float32)
    dx[:, :, :2 * ho, :2 * wo] = (
        routed.reshape(n, c, ho, wo, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, 2 * ho, 2 * wo)
    )
    return Tensor(dx)


def relu(x: Tensor, counter: OpCounter | None = None) -> Tensor:
    """Elementwise max(0, x)."""
    return Tensor(np.maximum(x.data, np.float32(0)))


def relu_backward(x: Tensor, dy: Tensor,
                  counter: OpCounter | None = None) -> Tensor:
    """dy where x > 0 else 0; the derivative at exactly 0 is taken as 0."""
    _require(dy.shape == x.shape, f"grad shape {dy.shape} != input shape {x.shape}")
    return Tensor(dy.data * (x.data > 0))


def dense_forward(x: Tensor, w: Tensor, b: Tensor,
                  counter: OpCounter | None = None) -> Tensor:
    """y = x @ w + b for x: (N,D), w: (D,U), b: (U,)."""
    _require(x.data.ndim == 2 and w.data.ndim == 2,
             f"dense expects rank-2 x and w, got {x.shape} and {w.shape}")
    n, d = x.shape
    dw_, u = w.shape
    _require(d == dw_, f"inner dims disagree: x has {d}, w has {dw_}")
    _require(b.shape == (u,), f"bias shape {b.shape} != ({u},)")
    if counter is not None:
        counter.forward_macs += dense_macs(n, d, u)
    return Tensor(x.data @ w.data + b.data)


def dense_backward(x: Tensor, w: Tensor, dy: Tensor,
                   counter: OpCounter | None = None,
                   need_dx: bool = True,
                   ) -> tuple[Tensor | None, Tensor, Tensor]:
    """Gradients of dense_forward: (dx, dw, db)."""
    n, d = x.shape
    _, u = w.shape
    _require(dy.shape == (n, u), f"upstream grad shape {dy.shape} != {(n, u)}")
    dw = x.data.T @ dy.data
    db = dy.data.sum(axis=0)
    macs = dense_macs(n, d, u)
    dx = None
    if need_dx:
        dx = Tensor(dy.data @ w.data.T)
        macs += dense_macs(n, d, u)
    if counter is not None:
        counter.backward_macs += macs
    return dx, Tensor(dw), Tensor(db)


def softmax_xent(logits: Tensor, labels: np.ndarray,
                 counter: OpCounter | None = None) -> tuple[float, Tensor]:
    """Mean cross-entropy of softmax(logits) against integer class labels.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / N, so the
    gradient rows each sum to zero.
    """
    _require(logits.data.ndim == 2, f"logits must be rank 2, got shape {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    _require(labels.shape == (n,), f"labels shape {labels.shape} != ({n},)")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ShapeMismatchError(f"labels must lie in [0, {k})")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    log_denom = np.log(denom[:, 0])
    rows = np.arange(n)
    loss = float(np.mean(log_denom - z[rows, labels]))

    dlogits = ez / denom
    dlogits[rows, labels] -= np.float32(1)
    dlogits /= np.float32(n)
    return loss, Tensor(dlogits)


def sgd_step(param: Tensor, grad: Tensor | np.ndarray, lr: float,
             counter: OpCounter | None = None) -> Tensor:
    """In-place param <- param - lr * grad."""
    g = grad.data if isinstance(grad, Tensor) else grad
    _require(g.shape == param.shape,
             f"grad shape {g.shape} != param shape {param.shape}")
    param.data -= np.float32(lr) * g
    if counter is not None:
        counter.param_updates += param.size
    return param

"""Rank-4 tensor operations for the tiny SR backbones.

Activations and parameters are dense ``(n, c, h, w)`` float arrays. The
pipeline runs in float32; float64 inputs are accepted so numerical tests can
isolate truncation error. Every op validates shapes and finiteness and has a
hand-written backward rule. There is no autograd: the layer graphs are fixed
and shallow, so gradients are propagated explicitly.

Convolution is computed as im2col plus one matrix product, which keeps the
hot loop inside BLAS; the nested-loop definition it must match lives in the
test suite as an independent oracle.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericsError, ShapeError
from ..util import require_finite

__all__ = [
    "check_tensor4",
    "conv2d_forward",
    "conv2d_backward",
    "relu",
    "relu_backward",
    "pixel_shuffle",
    "pixel_unshuffle",
    "l1_loss",
]


def check_tensor4(x: np.ndarray, what: str = "tensor") -> None:
    """Validate the (n, c, h, w) dense float-array contract."""
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        got = getattr(x, "shape", type(x).__name__)
        raise ShapeError(f"{what}: expected rank-4 array, got {got}")
    if x.dtype.kind != "f":
        raise ShapeError(f"{what}: expected float dtype, got {x.dtype}")
    require_finite(x, what)


def _check_kernel(weight: np.ndarray, pad: int) -> tuple[int, int, int]:
    cout, cin, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kh}x{kw}")
    if pad != (kh - 1) // 2:
        raise ShapeError(f"pad must be (k-1)/2 = {(kh - 1) // 2}, got {pad}")
    return cout, cin, kh


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """Unfold x into (cin*k*k, n*h*w) with zero padding, taps in row-major
    (cin, dy, dx) order to match the kernel layout."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((c, k, k, n, h, w), dtype=x.dtype)
    for dy in range(k):
        for dx in range(k):
            cols[:, dy, dx] = xp[:, :, dy : dy + h, dx : dx + w].transpose(1, 0, 2, 3)
    return cols.reshape(c * k * k, n * h * w)


def _col2im(cols: np.ndarray, x_shape: tuple, k: int, pad: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back onto the input raster."""
    n, c, h, w = x_shape
    cols6 = cols.reshape(c, k, k, n, h, w)
    gxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for dy in range(k):
        for dx in range(k):
            gxp[:, :, dy : dy + h, dx : dx + w] += cols6[:, dy, dx].transpose(1, 0, 2, 3)
    if pad == 0:
        return gxp
    return gxp[:, :, pad:-pad, pad:-pad]


def _conv_gemm(cols: np.ndarray, weight: np.ndarray, bias: np.ndarray, n: int, h: int, w: int) -> np.ndarray:
    cout = weight.shape[0]
    out = weight.reshape(cout, -1) @ cols
    out += bias.reshape(cout, 1)
    return np.ascontiguousarray(out.reshape(cout, n, h, w).transpose(1, 0, 2, 3))


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray, pad: int) -> np.ndarray:
    """Same-size 2D convolution (cross-correlation form) with zero padding.

    out[n,o,y,x] = bias[o] + sum_{i,dy,dx} x[n,i,y+dy-pad,x+dx-pad] * weight[o,i,dy,dx]
    """
    check_tensor4(x, "conv input")
    check_tensor4(weight, "conv weight")
    _, cin, k = _check_kernel(weight, pad)
    if x.shape[1] != cin:
        raise ShapeError(f"conv input has {x.shape[1]} channels, weight expects {cin}")
    bias = np.asarray(bias, dtype=x.dtype).reshape(-1)
    if bias.shape[0] != weight.shape[0]:
        raise ShapeError(f"bias length {bias.shape[0]} != output channels {weight.shape[0]}")
    n, _, h, w = x.shape
    return _conv_gemm(_im2col(x, k, pad), weight, bias, n, h, w)


def conv2d_backward(
    x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray, pad: int | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Analytic gradients of conv2d_forward; grad_bias sums grad_out over n,y,x."""
    check_tensor4(x, "conv input")
    check_tensor4(weight, "conv weight")
    check_tensor4(grad_out, "conv grad_out")
    if pad is None:
        pad = (weight.shape[2] - 1) // 2
    cout, cin, k = _check_kernel(weight, pad)
    n, _, h, w = x.shape
    if x.shape[1] != cin or grad_out.shape != (n, cout, h, w):
        raise ShapeError(
            f"conv backward shape mismatch: x {x.shape}, weight {weight.shape}, grad_out {grad_out.shape}"
        )
    cols = _im2col(x, k, pad)
    g2 = grad_out.transpose(1, 0, 2, 3).reshape(cout, -1)
    grad_weight = (g2 @ cols.T).reshape(weight.shape)
    grad_bias = g2.sum(axis=1)
    grad_cols = weight.reshape(cout, -1).T @ g2
    grad_input = _col2im(grad_cols, x.shape, k, pad)
    return grad_input, grad_weight, grad_bias


def relu(x: np.ndarray) -> np.ndarray:
    check_tensor4(x, "relu input")
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Gradient is passed where x > 0 and zero elsewhere (including x == 0)."""
    if grad_out.shape != x.shape:
        raise ShapeError(f"relu backward: grad {grad_out.shape} vs input {x.shape}")
    return grad_out * (x > 0)


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange r*r channel groups into an r-times spatial upsampling:
    out[n, k, r*y+a, r*x+b] = x[n, k*r*r + a*r + b, y, x]."""
    check_tensor4(x, "pixel_shuffle input")
    n, c, h, w = x.shape
    if r < 1 or c % (r * r) != 0:
        raise ShapeError(f"channel count {c} not divisible by r^2 = {r * r}")
    cout = c // (r * r)
    y = x.reshape(n, cout, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(y.reshape(n, cout, h * r, w * r))


def pixel_unshuffle(y: np.ndarray, r: int) -> np.ndarray:
    """Inverse permutation of pixel_shuffle (also its backward rule)."""
    check_tensor4(y, "pixel_unshuffle input")
    n, c, hh, ww = y.shape
    if r < 1 or hh % r != 0 or ww % r != 0:
        raise ShapeError(f"spatial dims {hh}x{ww} not divisible by r = {r}")
    h, w = hh // r, ww // r
    x = y.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(x.reshape(n, c * r * r, h, w))


def l1_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean absolute error and its gradient w.r.t. pred (sign(0) = 0)."""
    check_tensor4(pred, "l1 pred")
    check_tensor4(target, "l1 target")
    if pred.shape != target.shape:
        raise ShapeError(f"l1 shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.abs(diff), dtype=np.float64))
    grad = (np.sign(diff) / diff.size).astype(pred.dtype)
    return loss, grad

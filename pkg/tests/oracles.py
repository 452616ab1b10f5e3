"""Independent reference implementations the library must match.

These are deliberately written in the most literal way possible (nested
loops, per-pixel kernel sums, scalar recurrences) and share no code with the
package internals.
"""

import numpy as np


def conv2d_oracle(x, weight, bias, pad):
    """Direct definition of same-size convolution with zero padding,
    accumulated in float64: loops over every output coordinate."""
    n, cin, h, w = x.shape
    cout, _, kh, kw = weight.shape
    xp = np.zeros((n, cin, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, :, pad : pad + h, pad : pad + w] = x
    w64 = weight.astype(np.float64)
    out = np.empty((n, cout, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(cout):
            for y in range(h):
                for xo in range(w):
                    acc = float(bias[o])
                    acc += np.sum(xp[b, :, y : y + kh, xo : xo + kw] * w64[o])
                    out[b, o, y, xo] = acc
    return out


def cubic_kernel(x, a=-0.5):
    """The cubic convolution kernel W(x), evaluated piecewise."""
    ax = abs(x)
    if ax <= 1.0:
        return (a + 2.0) * ax**3 - (a + 3.0) * ax**2 + 1.0
    if ax < 2.0:
        return a * (ax**3 - 5.0 * ax**2 + 8.0 * ax - 4.0)
    return 0.0


def bicubic_oracle(img, out_w, out_h):
    """Per-output-pixel kernel sum with edge clamp and center alignment."""
    work = img.astype(np.float64)
    if work.ndim == 2:
        work = work[:, :, None]
    h, w, c = work.shape
    tmp = np.empty((h, out_w, c), dtype=np.float64)
    for xo in range(out_w):
        src = (xo + 0.5) * (w / out_w) - 0.5
        base = int(np.floor(src))
        acc = np.zeros((h, c))
        for m in range(-1, 3):
            weight = cubic_kernel(src - (base + m))
            col = min(max(base + m, 0), w - 1)
            acc += weight * work[:, col, :]
        tmp[:, xo, :] = acc
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    for yo in range(out_h):
        src = (yo + 0.5) * (h / out_h) - 0.5
        base = int(np.floor(src))
        acc = np.zeros((out_w, c))
        for m in range(-1, 3):
            weight = cubic_kernel(src - (base + m))
            row = min(max(base + m, 0), h - 1)
            acc += weight * tmp[row, :, :]
        out[yo] = acc
    return out if img.ndim == 3 else out[:, :, 0]


def central_diff(f, x, h=1e-3):
    """Central finite differences of scalar f() w.r.t. every entry of x,
    mutating x in place while probing."""
    g = np.zeros(x.shape, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic, numeric, floor=1e-4, mask=None):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    rel = np.abs(a - b) / denom
    if mask is not None:
        rel = rel[mask]
    return float(rel.max()) if rel.size else 0.0


def reference_adam_scalar(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, x0=0.0):
    """Textbook Adam recurrence on one scalar, pure float64; returns the
    value after each step."""
    m = v = 0.0
    x = x0
    out = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        x = x - lr * m_hat / (np.sqrt(v_hat) + eps)
        out.append(x)
    return out

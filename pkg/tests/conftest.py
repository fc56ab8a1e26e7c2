"""Shared test helpers: the central finite-difference gradient oracle.

The engine is float32, so the oracle is built to keep FD noise well under
the 1e-3 relative tolerance: the checked function returns a full tensor and
the probe direction is applied in float64 (avoiding f32 cancellation in
reductions), and tests keep inputs away from ReLU/max-pool kinks, where
central differences are invalid for any implementation.
"""

from __future__ import annotations

import numpy as np

from camb.tensor import Tensor, mul, no_grad, tsum


def _probe_weights(shape):
    return np.random.default_rng(0xC0FFEE).normal(size=shape).astype(np.float32)


def finite_difference_grads(fn, arrays, weights, eps):
    """d/dtheta of sum(weights * fn(theta)) by central differences.

    fn maps a list of Tensors to a Tensor; forward passes run in the f32
    engine, the weighted reduction runs in float64.
    """
    w64 = weights.astype(np.float64).reshape(-1)
    grads = []
    with no_grad():
        for base in arrays:
            g = np.zeros(base.size, dtype=np.float64)
            flat = base.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = fn([Tensor(a) for a in arrays]).data.astype(np.float64).reshape(-1)
                flat[i] = orig - eps
                lo = fn([Tensor(a) for a in arrays]).data.astype(np.float64).reshape(-1)
                flat[i] = orig
                g[i] = ((hi - lo) @ w64) / (2.0 * eps)
            grads.append(g.reshape(base.shape))
    return grads


def gradcheck(fn, arrays, eps=1e-2, rtol=1e-3, atol=1e-4):
    """Assert analytic gradients of sum(w * fn(inputs)) match finite differences.

    Passes when |analytic - fd| <= rtol * max(|analytic|, |fd|) + atol
    elementwise; atol is the f32 noise floor for near-zero entries.
    """
    arrays = [np.asarray(a, dtype=np.float32).copy() for a in arrays]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(tensors)
    weights = _probe_weights(out.shape)
    tsum(mul(out, Tensor(weights))).backward()
    analytic = [
        t.grad.astype(np.float64) if t.grad is not None else np.zeros(t.shape, dtype=np.float64)
        for t in tensors
    ]
    numeric = finite_difference_grads(fn, arrays, weights, eps)
    for k, (a, f) in enumerate(zip(analytic, numeric)):
        err = np.abs(a - f)
        bound = rtol * np.maximum(np.abs(a), np.abs(f)) + atol
        if not (err <= bound).all():
            worst = np.unravel_index(np.argmax(err - bound), err.shape)
            raise AssertionError(
                f"gradient mismatch on input {k} at {worst}: "
                f"analytic={a[worst]:.6g} fd={f[worst]:.6g}"
            )


def away_from_kink(x: np.ndarray, margin: float) -> np.ndarray:
    """Push values out of (-margin, margin) so ReLU-style FD stays valid."""
    x = x.copy()
    small = np.abs(x) < margin
    x[small] = np.where(x[small] >= 0, x[small] + margin, x[small] - margin)
    return x


def separate_pool_windows(x: np.ndarray, kernel: int, stride: int, margin: float) -> np.ndarray:
    """Ensure each pooling window has a unique max winning by > margin."""
    n, c, h, w = x.shape
    x = x.copy()
    for i in range(0, h - kernel + 1, stride):
        for j in range(0, w - kernel + 1, stride):
            win = x[:, :, i : i + kernel, j : j + kernel].reshape(n, c, -1)
            order = np.sort(win, axis=-1)
            gap = order[..., -1] - order[..., -2]
            bump = np.where(gap < margin, margin, 0.0).astype(np.float32)
            idx = win.argmax(axis=-1)
            np.put_along_axis(win, idx[..., None], np.take_along_axis(win, idx[..., None], -1) + bump[..., None], -1)
            x[:, :, i : i + kernel, j : j + kernel] = win.reshape(n, c, kernel, kernel)
    return x

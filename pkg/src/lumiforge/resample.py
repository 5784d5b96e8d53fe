"""Catmull-Rom (cubic a=-0.5) resampling primitives.

One interpolation kernel is used everywhere content gets resampled:
fractional EPI shearing, the 2x bicubic upsampling in front of the network,
and the separable light-field upsampling baseline. The kernel interpolates
(original samples are reproduced exactly) and has cubic-convolution order 3,
so constants and linear ramps survive resampling in the interior.
"""

from __future__ import annotations

import numpy as np

# Midpoint weights of the a=-0.5 cubic at taps (-1.5, -0.5, +0.5, +1.5).
_MID_WEIGHTS = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0


def cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Keys cubic-convolution kernel with a = -0.5, vectorized over `t`."""
    at = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(at)
    near = at <= 1.0
    far = (at > 1.0) & (at < 2.0)
    out[near] = (1.5 * at[near] - 2.5) * at[near] ** 2 + 1.0
    out[far] = ((-0.5 * at[far] + 2.5) * at[far] - 4.0) * at[far] + 2.0
    return out


def sample_line(values: np.ndarray, positions: np.ndarray):
    """Resample a 1D signal (first axis of `values`) at real-valued positions.

    values: (S, ...) array; positions: (P,) sample coordinates in [0, S-1]
    (out-of-range reads clamp to the edge).

    Returns (out, valid): out has shape (P, ...) and valid is a (P,) bool
    mask that is False wherever a clamped read contributed to the output.
    Integer positions read exactly one sample, so they only need the position
    itself in range; fractional positions need their whole 4-tap stencil.
    """
    values = np.asarray(values)
    positions = np.asarray(positions, dtype=float)
    n = values.shape[0]

    base = np.floor(positions).astype(int)
    frac = positions - base

    exact = frac == 0.0
    out = np.zeros(positions.shape + values.shape[1:], dtype=values.dtype)

    if np.any(exact):
        idx = np.clip(base[exact], 0, n - 1)
        out[exact] = values[idx]
    if np.any(~exact):
        sel = ~exact
        b = base[sel]
        f = frac[sel]
        taps = np.clip(b[:, None] + np.arange(-1, 3)[None, :], 0, n - 1)
        dist = f[:, None] + np.array([1.0, 0.0, -1.0, -2.0])[None, :]
        w = cubic_kernel(dist)
        gathered = values[taps]  # (P', 4, ...)
        wshape = w.shape + (1,) * (values.ndim - 1)
        out[sel] = np.sum(gathered * w.reshape(wshape), axis=1)

    valid = np.where(
        exact,
        (positions >= 0) & (positions <= n - 1),
        (base - 1 >= 0) & (base + 2 <= n - 1),
    )
    return out, valid


def _midpoints(values: np.ndarray, last_index: int) -> np.ndarray:
    """Half-offset samples between values[i] and values[i+1] for i in 0..last_index.

    Taps outside the signal clamp to the edge; weights are the a=-0.5 cubic
    evaluated at half-integer offsets.
    """
    n = values.shape[0]
    i = np.arange(last_index + 1)
    taps = np.clip(i[:, None] + np.arange(-1, 3)[None, :], 0, n - 1)
    w = _MID_WEIGHTS.reshape((4,) + (1,) * (values.ndim - 1))
    return np.sum(values[taps] * w, axis=1)


def upsample_axis_double(arr: np.ndarray, axis: int, endpoint: str) -> np.ndarray:
    """Double the resolution along one axis, keeping originals at even indices.

    endpoint="interior": N -> 2N-1 (midpoints strictly between samples; used
    for angular axes, e.g. 5 views -> 9).
    endpoint="extend": N -> 2N (one extra clamped midpoint past the last
    sample; used for spatial axes, e.g. 410 px -> 820).
    """
    if endpoint not in ("interior", "extend"):
        raise ValueError(f"unknown endpoint mode {endpoint!r}")
    moved = np.moveaxis(np.asarray(arr), axis, 0)
    n = moved.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples along the upsampled axis")
    out_n = 2 * n - 1 if endpoint == "interior" else 2 * n
    out = np.empty((out_n,) + moved.shape[1:], dtype=moved.dtype)
    out[0::2] = moved
    out[1::2] = _midpoints(moved, n - 2 if endpoint == "interior" else n - 1)
    return np.moveaxis(out, 0, axis)

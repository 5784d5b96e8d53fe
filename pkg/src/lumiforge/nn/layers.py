"""Parameters, initializers, and the recurrent layers.

The convolutional LSTM reads an EPI as a sequence of 1-pixel-thick slices.
Its per-step convolutions use a 3-tap kernel along the slice (the (1,3)
kernel with the sequence axis first), gates ordered (input, forget, cell,
output), no peepholes. The four scan directions share one implementation
via transpose/flip canonicalization, which makes the reversal symmetry
bottom_up(x) = flip(top_down(flip(x))) hold exactly.

directional_scan is a single fused tape node: the whole backpropagation
through time is hand-written here because taping every step individually
costs more in Python dispatch than the arithmetic itself.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import (
    Tensor,
    _accum,
    _result,
    add,
    concat,
    conv2d,
    conv_forward_core,
    conv_grad_w_core,
    conv_grad_x_core,
    mul,
    narrow,
    sigmoid,
    tanh,
)

DIRECTIONS = ("top-down", "bottom-up", "left-right", "right-left")


class ParamStore:
    """Ordered name -> Tensor(requires_grad=True) registry."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.tensors: dict[str, Tensor] = {}

    def add(self, name: str, array: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ShapeError(f"duplicate parameter {name!r}")
        # own a contiguous, writable buffer: updates are in-place, checkpoints
        # serialize raw, and callers may hand in read-only frombuffer views
        t = Tensor(np.array(array, dtype=self.dtype, order="C"), requires_grad=True)
        self.tensors[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors.keys())

    def zero_grads(self):
        for t in self.tensors.values():
            t.grad = None

    def param_count(self) -> int:
        return sum(t.data.size for t in self.tensors.values())

    def astype(self, dtype) -> "ParamStore":
        out = ParamStore(dtype)
        for name, t in self.tensors.items():
            out.add(name, t.data)
        return out


def he_uniform(rng: np.random.Generator, in_ch: int, out_ch: int, kh: int, kw: int):
    fan_in = in_ch * kh * kw
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(in_ch, out_ch, kh, kw))


def lstm_input_init(rng: np.random.Generator, in_ch: int, channels: int):
    return he_uniform(rng, in_ch, 4 * channels, 1, 3)


def lstm_hidden_init(rng: np.random.Generator, channels: int):
    """Semi-orthogonal per gate: each gate's (3C -> C) map has orthonormal columns."""
    taps = []
    for _ in range(4):
        g = rng.normal(size=(3 * channels, channels))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))  # fix QR sign ambiguity for reproducibility
        taps.append(q.reshape(channels, 3, channels))  # (i, tap, o)
    w = np.stack(taps, axis=2)  # (i, tap, gate, o)
    return w.reshape(channels, 3, 4 * channels).transpose(0, 2, 1)[:, :, None, :]


def lstm_bias_init(channels: int):
    """Zeros except the forget gate, which starts open at 1."""
    b = np.zeros(4 * channels)
    b[channels : 2 * channels] = 1.0
    return b


def conv_lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, wx: Tensor, wh: Tensor, b: Tensor):
    """One recurrence step on (B, C, H, W) slices; returns (h, c).

    gates = conv(x; 1x3) + conv(h_prev; 1x3) + b, split (i, f, g, o):
    c = sigm(f) * c_prev + sigm(i) * tanh(g); h = sigm(o) * tanh(c).
    """
    C = h_prev.data.shape[1]
    gates = add(conv2d(x, wx, b), conv2d(h_prev, wh, None))
    i = sigmoid(narrow(gates, 0, C))
    f = sigmoid(narrow(gates, C, C))
    g = tanh(narrow(gates, 2 * C, C))
    o = sigmoid(narrow(gates, 3 * C, C))
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def _canon(a: np.ndarray, transpose: bool, reverse: bool) -> np.ndarray:
    if transpose:
        a = a.transpose(0, 1, 3, 2)
    if reverse:
        a = a[:, :, ::-1]
    return np.ascontiguousarray(a)


def _uncanon(a: np.ndarray, transpose: bool, reverse: bool) -> np.ndarray:
    if reverse:
        a = a[:, :, ::-1]
    if transpose:
        a = a.transpose(0, 1, 3, 2)
    return np.ascontiguousarray(a)


def _tap3_cols(a: np.ndarray) -> np.ndarray:
    """(B, C, N) -> (B*N, C*3) patch matrix of the 3-tap padded window."""
    ap = np.pad(a, ((0, 0), (0, 0), (1, 1)))
    win = sliding_window_view(ap, 3, axis=2)  # (B, C, N, 3)
    return win.transpose(0, 2, 1, 3).reshape(a.shape[0] * a.shape[2], -1)


def _tap3_apply(a: np.ndarray, mat: np.ndarray) -> np.ndarray:
    """3-tap conv along the last axis via one GEMM; mat is ((C*3), Cout)."""
    out = _tap3_cols(a) @ mat
    return out.reshape(a.shape[0], a.shape[2], -1).transpose(0, 2, 1)


def _sigm(z):
    # clip keeps float32 exp in range; sigmoid is saturated flat out there anyway
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))


def directional_scan(x: Tensor, direction: str, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    """Run the c-LSTM across the whole plane in one of the four directions.

    top-down / bottom-up sweep along rows (angular axis), left-right /
    right-left along columns; reversed directions scan the flipped sequence
    and flip the result back. Zero initial state. Output is the stacked
    hidden state, same (B, C_hidden, H, W) footprint as the input plane.
    """
    if direction not in DIRECTIONS:
        raise ShapeError(f"unknown scan direction {direction!r}")
    transpose = direction in ("left-right", "right-left")
    reverse = direction in ("bottom-up", "right-left")
    C = wh.data.shape[0]
    dt = x.data.dtype
    need_grad = any(t.requires_grad for t in (x, wx, wh, b))

    xc = _canon(x.data, transpose, reverse)
    B, _, T, N = xc.shape
    # The x-path conv has kernel height 1, so it cannot mix sequence steps:
    # run it over the whole plane in one GEMM before the recurrence.
    gx_all = conv_forward_core(xc, wx.data, 1) + b.data.reshape(1, -1, 1, 1)
    wh_taps = wh.data[:, :, 0, :]  # (C, 4C, 3)
    wh_mat = np.ascontiguousarray(wh_taps.transpose(0, 2, 1).reshape(3 * C, 4 * C))

    h = np.zeros((B, C, N), dtype=dt)
    c = np.zeros((B, C, N), dtype=dt)
    hs = np.empty((B, C, T, N), dtype=dt)
    caches = [] if need_grad else None
    for t in range(T):
        z = gx_all[:, :, t, :] + _tap3_apply(h, wh_mat)
        i = _sigm(z[:, :C])
        f = _sigm(z[:, C : 2 * C])
        g = np.tanh(z[:, 2 * C : 3 * C])
        o = _sigm(z[:, 3 * C :])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[:, :, t, :] = h
        if need_grad:
            caches.append((i, f, g, o, c_prev, tc))

    data = _uncanon(hs, transpose, reverse)
    if not need_grad:
        return Tensor(data)

    adj_mat = np.ascontiguousarray(
        wh_taps[:, :, ::-1].transpose(1, 2, 0).reshape(3 * 4 * C, C)
    )

    def _bw():
        g_out = _canon(out.grad, transpose, reverse)
        dz_all = np.empty((B, 4 * C, T, N), dtype=dt)
        dh = np.zeros((B, C, N), dtype=dt)
        dc = np.zeros((B, C, N), dtype=dt)
        for t in range(T - 1, -1, -1):
            i, f, g, o, c_prev, tc = caches[t]
            dh = dh + g_out[:, :, t, :]
            do = dh * tc
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = np.empty((B, 4 * C, N), dtype=dt)
            dz[:, :C] = dc * g * i * (1.0 - i)
            dz[:, C : 2 * C] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * C : 3 * C] = dc * i * (1.0 - g * g)
            dz[:, 3 * C :] = do * o * (1.0 - o)
            dz_all[:, :, t, :] = dz
            dh = _tap3_apply(dz, adj_mat)
            dc = dc * f
        # h_prev sequence: zeros at t=0, then the stored h states shifted by one.
        h_prev_seq = np.zeros_like(hs)
        h_prev_seq[:, :, 1:, :] = hs[:, :, :-1, :]
        _accum(x, _uncanon(conv_grad_x_core(dz_all, wx.data, 1, (T, N)), transpose, reverse))
        _accum(wx, conv_grad_w_core(xc, dz_all, 1, 3, 1))
        _accum(wh, conv_grad_w_core(h_prev_seq, dz_all, 1, 3, 1))
        _accum(b, dz_all.sum(axis=(0, 2, 3)))

    out = _result(data, (x, wx, wh, b), _bw)
    return out


def lstm_block(x: Tensor, params: dict[str, Tensor]) -> Tensor:
    """Four directional scans in parallel, channel-concatenated (4x hidden)."""
    outs = [
        directional_scan(x, d, params[f"{d}.wx"], params[f"{d}.wh"], params[f"{d}.b"])
        for d in DIRECTIONS
    ]
    return concat(outs, axis=1)

"""Reverse-mode autodiff over numpy arrays, sized for this project.

A Tensor wraps an ndarray plus an optional backward closure; building an
expression builds the tape. Ops only record the tape (and keep forward
caches) when some input requires grad, so inference runs graph-free with
flat memory. Gradients accumulate into .grad buffers during backward().

Layout for 4D activations is (batch, channel, height=angular, width=spatial).
Convolution kernels are (in_ch, out_ch, kh, kw); conv2d is cross-correlation
with symmetric "same" zero padding, stride 1 or 2. The transposed conv is
the exact adjoint of the stride-2 conv, with the caller picking the output
size (2H or 2H-1 both invert ceil-halving).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


_grad_enabled = True


class no_grad:
    """Context manager that suspends tape recording.

    Model parameters always require grad, so without this every inference
    forward would keep its closures and conv caches alive until the output
    is dropped; batched sweeps over thousands of planes then hold gigabytes
    of dead tape. Inside the context, ops return plain value tensors.
    """

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False

    def __exit__(self, exc_type, exc, tb):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _result(data, parents, backward):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.astype(t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward op."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def backward(root: Tensor):
    """Run reverse-mode accumulation from a scalar (or pre-seeded) root."""
    if root.grad is None:
        if root.data.size != 1:
            raise ShapeError("backward() needs a scalar root or a pre-seeded grad")
        root.grad = np.ones_like(root.data)
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward()


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def _bw():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(out.grad, b.data.shape))

    out = _result(data, (a, b), _bw)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def _bw():
        _accum(a, _unbroadcast(out.grad, a.data.shape))
        _accum(b, _unbroadcast(-out.grad, b.data.shape))

    out = _result(data, (a, b), _bw)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def _bw():
        _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))

    out = _result(data, (a, b), _bw)
    return out


def scale(a: Tensor, s: float) -> Tensor:
    data = a.data * s

    def _bw():
        _accum(a, out.grad * s)

    out = _result(data, (a,), _bw)
    return out


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    data = np.where(keep, a.data, 0)

    def _bw():
        _accum(a, out.grad * keep)

    out = _result(data, (a,), _bw)
    return out


def sigmoid(a: Tensor) -> Tensor:
    # clip keeps float32 exp in range; sigmoid is saturated flat out there anyway
    data = 1.0 / (1.0 + np.exp(-np.clip(a.data, -60.0, 60.0)))

    def _bw():
        _accum(a, out.grad * data * (1.0 - data))

    out = _result(data, (a,), _bw)
    return out


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def _bw():
        _accum(a, out.grad * (1.0 - data * data))

    out = _result(data, (a,), _bw)
    return out


def sum_all(a: Tensor) -> Tensor:
    data = np.asarray(a.data.sum())

    def _bw():
        _accum(a, np.broadcast_to(out.grad, a.data.shape))

    out = _result(data, (a,), _bw)
    return out


# ------------------------------------------------------------- shape plumbing

def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def _bw():
        offs = np.cumsum([0] + sizes)
        for p, lo, hi in zip(parts, offs[:-1], offs[1:]):
            idx = [slice(None)] * data.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, out.grad[tuple(idx)])

    out = _result(data, tuple(parts), _bw)
    return out


def narrow(a: Tensor, start: int, length: int, axis: int = 1) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    data = a.data[idx]

    def _bw():
        g = np.zeros_like(a.data)
        g[idx] = out.grad
        _accum(a, g)

    out = _result(data, (a,), _bw)
    return out


def crop2d(a: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left (h, w) window of a (B, C, H, W) tensor."""
    if h > a.data.shape[2] or w > a.data.shape[3]:
        raise ShapeError(f"crop {h}x{w} exceeds input {a.data.shape}")
    data = a.data[:, :, :h, :w]

    def _bw():
        g = np.zeros_like(a.data)
        g[:, :, :h, :w] = out.grad
        _accum(a, g)

    out = _result(data, (a,), _bw)
    return out


# ------------------------------------------------------------- conv machinery

def _same_pads(kh: int, kw: int) -> tuple[int, int]:
    return kh // 2, kw // 2


def _windows(x: np.ndarray, kh: int, kw: int, stride: int, ph: int, pw: int) -> np.ndarray:
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv_forward_core(x, w, stride: int) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = _same_pads(kh, kw)
    win = _windows(x, kh, kw, stride, ph, pw)
    B, _, P, Q, _, _ = win.shape
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * P * Q, -1)
    wmat = w.transpose(0, 2, 3, 1).reshape(-1, w.shape[1])
    out = cols @ wmat
    return out.reshape(B, P, Q, w.shape[1]).transpose(0, 3, 1, 2)


def conv_grad_w_core(x, gy, kh: int, kw: int, stride: int) -> np.ndarray:
    ph, pw = _same_pads(kh, kw)
    win = _windows(x, kh, kw, stride, ph, pw)
    B, Ci, P, Q, _, _ = win.shape
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * P * Q, Ci * kh * kw)
    gcols = gy.transpose(0, 2, 3, 1).reshape(B * P * Q, -1)
    gw = cols.T @ gcols
    return gw.reshape(Ci, kh, kw, -1).transpose(0, 3, 1, 2)


def conv_grad_x_core(gy, w, stride: int, x_hw: tuple[int, int]) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = _same_pads(kh, kw)
    H, W = x_hw
    B, Co, P, Q = gy.shape
    Ci = w.shape[0]
    if stride == 1:
        # full correlation with the channel-swapped, spatially flipped kernel:
        # one gather GEMM instead of kh*kw strided scatter-adds
        gyp = np.pad(gy, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
        win = sliding_window_view(gyp, (kh, kw), axis=(2, 3))[:, :, ph : ph + H, pw : pw + W]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, Co * kh * kw)
        wf = w[:, :, ::-1, ::-1].transpose(1, 2, 3, 0).reshape(Co * kh * kw, Ci)
        gx = cols @ np.ascontiguousarray(wf)
        return gx.reshape(B, H, W, Ci).transpose(0, 3, 1, 2)
    gxp = np.zeros((B, Ci, H + 2 * ph, W + 2 * pw), dtype=gy.dtype)
    gflat = gy.transpose(0, 2, 3, 1).reshape(-1, Co)
    for k in range(kh):
        rows = slice(k, k + stride * (P - 1) + 1, stride)
        for l in range(kw):
            cols = slice(l, l + stride * (Q - 1) + 1, stride)
            contrib = gflat @ w[:, :, k, l].T
            gxp[:, :, rows, cols] += contrib.reshape(B, P, Q, Ci).transpose(0, 3, 1, 2)
    return gxp[:, :, ph : ph + H, pw : pw + W]


def convt_forward_core(x, w, stride: int, out_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of conv_forward_core w.r.t. its input, used as a forward op."""
    kh, kw = w.shape[2], w.shape[3]
    ph, pw = _same_pads(kh, kw)
    Ht, Wt = out_hw
    B, Ci, P, Q = x.shape
    full_h, full_w = stride * (P - 1) + kh, stride * (Q - 1) + kw
    if ph + Ht > full_h or pw + Wt > full_w:
        raise ShapeError(f"transposed conv cannot reach {out_hw} from {(P, Q)}")
    ypad = np.zeros((B, w.shape[1], full_h, full_w), dtype=x.dtype)
    xflat = x.transpose(0, 2, 3, 1).reshape(-1, Ci)
    for k in range(kh):
        rows = slice(k, k + stride * (P - 1) + 1, stride)
        for l in range(kw):
            cols = slice(l, l + stride * (Q - 1) + 1, stride)
            contrib = xflat @ w[:, :, k, l]
            ypad[:, :, rows, cols] += contrib.reshape(B, P, Q, -1).transpose(0, 3, 1, 2)
    return ypad[:, :, ph : ph + Ht, pw : pw + Wt]


def _convt_pad_back(gy, stride: int, in_hw: tuple[int, int], kh: int, kw: int) -> np.ndarray:
    """Re-embed the cropped transposed-conv output grad into the full buffer."""
    ph, pw = _same_pads(kh, kw)
    P, Q = in_hw
    full_h, full_w = stride * (P - 1) + kh, stride * (Q - 1) + kw
    g = np.zeros((gy.shape[0], gy.shape[1], full_h, full_w), dtype=gy.dtype)
    g[:, :, ph : ph + gy.shape[2], pw : pw + gy.shape[3]] = gy
    return g


def convt_grad_x_core(gy, w, stride: int, in_hw: tuple[int, int]) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    g = _convt_pad_back(gy, stride, in_hw, kh, kw)
    win = sliding_window_view(g, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    B, Co, P, Q, _, _ = win.shape
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * P * Q, Co * kh * kw)
    wmat = w.transpose(1, 2, 3, 0).reshape(Co * kh * kw, -1)
    gx = cols @ wmat
    return gx.reshape(B, P, Q, -1).transpose(0, 3, 1, 2)


def convt_grad_w_core(x, gy, kh: int, kw: int, stride: int) -> np.ndarray:
    g = _convt_pad_back(gy, stride, (x.shape[2], x.shape[3]), kh, kw)
    win = sliding_window_view(g, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    B, Co, P, Q, _, _ = win.shape
    wincols = win.transpose(1, 4, 5, 0, 2, 3).reshape(Co * kh * kw, B * P * Q)
    xcols = x.transpose(0, 2, 3, 1).reshape(B * P * Q, -1)
    gw = wincols @ xcols
    return gw.reshape(Co, kh, kw, -1).transpose(3, 0, 1, 2)


# ----------------------------------------------------------------- tape convs

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1) -> Tensor:
    """Cross-correlate (B,Ci,H,W) with (Ci,Co,kh,kw); same padding.

    Stride 2 halves each spatial dim to ceil(n/2).
    """
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError("conv2d expects 4D input and kernel")
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"conv2d channels {x.data.shape[1]} != kernel in_ch {w.data.shape[0]}")
    kh, kw = w.data.shape[2], w.data.shape[3]
    ph, pw = _same_pads(kh, kw)
    win = _windows(x.data, kh, kw, stride, ph, pw)
    B, _, P, Q, _, _ = win.shape
    Ci, Co = w.data.shape[0], w.data.shape[1]
    # the im2col matrix feeds both the forward GEMM and the weight grad;
    # when nothing needs grad, _result drops the closure and cols is freed
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * P * Q, Ci * kh * kw)
    wmat = w.data.transpose(0, 2, 3, 1).reshape(Ci * kh * kw, Co)
    data = (cols @ wmat).reshape(B, P, Q, Co).transpose(0, 3, 1, 2)
    if b is not None:
        data = data + b.data.reshape(1, -1, 1, 1)
    x_hw = (x.data.shape[2], x.data.shape[3])

    def _bw():
        g = out.grad
        if x.requires_grad:
            _accum(x, conv_grad_x_core(g, w.data, stride, x_hw))
        if w.requires_grad:
            gcols = g.transpose(0, 2, 3, 1).reshape(B * P * Q, Co)
            gw = (cols.T @ gcols).reshape(Ci, kh, kw, Co).transpose(0, 3, 1, 2)
            _accum(w, gw)
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    out = _result(data, parents, _bw)
    return out


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None, out_hw: tuple[int, int], stride: int = 2) -> Tensor:
    """Stride-2 upsampling conv: exact adjoint of conv2d(..., stride=2).

    out_hw picks the target size; both 2H and 2H-1 are reachable from H.
    """
    if x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"conv_transpose2d channels {x.data.shape[1]} != kernel in_ch {w.data.shape[0]}")
    data = convt_forward_core(x.data, w.data, stride, out_hw)
    if b is not None:
        data = data + b.data.reshape(1, -1, 1, 1)
    kh, kw = w.data.shape[2], w.data.shape[3]
    in_hw = (x.data.shape[2], x.data.shape[3])

    def _bw():
        g = out.grad
        if x.requires_grad:
            _accum(x, convt_grad_x_core(g, w.data, stride, in_hw))
        if w.requires_grad:
            _accum(w, convt_grad_w_core(x.data, g, kh, kw, stride))
        if b is not None and b.requires_grad:
            _accum(b, g.sum(axis=(0, 2, 3)))

    parents = (x, w) if b is None else (x, w, b)
    out = _result(data, parents, _bw)
    return out

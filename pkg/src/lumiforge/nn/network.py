"""The multi-level EPI super-resolution network.

Input EPIs are first doubled in both axes with the Catmull-Rom upsampler
(views A -> 2A-1, pixels S -> 2S); the network is shape-preserving after
that and predicts a residual on top of the interpolated base. Each level
of the descending leg runs a conv pre-block, four directional c-LSTM scans
merged by channel concat, and a conv post-block; levels are bridged by
stride-2 down convs, and the ascending leg is transposed convs with
concat skips from the matching level, closed by a 1x1 projection back to
RGB. ReLU follows every conv except that projection.

The projection starts at zero, so a freshly built model is exactly the
bicubic interpolator; training only ever has to learn the correction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..epi import EPI
from ..errors import ShapeError
from ..resample import upsample_axis_double
from .layers import DIRECTIONS, ParamStore, he_uniform, lstm_bias_init, lstm_hidden_init, lstm_input_init, lstm_block
from .tensor import Tensor, concat, conv2d, conv_transpose2d, crop2d, no_grad, relu


@dataclass(frozen=True)
class NetworkSpec:
    """Layer dimensioning; the parameter layout is a pure function of this.

    Level i (1-based) uses pre-block channels pre_base*i. The LSTM block
    concatenates four directional scans of lstm_channels each; a
    ``use_lstm=False`` variant swaps the block for two 1x3 convs with the
    same output width, keeping every other shape identical.
    """

    levels: int = 4
    pre_base: int = 25
    pre_layers: int = 4
    pre_kernel: tuple[int, int] = (3, 5)
    lstm_channels: int = 100
    post_channels: tuple[int, int, int] = (64, 32, 32)
    post_kernel: tuple[int, int] = (5, 5)
    updown_channels: int = 32
    in_channels: int = 3
    use_lstm: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ShapeError("need at least one level")
        if min(self.pre_base, self.pre_layers, self.lstm_channels, self.updown_channels) < 1:
            raise ShapeError("channel and layer counts must be positive")
        if len(self.post_channels) != 3:
            raise ShapeError("post block is three conv layers")
        for k in (*self.pre_kernel, *self.post_kernel):
            if k < 1 or k % 2 == 0:
                raise ShapeError("stride-1 kernels must be odd-sized")

    @classmethod
    def full(cls) -> "NetworkSpec":
        return cls()

    @classmethod
    def reduced(cls) -> "NetworkSpec":
        """Desk-scale trainable variant: same structure, 2 levels, thin channels."""
        return cls(levels=2, pre_base=8, lstm_channels=16, post_channels=(32, 16, 16), updown_channels=16)

    @classmethod
    def micro(cls) -> "NetworkSpec":
        """Smallest legal 2-level net; for gradient checks and shape tests."""
        return cls(levels=2, pre_base=2, lstm_channels=3, post_channels=(6, 4, 4), updown_channels=4)

    def without_lstm(self) -> "NetworkSpec":
        return replace(self, use_lstm=False)

    @property
    def min_input(self) -> int:
        """Smallest post-upsample extent that survives the stride-2 chain."""
        return 2 ** self.levels

    def level_in_channels(self, i: int) -> int:
        return self.in_channels if i == 1 else self.updown_channels

    def pre_channels(self, i: int) -> int:
        return self.pre_base * i

    @property
    def merged_channels(self) -> int:
        return 4 * self.lstm_channels

    def layer_table(self) -> list[tuple[str, tuple[int, ...]]]:
        """Every parameter tensor, in creation/serialization order."""
        kh, kw = self.pre_kernel
        ph, pw = self.post_kernel
        table: list[tuple[str, tuple[int, ...]]] = []
        for i in range(1, self.levels + 1):
            cin = self.level_in_channels(i)
            cpre = self.pre_channels(i)
            for j in range(self.pre_layers):
                c0 = cin if j == 0 else cpre
                table.append((f"l{i}.pre{j}.w", (c0, cpre, kh, kw)))
                table.append((f"l{i}.pre{j}.b", (cpre,)))
            if self.use_lstm:
                for d in DIRECTIONS:
                    table.append((f"l{i}.lstm.{d}.wx", (cpre, 4 * self.lstm_channels, 1, 3)))
                    table.append((f"l{i}.lstm.{d}.wh", (self.lstm_channels, 4 * self.lstm_channels, 1, 3)))
                    table.append((f"l{i}.lstm.{d}.b", (4 * self.lstm_channels,)))
            else:
                table.append((f"l{i}.seq0.w", (cpre, self.merged_channels, 1, 3)))
                table.append((f"l{i}.seq0.b", (self.merged_channels,)))
                table.append((f"l{i}.seq1.w", (self.merged_channels, self.merged_channels, 1, 3)))
                table.append((f"l{i}.seq1.b", (self.merged_channels,)))
            c_in_post = self.merged_channels
            for j, c_out in enumerate(self.post_channels):
                table.append((f"l{i}.post{j}.w", (c_in_post, c_out, ph, pw)))
                table.append((f"l{i}.post{j}.b", (c_out,)))
                c_in_post = c_out
        post_out = self.post_channels[-1]
        for i in range(1, self.levels):
            table.append((f"down{i}.w", (post_out, self.updown_channels, 3, 3)))
            table.append((f"down{i}.b", (self.updown_channels,)))
        for i in range(self.levels - 1, 0, -1):
            cin = post_out if i == self.levels - 1 else post_out + self.updown_channels
            table.append((f"up{i}.w", (cin, self.updown_channels, 3, 3)))
            table.append((f"up{i}.b", (self.updown_channels,)))
        proj_in = post_out if self.levels == 1 else post_out + self.updown_channels
        table.append(("proj.w", (proj_in, self.in_channels, 1, 1)))
        table.append(("proj.b", (self.in_channels,)))
        return table

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layer_table())


@dataclass
class Model:
    spec: NetworkSpec
    store: ParamStore
    step: int = 0

    def forward(self, x: Tensor) -> Tensor:
        """Residual for a (B, 3, H, W) batch; H and W must be at least
        spec.min_input (reflect-pad upstream, crop the result)."""
        spec, P = self.spec, self.store
        if x.data.shape[2] < spec.min_input or x.data.shape[3] < spec.min_input:
            raise ShapeError(
                f"input {x.data.shape[2:]} below minimum {spec.min_input}; reflect-pad first"
            )
        feats = []
        cur = x
        for i in range(1, spec.levels + 1):
            z = cur
            for j in range(spec.pre_layers):
                z = relu(conv2d(z, P[f"l{i}.pre{j}.w"], P[f"l{i}.pre{j}.b"]))
            if spec.use_lstm:
                params = {
                    f"{d}.{part}": P[f"l{i}.lstm.{d}.{part}"]
                    for d in DIRECTIONS
                    for part in ("wx", "wh", "b")
                }
                z = lstm_block(z, params)
            else:
                z = relu(conv2d(z, P[f"l{i}.seq0.w"], P[f"l{i}.seq0.b"]))
                z = relu(conv2d(z, P[f"l{i}.seq1.w"], P[f"l{i}.seq1.b"]))
            for j in range(len(spec.post_channels)):
                z = relu(conv2d(z, P[f"l{i}.post{j}.w"], P[f"l{i}.post{j}.b"]))
            feats.append(z)
            if i < spec.levels:
                cur = relu(conv2d(z, P[f"down{i}.w"], P[f"down{i}.b"], stride=2))
        z = feats[-1]
        for i in range(spec.levels - 1, 0, -1):
            target = (feats[i - 1].data.shape[2], feats[i - 1].data.shape[3])
            up = relu(conv_transpose2d(z, P[f"up{i}.w"], P[f"up{i}.b"], target))
            z = concat([feats[i - 1], up], axis=1)
        return conv2d(z, P["proj.w"], P["proj.b"])


def build_model(spec: NetworkSpec, seed: int = 0, dtype=np.float32) -> Model:
    """Initialize all parameters: He-uniform convs, semi-orthogonal LSTM
    hidden kernels, forget bias 1, and a zeroed projection so the fresh
    model is exactly the bicubic interpolator."""
    rng = np.random.default_rng(seed)
    store = ParamStore(dtype)
    for name, shape in spec.layer_table():
        if name.endswith(".wh"):
            arr = lstm_hidden_init(rng, spec.lstm_channels)
        elif name.endswith(".wx"):
            arr = lstm_input_init(rng, shape[0], spec.lstm_channels)
        elif name.endswith(".b") and ".lstm." in name:
            arr = lstm_bias_init(spec.lstm_channels)
        elif name.startswith("proj."):
            arr = np.zeros(shape)
        elif name.endswith(".b"):
            arr = np.zeros(shape)
        else:
            arr = he_uniform(rng, shape[0], shape[1], shape[2], shape[3])
        store.add(name, arr)
    return Model(spec=spec, store=store)


# ------------------------------------------------------- EPI-level interface

def bicubic_upsample(epi: EPI) -> EPI:
    """Double both axes: views A -> 2A-1 (new views between the old ones),
    pixels S -> 2S. Original samples land untouched at even indices."""
    if epi.n_views < 2 or epi.n_pixels < 2:
        raise ShapeError("bicubic upsample needs at least 2 views and 2 pixels")
    data = upsample_axis_double(epi.data, axis=0, endpoint="interior")
    data = upsample_axis_double(data, axis=1, endpoint="extend")
    data = np.clip(data, 0.0, 1.0)
    mask = None
    if epi.mask is not None:
        mask = _upsample_mask(epi.mask)
    return EPI(data=data, orientation=epi.orientation, mask=mask)


def _upsample_mask(mask: np.ndarray) -> np.ndarray:
    """Conservative doubling: an interpolated sample is valid only if every
    source sample its 4-tap stencil touches is valid."""
    m = mask
    for axis, endpoint in ((0, "interior"), (1, "extend")):
        n = m.shape[axis]
        new_n = 2 * n - 1 if endpoint == "interior" else 2 * n
        out = np.zeros((new_n,) + m.shape[:axis] + m.shape[axis + 1 :], dtype=bool)
        moved = np.moveaxis(m, axis, 0)
        out[0::2] = moved
        mid = np.ones((new_n - n,) + moved.shape[1:], dtype=bool)
        for off in (-1, 0, 1, 2):
            src = np.clip(np.arange(new_n - n) + off, 0, n - 1)
            mid &= moved[src]
        out[1::2] = mid
        m = np.moveaxis(out, 0, axis)
    return m


def _reflect_indices(n: int, target: int) -> np.ndarray:
    """Triangle-wave index map 0,1,..,n-1,n-2,..,0,1,.. of length target."""
    if n == 1:
        return np.zeros(target, dtype=int)
    period = 2 * n - 2
    idx = np.arange(target) % period
    return np.where(idx < n, idx, period - idx)


def pad_to_min(arr: np.ndarray, min_hw: int) -> np.ndarray:
    """Reflect-extend the trailing two axes of (..., H, W) up to min_hw."""
    H, W = arr.shape[-2], arr.shape[-1]
    if H < min_hw:
        arr = np.take(arr, _reflect_indices(H, min_hw), axis=-2)
    if W < min_hw:
        arr = np.take(arr, _reflect_indices(W, min_hw), axis=-1)
    return arr


def upsample_base(epi: EPI) -> tuple[np.ndarray, np.ndarray | None]:
    """(2A-1, 2S, 3) bicubic base in float64, plus the doubled mask."""
    up = bicubic_upsample(epi)
    return np.asarray(up.data, dtype=np.float64), up.mask


def residual_batch(model: Model, bases: np.ndarray) -> np.ndarray:
    """Network residual for a stack of bases (B, H, W, 3), graph-free."""
    x = bases.transpose(0, 3, 1, 2).astype(model.store.dtype)
    H, W = x.shape[2], x.shape[3]
    x = pad_to_min(x, model.spec.min_input)
    with no_grad():
        res = model.forward(Tensor(x))
        if res.data.shape[2] != H or res.data.shape[3] != W:
            res = crop2d(res, H, W)
    return res.data.transpose(0, 2, 3, 1).astype(np.float64)


def infer_epi(model: Model, epi: EPI) -> EPI:
    """Super-resolve one EPI: bicubic base plus learned residual, clamped."""
    base, mask = upsample_base(epi)
    res = residual_batch(model, base[None])[0]
    out = np.clip(base + res, 0.0, 1.0)
    return EPI(data=out, orientation=epi.orientation, mask=mask)


def infer_epi_batch(model: Model, epis: list[EPI]) -> list[EPI]:
    """Batched inference for same-shape, unmasked EPIs (the pipeline's case)."""
    bases = np.stack([upsample_base(e)[0] for e in epis])
    res = residual_batch(model, bases)
    out = np.clip(bases + res, 0.0, 1.0)
    return [EPI(data=out[k], orientation=epis[k].orientation) for k in range(len(epis))]

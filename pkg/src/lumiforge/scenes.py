"""Procedural layered scenes: exact-disparity EPI synthesis and augmentation.

Stand-in for a rendered light-field dataset. A scene is a front-to-back
stack of fronto-parallel layers, each a 1D texture strip with a coverage
cutout and a single disparity. Rendering walks the stack per pixel, so
occlusion is correct by construction and every epipolar line's slope is
known exactly.

Pairs are rendered at high resolution (2A-1 views, 2S pixels) and decimated
to the low-resolution input, which makes LR(u,x) = HR(2u,2x) an identity
rather than an approximation. Disparity in pixels-per-view-step is the same
number on both grids (spatial doubling and angular-step halving cancel).
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np

from .epi import EPI, shear
from .errors import GeometryError, ShapeError

#: The 6 channel reorderings used for color augmentation.
RGB_PERMUTATIONS: tuple[tuple[int, int, int], ...] = tuple(
    itertools.permutations((0, 1, 2))
)

#: Integer shear disparities used for geometry augmentation.
SHEAR_DISPARITIES: tuple[int, ...] = (-3, -2, -1, 0, 1, 2, 3)


@dataclass(frozen=True)
class SceneLayer:
    """One fronto-parallel strip.

    texture: (W, 3) RGB in [0,1] over the scene coordinate s.
    coverage: (W,) bool, True where the layer occupies s.
    disparity: pixels of lateral shift per view step; larger = nearer.
    """

    disparity: float
    texture: np.ndarray
    coverage: np.ndarray

    def __post_init__(self):
        tex = np.asarray(self.texture, dtype=np.float64)
        cov = np.asarray(self.coverage, dtype=bool)
        if tex.ndim != 2 or tex.shape[1] != 3:
            raise ShapeError(f"layer texture must be (W, 3), got {tex.shape}")
        if cov.shape != (tex.shape[0],):
            raise ShapeError("layer coverage length must match texture width")
        if not np.all(np.isfinite(tex)) or tex.min() < 0 or tex.max() > 1:
            raise ShapeError("layer texture must be finite in [0, 1]")
        if not np.isfinite(self.disparity):
            raise GeometryError("layer disparity must be finite")
        tex = tex.copy()
        tex.setflags(write=False)
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "texture", tex)
        object.__setattr__(self, "coverage", cov)

    @property
    def width(self) -> int:
        return self.texture.shape[0]


@dataclass(frozen=True)
class LayeredScene:
    """Front-to-back layer stack; nearer layers (larger disparity) occlude."""

    layers: tuple[SceneLayer, ...]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ShapeError("scene needs at least one layer")
        d = [layer.disparity for layer in self.layers]
        for a, b in zip(d, d[1:]):
            if not a > b:
                raise GeometryError(
                    f"layers must be strictly front-to-back (descending disparity), got {d}"
                )


def render_epi(scene: LayeredScene, n_views: int, n_pixels: int, s_offset: float = 0.0) -> EPI:
    """Occlusion-correct EPI of a layered scene.

    Pixel (u, x) shows the front-most layer covering scene coordinate
    s = x + s_offset - (u - ref)*d, with ref the center view (n_views-1)/2.
    Coverage is looked up at the nearest texel, color by linear
    interpolation. Uncovered pixels stay black.
    """
    if n_views < 2 or n_pixels < 1:
        raise ShapeError("need n_views >= 2 and n_pixels >= 1")
    ref = (n_views - 1) / 2.0
    u = np.arange(n_views, dtype=float)[:, None]
    x = np.arange(n_pixels, dtype=float)[None, :]
    out = np.zeros((n_views, n_pixels, 3), dtype=np.float64)
    done = np.zeros((n_views, n_pixels), dtype=bool)
    for layer in scene.layers:
        W = layer.width
        s = x + s_offset - (u - ref) * layer.disparity
        j = np.rint(s).astype(int)
        covered = (j >= 0) & (j < W)
        covered[covered] = layer.coverage[j[covered]]
        hit = covered & ~done
        if not hit.any():
            continue
        sc = np.clip(s, 0.0, W - 1.0)
        i0 = np.floor(sc).astype(int)
        i1 = np.minimum(i0 + 1, W - 1)
        t = (sc - i0)[..., None]
        color = layer.texture[i0] * (1.0 - t) + layer.texture[i1] * t
        out[hit] = color[hit]
        done |= hit
    return EPI(data=out, orientation="horizontal")


@dataclass(frozen=True)
class GenConfig:
    """Knobs for the pair generator.

    n_views/n_pixels are the low-resolution EPI size; the rendered target is
    (2*n_views-1, 2*n_pixels). Disparities are drawn uniformly from
    [d_min, d_max] in pixels-per-view-step (either grid, same number).
    """

    n_views: int = 5
    n_pixels: int = 64
    d_min: float = -8.0
    d_max: float = 8.0
    max_layers: int = 4
    max_segments: int = 8
    max_cutouts: int = 3

    def __post_init__(self):
        if self.n_views < 2 or self.n_pixels < 4:
            raise ShapeError("need n_views >= 2 and n_pixels >= 4")
        if not (np.isfinite(self.d_min) and np.isfinite(self.d_max) and self.d_min < self.d_max):
            raise GeometryError("need finite d_min < d_max")
        if self.max_layers < 1 or self.max_segments < 1 or self.max_cutouts < 1:
            raise ShapeError("max_layers, max_segments, max_cutouts must be >= 1")

    @property
    def hr_shape(self) -> tuple[int, int]:
        return (2 * self.n_views - 1, 2 * self.n_pixels)


@dataclass(frozen=True)
class TrainingPair:
    """One supervised example: lr is hr decimated by 2 in both axes."""

    lr: EPI
    hr: EPI
    disparities: tuple[float, ...]


def _segment_texture(rng: np.random.Generator, width: int, max_segments: int) -> np.ndarray:
    n_seg = int(rng.integers(2, max_segments + 1))
    colors = rng.uniform(0.0, 1.0, size=(n_seg, 3))
    cuts = np.sort(rng.integers(1, width, size=n_seg - 1)) if n_seg > 1 else np.array([], int)
    labels = np.zeros(width, dtype=int)
    for c in cuts:
        labels[c:] += 1
    tex = colors[labels]
    if rng.uniform() < 0.5:
        # blend in a smooth ramp so not every edge is a hard step
        ramp = np.linspace(0.0, 1.0, width)[:, None]
        c0, c1 = rng.uniform(0.0, 1.0, size=(2, 3))
        grad = c0 * (1.0 - ramp) + c1 * ramp
        w = rng.uniform(0.2, 0.6)
        tex = (1.0 - w) * tex + w * grad
    return tex


def _cutout_coverage(rng: np.random.Generator, width: int, max_cutouts: int) -> np.ndarray:
    cov = np.zeros(width, dtype=bool)
    n_runs = int(rng.integers(1, max_cutouts + 1))
    for _ in range(n_runs):
        run = int(rng.uniform(0.05, 0.35) * width)
        run = max(run, 1)
        lo = int(rng.integers(0, max(width - run, 1)))
        cov[lo : lo + run] = True
    return cov


def _random_scene(rng: np.random.Generator, config: GenConfig) -> tuple[LayeredScene, int]:
    A_hr, S_hr = config.hr_shape
    d_cap = max(abs(config.d_min), abs(config.d_max))
    pad = int(np.ceil(d_cap * (A_hr - 1) / 2.0)) + 2
    width = S_hr + 2 * pad
    n_layers = int(rng.integers(1, config.max_layers + 1))
    while True:
        disparities = rng.uniform(config.d_min, config.d_max, size=n_layers)
        if len(np.unique(disparities)) == n_layers:
            break
    disparities = np.sort(disparities)[::-1]
    layers = []
    for i, d in enumerate(disparities):
        tex = _segment_texture(rng, width, config.max_segments)
        if i == n_layers - 1:
            cov = np.ones(width, dtype=bool)  # opaque backdrop, no holes to black
        else:
            cov = _cutout_coverage(rng, width, config.max_cutouts)
        layers.append(SceneLayer(disparity=float(d), texture=tex, coverage=cov))
    return LayeredScene(layers=tuple(layers)), pad


def generate_pair(rng: np.random.Generator, config: GenConfig) -> TrainingPair:
    """Render one HR EPI and decimate it to the LR input."""
    scene, pad = _random_scene(rng, config)
    A_hr, S_hr = config.hr_shape
    hr = render_epi(scene, A_hr, S_hr, s_offset=float(pad))
    lr = EPI(data=hr.data[::2, ::2], orientation="horizontal")
    return TrainingPair(lr=lr, hr=hr, disparities=tuple(layer.disparity for layer in scene.layers))


def gen_training_pairs(seed: int, count: int, config: GenConfig | None = None) -> list[TrainingPair]:
    """Deterministic dataset: sample i only depends on (seed, i).

    Per-item RNG streams are spawned from one root SeedSequence, so a
    parallel producer yields the same bytes as this serial loop.
    """
    if count < 1:
        raise ShapeError("count must be >= 1")
    if config is None:
        config = GenConfig()
    children = np.random.SeedSequence(seed).spawn(count)
    return [
        generate_pair(np.random.Generator(np.random.PCG64(child)), config)
        for child in children
    ]


@dataclass(frozen=True)
class AugmentOp:
    """One augmentation: channel reorder then integer shear, both members."""

    perm: tuple[int, int, int]
    shear_d: int

    def __post_init__(self):
        if tuple(sorted(self.perm)) != (0, 1, 2):
            raise ShapeError(f"not a channel permutation: {self.perm}")
        if self.shear_d not in SHEAR_DISPARITIES:
            raise GeometryError(f"shear disparity {self.shear_d} outside augmentation range")


@functools.cache
def augmentation_operations() -> tuple[AugmentOp, ...]:
    """The complete operator set: 6 permutations x 7 integer shears.

    Flips are deliberately absent; mirroring an EPI swaps which side of an
    occluder gets hidden, which teaches the wrong occlusion ordering.
    """
    return tuple(
        AugmentOp(perm=p, shear_d=d) for p in RGB_PERMUTATIONS for d in SHEAR_DISPARITIES
    )


def _permute_channels(epi: EPI, perm: tuple[int, int, int]) -> EPI:
    return EPI(data=epi.data[:, :, list(perm)], orientation=epi.orientation, mask=epi.mask)


def apply_augmentation(pair: TrainingPair, op: AugmentOp) -> TrainingPair:
    """Apply one operator consistently to both members.

    The same integer shear disparity is exact on both grids (every per-row
    shift is an integer), so LR(u,x) = HR(2u,2x) still holds on jointly
    valid pixels. Each scene disparity delta becomes delta - shear_d.
    """
    lr = _permute_channels(pair.lr, op.perm)
    hr = _permute_channels(pair.hr, op.perm)
    if op.shear_d != 0:
        lr = shear(lr, float(op.shear_d))
        hr = shear(hr, float(op.shear_d))
    disparities = tuple(d - op.shear_d for d in pair.disparities)
    return TrainingPair(lr=lr, hr=hr, disparities=disparities)


def augment(pair: TrainingPair, rng: np.random.Generator) -> TrainingPair:
    """Random draw from augmentation_operations(), applied to the pair."""
    ops = augmentation_operations()
    return apply_augmentation(pair, ops[int(rng.integers(len(ops)))])

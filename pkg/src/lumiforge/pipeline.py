"""Full light-field super-resolution from per-EPI network inference.

One EPI only spans one spatial axis, so the 4D job takes two passes: the
horizontal pass doubles (u, x) by running the network over every (v, y)
slice, the vertical pass doubles (v, y) over every (u, x) slice of the
intermediate volume. Either order works; "average-both" runs both orders
and averages, which is the honest answer to the inherent one-axis-per-EPI
ambiguity. Output dims are always (2V-1, 2U-1, 2Y, 2X).

Determinism: a fixed plan (order, tiling, batch size) plus fixed inputs
and checkpoint give bit-identical outputs; EPIs are processed in a fixed
order. Tiling itself changes network context at tile seams, so the tile
size is part of the plan, not a free implementation detail.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .epi import EPI
from .errors import ShapeError
from .lightfield import LightField4D
from .nn.network import Model, infer_epi_batch

MIN_TILE_OVERLAP = 16

PassOrder = Literal["h-first", "v-first", "average-both"]


@dataclass(frozen=True)
class SRPlan:
    """How to run the two passes: order, spatial tiling, inference batch."""

    order: PassOrder = "h-first"
    tile_size: int | None = None
    tile_overlap: int = MIN_TILE_OVERLAP
    batch_size: int = 8
    pin_input_views: bool = False

    def __post_init__(self):
        if self.order not in ("h-first", "v-first", "average-both"):
            raise ShapeError(f"unknown pass order {self.order!r}")
        if self.tile_overlap < MIN_TILE_OVERLAP:
            raise ShapeError(f"tile overlap must be >= {MIN_TILE_OVERLAP}")
        if self.tile_size is not None and self.tile_size <= self.tile_overlap:
            raise ShapeError("tile size must exceed the overlap")
        if self.batch_size < 1:
            raise ShapeError("batch size must be positive")


def tile_epi(epi: EPI, tile_size: int, overlap: int) -> list[tuple[int, EPI]]:
    """Split along the spatial axis into overlapping (start, tile) pieces."""
    if overlap < MIN_TILE_OVERLAP:
        raise ShapeError(f"tile overlap must be >= {MIN_TILE_OVERLAP}")
    if tile_size <= overlap:
        raise ShapeError("tile size must exceed the overlap")
    S = epi.n_pixels
    if S <= tile_size:
        return [(0, epi)]
    step = tile_size - overlap
    starts = list(range(0, S - tile_size, step)) + [S - tile_size]
    tiles = []
    for s in starts:
        mask = None if epi.mask is None else epi.mask[:, s : s + tile_size]
        tiles.append((s, EPI(data=epi.data[:, s : s + tile_size], orientation=epi.orientation, mask=mask)))
    return tiles


def stitch(tiles: list[tuple[int, EPI]], total: int) -> EPI:
    """Blend overlapping tiles back into one EPI of spatial size `total`.

    Overlaps are linearly feathered; where both tiles agree the left value
    is kept verbatim, which makes stitch(tile_epi(e)) the bit-exact
    identity.
    """
    if not tiles:
        raise ShapeError("nothing to stitch")
    A = tiles[0][1].n_views
    out = np.zeros((A, total, 3), dtype=np.float64)
    out_mask = np.zeros((A, total), dtype=bool)
    have = np.zeros(total, dtype=bool)
    for start, tile in sorted(tiles, key=lambda t: t[0]):
        data = np.asarray(tile.data, dtype=np.float64)
        mask = tile.valid_mask()
        w = tile.n_pixels
        end = start + w
        if end > total:
            raise ShapeError("tile extends past the stitched extent")
        seg = slice(start, end)
        overlap_cols = have[seg]
        n_ov = int(overlap_cols.sum())
        if n_ov == 0:
            out[:, seg] = data
            out_mask[:, seg] = mask
        else:
            if not overlap_cols[:n_ov].all():
                raise ShapeError("tiles must overlap contiguously from the left")
            blend = np.ones(w)
            blend[:n_ov] = np.linspace(0.0, 1.0, n_ov + 2)[1:-1]
            prev = out[:, seg]
            mixed = (1.0 - blend[None, :, None]) * prev + blend[None, :, None] * data
            out[:, seg] = np.where(prev == data, prev, mixed)
            out_mask[:, seg] = np.where(overlap_cols[None, :], out_mask[:, seg] & mask, mask)
        have[seg] = True
    if not have.all():
        raise ShapeError("tiles leave gaps in the stitched extent")
    return EPI(data=np.clip(out, 0.0, 1.0), orientation=tiles[0][1].orientation, mask=out_mask)


def _infer_one(model: Model, plan: SRPlan, epi: EPI) -> EPI:
    if plan.tile_size is None or epi.n_pixels <= plan.tile_size:
        return infer_epi_batch(model, [epi])[0]
    tiles = tile_epi(epi, plan.tile_size, plan.tile_overlap)
    out_tiles = []
    for start, tile in tiles:
        sr = infer_epi_batch(model, [tile])[0]
        out_tiles.append((2 * start, sr))
    return stitch(out_tiles, 2 * epi.n_pixels)


def _infer_many(model: Model, plan: SRPlan, epis: list[EPI]) -> list[EPI]:
    """Batch same-shaped EPIs through the network in plan-sized groups."""
    if plan.tile_size is not None and epis and epis[0].n_pixels > plan.tile_size:
        return [_infer_one(model, plan, e) for e in epis]
    out = []
    for i in range(0, len(epis), plan.batch_size):
        out.extend(infer_epi_batch(model, epis[i : i + plan.batch_size]))
    return out


def _pass_horizontal(model: Model, plan: SRPlan, volume: np.ndarray) -> np.ndarray:
    """(V, U, Y, X, 3) -> (V, 2U-1, Y, 2X, 3), one EPI per (v, y)."""
    V, U, Y, X, _ = volume.shape
    out = np.empty((V, 2 * U - 1, Y, 2 * X, 3), dtype=np.float64)
    for v in range(V):
        epis = [EPI(data=volume[v, :, y], orientation="horizontal") for y in range(Y)]
        srs = _infer_many(model, plan, epis)
        for y, sr in enumerate(srs):
            out[v, :, y] = sr.data
    return out


def _pass_vertical(model: Model, plan: SRPlan, volume: np.ndarray) -> np.ndarray:
    """(V, U, Y, X, 3) -> (2V-1, U, 2Y, X, 3), one EPI per (u, x)."""
    V, U, Y, X, _ = volume.shape
    out = np.empty((2 * V - 1, U, 2 * Y, X, 3), dtype=np.float64)
    for u in range(U):
        epis = [EPI(data=volume[:, u, :, x], orientation="vertical") for x in range(X)]
        srs = _infer_many(model, plan, epis)
        for x, sr in enumerate(srs):
            out[:, u, :, x] = sr.data
    return out


def super_resolve(lf: LightField4D, model: Model, plan: SRPlan | None = None) -> LightField4D:
    """(V, U, Y, X) -> (2V-1, 2U-1, 2Y, 2X) via two network passes."""
    if plan is None:
        plan = SRPlan()
    V, U = lf.angular_dims
    if V < 2 or U < 2:
        raise ShapeError(f"need at least a 2x2 view grid, got {V}x{U}")
    volume = np.asarray(lf.views, dtype=np.float64)
    if plan.order == "h-first":
        result = _pass_vertical(model, plan, _pass_horizontal(model, plan, volume))
    elif plan.order == "v-first":
        result = _pass_horizontal(model, plan, _pass_vertical(model, plan, volume))
    else:
        result = _pass_vertical(model, plan, _pass_horizontal(model, plan, volume))
        second = _pass_horizontal(model, plan, _pass_vertical(model, plan, volume))
        # full-size volumes: average in place instead of allocating a third
        result += second
        result *= 0.5
        del second
    if plan.pin_input_views:
        result[::2, ::2, ::2, ::2] = lf.views
    return LightField4D(views=np.clip(result, 0.0, 1.0, out=result))

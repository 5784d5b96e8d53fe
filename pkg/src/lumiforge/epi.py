"""Epipolar plane images and their 2D-series geometry.

An EPI is a slice of the 4D light field with one angular and one spatial
axis. A scene point traces a straight line across it whose slope is set by
disparity; projecting along that line (view<->position) and shearing the
whole image by a disparity are the workhorse operations for both the
training-data generator and the super-resolution pipeline.

Convention: positive disparity shifts content rightward as the angular index
increases, and the shear reference row is u = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import GeometryError, ShapeError
from .lightfield import LightField4D
from .resample import sample_line

Orientation = Literal["horizontal", "vertical"]

#: |d| <= 1 keeps consecutive rasterized rows 8-connected.
CONTINUITY_THRESHOLD = 1.0


@dataclass(frozen=True)
class EPI:
    """One light-field slice: rows are views (angular), columns are pixels.

    data is (A, S, 3) in [0,1]. mask flags which samples are trustworthy;
    shearing and tiled inference mark edge-clamped regions invalid so that
    losses and metrics can skip them. mask=None means everything is valid.
    """

    data: np.ndarray
    orientation: Orientation = "horizontal"
    mask: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ShapeError(f"EPI data must be (A, S, 3), got {np.shape(self.data)}")
        if data.shape[0] < 2:
            raise ShapeError(f"EPI needs at least 2 views, got {data.shape[0]}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("EPI data contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ShapeError("EPI data must lie in [0, 1]")
        if self.orientation not in ("horizontal", "vertical"):
            raise ShapeError(f"unknown orientation {self.orientation!r}")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != data.shape[:2]:
                raise ShapeError(f"mask shape {mask.shape} does not match EPI {data.shape[:2]}")
            mask = mask.copy()
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)

    @property
    def n_views(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    def valid_mask(self) -> np.ndarray:
        """The mask, materialized (all-True when none was attached)."""
        if self.mask is None:
            return np.ones(self.data.shape[:2], dtype=bool)
        return self.mask.copy()


@dataclass(frozen=True)
class EpipolarLine:
    """A single scene point's trace: x = x0 + u*d, colored `color`."""

    d: float
    x0: float
    color: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not np.isfinite(self.d):
            raise GeometryError("epipolar line needs finite disparity")

    def x_at(self, u):
        return project_to_view(0.0, self.x0, self.d, u)


def extract_epi(lf: LightField4D, orientation: Orientation, view_index: int, row: int) -> EPI:
    """Slice one EPI out of a light field.

    horizontal: rows are u for fixed v=view_index, columns are x for fixed
    y=row. vertical: rows are v for fixed u=view_index, columns are y for
    fixed x=row.
    """
    V, U = lf.angular_dims
    Y, X = lf.spatial_dims
    if orientation == "horizontal":
        if not (0 <= view_index < V and 0 <= row < Y):
            raise IndexError(f"horizontal EPI at v={view_index}, y={row} outside {V}x{Y}")
        data = lf.views[view_index, :, row, :, :]
    elif orientation == "vertical":
        if not (0 <= view_index < U and 0 <= row < X):
            raise IndexError(f"vertical EPI at u={view_index}, x={row} outside {U}x{X}")
        data = lf.views[:, view_index, :, row, :]
    else:
        raise ShapeError(f"unknown orientation {orientation!r}")
    return EPI(data=data, orientation=orientation)


def project_to_view(u, x, d, u_target):
    """Spatial coordinate of the line through (u, x) at view u_target.

    x_target = (u_target - u) * d + x. Broadcasts over array arguments.
    """
    return (np.asarray(u_target, dtype=float) - u) * d + x


def project_to_position(u, x, d, x_target):
    """View coordinate at which the line through (u, x) reaches x_target.

    u_target = (x_target - x) / d + u; exact inverse of project_to_view for
    d != 0. A zero-disparity line never leaves its column, so the projection
    is undefined there.
    """
    if d == 0:
        raise GeometryError("projection to a position is undefined at zero disparity")
    return (np.asarray(x_target, dtype=float) - x) / d + u


def classify_continuity(d: float) -> str:
    """'continuous' when successive rasterized rows stay 8-connected, else 'jumping'."""
    if not np.isfinite(d):
        raise GeometryError("disparity must be finite")
    return "continuous" if abs(d) <= CONTINUITY_THRESHOLD else "jumping"


def _shift_row_integer(row: np.ndarray, row_mask: np.ndarray, k: int):
    """Row resampled at x+k with edge clamp; mask False where the read left the row."""
    S = row.shape[0]
    src = np.clip(np.arange(S) + k, 0, S - 1)
    in_range = (np.arange(S) + k >= 0) & (np.arange(S) + k <= S - 1)
    return row[src], in_range & row_mask[src]


def _resample_row_fractional(row: np.ndarray, row_mask: np.ndarray, shift: float):
    S = row.shape[0]
    positions = np.arange(S, dtype=float) + shift
    out, valid = sample_line(row, positions)
    # A fractional read is only trusted when all 4 cubic taps were real samples.
    base = np.floor(positions).astype(int)
    taps_ok = np.ones(S, dtype=bool)
    for off in (-1, 0, 1, 2):
        taps_ok &= row_mask[np.clip(base + off, 0, S - 1)]
    return out, valid & taps_ok


def shear(epi: EPI, d: float) -> EPI:
    """Resample row u of the EPI at x + u*d (disparity re-centering).

    A line of disparity delta in the input appears with disparity delta - d
    in the output. Integer per-row shifts are applied exactly; fractional
    shifts use the Catmull-Rom kernel and are clipped back to [0,1].
    Edge-clamped reads are marked invalid in the output mask.
    """
    if not np.isfinite(d):
        raise GeometryError("shear disparity must be finite")
    A, S = epi.data.shape[:2]
    in_mask = epi.valid_mask()
    out = np.empty_like(epi.data)
    out_mask = np.empty((A, S), dtype=bool)
    for u in range(A):
        shift = u * d
        nearest = float(np.rint(shift))
        if abs(shift - nearest) < 1e-12:
            row, row_mask = _shift_row_integer(epi.data[u], in_mask[u], int(nearest))
        else:
            row, row_mask = _resample_row_fractional(epi.data[u], in_mask[u], shift)
            row = np.clip(row, 0.0, 1.0)
        out[u] = row
        out_mask[u] = row_mask
    return EPI(data=out, orientation=epi.orientation, mask=out_mask)

"""Geometric-optics model of a micro-lens-array (Plenoptic-1.0-style) camera.

The point of this module is counting: how many distinct scene points does the
whole view stack record at a given disparity?  When every pixel disparity is an
integer, all sub-aperture views sample the same point set and the effective
spatial resolution equals the micro-lens count.  At fractional disparities the
views interleave and the union of their sample sets grows, up to a factor of
the number of views.

The analysis is 1D (one angular + one spatial axis); the 2D behaviour is the
product of two independent 1D patterns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

#: Positions closer than this (in micro-lens-pitch units) count as one scene point.
MERGE_TOL = 1e-9


@dataclass(frozen=True)
class CameraConfig:
    """Geometry of the simulated camera.

    focal_length: main-lens focal length (mm).
    mla_distance: main-lens-to-MLA distance (mm); must not be shorter than the
        focal length (the MLA sits on the real-image side).
    n_micro: micro-lens count along one axis (= per-view spatial resolution).
    n_views: pixels per micro-lens along one axis (= angular resolution).
    micro_pitch: micro-lens pitch (mm).
    aperture: main-lens aperture diameter (mm). The sub-aperture baseline is
        aperture / n_views. Defaults to focal_length / 2 (an f/2 lens).
    """

    focal_length: float
    mla_distance: float
    n_micro: int
    n_views: int
    micro_pitch: float
    aperture: float | None = None

    def __post_init__(self):
        if min(self.focal_length, self.mla_distance, self.micro_pitch) <= 0:
            raise GeometryError("focal_length, mla_distance and micro_pitch must be positive")
        if self.mla_distance < self.focal_length:
            raise GeometryError("mla_distance must not be shorter than focal_length")
        if self.n_micro < 2 or self.n_views < 2:
            raise GeometryError("need n_micro >= 2 and n_views >= 2")
        if self.aperture is not None and self.aperture <= 0:
            raise GeometryError("aperture must be positive")

    @property
    def aperture_diameter(self) -> float:
        return self.aperture if self.aperture is not None else self.focal_length / 2.0

    @property
    def subaperture_baseline(self) -> float:
        """Spacing between adjacent sub-aperture centers on the main lens (mm)."""
        return self.aperture_diameter / self.n_views


def gaussian_conjugate(config: CameraConfig) -> float:
    """Scene depth (mm) imaged exactly onto the MLA plane: 1/f = 1/v + 1/Z."""
    if config.mla_distance == config.focal_length:
        raise GeometryError("MLA at the focal plane: conjugate depth is at infinity")
    return 1.0 / (1.0 / config.focal_length - 1.0 / config.mla_distance)


def disparity_of_depth(config: CameraConfig, depth: float) -> float:
    """Disparity (pixels per adjacent-view step) of a point at the given depth.

    Thin-lens model with one pinhole per sub-aperture: the image of a point at
    depth Z lands at lateral offsets proportional to the sub-aperture position,
    which gives d(Z) = K * (1/Z - 1/Z_conj) with
    K = mla_distance * subaperture_baseline / micro_pitch.
    Zero exactly at the conjugate depth; positive for nearer points; strictly
    decreasing in Z.
    """
    if depth <= 0:
        raise GeometryError(f"depth must be positive, got {depth}")
    z_conj = gaussian_conjugate(config)
    gain = config.mla_distance * config.subaperture_baseline / config.micro_pitch
    return gain * (1.0 / depth - 1.0 / z_conj)


def is_generalized_focus(disparities, tol: float = MERGE_TOL) -> bool:
    """True iff every disparity in the collection is within `tol` of an integer.

    An all-integer disparity set means every view samples the same scene
    points, i.e. the camera behaves like a focused one for resolution
    purposes. Vacuously true for an empty collection.
    """
    arr = np.asarray(list(disparities), dtype=float)
    if arr.size == 0:
        return True
    if not np.all(np.isfinite(arr)):
        raise GeometryError("disparity set contains non-finite values")
    return bool(np.all(np.abs(arr - np.rint(arr)) <= tol))


@dataclass(frozen=True)
class SamplePattern:
    """Where each view samples the reference plane, in micro-lens-pitch units.

    offsets[j] is view j's sub-pitch shift; the view's sample positions are
    {i + offsets[j] : i = 0..n_micro-1}. Integer parts of the per-view shift
    are folded out (an integer shift reproduces the same sample lattice in the
    interior), so every offset is in [0, 1) and every position in [0, n_micro).
    """

    disparity: float
    n_micro: int
    offsets: np.ndarray  # (n_views,)

    @property
    def n_views(self) -> int:
        return len(self.offsets)

    def view_positions(self, j: int) -> np.ndarray:
        return np.arange(self.n_micro, dtype=float) + self.offsets[j]

    def all_positions(self) -> np.ndarray:
        return (np.arange(self.n_micro, dtype=float)[None, :] + self.offsets[:, None]).ravel()


def sample_pattern(config: CameraConfig, disparity: float) -> SamplePattern:
    """Per-view sample positions on the reference plane at the given disparity."""
    if not math.isfinite(disparity):
        raise GeometryError("disparity must be finite")
    frac = disparity % 1.0
    offsets = (np.arange(config.n_views) * frac) % 1.0
    # An offset within the merge tolerance of 1.0 is the 0 residue computed
    # with rounding error; folding it keeps the boundary cell consistent with
    # the interior (otherwise the top lattice cell gains a spurious point).
    offsets[offsets > 1.0 - MERGE_TOL] = 0.0
    return SamplePattern(disparity=disparity, n_micro=config.n_micro, offsets=offsets)


def count_recorded_points(config: CameraConfig, disparity: float, merge_tol: float = MERGE_TOL) -> int:
    """Number of distinct scene points recorded across all views.

    Cardinality of the union of every view's sample positions, merging
    positions closer than `merge_tol` pitch units. Equals n_micro for integer
    disparities and q * n_micro for d = p/q in lowest terms with q <= n_views.
    """
    positions = np.sort(sample_pattern(config, disparity).all_positions())
    if positions.size == 0:
        return 0
    return int(1 + np.count_nonzero(np.diff(positions) > merge_tol))


@dataclass(frozen=True)
class EpiLineSketch:
    """Floor-rasterized trace of one epipolar line across the view stack.

    columns[j] is the pixel column the line covers in view j; raster is the
    (n_views, n_micro) covered-pixel grid (columns outside the sensor are
    dropped from the raster but kept in `columns`).
    """

    disparity: float
    intercept: float
    columns: np.ndarray  # (n_views,) int
    raster: np.ndarray  # (n_views, n_micro) bool


def epi_sketch(config: CameraConfig, disparity: float, intercept: float = 0.0) -> EpiLineSketch:
    """Which pixel column the line through (view 0, `intercept`) covers per view.

    The line shifts by `disparity` columns per view step (a vertical line for
    d = 0) and is rasterized with floor().
    """
    if not math.isfinite(disparity):
        raise GeometryError("disparity must be finite")
    j = np.arange(config.n_views)
    columns = np.floor(intercept + j * disparity).astype(int)
    raster = np.zeros((config.n_views, config.n_micro), dtype=bool)
    in_range = (columns >= 0) & (columns < config.n_micro)
    raster[j[in_range], columns[in_range]] = True
    return EpiLineSketch(disparity=disparity, intercept=intercept, columns=columns, raster=raster)


def sweep_counts(config: CameraConfig, disparities) -> list[tuple[float, int]]:
    """(disparity, effective point count) for each disparity in the sweep."""
    return [(float(d), count_recorded_points(config, float(d))) for d in disparities]

"""4D light-field container, indexing conventions, and manifest-based file I/O.

Conventions used throughout the toolkit:
  * a light field is a dense (V, U, Y, X, 3) grid of RGB samples in [0, 1];
  * u/x are horizontal (column) axes, v/y vertical (row) axes;
  * a manifest is a plain-text file whose first line is "V U Y X" followed by
    V*U relative PNG paths, row-major (v outer, u inner).
PNG files may be 8- or 16-bit; samples are converted to [0, 1] reals on load
and written back as 16-bit, so a save/load round trip is exact to 2**-16.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .errors import ManifestError, ShapeError

MANIFEST_NAME = "lightfield.txt"
_U16_MAX = 65535


def _check_unit_range(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{what} contains non-finite samples")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ShapeError(f"{what} has samples outside [0, 1]")


def validate_image(pixels: np.ndarray) -> np.ndarray:
    """Check a (Y, X, 3) image in [0, 1] and return it as float64."""
    pixels = np.asarray(pixels, dtype=float)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ShapeError(f"image must be (Y, X, 3), got {pixels.shape}")
    _check_unit_range(pixels, "image")
    return pixels


@dataclass(frozen=True)
class LightField4D:
    """Dense 4D light field: views[v, u] is the (Y, X, 3) view at angular (v, u)."""

    views: np.ndarray  # (V, U, Y, X, 3)

    def __post_init__(self):
        views = np.asarray(self.views, dtype=float)
        if views.ndim != 5 or views.shape[4] != 3:
            raise ShapeError(f"light field must be (V, U, Y, X, 3), got {views.shape}")
        if min(views.shape[:4]) < 1:
            raise ShapeError(f"light field has an empty axis: {views.shape}")
        _check_unit_range(views, "light field")
        views = views.copy()
        views.setflags(write=False)
        object.__setattr__(self, "views", views)

    @property
    def angular_dims(self) -> tuple[int, int]:
        return self.views.shape[0], self.views.shape[1]

    @property
    def spatial_dims(self) -> tuple[int, int]:
        return self.views.shape[2], self.views.shape[3]

    def view_at(self, v: int, u: int) -> np.ndarray:
        """The stored (Y, X, 3) view at angular position (v, u)."""
        n_v, n_u = self.angular_dims
        if not (0 <= v < n_v and 0 <= u < n_u):
            raise IndexError(f"view ({v}, {u}) out of range for {n_v}x{n_u} grid")
        return self.views[v, u]


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel disparity in pixels per unit view shift, aligned with one view."""

    values: np.ndarray  # (Y, X)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(f"disparity map must be (Y, X), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ShapeError("disparity map contains non-finite values")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def read_image(path) -> np.ndarray:
    """Load a PNG as a (Y, X, 3) float image in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"missing image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ManifestError(f"could not decode image: {path}")
    if raw.ndim == 2:
        raw = raw[:, :, None].repeat(3, axis=2)
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.shape[2] != 3:
        raise ManifestError(f"unsupported channel count {raw.shape[2]} in {path}")
    if raw.dtype == np.uint8:
        img = raw.astype(np.float64) / 255.0
    elif raw.dtype == np.uint16:
        img = raw.astype(np.float64) / _U16_MAX
    else:
        raise ManifestError(f"unsupported PNG bit depth {raw.dtype} in {path}")
    return img[:, :, ::-1].copy()  # BGR -> RGB


def write_image(path, pixels: np.ndarray) -> None:
    """Write a [0, 1] float image as a 16-bit RGB PNG."""
    pixels = validate_image(pixels)
    quantized = np.rint(pixels * _U16_MAX).astype(np.uint16)
    path = Path(path)
    ok = cv2.imwrite(str(path), quantized[:, :, ::-1])
    if not ok:
        raise ManifestError(f"could not write image: {path}")


def load_light_field(manifest_path) -> LightField4D:
    """Load a light field from a manifest file (see module docstring for the format)."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise ManifestError(f"missing manifest: {manifest_path}")
    lines = [ln.strip() for ln in manifest_path.read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ManifestError(f"empty manifest: {manifest_path}")
    header = lines[0].split()
    if len(header) != 4:
        raise ManifestError(f"manifest header must be 'V U Y X', got {lines[0]!r}")
    try:
        n_v, n_u, n_y, n_x = (int(tok) for tok in header)
    except ValueError as exc:
        raise ManifestError(f"non-integer manifest header {lines[0]!r}") from exc
    paths = lines[1:]
    if len(paths) != n_v * n_u:
        raise ManifestError(
            f"manifest lists {len(paths)} images but header promises a "
            f"{n_v}x{n_u} grid ({n_v * n_u})"
        )
    root = manifest_path.parent
    views = np.empty((n_v, n_u, n_y, n_x, 3), dtype=np.float64)
    for v in range(n_v):
        for u in range(n_u):
            img = read_image(root / paths[v * n_u + u])
            if img.shape != (n_y, n_x, 3):
                raise ManifestError(
                    f"view ({v}, {u}) has shape {img.shape[:2]}, expected ({n_y}, {n_x})"
                )
            views[v, u] = img
    return LightField4D(views)


def save_light_field(lf: LightField4D, out_dir) -> Path:
    """Write each view as view_vVV_uUU.png plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ManifestError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise ManifestError(f"output directory is not writable: {out_dir}")
    n_v, n_u = lf.angular_dims
    n_y, n_x = lf.spatial_dims
    names = []
    for v in range(n_v):
        for u in range(n_u):
            name = f"view_v{v:02d}_u{u:02d}.png"
            write_image(out_dir / name, lf.views[v, u])
            names.append(name)
    manifest = out_dir / MANIFEST_NAME
    manifest.write_text(f"{n_v} {n_u} {n_y} {n_x}\n" + "\n".join(names) + "\n")
    return manifest

"""Reconstruction quality metrics and the evaluation protocols.

PSNR uses peak 1.0 (data lives in [0,1]) and caps at 99 dB for identical
inputs. SSIM is the standard single-scale form: 11x11 Gaussian window,
sigma 1.5, K1=0.01, K2=0.03, valid-mode windows only, computed per channel
and averaged. Boundary columns that shearing or view extrapolation can
touch are excluded via an explicit margin mask rather than silently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .lightfield import LightField4D
from .nn.network import Model, infer_epi
from .scenes import GenConfig, TrainingPair, generate_pair

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """10*log10(1/MSE) over unmasked pixels; identical inputs cap at 99 dB."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    sq = (a - b) ** 2
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape[: mask.ndim]:
            raise ShapeError(f"psnr mask shape {mask.shape} does not match {a.shape}")
        if not mask.any():
            raise ShapeError("psnr mask selects no pixels")
        sq = sq[mask]
    mse = float(sq.mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(n: int, sigma: float) -> np.ndarray:
    r = np.arange(n) - (n - 1) / 2.0
    w = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separable valid-mode window average of a 2D image."""
    rows = sliding_window_view(img, len(w), axis=0) @ w
    return sliding_window_view(rows, len(w), axis=1) @ w


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity; channels scored separately, then averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise ShapeError(f"ssim expects (Y, X[, C]) images, got {a.shape}")
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ShapeError(f"ssim needs both dimensions >= {SSIM_WINDOW}, got {a.shape[:2]}")
    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    scores = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mx = _filter_valid(x, w)
        my = _filter_valid(y, w)
        mxx = _filter_valid(x * x, w)
        myy = _filter_valid(y * y, w)
        mxy = _filter_valid(x * y, w)
        vx = mxx - mx * mx
        vy = myy - my * my
        cov = mxy - mx * my
        s = ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        scores.append(float(s.mean()))
    return float(np.mean(scores))


def boundary_margin(d_max: float, n_views: int) -> int:
    """Total spatial columns to ignore for content moving up to d_max.

    ceil(|d_max| * (n_views - 1)) is the worst-case shear span across the
    view fan; callers split it between the two edges (shear referenced to
    the central view reaches at most half the span per side).
    """
    return int(np.ceil(abs(d_max) * (n_views - 1)))


def _split_margin(total: int) -> int:
    # per-side share, rounding up so the union still covers the span
    return total - total // 2


def eval_mask(shape_yx: tuple[int, int], margin_x: int, margin_y: int = 0) -> np.ndarray:
    """True inside the trusted region, False in the boundary band."""
    Y, X = shape_yx
    if 2 * margin_x >= X or 2 * margin_y >= Y:
        raise ShapeError(f"margins ({margin_y}, {margin_x}) swallow the whole {shape_yx} image")
    m = np.zeros((Y, X), dtype=bool)
    m[margin_y : Y - margin_y if margin_y else Y, margin_x : X - margin_x if margin_x else X] = True
    return m


@dataclass(frozen=True)
class MetricReport:
    """Per-view scores plus their averages."""

    view_psnr: np.ndarray  # (V, U)
    view_ssim: np.ndarray | None  # (V, U) or None when views are too small
    mean_psnr: float
    mean_ssim: float | None

    def rows(self) -> list[tuple[int, int, float, float | None]]:
        V, U = self.view_psnr.shape
        return [
            (v, u, float(self.view_psnr[v, u]), None if self.view_ssim is None else float(self.view_ssim[v, u]))
            for v in range(V)
            for u in range(U)
        ]


def evaluate_light_fields(ref: LightField4D, test: LightField4D, d_max: float = 0.0) -> MetricReport:
    """Per-view PSNR/SSIM between two same-shaped light fields.

    d_max > 0 carves the boundary band off both spatial axes before
    scoring, consistent with the shear validity convention.
    """
    if ref.views.shape != test.views.shape:
        raise ShapeError(f"light field shapes differ: {ref.views.shape} vs {test.views.shape}")
    V, U = ref.angular_dims
    Y, X = ref.spatial_dims
    margin_x = _split_margin(boundary_margin(d_max, U)) if d_max else 0
    margin_y = _split_margin(boundary_margin(d_max, V)) if d_max else 0
    mask = eval_mask((Y, X), margin_x, margin_y)
    ys, xs = np.nonzero(mask)
    y0, y1 = ys.min(), ys.max() + 1
    x0, x1 = xs.min(), xs.max() + 1
    can_ssim = (y1 - y0) >= SSIM_WINDOW and (x1 - x0) >= SSIM_WINDOW
    p = np.zeros((V, U))
    s = np.zeros((V, U)) if can_ssim else None
    for v in range(V):
        for u in range(U):
            rv = ref.views[v, u]
            tv = test.views[v, u]
            p[v, u] = psnr(rv, tv, mask)
            if can_ssim:
                s[v, u] = ssim(rv[y0:y1, x0:x1], tv[y0:y1, x0:x1])
    return MetricReport(
        view_psnr=p,
        view_ssim=s,
        mean_psnr=float(p.mean()),
        mean_ssim=None if s is None else float(s.mean()),
    )


def write_view_csv(report: MetricReport, path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["view_v", "view_u", "psnr", "ssim"])
        for v, u, p, s in report.rows():
            w.writerow([v, u, f"{p:.6f}", "" if s is None else f"{s:.6f}"])


# ----------------------------------------------------- EPI-level experiments

def epi_pair_psnr(model: Model | None, pair: TrainingPair, d_max: float | None = None) -> float:
    """PSNR of the (model or plain bicubic) reconstruction of one pair.

    Scored on the HR grid inside the boundary margin for the pair's own
    largest disparity (or an explicit d_max).
    """
    from .nn.network import bicubic_upsample

    recon = bicubic_upsample(pair.lr) if model is None else infer_epi(model, pair.lr)
    hr = pair.hr
    if d_max is None:
        d_max = max((abs(d) for d in pair.disparities), default=0.0)
    margin = _split_margin(boundary_margin(d_max, hr.n_views))
    mask = eval_mask((hr.n_views, hr.n_pixels), margin)
    mask &= hr.valid_mask() & recon.valid_mask()
    return psnr(recon.data, hr.data, mask)


def single_disparity_config(base: GenConfig, d: float) -> GenConfig:
    """One-layer scenes pinned at a single disparity (the sweep's stimulus)."""
    eps = 1e-6
    return GenConfig(
        n_views=base.n_views,
        n_pixels=base.n_pixels,
        d_min=d - eps,
        d_max=d + eps,
        max_layers=1,
        max_segments=base.max_segments,
        max_cutouts=base.max_cutouts,
    )


def disparity_sweep(
    model: Model | None,
    disparities: list[float],
    trials_per_d: int,
    seed: int,
    base_config: GenConfig | None = None,
) -> list[tuple[float, float, float]]:
    """(d, mean PSNR, std) per disparity over fresh single-layer scenes.

    model=None scores the bicubic baseline. Trial i of disparity j draws
    from an independent child stream of (seed, j), so rows are reproducible
    in any execution order.
    """
    if base_config is None:
        base_config = GenConfig()
    rows = []
    root = np.random.SeedSequence(seed)
    streams = root.spawn(len(disparities))
    for d, stream in zip(disparities, streams):
        cfg = single_disparity_config(base_config, float(d))
        scores = []
        for child in stream.spawn(trials_per_d):
            pair = generate_pair(np.random.Generator(np.random.PCG64(child)), cfg)
            scores.append(epi_pair_psnr(model, pair))
        rows.append((float(d), float(np.mean(scores)), float(np.std(scores))))
    return rows


def write_sweep_csv(rows: list[tuple[float, float, float]], path: Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "psnr_mean", "psnr_std"])
        for d, mean, std in rows:
            w.writerow([f"{d:.6f}", f"{mean:.6f}", f"{std:.6f}"])


@dataclass(frozen=True)
class AblationReport:
    """Paired comparison of two checkpoints on one evaluation set."""

    psnr_a: np.ndarray
    psnr_b: np.ndarray
    mean_delta: float  # a minus b
    wins_a: int
    wins_b: int
    ties: int


def compare_ablation(model_a: Model, model_b: Model, pairs: list[TrainingPair]) -> AblationReport:
    """Per-pair PSNR for both models plus the paired summary (a minus b)."""
    if not pairs:
        raise ShapeError("empty evaluation set")
    pa = np.array([epi_pair_psnr(model_a, p) for p in pairs])
    pb = np.array([epi_pair_psnr(model_b, p) for p in pairs])
    delta = pa - pb
    return AblationReport(
        psnr_a=pa,
        psnr_b=pb,
        mean_delta=float(delta.mean()),
        wins_a=int((delta > 0).sum()),
        wins_b=int((delta < 0).sum()),
        ties=int((delta == 0).sum()),
    )

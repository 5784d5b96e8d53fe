"""PSNR/SSIM fixtures, margin masks, sweeps, and the paired ablation report."""

import csv

import numpy as np
import pytest

from lumiforge.errors import ShapeError
from lumiforge.lightfield import LightField4D
from lumiforge.metrics import (
    PSNR_CAP_DB,
    AblationReport,
    boundary_margin,
    _split_margin,
    compare_ablation,
    disparity_sweep,
    epi_pair_psnr,
    eval_mask,
    evaluate_light_fields,
    psnr,
    single_disparity_config,
    ssim,
    write_sweep_csv,
    write_view_csv,
)
from lumiforge.nn.network import NetworkSpec, bicubic_upsample, build_model
from lumiforge.scenes import GenConfig, gen_training_pairs


def textured(rng, shape=(32, 32, 3), lo=0.1, hi=0.9):
    return lo + (hi - lo) * rng.random(shape)


@pytest.fixture
def zero_model():
    return build_model(NetworkSpec.micro(), seed=0)


@pytest.fixture
def live_model(rng):
    model = build_model(NetworkSpec.micro(), seed=0)
    w = model.store["proj.w"]
    w.data[:] = (0.05 * rng.standard_normal(w.data.shape)).astype(np.float32)
    return model


# ------------------------------------------------------------------ psnr

class TestPsnr:
    def test_uniform_one_lsb_error(self):
        a = np.full((16, 16, 3), 0.4)
        assert psnr(a, a + 1.0 / 255.0) == pytest.approx(20 * np.log10(255), abs=1e-3)

    def test_checkerboard_half_energy(self):
        a = np.indices((16, 16)).sum(axis=0) % 2
        b = np.zeros((16, 16))
        assert psnr(a.astype(float), b) == pytest.approx(10 * np.log10(2), abs=1e-3)

    def test_identical_hits_cap(self, rng):
        a = textured(rng)
        assert psnr(a, a) == PSNR_CAP_DB

    def test_tiny_error_still_capped(self):
        a = np.zeros((8, 8))
        b = np.full((8, 8), 1e-9)
        assert psnr(a, b) == PSNR_CAP_DB

    def test_symmetry(self, rng):
        a, b = textured(rng), textured(rng)
        assert psnr(a, b) == psnr(b, a)

    def test_mask_restricts_scoring(self):
        a = np.zeros((4, 4))
        b = np.zeros((4, 4))
        b[0, 0] = 1.0  # the only error sits outside the mask
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        assert psnr(a, b, mask) == PSNR_CAP_DB
        assert psnr(a, b) < PSNR_CAP_DB

    def test_mask_broadcasts_over_channels(self):
        a = np.zeros((4, 4, 3))
        b = a.copy()
        b[1, 1] = 0.5
        mask = np.zeros((4, 4), dtype=bool)
        mask[1, 1] = True
        assert psnr(a, b, mask) == pytest.approx(10 * np.log10(1 / 0.25), abs=1e-9)

    def test_quantization_depth_barely_matters(self, rng):
        fixtures = [
            (np.full((16, 16, 3), 0.4), np.full((16, 16, 3), 0.4 + 1 / 255)),
            (textured(rng), textured(rng)),
        ]
        for a, b in fixtures:
            q8 = psnr(np.rint(a * 255) / 255, np.rint(b * 255) / 255)
            q16 = psnr(np.rint(a * 65535) / 65535, np.rint(b * 65535) / 65535)
            assert abs(q8 - q16) < 0.01

    def test_errors(self, rng):
        with pytest.raises(ShapeError, match="mismatch"):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))
        with pytest.raises(ShapeError, match="no pixels"):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4), dtype=bool))
        with pytest.raises(ShapeError, match="mask shape"):
            psnr(np.zeros((4, 4)), np.zeros((4, 4)), np.ones((3, 3), dtype=bool))


# ------------------------------------------------------------------ ssim

class TestSsim:
    def test_self_is_exactly_one(self, rng):
        a = textured(rng)
        assert ssim(a, a) == 1.0

    def test_symmetry(self, rng):
        a, b = textured(rng), textured(rng)
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_negative_image_scores_negative(self):
        y, x = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        a = 0.5 + 0.4 * np.sin(2 * np.pi * (x + y) / 8.0)
        assert ssim(a, 1.0 - a) < 0.0

    def test_constant_offset_nearly_invariant(self, rng):
        a = textured(rng, lo=0.1, hi=0.7)
        b = textured(rng, lo=0.1, hi=0.7)
        assert abs(ssim(a + 0.1, b + 0.1) - ssim(a, b)) < 1e-3

    def test_grayscale_input_accepted(self, rng):
        a = rng.random((16, 16))
        assert ssim(a, a) == 1.0

    def test_errors(self, rng):
        with pytest.raises(ShapeError, match=">= 11"):
            ssim(np.zeros((10, 32)), np.zeros((10, 32)))
        with pytest.raises(ShapeError, match="mismatch"):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))
        with pytest.raises(ShapeError, match="expects"):
            ssim(np.zeros((2, 16, 16, 3)), np.zeros((2, 16, 16, 3)))


# --------------------------------------------------------------- margins

class TestMargins:
    def test_boundary_margin_values(self):
        assert boundary_margin(4.0, 9) == 32
        assert boundary_margin(-4.0, 9) == 32
        assert boundary_margin(0.0, 9) == 0
        assert boundary_margin(0.1, 9) == 1  # ceil of 0.8

    def test_split_margin_rounds_up(self):
        assert _split_margin(32) == 16
        assert _split_margin(33) == 17
        assert _split_margin(0) == 0

    def test_eval_mask_band(self):
        m = eval_mask((4, 10), margin_x=3)
        assert m[:, :3].sum() == 0 and m[:, 7:].sum() == 0
        assert m[:, 3:7].all()

    def test_eval_mask_both_axes(self):
        m = eval_mask((6, 10), margin_x=2, margin_y=1)
        assert m.sum() == 4 * 6
        assert m[1:5, 2:8].all()

    def test_eval_mask_swallow_raises(self):
        with pytest.raises(ShapeError, match="swallow"):
            eval_mask((4, 10), margin_x=5)


# --------------------------------------------------- light-field reports

class TestEvaluateLightFields:
    def lf_pair(self, rng, corrupt_edge=False):
        views = 0.2 + 0.6 * rng.random((2, 2, 24, 48, 3))
        ref = LightField4D(views=views)
        test = views.copy()
        if corrupt_edge:
            test[:, :, :, :4] = 0.0
        return ref, LightField4D(views=test)

    def test_identical_fields(self, rng):
        ref, test = self.lf_pair(rng)
        report = evaluate_light_fields(ref, test)
        assert report.mean_psnr == PSNR_CAP_DB
        assert report.mean_ssim == 1.0
        assert report.view_psnr.shape == (2, 2)

    def test_margin_forgives_edge_damage(self, rng):
        ref, test = self.lf_pair(rng, corrupt_edge=True)
        # columns 0..3 are damaged; d_max=4 with U=2 yields a 2-per-side
        # margin, not enough, while d_max=8 covers all four columns
        hit = evaluate_light_fields(ref, test, d_max=4.0)
        forgiven = evaluate_light_fields(ref, test, d_max=8.0)
        assert hit.mean_psnr < PSNR_CAP_DB
        assert forgiven.mean_psnr == PSNR_CAP_DB

    def test_shape_mismatch(self, rng):
        ref, _ = self.lf_pair(rng)
        other = LightField4D(views=np.zeros((2, 2, 24, 40, 3)))
        with pytest.raises(ShapeError, match="differ"):
            evaluate_light_fields(ref, other)

    def test_small_views_skip_ssim(self, rng):
        views = rng.random((2, 2, 8, 8, 3))
        report = evaluate_light_fields(LightField4D(views=views), LightField4D(views=views))
        assert report.view_ssim is None
        assert report.mean_ssim is None
        assert report.mean_psnr == PSNR_CAP_DB

    def test_view_csv_format(self, rng, tmp_path):
        ref, test = self.lf_pair(rng)
        report = evaluate_light_fields(ref, test)
        path = tmp_path / "views.csv"
        write_view_csv(report, path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["view_v", "view_u", "psnr", "ssim"]
        assert len(rows) == 1 + 4
        assert rows[1][:2] == ["0", "0"]
        assert float(rows[1][2]) == PSNR_CAP_DB


# ------------------------------------------------------------ EPI scoring

SWEEP_CFG = GenConfig(n_views=5, n_pixels=32, d_min=-4.0, d_max=4.0)


class TestEpiPairPsnr:
    def test_baseline_matches_manual_computation(self, zero_model):
        pair = gen_training_pairs(8, 1, SWEEP_CFG)[0]
        got = epi_pair_psnr(None, pair)
        up = bicubic_upsample(pair.lr)
        d_max = max(abs(d) for d in pair.disparities)
        margin = _split_margin(boundary_margin(d_max, pair.hr.n_views))
        mask = eval_mask((pair.hr.n_views, pair.hr.n_pixels), margin)
        mask &= pair.hr.valid_mask() & up.valid_mask()
        assert got == psnr(up.data, pair.hr.data, mask)

    def test_zero_residual_model_equals_baseline(self, zero_model):
        pair = gen_training_pairs(9, 1, SWEEP_CFG)[0]
        assert epi_pair_psnr(zero_model, pair) == epi_pair_psnr(None, pair)

    def test_explicit_d_max_overrides_pair(self, zero_model):
        pair = gen_training_pairs(10, 1, SWEEP_CFG)[0]
        wide = epi_pair_psnr(None, pair, d_max=0.0)
        narrow = epi_pair_psnr(None, pair, d_max=4.0)
        assert wide != narrow  # different trusted regions score differently


class TestDisparitySweep:
    def test_row_count_and_order(self, zero_model):
        ds = [-2.0, 0.5, 3.0]
        rows = disparity_sweep(zero_model, ds, trials_per_d=2, seed=1, base_config=SWEEP_CFG)
        assert [r[0] for r in rows] == ds
        assert all(len(r) == 3 for r in rows)

    def test_deterministic_given_seed(self, zero_model):
        args = ([1.0, -1.5], 3, 7)
        a = disparity_sweep(zero_model, *args, base_config=SWEEP_CFG)
        b = disparity_sweep(zero_model, *args, base_config=SWEEP_CFG)
        assert a == b

    def test_zero_residual_curve_equals_baseline_curve(self, zero_model):
        ds = [-1.0, 2.0]
        with_model = disparity_sweep(zero_model, ds, 2, 3, base_config=SWEEP_CFG)
        baseline = disparity_sweep(None, ds, 2, 3, base_config=SWEEP_CFG)
        assert with_model == baseline

    def test_single_disparity_config_brackets(self):
        cfg = single_disparity_config(SWEEP_CFG, 2.5)
        assert cfg.max_layers == 1
        assert cfg.d_min < 2.5 < cfg.d_max
        assert cfg.d_max - cfg.d_min < 1e-5
        assert cfg.n_pixels == SWEEP_CFG.n_pixels

    def test_sweep_csv_format(self, zero_model, tmp_path):
        rows = disparity_sweep(zero_model, [0.5], 2, 1, base_config=SWEEP_CFG)
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path)
        with open(path, newline="") as fh:
            got = list(csv.reader(fh))
        assert got[0] == ["d", "psnr_mean", "psnr_std"]
        assert len(got) == 2
        assert float(got[1][0]) == 0.5


# -------------------------------------------------------------- ablation

class TestCompareAblation:
    def test_identical_models_tie_everywhere(self, zero_model):
        pairs = gen_training_pairs(11, 4, SWEEP_CFG)
        report = compare_ablation(zero_model, zero_model, pairs)
        assert report.mean_delta == 0.0
        assert report.ties == 4
        assert report.wins_a == report.wins_b == 0

    def test_counts_partition_the_set(self, zero_model, live_model):
        pairs = gen_training_pairs(12, 6, SWEEP_CFG)
        report = compare_ablation(live_model, zero_model, pairs)
        assert isinstance(report, AblationReport)
        assert len(report.psnr_a) == len(report.psnr_b) == 6
        assert report.wins_a + report.wins_b + report.ties == 6
        assert report.mean_delta == pytest.approx(
            float(report.psnr_a.mean() - report.psnr_b.mean())
        )

    def test_empty_set_raises(self, zero_model):
        with pytest.raises(ShapeError, match="empty"):
            compare_ablation(zero_model, zero_model, [])

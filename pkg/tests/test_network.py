"""Network construction, the zero-residual identity, and the EPI interface."""

import numpy as np
import pytest

from lumiforge.epi import EPI
from lumiforge.errors import ShapeError
from lumiforge.nn.layers import DIRECTIONS
from lumiforge.nn.network import (
    NetworkSpec,
    _reflect_indices,
    _upsample_mask,
    bicubic_upsample,
    build_model,
    infer_epi,
    infer_epi_batch,
    pad_to_min,
    residual_batch,
)
from lumiforge.nn.tensor import Tensor


def rand_epi(rng, n_views, n_pixels, mask=None):
    return EPI(data=rng.random((n_views, n_pixels, 3)), mask=mask)


# ------------------------------------------------------------------ spec

class TestNetworkSpec:
    def test_presets(self):
        assert NetworkSpec.full().levels == 4
        assert NetworkSpec.reduced().levels == 2
        assert NetworkSpec.micro().levels == 2
        assert NetworkSpec.full().min_input == 16
        assert NetworkSpec.reduced().min_input == 4

    def test_without_lstm_flips_only_the_flag(self):
        a = NetworkSpec.reduced()
        b = a.without_lstm()
        assert a.use_lstm and not b.use_lstm
        assert (a.levels, a.pre_base, a.lstm_channels) == (b.levels, b.pre_base, b.lstm_channels)

    def test_validation(self):
        with pytest.raises(ShapeError):
            NetworkSpec(levels=0)
        with pytest.raises(ShapeError):
            NetworkSpec(pre_kernel=(3, 4))
        with pytest.raises(ShapeError):
            NetworkSpec(post_channels=(64, 32))
        with pytest.raises(ShapeError):
            NetworkSpec(lstm_channels=0)

    def test_layer_table_names_unique(self):
        names = [n for n, _ in NetworkSpec.full().layer_table()]
        assert len(names) == len(set(names))

    def test_param_count_matches_store(self):
        spec = NetworkSpec.micro()
        model = build_model(spec)
        assert spec.param_count() == model.store.param_count()

    def test_variants_share_all_non_sequence_shapes(self):
        # The ablation contract: swapping the LSTM block for plain convs
        # must leave every other parameter tensor's shape untouched.
        spec = NetworkSpec.reduced()
        with_l = dict(spec.layer_table())
        without = dict(spec.without_lstm().layer_table())
        shared = set(with_l) & set(without)
        assert all(with_l[n] == without[n] for n in shared)
        only_with = {n for n in with_l if n not in without}
        only_without = {n for n in without if n not in with_l}
        assert all(".lstm." in n for n in only_with)
        assert all(".seq" in n for n in only_without)
        # both blocks emit the same channel count into the post convs
        assert without["l1.seq1.w"][1] == spec.merged_channels

    def test_channel_helpers(self):
        spec = NetworkSpec.reduced()
        assert spec.level_in_channels(1) == 3
        assert spec.level_in_channels(2) == spec.updown_channels
        assert spec.pre_channels(2) == 2 * spec.pre_base
        assert spec.merged_channels == 4 * spec.lstm_channels


# ----------------------------------------------------------------- build

class TestBuildModel:
    def test_deterministic_per_seed(self):
        a = build_model(NetworkSpec.micro(), seed=3)
        b = build_model(NetworkSpec.micro(), seed=3)
        c = build_model(NetworkSpec.micro(), seed=4)
        for name in a.store.names():
            np.testing.assert_array_equal(a.store[name].data, b.store[name].data)
        assert any(
            not np.array_equal(a.store[name].data, c.store[name].data)
            for name in a.store.names()
        )

    def test_projection_and_biases_start_at_zero(self):
        model = build_model(NetworkSpec.micro())
        assert not model.store["proj.w"].data.any()
        assert not model.store["proj.b"].data.any()
        assert not model.store["l1.pre0.b"].data.any()

    def test_lstm_bias_forget_gate(self):
        model = build_model(NetworkSpec.micro())
        C = model.spec.lstm_channels
        for d in DIRECTIONS:
            b = model.store[f"l1.lstm.{d}.b"].data
            np.testing.assert_array_equal(b[C : 2 * C], 1.0)
            np.testing.assert_array_equal(b[:C], 0.0)

    def test_conv_weights_within_he_bound(self):
        model = build_model(NetworkSpec.micro())
        w = model.store["l1.pre0.w"].data
        limit = np.sqrt(6.0 / (3 * 3 * 5))
        assert np.all(np.abs(w) <= limit)
        assert w.std() > 0

    def test_forward_below_min_input_raises(self):
        model = build_model(NetworkSpec.micro())
        with pytest.raises(ShapeError, match="reflect-pad"):
            model.forward(Tensor(np.zeros((1, 3, 2, 8), dtype=np.float32)))

    def test_no_lstm_variant_runs_and_matches_shape(self):
        x = np.random.default_rng(0).random((2, 3, 6, 10)).astype(np.float32)
        for spec in (NetworkSpec.micro(), NetworkSpec.micro().without_lstm()):
            out = build_model(spec).forward(Tensor(x.copy()))
            assert out.data.shape == (2, 3, 6, 10)


# ----------------------------------------------------- padding and masks

class TestPadding:
    def test_reflect_indices_triangle(self):
        np.testing.assert_array_equal(_reflect_indices(3, 7), [0, 1, 2, 1, 0, 1, 2])
        np.testing.assert_array_equal(_reflect_indices(1, 4), [0, 0, 0, 0])

    def test_pad_to_min_values(self):
        arr = np.arange(12, dtype=float).reshape(1, 1, 3, 4)
        out = pad_to_min(arr, 4)
        assert out.shape == (1, 1, 4, 4)
        np.testing.assert_array_equal(out[0, 0, 3], arr[0, 0, 1])
        np.testing.assert_array_equal(out[0, 0, :3], arr[0, 0])

    def test_pad_noop_when_large_enough(self):
        arr = np.zeros((1, 3, 5, 6))
        assert pad_to_min(arr, 4) is arr


class TestMaskUpsample:
    def test_hole_blocks_every_touching_stencil(self):
        mask = np.ones((3, 4), dtype=bool)
        mask[1, 2] = False
        out = _upsample_mask(mask)
        assert out.shape == (5, 8)
        hit = np.array([True, False, True, False, False, False, True, False])
        clean = np.ones(8, dtype=bool)
        expected = np.stack([clean, hit, hit, hit, clean])
        np.testing.assert_array_equal(out, expected)

    def test_all_valid_stays_all_valid(self):
        out = _upsample_mask(np.ones((4, 5), dtype=bool))
        assert out.shape == (7, 10)
        assert out.all()


# ------------------------------------------------------ zero-residual id

class TestZeroResidualIdentity:
    def test_fresh_model_is_exactly_bicubic(self, rng):
        epi = rand_epi(rng, 5, 12)
        model = build_model(NetworkSpec.micro(), seed=1)
        out = infer_epi(model, epi)
        ref = bicubic_upsample(epi)
        np.testing.assert_array_equal(out.data, ref.data)
        assert out.mask is None and ref.mask is None

    def test_fresh_model_preserves_mask(self, rng):
        mask = np.ones((5, 12), dtype=bool)
        mask[2, 7] = False
        epi = rand_epi(rng, 5, 12, mask=mask)
        out = infer_epi(build_model(NetworkSpec.micro()), epi)
        np.testing.assert_array_equal(out.mask, bicubic_upsample(epi).mask)

    def test_residual_batch_zero_for_fresh_model(self, rng):
        model = build_model(NetworkSpec.micro())
        bases = rng.random((3, 9, 24, 3))
        res = residual_batch(model, bases)
        assert res.shape == (3, 9, 24, 3)
        np.testing.assert_array_equal(res, 0.0)


# --------------------------------------------------------- EPI interface

class TestInferEpi:
    @pytest.mark.parametrize("shape", [(2, 2), (3, 8), (5, 32), (9, 16)])
    def test_shape_law(self, rng, shape):
        a, s = shape
        out = infer_epi(build_model(NetworkSpec.micro()), rand_epi(rng, a, s))
        assert out.data.shape == (2 * a - 1, 2 * s, 3)

    def test_small_input_uses_pad_then_crop(self, rng):
        # (2, 2) upsamples to (3, 4); height 3 is below the micro net's
        # minimum of 4, so the pad/crop path must engage and still return
        # the bicubic result for a fresh model.
        epi = rand_epi(rng, 2, 2)
        out = infer_epi(build_model(NetworkSpec.micro()), epi)
        np.testing.assert_array_equal(out.data, bicubic_upsample(epi).data)

    def test_output_clamped_to_unit_range(self, rng):
        epi = rand_epi(rng, 3, 8)
        model = build_model(NetworkSpec.micro())
        model.store["proj.b"].data[:] = 10.0
        assert np.all(infer_epi(model, epi).data == 1.0)
        model.store["proj.b"].data[:] = -10.0
        assert np.all(infer_epi(model, epi).data == 0.0)

    def test_orientation_carried_through(self, rng):
        epi = EPI(data=rng.random((3, 8, 3)), orientation="vertical")
        assert infer_epi(build_model(NetworkSpec.micro()), epi).orientation == "vertical"

    def test_batch_matches_single(self, rng):
        model = build_model(NetworkSpec.micro(), seed=2)
        # give the zero projection some life so the test sees real residuals
        model.store["proj.w"].data[:] = rng.standard_normal(
            model.store["proj.w"].data.shape
        ).astype(np.float32) * 0.05
        epis = [rand_epi(rng, 5, 12) for _ in range(3)]
        batched = infer_epi_batch(model, epis)
        for got, epi in zip(batched, epis):
            np.testing.assert_allclose(got.data, infer_epi(model, epi).data, atol=1e-6)

    def test_upsample_rejects_degenerate(self, rng):
        with pytest.raises(ShapeError):
            bicubic_upsample(EPI(data=rng.random((2, 1, 3))))

"""Checkpoint serialization: exact round trips and corruption detection."""

import json
import struct

import numpy as np
import pytest

from lumiforge.errors import CheckpointError
from lumiforge.nn.checkpoint import MAGIC, VERSION, load_checkpoint, save_checkpoint
from lumiforge.nn.network import NetworkSpec, build_model
from lumiforge.nn.train import Adam, TrainConfig, train
from lumiforge.scenes import GenConfig, gen_training_pairs


@pytest.fixture
def trained(tmp_path):
    """A micro model with a few real optimizer steps behind it."""
    pairs = gen_training_pairs(5, 2, GenConfig(n_views=5, n_pixels=8, d_min=-1.0, d_max=1.0))
    model = build_model(NetworkSpec.micro(), seed=9)
    train(model, pairs, TrainConfig(steps=4, batch_size=1, lr=1e-3, augment=False))
    return model


def test_model_round_trip_exact(trained, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, trained)
    loaded, opt = load_checkpoint(path)
    assert opt is None
    assert loaded.spec == trained.spec
    assert loaded.step == trained.step
    for name in trained.store.names():
        np.testing.assert_array_equal(loaded.store[name].data, trained.store[name].data)


def test_optimizer_round_trip(trained, tmp_path):
    # recreate the moment buffers by taking one more step with a fresh Adam
    opt = Adam(beta1=0.85, beta2=0.99, eps=1e-7)
    trained.store.zero_grads()
    for name in trained.store.names():
        p = trained.store[name]
        p.grad = np.ones_like(p.data)
    opt.step(trained.store, lr=1e-3)

    path = tmp_path / "m.ckpt"
    save_checkpoint(path, trained, opt)
    _, loaded = load_checkpoint(path)
    assert loaded is not None
    assert (loaded.t, loaded.beta1, loaded.beta2, loaded.eps) == (1, 0.85, 0.99, 1e-7)
    for name in trained.store.names():
        np.testing.assert_allclose(loaded.m[name], opt.m[name], atol=1e-7)
        np.testing.assert_allclose(loaded.v[name], opt.v[name], atol=1e-9)


def test_resume_continues_identically(tmp_path):
    # save/load in the middle of training must not change the trajectory
    pairs = gen_training_pairs(5, 2, GenConfig(n_views=5, n_pixels=8, d_min=-1.0, d_max=1.0))
    cfg = TrainConfig(steps=3, batch_size=1, lr=1e-3, seed=2, augment=False, log_every=1)

    straight = build_model(NetworkSpec.micro(), seed=1)
    train(straight, pairs, cfg)

    resumed = build_model(NetworkSpec.micro(), seed=1)
    path = tmp_path / "mid.ckpt"
    save_checkpoint(path, resumed)
    resumed, _ = load_checkpoint(path)
    train(resumed, pairs, cfg)

    for name in straight.store.names():
        np.testing.assert_array_equal(resumed.store[name].data, straight.store[name].data)


def test_no_lstm_spec_round_trips(tmp_path):
    model = build_model(NetworkSpec.micro().without_lstm(), seed=0)
    path = tmp_path / "n.ckpt"
    save_checkpoint(path, model)
    loaded, _ = load_checkpoint(path)
    assert not loaded.spec.use_lstm
    assert loaded.spec == model.spec


def test_load_dtype_conversion(trained, tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, trained)
    loaded, _ = load_checkpoint(path, dtype=np.float64)
    assert loaded.store["proj.w"].data.dtype == np.float64


# ------------------------------------------------------------ corruption

def saved_bytes(model, tmp_path, optimizer=None):
    path = tmp_path / "base.ckpt"
    save_checkpoint(path, model, optimizer)
    return bytearray(path.read_bytes())


def write_and_expect(tmp_path, raw, match):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match=match):
        load_checkpoint(path)


class TestCorruption:
    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_bad_magic(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        raw[:4] = b"JUNK"
        write_and_expect(tmp_path, raw, "bad magic")

    def test_bad_version(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        raw[4:6] = struct.pack("<H", VERSION + 1)
        write_and_expect(tmp_path, raw, "version")

    def test_truncated_before_header(self, tmp_path):
        write_and_expect(tmp_path, MAGIC + b"\x01", "truncated before header")

    def test_garbage_header_json(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        hlen = struct.unpack("<I", raw[6:10])[0]
        raw[10 : 10 + hlen] = b"{" * hlen
        write_and_expect(tmp_path, raw, "corrupt checkpoint header")

    def test_manifest_spec_mismatch(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        hlen = struct.unpack("<I", raw[6:10])[0]
        header = json.loads(raw[10 : 10 + hlen].decode())
        header["params"][0][1] = [1, 1, 1, 1]
        blob = json.dumps(header).encode()
        rebuilt = raw[:6] + struct.pack("<I", len(blob)) + blob + raw[10 + hlen :]
        write_and_expect(tmp_path, rebuilt, "manifest")

    def test_malformed_spec(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        hlen = struct.unpack("<I", raw[6:10])[0]
        header = json.loads(raw[10 : 10 + hlen].decode())
        del header["spec"]["levels"]
        blob = json.dumps(header).encode()
        rebuilt = raw[:6] + struct.pack("<I", len(blob)) + blob + raw[10 + hlen :]
        write_and_expect(tmp_path, rebuilt, "malformed spec")

    def test_truncated_inside_params(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        write_and_expect(tmp_path, raw[: len(raw) - 7], "truncated inside parameter")

    def test_truncated_inside_optimizer(self, trained, tmp_path):
        opt = Adam()
        for name in trained.store.names():
            p = trained.store[name]
            p.grad = np.zeros_like(p.data)
        opt.step(trained.store, lr=0.0)
        raw = saved_bytes(trained, tmp_path, opt)
        write_and_expect(tmp_path, raw[: len(raw) - 3], "truncated inside optimizer")

    def test_trailing_bytes(self, trained, tmp_path):
        raw = saved_bytes(trained, tmp_path)
        write_and_expect(tmp_path, raw + b"\x00\x00", "trailing bytes")

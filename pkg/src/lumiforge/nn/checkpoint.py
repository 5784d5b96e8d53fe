"""Checkpoint file: magic + version, JSON header, raw float32 LE blobs.

Header carries the network spec, the step counter, the parameter manifest
(name + shape, in serialization order) and the optimizer slot layout.
Parameter data follows as little-endian float32 in manifest order, then
optimizer slots (m, then v, per parameter) when present. Loading validates
everything against the spec's own layer table, so a truncated file or a
mismatched spec fails loudly instead of producing a half-initialized net.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .layers import ParamStore
from .network import Model, NetworkSpec
from .train import Adam

MAGIC = b"LMFG"
VERSION = 1


def _spec_to_dict(spec: NetworkSpec) -> dict:
    return {
        "levels": spec.levels,
        "pre_base": spec.pre_base,
        "pre_layers": spec.pre_layers,
        "pre_kernel": list(spec.pre_kernel),
        "lstm_channels": spec.lstm_channels,
        "post_channels": list(spec.post_channels),
        "post_kernel": list(spec.post_kernel),
        "updown_channels": spec.updown_channels,
        "in_channels": spec.in_channels,
        "use_lstm": spec.use_lstm,
    }


def _spec_from_dict(d: dict) -> NetworkSpec:
    try:
        return NetworkSpec(
            levels=int(d["levels"]),
            pre_base=int(d["pre_base"]),
            pre_layers=int(d["pre_layers"]),
            pre_kernel=tuple(d["pre_kernel"]),
            lstm_channels=int(d["lstm_channels"]),
            post_channels=tuple(d["post_channels"]),
            post_kernel=tuple(d["post_kernel"]),
            updown_channels=int(d["updown_channels"]),
            in_channels=int(d["in_channels"]),
            use_lstm=bool(d["use_lstm"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed spec in checkpoint header: {exc}") from exc


def save_checkpoint(path: Path, model: Model, optimizer: Adam | None = None):
    names = [name for name, _ in model.spec.layer_table()]
    header = {
        "spec": _spec_to_dict(model.spec),
        "step": model.step,
        "params": [[name, list(model.store[name].data.shape)] for name in names],
        "optimizer": None
        if optimizer is None
        else {
            "type": "adam",
            "t": optimizer.t,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "slots": ["m", "v"],
        },
    }
    blob = json.dumps(header).encode("utf-8")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(model.store[name].data, dtype="<f4").tobytes())
        if optimizer is not None:
            for slot in (optimizer.m, optimizer.v):
                for name in names:
                    arr = slot.get(name)
                    if arr is None:
                        arr = np.zeros(model.store[name].data.shape)
                    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path: Path, dtype=np.float32) -> tuple[Model, Adam | None]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    if len(raw) < 10:
        raise CheckpointError(f"{path} truncated before header")
    version, hlen = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(raw[10 : 10 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    spec = _spec_from_dict(header.get("spec", {}))
    expected = spec.layer_table()
    manifest = [(name, tuple(shape)) for name, shape in header.get("params", [])]
    if manifest != expected:
        raise CheckpointError("checkpoint parameter manifest does not match its spec")
    store = ParamStore(dtype)
    off = 10 + hlen
    for name, shape in expected:
        n = int(np.prod(shape))
        end = off + 4 * n
        if end > len(raw):
            raise CheckpointError(f"{path} truncated inside parameter {name!r}")
        store.add(name, np.frombuffer(raw[off:end], dtype="<f4").reshape(shape))
        off = end
    model = Model(spec=spec, store=store, step=int(header.get("step", 0)))
    opt_info = header.get("optimizer")
    optimizer = None
    if opt_info is not None:
        optimizer = Adam(opt_info["beta1"], opt_info["beta2"], opt_info["eps"])
        optimizer.t = int(opt_info["t"])
        for slot_name in opt_info["slots"]:
            slot = {}
            for name, shape in expected:
                n = int(np.prod(shape))
                end = off + 4 * n
                if end > len(raw):
                    raise CheckpointError(f"{path} truncated inside optimizer slot {slot_name!r}")
                slot[name] = np.frombuffer(raw[off:end], dtype="<f4").reshape(shape).astype(dtype)
                off = end
            setattr(optimizer, slot_name, slot)
    if off != len(raw):
        raise CheckpointError(f"{path} has {len(raw) - off} trailing bytes")
    return model, optimizer

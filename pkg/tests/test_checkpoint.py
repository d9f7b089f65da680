import json
import struct
import zlib

import numpy as np
import pytest

from drqn_urban.checkpoint import MAGIC, VERSION, CheckpointError, load_checkpoint, read_header, save_checkpoint
from drqn_urban.optim import AdamState
from drqn_urban.qnet import build_qnetwork


@pytest.fixture(scope="module")
def nets():
    main = build_qnetwork(rng=np.random.default_rng(0))
    target = build_qnetwork(rng=np.random.default_rng(1))
    rng = np.random.default_rng(2)
    adam = AdamState(rng.random(main.size).astype(np.float32), rng.random(main.size).astype(np.float32), 17)
    return main, target, adam


def test_roundtrip(tmp_path, nets):
    main, target, adam = nets
    p = save_checkpoint(tmp_path / "a.ckpt", main, target, adam, seed=5, agent_meta={"episodes_done": 3})
    ck = load_checkpoint(p)
    assert np.array_equal(ck.main.params, main.params)
    assert np.array_equal(ck.target.params, target.params)
    assert np.array_equal(ck.adam.m, adam.m) and np.array_equal(ck.adam.v, adam.v) and ck.adam.t == 17
    assert ck.main.specs == main.specs
    assert ck.header["seed"] == 5 and ck.metadata == {"episodes_done": 3}


def test_byte_layout(tmp_path, nets):
    main, _, _ = nets
    p = save_checkpoint(tmp_path / "b.ckpt", main)
    raw = p.read_bytes()
    assert raw[:8] == MAGIC
    version, hlen = struct.unpack("<II", raw[8:16])
    assert version == VERSION
    header = json.loads(raw[16:16 + hlen])
    payload = raw[16 + hlen:]
    assert len(payload) == 4 * main.size
    # tensors are little-endian float32 in declaration order
    first = header["tensors"][0]
    assert first["name"] == "0.conv2d.weights" and first["shape"] == [8, 6, 4, 32]
    w0 = np.frombuffer(payload, "<f4", count=8 * 6 * 4 * 32).reshape(8, 6, 4, 32)
    assert np.array_equal(w0, main.layers[0].weights)
    last = header["tensors"][-1]
    assert last["offset"] == main.size - 4
    assert np.array_equal(np.frombuffer(payload, "<f4")[-4:], main.layers[-1].biases)
    assert header["payload_crc32"] == zlib.crc32(payload)
    assert [l["kind"] for l in header["layers"]] == ["conv2d"] * 3 + ["lstm"] * 2 + ["fully-connected"] * 2
    assert set(header["init_scheme"]) == {"conv2d", "lstm", "fully-connected"}


def test_header_only_read(tmp_path, nets):
    p = save_checkpoint(tmp_path / "c.ckpt", nets[0], seed=9)
    assert read_header(p)["seed"] == 9


@pytest.mark.parametrize("damage,match", [
    (lambda b: b"XXXXXXXX" + b[8:], "magic"),
    (lambda b: b[:8] + struct.pack("<I", 99) + b[12:], "version 99"),
    (lambda b: b[:-10], "payload is"),
    (lambda b: b[:-1] + bytes([b[-1] ^ 0xFF]), "checksum"),
    (lambda b: b[:16] + b"#" + b[17:], "corrupt header"),
    (lambda b: b[:10], "magic"),
])
def test_corrupt_files_rejected(tmp_path, nets, damage, match):
    p = save_checkpoint(tmp_path / "d.ckpt", nets[0])
    p.write_bytes(damage(p.read_bytes()))
    with pytest.raises(CheckpointError, match=match):
        load_checkpoint(p)


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="cannot read"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_non_finite_refused(tmp_path, nets):
    main = nets[0].copy()
    main.params[123] = np.nan
    with pytest.raises(CheckpointError, match="index 123"):
        save_checkpoint(tmp_path / "e.ckpt", main)
    assert not (tmp_path / "e.ckpt").exists()

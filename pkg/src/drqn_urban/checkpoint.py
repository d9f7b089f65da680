"""Versioned binary checkpoint.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic b"DRQNCKPT"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length H in bytes
    16      H     UTF-8 JSON header
    16+H    ...   payload: one float32 little-endian array per section, in the
                  order listed by header["sections"]

Each section holds the full flat parameter vector (or an Adam moment of the
same length). Inside a section the layer tensors follow declaration order,
weights before biases, each row-major; header["tensors"] lists name, shape
and element offset of each one. header["payload_crc32"] covers the payload.
"""
from __future__ import annotations

import dataclasses
import json
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import LSTM, Conv2D, Dense, Network
from .optim import AdamState

MAGIC = b"DRQNCKPT"
VERSION = 1
INIT_SCHEME = {
    "conv2d": "he-uniform, zero bias",
    "fully-connected": "he-uniform, zero bias",
    "lstm": "uniform(+-1/sqrt(hidden)), forget-gate bias 1",
}
_SPEC_TYPES = {"conv2d": Conv2D, "fully-connected": Dense, "lstm": LSTM}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    main: Network
    target: Network | None
    adam: AdamState | None
    header: dict

    @property
    def metadata(self):
        return self.header.get("agent", {})


def _spec_dict(spec):
    d = dataclasses.asdict(spec)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _spec_from_dict(d):
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _SPEC_TYPES:
        raise CheckpointError(f"unknown layer kind {kind!r} in header")
    d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return _SPEC_TYPES[kind](**d)


def save_checkpoint(path, main: Network, target: Network | None = None, adam: AdamState | None = None,
                    seed=None, agent_meta=None):
    """Write atomically (temp file + rename). Refuses non-finite arrays."""
    sections = [("main", main.params)]
    if target is not None:
        sections.append(("target", target.params))
    if adam is not None:
        sections += [("adam_m", adam.m), ("adam_v", adam.v)]
    blobs = []
    for name, arr in sections:
        arr = np.asarray(arr)
        bad = ~np.isfinite(arr)
        if bad.any():
            raise CheckpointError(f"refusing to write non-finite values: section {name} index {int(np.flatnonzero(bad)[0])}")
        blobs.append(arr.astype("<f4").tobytes())
    payload = b"".join(blobs)

    tensors, off = [], 0
    for name, a in main.layer_arrays():
        tensors.append({"name": name, "shape": list(a.shape), "offset": off})
        off += a.size
    n = main.size
    header = {
        "format": "drqn-checkpoint",
        "version": VERSION,
        "dtype": "float32-le",
        "input_shape": list(main.input_shape),
        "aux_dim": main.aux_dim,
        "layers": [_spec_dict(s) for s in main.specs],
        "tensors": tensors,
        "param_count": n,
        "init_scheme": INIT_SCHEME,
        "seed": seed,
        "sections": [{"name": name, "offset_bytes": 4 * n * k, "count": n} for k, (name, _) in enumerate(sections)],
        "adam": None if adam is None else {
            "t": adam.t, "alpha": adam.alpha, "beta1": adam.beta1, "beta2": adam.beta2, "epsilon": adam.epsilon,
        },
        "agent": agent_meta or {},
        "payload_bytes": len(payload),
        "payload_crc32": zlib.crc32(payload),
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(hbytes)))
        f.write(hbytes)
        f.write(payload)
    os.replace(tmp, path)
    return path


def read_header(path):
    header, _ = _read(path)
    return header


def _read(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: cannot read checkpoint ({e.strerror})") from e
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic {raw[:8]!r})")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}, this build reads version {VERSION}")
    if 16 + hlen > len(raw):
        raise CheckpointError(f"{path}: truncated header (need {hlen} bytes, file has {len(raw) - 16})")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e
    payload = raw[16 + hlen:]
    if len(payload) != header.get("payload_bytes"):
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header says {header.get('payload_bytes')} (version {version})"
        )
    if zlib.crc32(payload) != header.get("payload_crc32"):
        raise CheckpointError(f"{path}: payload checksum mismatch (version {version}); file is corrupt")
    return header, payload


def load_checkpoint(path) -> Checkpoint:
    header, payload = _read(path)
    try:
        specs = [_spec_from_dict(d) for d in header["layers"]]
        main = Network(header["input_shape"], specs, header["aux_dim"], np.float32, init=False)
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: header does not describe a valid network ({e})") from e
    n = main.size
    if n != header["param_count"]:
        raise CheckpointError(f"{path}: layer list implies {n} parameters, header says {header['param_count']}")
    arrays = {}
    for sec in header["sections"]:
        start = sec["offset_bytes"]
        arrays[sec["name"]] = np.frombuffer(payload, "<f4", count=sec["count"], offset=start).astype(np.float32)
    main.set_params(arrays["main"])
    target = None
    if "target" in arrays:
        target = main.copy()
        target.set_params(arrays["target"])
    adam = None
    if "adam_m" in arrays and header.get("adam"):
        h = header["adam"]
        adam = AdamState(arrays["adam_m"], arrays["adam_v"], h["t"], h["alpha"], h["beta1"], h["beta2"], h["epsilon"])
    return Checkpoint(main, target, adam, header)

"""Self-describing checkpoint container for named float64 tensors.

Byte layout (all integers little-endian):

    offset  size  field
    0       8     magic bytes b"TICKTACK"
    8       4     format version, uint32 (currently 1)
    12      4     header length H, uint32
    16      H     UTF-8 JSON header
    16+H    --    tensor payload

The JSON header is ``{"config": {...}, "seed": int, "step": int,
"extra": {...}, "tensors": [{"name": str, "shape": [int, ...]}, ...]}``
serialized with sorted keys and no whitespace, so identical contents
produce identical bytes.  The payload is the tensors' float64 C-order
bytes concatenated in manifest order.  Fisher files reuse this container
unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"TICKTACK"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    seed: int
    step: int
    tensors: dict[str, np.ndarray]
    extra: dict = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    manifest = []
    payload = bytearray()
    for name, tensor in ckpt.tensors.items():
        arr = np.asarray(tensor, dtype=np.float64, order="C")
        manifest.append({"name": name, "shape": list(arr.shape)})
        payload.extend(arr.tobytes())
    header = json.dumps(
        {
            "config": ckpt.config,
            "seed": ckpt.seed,
            "step": ckpt.step,
            "extra": ckpt.extra,
            "tensors": manifest,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(FORMAT_VERSION.to_bytes(4, "little"))
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(bytes(payload))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise ValueError(f"{path}: not a ticktack checkpoint (bad magic)")
    version = int.from_bytes(blob[8:12], "little")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version}")
    header_len = int.from_bytes(blob[12:16], "little")
    header = json.loads(blob[16 : 16 + header_len].decode("utf-8"))
    offset = 16 + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob[offset : offset + nbytes], dtype="<f8").reshape(shape)
        tensors[entry["name"]] = arr.copy()
        offset += nbytes
    return Checkpoint(
        config=header["config"],
        seed=header["seed"],
        step=header["step"],
        tensors=tensors,
        extra=header.get("extra", {}),
    )

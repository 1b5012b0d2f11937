"""Binary checkpoint: magic line, JSON header, little-endian float64 payload."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from lerl.errors import FormatError, IoError
from lerl.lpl.params import PolicyParams

MAGIC = b"LERLCKPT\n"
FORMAT_TAG = "lerl-checkpoint/1"


def dumps_checkpoint(params: PolicyParams, fingerprint: str, seeds: dict, extra: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in sorted(params.named_arrays().items()):
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format": FORMAT_TAG,
        "fingerprint": fingerprint,
        "seeds": seeds,
        "max_positions": params.max_positions,
        "tensors": entries,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(hbytes)) + hbytes + b"".join(chunks)


def loads_checkpoint(blob: bytes) -> tuple[PolicyParams, dict]:
    if not blob.startswith(MAGIC):
        raise FormatError("not a checkpoint file")
    pos = len(MAGIC)
    try:
        (hlen,) = struct.unpack_from("<Q", blob, pos)
        header = json.loads(blob[pos + 8 : pos + 8 + hlen].decode("utf-8"))
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from exc
    if header.get("format") != FORMAT_TAG:
        raise FormatError(f"unsupported checkpoint format {header.get('format')!r}")
    payload = memoryview(blob)[pos + 8 + hlen :]
    online, target = {}, {}
    for ent in header["tensors"]:
        n = int(np.prod(ent["shape"], dtype=np.int64))
        start = ent["offset"]
        if start + 8 * n > len(payload):
            raise FormatError(f"truncated payload for {ent['name']}")
        arr = np.frombuffer(payload[start : start + 8 * n], dtype="<f8").astype(np.float64)
        group, _, key = ent["name"].partition("/")
        (online if group == "online" else target)[key] = arr.reshape(ent["shape"])
    params = PolicyParams(online, target, header["max_positions"])
    return params, header


def save_checkpoint(path, params: PolicyParams, fingerprint: str, seeds: dict, extra: dict | None = None) -> None:
    try:
        Path(path).write_bytes(dumps_checkpoint(params, fingerprint, seeds, extra))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[PolicyParams, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads_checkpoint(blob)

"""Single-file checkpoint format.

Layout, all little endian:

    5 bytes   magic b"PAAG1"
    8 bytes   unsigned header length N
    N bytes   UTF-8 JSON header
    ...       raw float64 buffers, in the order the header lists them

The header has two keys: "params" maps each parameter name to its
shape, dtype tag and byte offset (relative to the start of the buffer
region), and "meta" carries run metadata (config, vocabulary). Writing
is fully deterministic: parameters are sorted by name and the JSON is
serialized with sorted keys, so identical models produce identical
bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Tuple

import numpy as np

from paag.autograd import Tensor
from paag.errors import CheckpointError

MAGIC = b"PAAG1"
DTYPE_TAG = "<f8"


def save(path, params: Dict[str, Tensor], meta: dict | None = None) -> None:
    names = sorted(params)
    entries = {}
    offset = 0
    buffers = []
    for name in names:
        # tobytes always emits C order; ascontiguousarray would promote
        # 0-d arrays to shape (1,) and corrupt scalar parameters.
        data = np.asarray(params[name].data, dtype=DTYPE_TAG)
        entries[name] = {
            "shape": list(data.shape),
            "dtype": DTYPE_TAG,
            "offset": offset,
        }
        raw = data.tobytes()
        buffers.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"params": entries, "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in buffers:
            fh.write(raw)


def load(path) -> Tuple[Dict[str, np.ndarray], dict]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc.strerror or exc}") from exc
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    (hlen,) = struct.unpack_from("<Q", blob, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    body = blob[start + hlen:]
    arrays = {}
    for name, entry in header["params"].items():
        shape = tuple(entry["shape"])
        if entry["dtype"] != DTYPE_TAG:
            raise CheckpointError(f"{path}: unsupported dtype {entry['dtype']!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        offset = entry["offset"]
        raw = body[offset:offset + count * 8]
        if len(raw) != count * 8:
            raise CheckpointError(f"{path}: truncated buffer for {name!r}")
        arrays[name] = np.frombuffer(raw, dtype=DTYPE_TAG).reshape(shape).copy()
    return arrays, header.get("meta", {})


def restore(params: Dict[str, Tensor], arrays: Dict[str, np.ndarray]) -> None:
    """Load saved arrays into an existing parameter set, strictly."""
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise CheckpointError(
            f"parameter names do not match: missing {missing}, unexpected {extra}")
    for name, p in params.items():
        if arrays[name].shape != p.shape:
            raise CheckpointError(
                f"{name}: checkpoint shape {arrays[name].shape} vs model {p.shape}")
        p.data = arrays[name].astype(np.float64)

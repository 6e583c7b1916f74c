"""Versioned binary checkpoints.

Layout: 4 magic bytes, a little-endian uint32 format version, a uint64
header length, a UTF-8 JSON header (model config, id-space sizes, dataset
manifest hash, array index), then each named array as raw float32
little-endian bytes in index order. Loading restores bit-identical
parameters and refuses version or manifest mismatches outright.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelState
from .autodiff import Tensor

MAGIC = b"LQRC"
VERSION = 1


def state_fingerprint(state: ModelState) -> str:
    """sha256 over parameter names and exact bytes; detects any mutation."""
    h = hashlib.sha256()
    for name, tensor in state.params.items():
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(tensor.data).tobytes())
    return h.hexdigest()


def save_checkpoint(state: ModelState, path, manifest_hash: str = "") -> Path:
    """Write ``state`` to ``path``; arrays are stored as float32."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = []
    payloads = []
    for name, tensor in state.params.items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        arrays.append({"name": name, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = {
        "config": state.config.to_dict(),
        "num_users": state.num_users,
        "num_items": state.num_items,
        "manifest_sha256": manifest_hash,
        "arrays": arrays,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for payload in payloads:
            fh.write(payload)
    return path


def load_checkpoint(path, expected_manifest_hash: str | None = None) -> tuple[ModelState, str]:
    """Restore a checkpoint; returns (state, stored manifest hash)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported (expected {VERSION})")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    if 16 + hlen > len(raw):
        raise CheckpointError(f"{path}: truncated header ({hlen} bytes declared)")
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    stored_hash = header.get("manifest_sha256", "")
    if expected_manifest_hash is not None and stored_hash != expected_manifest_hash:
        raise CheckpointError(
            f"{path}: dataset manifest mismatch\n"
            f"  checkpoint manifest sha256: {stored_hash or '<none>'}\n"
            f"  dataset    manifest sha256: {expected_manifest_hash}")

    config = ModelConfig.from_dict(header["config"])
    state = ModelState(int(header["num_users"]), int(header["num_items"]), config)
    offset = 16 + hlen
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(raw):
            raise CheckpointError(
                f"{path}: truncated payload for {entry['name']!r}: expected "
                f"{nbytes} bytes at offset {offset}, file has {len(raw) - offset}")
        arr = np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)),
                            offset=offset).reshape(shape).copy()
        state.params[entry["name"]] = Tensor(
            arr, requires_grad=(entry["name"] != "anchor"), name=entry["name"])
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(
            f"{path}: {len(raw) - offset} unexpected trailing bytes")
    return state, stored_hash

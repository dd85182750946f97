"""Deterministic model container: JSON header plus raw parameter bytes.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON
header, then each parameter's float64 bytes in header order.  Byte-stable
for identical networks, which makes retraining reproducibility checkable
with a file hash.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import Network, NetworkSpec

MAGIC = b"IRRLNET\x00"
FORMAT_VERSION = 1


class CorruptModelError(RuntimeError):
    pass


class VersionMismatchError(RuntimeError):
    pass


def save_model(network: Network, path, extra: dict | None = None) -> None:
    path = Path(path)
    manifest = []
    blobs = []
    for i, name, arr in network.parameters():
        a = np.ascontiguousarray(arr, dtype="<f8")
        manifest.append({"layer": i, "name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = {
        "version": FORMAT_VERSION,
        "spec": network.spec.to_dict(),
        "params": manifest,
    }
    if extra:
        header["extra"] = extra
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(raw)))
        fh.write(raw)
        for blob in blobs:
            fh.write(blob)


def load_model(path) -> Network:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 4 or not data.startswith(MAGIC):
        raise CorruptModelError(f"{path}: not a model file")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    off = len(MAGIC) + 4
    try:
        header = json.loads(data[off:off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptModelError(f"{path}: unreadable header") from exc
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"{path}: format version {header.get('version')}, expected {FORMAT_VERSION}"
        )
    network = Network(NetworkSpec.from_dict(header["spec"]), seed=0)
    off += hlen
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape)) if shape else 8
        chunk = data[off:off + nbytes]
        if len(chunk) != nbytes:
            raise CorruptModelError(f"{path}: truncated parameter data")
        arr = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        network.layers[entry["layer"]].params[entry["name"]] = arr
        off += nbytes
    if off != len(data):
        raise CorruptModelError(f"{path}: trailing bytes")
    return network


def load_extra(path) -> dict:
    """Read only the ``extra`` metadata stored alongside the parameters."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CorruptModelError(f"{path}: not a model file")
    (hlen,) = struct.unpack_from("<I", data, len(MAGIC))
    off = len(MAGIC) + 4
    return json.loads(data[off:off + hlen].decode()).get("extra", {})

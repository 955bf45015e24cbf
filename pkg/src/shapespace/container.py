"""Versioned binary container: a canonical-JSON manifest plus named
little-endian float64 tensor blobs with shape headers.

Used for model checkpoints and corpus caches. Writing the result of a
read reproduces the original bytes exactly.
"""

import json
import struct

import numpy as np

__all__ = ["ContainerError", "write_container", "read_container"]

_MAGIC = b"SSPC"
_FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Corrupt, truncated or incompatible container file."""


def _canonical_manifest(manifest):
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode("utf-8")


def write_container(path, manifest, tensors):
    """Write ``manifest`` (JSON-serializable dict) and an ordered mapping
    of name -> float array."""
    man = _canonical_manifest(manifest)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(man)))
        fh.write(man)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(arr.tobytes())


def read_container(path):
    """Read a container; returns (manifest dict, ordered name -> array)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    pos = 0

    def take(n, what):
        nonlocal pos
        if pos + n > len(view):
            raise ContainerError(f"{path}: truncated while reading {what}")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4, "magic")) != _MAGIC:
        raise ContainerError(f"{path}: not a shapespace container")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != _FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    (man_len,) = struct.unpack("<Q", take(8, "manifest length"))
    try:
        manifest = json.loads(bytes(take(man_len, "manifest")).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"{path}: bad manifest: {exc}") from None
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "tensor name length"))
        name = bytes(take(name_len, "tensor name")).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1, "tensor rank"))
        shape = tuple(struct.unpack("<Q", take(8, "tensor shape"))[0]
                      for _ in range(ndim))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = take(8 * size, f"tensor {name!r} data")
        tensors[name] = np.frombuffer(data, dtype="<f8").astype(float).reshape(shape)
    if pos != len(view):
        raise ContainerError(f"{path}: {len(view) - pos} trailing bytes")
    return manifest, tensors

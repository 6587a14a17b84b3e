"""Name-indexed array container with a JSON sidecar, bit-exact round trips.

Layout mirrors the ``.vol`` format at the file level:

    bytes 0-3    magic ``BPAK``
    byte  4      version (0x01)
    bytes 5-8    little-endian u32 JSON length H
    bytes 9..9+H UTF-8 JSON {"meta": {...}, "arrays": [{name, shape, dtype}]}
    remainder    raw little-endian payloads in listed order
"""

from __future__ import annotations

import json
import os

import numpy as np

__all__ = ["save_container", "load_container"]

MAGIC = b"BPAK"
VERSION = 1

_DTYPES = {"f32": "<f4", "f64": "<f8", "i64": "<i8"}
_DTYPE_NAMES = {np.dtype(v): k for k, v in _DTYPES.items()}


def save_container(path: str | os.PathLike, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        key = _DTYPE_NAMES.get(np.dtype(arr.dtype.newbyteorder("<")))
        if key is None:
            raise ValueError(f"unsupported dtype {arr.dtype} for array {name!r}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": key})
        payloads.append(arr.astype(_DTYPES[key]).tobytes())
    header = json.dumps(
        {"meta": meta, "arrays": entries}, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        for payload in payloads:
            f.write(payload)


def load_container(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 9 or blob[:4] != MAGIC:
        raise ValueError(f"{path}: not an array container (bad magic)")
    if blob[4] != VERSION:
        raise ValueError(f"{path}: unsupported container version {blob[4]}")
    header_len = int.from_bytes(blob[5:9], "little")
    header = json.loads(blob[9 : 9 + header_len].decode("utf-8"))
    offset = 9 + header_len
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = count * dtype.itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ValueError(f"{path}: truncated payload for array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes after payloads")
    return header["meta"], arrays

"""The volume type, intensity normalization, and the ``.vol`` container.

A :class:`Volume` is a rank-3 float32 scalar field plus voxel-spacing
metadata.  Volumes round-trip bit-exactly through the ``.vol`` format:

    bytes 0-3    magic ``BVOL``
    byte  4      format version (0x01)
    bytes 5-8    little-endian u32 length H of the JSON header
    bytes 9..9+H UTF-8 JSON ``{"shape": [d, h, w], "spacing": [...], "dtype": "f32"}``
    remainder    exactly d*h*w little-endian float32 values, w fastest
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Volume",
    "VolumeError",
    "VolumeFormatError",
    "BadMagicError",
    "UnsupportedVersionError",
    "MalformedHeaderError",
    "InvalidShapeError",
    "PayloadSizeError",
    "DegenerateVolumeError",
    "normalize",
    "volume_to_bytes",
    "save_volume",
    "load_volume",
]

MAGIC = b"BVOL"
VERSION = 1


class VolumeError(ValueError):
    """Base class for volume construction and I/O failures."""


class VolumeFormatError(VolumeError):
    """Base class for malformed ``.vol`` files."""


class BadMagicError(VolumeFormatError):
    pass


class UnsupportedVersionError(VolumeFormatError):
    pass


class MalformedHeaderError(VolumeFormatError):
    pass


class InvalidShapeError(VolumeFormatError):
    pass


class PayloadSizeError(VolumeFormatError):
    pass


class DegenerateVolumeError(VolumeError):
    """Raised when an operation is undefined on a constant volume."""


@dataclass(frozen=True)
class Volume:
    """A rank-3 scalar field with voxel spacing metadata (mm/voxel)."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise InvalidShapeError(f"volume data must be rank 3, got rank {data.ndim}")
        if min(data.shape) < 1:
            raise InvalidShapeError(f"volume axes must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise VolumeError("volume intensities must be finite")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise VolumeError(f"spacing must be three positive reals, got {self.spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def astuple(self):
        return self.data, self.spacing


def normalize(v: Volume, lo: float = -1.0, hi: float = 1.0) -> Volume:
    """Affinely map the intensity range of ``v`` onto ``[lo, hi]``.

    The arithmetic runs in float64 so repeated normalization is stable to
    well below 1e-6.
    """
    if not hi > lo:
        raise ValueError(f"normalize requires hi > lo, got lo={lo}, hi={hi}")
    data = v.data.astype(np.float64)
    vmin = float(data.min())
    vmax = float(data.max())
    if vmax == vmin:
        raise DegenerateVolumeError("cannot normalize a constant volume")
    scaled = (data - vmin) * ((hi - lo) / (vmax - vmin)) + lo
    np.clip(scaled, lo, hi, out=scaled)
    return Volume(scaled.astype(np.float32), v.spacing)


def _header_bytes(v: Volume) -> bytes:
    header = {
        "shape": list(v.shape),
        "spacing": list(v.spacing),
        "dtype": "f32",
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def volume_to_bytes(v: Volume) -> bytes:
    """Serialize ``v`` to the ``.vol`` byte layout."""
    header = _header_bytes(v)
    payload = np.ascontiguousarray(v.data, dtype="<f4").tobytes()
    return MAGIC + bytes([VERSION]) + len(header).to_bytes(4, "little") + header + payload


def save_volume(v: Volume, path: str | os.PathLike) -> None:
    """Write ``v`` to ``path`` in the ``.vol`` format (bit-exact round trip)."""
    with open(path, "wb") as f:
        f.write(volume_to_bytes(v))


def load_volume(path: str | os.PathLike) -> Volume:
    """Read a ``.vol`` file, validating magic, version, header, and payload."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 9 or blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a .vol file (bad magic)")
    if blob[4] != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported .vol version {blob[4]}")
    header_len = int.from_bytes(blob[5:9], "little")
    if len(blob) < 9 + header_len:
        raise MalformedHeaderError(f"{path}: truncated header")
    try:
        header = json.loads(blob[9 : 9 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedHeaderError(f"{path}: header is not valid JSON: {exc}") from exc
    for key in ("shape", "spacing", "dtype"):
        if key not in header:
            raise MalformedHeaderError(f"{path}: header missing {key!r}")
    if header["dtype"] != "f32":
        raise MalformedHeaderError(f"{path}: unsupported dtype {header['dtype']!r}")
    shape = header["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(n, int) and n > 0 for n in shape)
    ):
        raise InvalidShapeError(f"{path}: invalid shape {shape!r}")
    expected = 4 * shape[0] * shape[1] * shape[2]
    payload = blob[9 + header_len :]
    if len(payload) != expected:
        raise PayloadSizeError(
            f"{path}: payload holds {len(payload)} bytes, shape {tuple(shape)} requires {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(shape)
    return Volume(data.copy(), tuple(header["spacing"]))

"""Seeded synthetic paired phantoms.

Each phantom pair is a deterministic function of ``(seed, shape,
structure_count)``.  The source volume is a superposition of soft-edged
random ellipsoids ("tissue" regions) with per-region base intensities plus
low-amplitude smooth noise; the target applies a fixed monotone per-region
intensity remap to the same geometry, a subject-specific multiplicative
texture, and a small Gaussian blur.  Both volumes are recomputable from
the stored seed, the geometry-driven part of the mapping is learnable from
the source alone, and the per-subject remap coefficients and texture carry
appearance diversity that is not, mirroring the premise that target-
modality appearance varies between subjects with identical anatomy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, shift

from .volume import Volume, normalize

__all__ = ["PairedSample", "generate_phantom_pair", "MIN_PHANTOM_EXTENT"]

MIN_PHANTOM_EXTENT = 16

# Frozen generator constants.  Verified empirically over 20 seed pairs at
# 32^3 before freezing: distinct seeds differ by > 0.05 in well over 1% of
# source voxels (see tests/test_phantom.py).
_HEAD_SEMIAXIS = (0.30, 0.40)      # fraction of each axis extent
_REGION_SEMIAXIS = (0.08, 0.22)
_REGION_CENTER = (0.28, 0.72)      # normalized coordinates
_HEAD_INTENSITY = (0.25, 0.45)
_REGION_INTENSITY = (0.35, 1.0)
_EDGE_SOFTNESS = 0.12              # sigmoid width of the ellipsoid boundary
_NOISE_SIGMA = 1.2                 # voxels
_NOISE_AMPLITUDE = 0.03
_REMAP_QUADRATIC = (0.3, 1.2)      # per-region a_k for a_k*s^2 + b_k*s
_REMAP_LINEAR = (0.2, 0.9)         # per-region b_k
# Subject-specific multiplicative texture on the target: appearance detail
# that is not predictable from the source volume, standing in for the
# inter-subject appearance diversity of the target modality.  Coarse enough
# to survive the target blur and the evaluation feature extractor.
_TEXTURE_AMPLITUDE = 0.10
_TEXTURE_SIGMA = 2.5               # voxels
# Sub-voxel registration jitter of the target, standing in for the residual
# misalignment of rigidly registered pairs.  Voxel-wise regression against
# jittered targets is minimized by a blur over the jitter distribution,
# which is the failure mode the adversarial term exists to prevent.
_JITTER_MAX = 0.75                 # voxels per axis
_TARGET_BLUR_SIGMA = 0.7           # voxels


@dataclass(frozen=True)
class PairedSample:
    """An aligned (source, target) volume pair from one synthetic subject."""

    source: Volume
    target: Volume
    subject_id: str
    seed: int

    def __post_init__(self):
        if self.source.shape != self.target.shape:
            raise ValueError(
                f"paired volumes must share a shape, got {self.source.shape} vs {self.target.shape}"
            )


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random 3x3 rotation via QR of a Gaussian matrix."""
    m = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _soft_ellipsoid(
    coords: np.ndarray, center: np.ndarray, semiaxes: np.ndarray, rotation: np.ndarray
) -> np.ndarray:
    """Smooth indicator of a rotated ellipsoid, ~1 inside, ~0 outside."""
    rel = coords - center
    local = rel @ rotation
    q = np.sum((local / semiaxes) ** 2, axis=-1)
    arg = np.clip((q - 1.0) / _EDGE_SOFTNESS, -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(arg))


def generate_phantom_pair(
    seed: int, shape: tuple[int, int, int], structure_count: int
) -> PairedSample:
    """Generate one paired phantom; bit-identical for identical arguments."""
    shape = tuple(int(n) for n in shape)
    if len(shape) != 3 or min(shape) < MIN_PHANTOM_EXTENT:
        raise ValueError(
            f"phantom shape must be >= {MIN_PHANTOM_EXTENT} per axis, got {shape}"
        )
    if structure_count < 3:
        raise ValueError(f"structure_count must be >= 3, got {structure_count}")

    rng = np.random.default_rng(int(seed))
    grid = np.stack(
        np.meshgrid(*(np.arange(n, dtype=np.float64) / (n - 1) for n in shape), indexing="ij"),
        axis=-1,
    )

    source = np.zeros(shape, dtype=np.float64)
    target = np.zeros(shape, dtype=np.float64)
    for k in range(structure_count):
        if k == 0:
            center = rng.uniform(0.46, 0.54, size=3)
            semiaxes = rng.uniform(*_HEAD_SEMIAXIS, size=3)
            base = rng.uniform(*_HEAD_INTENSITY)
        else:
            center = rng.uniform(*_REGION_CENTER, size=3)
            semiaxes = rng.uniform(*_REGION_SEMIAXIS, size=3)
            base = rng.uniform(*_REGION_INTENSITY)
        rotation = _random_rotation(rng)
        region = base * _soft_ellipsoid(grid, center, semiaxes, rotation)
        source += region
        # Monotone per-region remap: a_k * s^2 + b_k * s with a_k, b_k > 0.
        a_k = rng.uniform(*_REMAP_QUADRATIC)
        b_k = rng.uniform(*_REMAP_LINEAR)
        target += a_k * region**2 + b_k * region

    source += _NOISE_AMPLITUDE * gaussian_filter(rng.standard_normal(shape), _NOISE_SIGMA)
    texture = gaussian_filter(rng.standard_normal(shape), _TEXTURE_SIGMA)
    target *= 1.0 + _TEXTURE_AMPLITUDE * texture
    target = shift(target, rng.uniform(-_JITTER_MAX, _JITTER_MAX, size=3), order=1, mode="nearest")
    target = gaussian_filter(target, _TARGET_BLUR_SIGMA)

    spacing = (1.0, 1.0, 1.0)
    return PairedSample(
        source=normalize(Volume(source.astype(np.float32), spacing)),
        target=normalize(Volume(target.astype(np.float32), spacing)),
        subject_id=f"phantom-{int(seed):d}",
        seed=int(seed),
    )

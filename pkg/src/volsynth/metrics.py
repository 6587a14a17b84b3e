"""Evaluation metrics over volume pairs and volume sets.

All functions are pure and operate on rank-3 numpy arrays (or
:class:`~volsynth.volume.Volume`); computation runs in float64.  The
windowed similarity metrics use Gaussian-weighted local moments over the
interior (valid) window positions, which is what the direct-summation
oracles in the test suite reproduce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .volume import Volume

__all__ = [
    "SsimParams",
    "MetricReport",
    "PAPER_PARITY_PEAK",
    "mae",
    "psnr",
    "mse",
    "ssim_parts",
    "ssim",
    "ms_ssim",
    "effective_scale_count",
    "frechet_distance",
    "fid",
    "difference_map",
    "IdentityEmbedder",
    "evaluate_sets",
]

# Peak value used by the parity PSNR mode (numerator 20^2).
PAPER_PARITY_PEAK = 20.0

# Five-scale weights of the standard multi-scale similarity construction,
# truncated and renormalized when fewer scales fit the volume.
_FIVE_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _as_array(v) -> np.ndarray:
    data = v.data if isinstance(v, Volume) else np.asarray(v)
    return np.asarray(data, dtype=np.float64)


def _check_same_shape(r: np.ndarray, s: np.ndarray) -> None:
    if r.shape != s.shape:
        raise ValueError(f"volume shapes differ: {r.shape} vs {s.shape}")


@dataclass(frozen=True)
class SsimParams:
    """Windowed-similarity parameters.

    ``c1`` and ``c2`` default to ``(k1 * data_range)^2`` and
    ``(k2 * data_range)^2``; pass explicit values to override.
    ``scale_weights`` must have ``scales`` entries summing to 1; ``None``
    selects the standard five-scale weights truncated to ``scales``.
    """

    window: int = 11
    sigma: float = 1.5
    data_range: float = 2.0
    k1: float = 0.01
    k2: float = 0.03
    c1: float | None = None
    c2: float | None = None
    scales: int = 5
    scale_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"window must be odd and positive, got {self.window}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.data_range <= 0:
            raise ValueError(f"data_range must be positive, got {self.data_range}")
        if self.scales < 1:
            raise ValueError(f"scales must be >= 1, got {self.scales}")
        if self.scale_weights is not None:
            w = tuple(float(x) for x in self.scale_weights)
            if len(w) != self.scales:
                raise ValueError(
                    f"scale_weights needs {self.scales} entries, got {len(w)}"
                )
            if abs(sum(w) - 1.0) > 1e-8:
                raise ValueError(f"scale_weights must sum to 1, got sum {sum(w)}")
            object.__setattr__(self, "scale_weights", w)

    @property
    def c1_value(self) -> float:
        return self.c1 if self.c1 is not None else (self.k1 * self.data_range) ** 2

    @property
    def c2_value(self) -> float:
        return self.c2 if self.c2 is not None else (self.k2 * self.data_range) ** 2

    def weights(self, scales: int | None = None) -> tuple[float, ...]:
        """Scale weights truncated to ``scales`` and renormalized to sum 1."""
        m = self.scales if scales is None else scales
        base = self.scale_weights
        if base is None:
            base = _FIVE_SCALE_WEIGHTS
            if m > len(base):
                raise ValueError(
                    f"no default weights for {m} scales (max {len(base)})"
                )
        w = np.asarray(base[:m], dtype=np.float64)
        return tuple(w / w.sum())


def mae(r, s) -> float:
    """Mean absolute voxel difference on the intensity scale supplied."""
    r, s = _as_array(r), _as_array(s)
    _check_same_shape(r, s)
    return float(np.mean(np.abs(r - s)))


def mse(r, s) -> float:
    r, s = _as_array(r), _as_array(s)
    _check_same_shape(r, s)
    return float(np.mean((r - s) ** 2))


def psnr(r, s, peak: float = PAPER_PARITY_PEAK) -> float:
    """``10 log10(peak^2 / MSE)``; returns ``math.inf`` for identical inputs.

    ``peak`` defaults to the parity value 20; pass the reference volume's
    dynamic range for a data-relative figure.
    """
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    err = mse(r, s)
    if err == 0.0:
        return math.inf
    return float(10.0 * math.log10(peak * peak / err))


def _gaussian_kernel(window: int, sigma: float) -> np.ndarray:
    coords = np.arange(window, dtype=np.float64) - window // 2
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _local_mean(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Gaussian-windowed local means over valid (interior) positions."""
    out = x
    for axis in range(x.ndim):
        out = correlate1d(out, kernel, axis=axis, mode="constant", cval=0.0)
    r = len(kernel) // 2
    sl = tuple(slice(r, n - r) for n in x.shape)
    return out[sl]


def ssim_parts(x, y, params: SsimParams = SsimParams()) -> tuple[np.ndarray, np.ndarray]:
    """Per-position luminance (l) and contrast-structure (cs) fields."""
    x, y = _as_array(x), _as_array(y)
    _check_same_shape(x, y)
    if min(x.shape) < params.window:
        raise ValueError(
            f"window {params.window} does not fit volume of shape {x.shape}"
        )
    g = _gaussian_kernel(params.window, params.sigma)
    mu_x = _local_mean(x, g)
    mu_y = _local_mean(y, g)
    sxx = _local_mean(x * x, g) - mu_x * mu_x
    syy = _local_mean(y * y, g) - mu_y * mu_y
    sxy = _local_mean(x * y, g) - mu_x * mu_y
    c1, c2 = params.c1_value, params.c2_value
    l = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    cs = (2.0 * sxy + c2) / (sxx + syy + c2)
    return l, cs


def ssim(x, y, params: SsimParams = SsimParams()) -> float:
    """Plain single-scale similarity: mean of l*cs over valid positions."""
    l, cs = ssim_parts(x, y, params)
    return float(np.mean(l * cs))


def _downsample2(x: np.ndarray) -> np.ndarray:
    """2x average pooling per axis, cropping odd tails first."""
    sl = tuple(slice(0, n - (n % 2)) for n in x.shape)
    x = x[sl]
    for axis in range(x.ndim):
        shape = x.shape[:axis] + (x.shape[axis] // 2, 2) + x.shape[axis + 1 :]
        x = x.reshape(shape).mean(axis=axis + 1)
    return x


def effective_scale_count(shape: Sequence[int], params: SsimParams) -> int:
    """Largest scale count <= params.scales whose coarsest level fits the window."""
    m = 0
    dims = list(shape)
    while m < params.scales and min(dims) >= params.window:
        m += 1
        dims = [d // 2 for d in dims]
    if m == 0:
        raise ValueError(
            f"volume of shape {tuple(shape)} is too small for window {params.window}"
        )
    return m


def ms_ssim(x, y, params: SsimParams = SsimParams()) -> float:
    """Multi-scale similarity.

    Scales are linked by 2x average pooling.  Scales 1..M-1 contribute the
    mean of their cs field; the coarsest scale contributes the mean of
    l*cs.  The factors combine as a weighted geometric mean with the
    (renormalized) scale weights.  When only one scale fits, the value is
    exactly the plain single-scale similarity, sign included; with several
    scales, negative factors clamp to zero before the fractional powers.
    """
    x, y = _as_array(x), _as_array(y)
    _check_same_shape(x, y)
    m = effective_scale_count(x.shape, params)
    weights = params.weights(m)

    factors = []
    for j in range(1, m + 1):
        l, cs = ssim_parts(x, y, params)
        if j < m:
            factors.append(float(np.mean(cs)))
            x, y = _downsample2(x), _downsample2(y)
        else:
            factors.append(float(np.mean(l * cs)))

    if m == 1:
        return factors[0]
    result = 1.0
    for value, weight in zip(factors, weights):
        result *= max(value, 0.0) ** weight
    return float(result)


def _sqrtm_psd(c: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition (negatives clamped)."""
    w, v = np.linalg.eigh(c)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(mu_r, cov_r, mu_g, cov_g) -> float:
    """Closed-form Gaussian Fréchet distance from exact moments.

    ``|mu_r - mu_g|^2 + Tr(C_r + C_g - 2 (C_r C_g)^{1/2})`` with the matrix
    square root taken on the symmetrized product ``sqrt(C_r) C_g sqrt(C_r)``.
    """
    mu_r = np.atleast_1d(np.asarray(mu_r, dtype=np.float64))
    mu_g = np.atleast_1d(np.asarray(mu_g, dtype=np.float64))
    cov_r = np.atleast_2d(np.asarray(cov_r, dtype=np.float64))
    cov_g = np.atleast_2d(np.asarray(cov_g, dtype=np.float64))
    diff = mu_r - mu_g
    root = _sqrtm_psd(cov_r)
    inner = root @ cov_g @ root
    eigvals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    tr_sqrt = float(np.sum(np.sqrt(eigvals)))
    return float(diff @ diff + np.trace(cov_r) + np.trace(cov_g) - 2.0 * tr_sqrt)


class VolumeEmbedder(Protocol):
    """Maps a list of volumes to an (n, features) matrix."""

    def embed(self, volumes: Sequence) -> np.ndarray: ...


class IdentityEmbedder:
    """Strided raw-voxel features; the bypass mode for oracle tests."""

    def __init__(self, max_features: int = 64):
        self.max_features = max_features

    def embed(self, volumes: Sequence) -> np.ndarray:
        rows = []
        for v in volumes:
            flat = _as_array(v).ravel()
            stride = max(1, len(flat) // self.max_features)
            rows.append(flat[::stride][: self.max_features])
        return np.stack(rows, axis=0)


def fid(real_set: Sequence, fake_set: Sequence, embedder: VolumeEmbedder, eps: float = 1e-6) -> float:
    """Fréchet distance between Gaussian fits of embedded volume sets.

    Empirical covariances are regularized by ``+eps * I``.  Requires at
    least two volumes per set.
    """
    if len(real_set) < 2 or len(fake_set) < 2:
        raise ValueError("fid requires at least 2 volumes per set")
    feats_r = np.asarray(embedder.embed(real_set), dtype=np.float64)
    feats_g = np.asarray(embedder.embed(fake_set), dtype=np.float64)
    mu_r, mu_g = feats_r.mean(axis=0), feats_g.mean(axis=0)
    dim = feats_r.shape[1]
    cov_r = np.atleast_2d(np.cov(feats_r, rowvar=False)) + eps * np.eye(dim)
    cov_g = np.atleast_2d(np.cov(feats_g, rowvar=False)) + eps * np.eye(dim)
    return max(0.0, frechet_distance(mu_r, cov_r, mu_g, cov_g))


def difference_map(r: Volume, s: Volume) -> Volume:
    """Voxelwise absolute intensity difference as a volume."""
    rd, sd = _as_array(r), _as_array(s)
    _check_same_shape(rd, sd)
    spacing = r.spacing if isinstance(r, Volume) else (1.0, 1.0, 1.0)
    return Volume(np.abs(rd - sd).astype(np.float32), spacing)


@dataclass
class MetricReport:
    """Aggregated metric results over a set of (real, synthetic) pairs."""

    mae: float
    psnr: float
    ms_ssim: float
    fid: float
    per_sample: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _mean_std(values: list[float]) -> dict:
    """Mean and sample std; the infinite-PSNR sentinel propagates as inf."""
    arr = np.asarray(values, dtype=np.float64)
    finite = arr[np.isfinite(arr)]
    mean = float(arr.mean()) if len(finite) == len(arr) else math.inf
    std = float(finite.std(ddof=1)) if len(finite) > 1 else 0.0
    return {"mean": mean, "std": std}


def evaluate_sets(
    reals: Sequence[Volume],
    fakes: Sequence[Volume],
    params: SsimParams,
    embedder: VolumeEmbedder,
    sample_ids: Sequence[str] | None = None,
    scale_mode: str = "normalized",
) -> MetricReport:
    """Compute the full metric suite over aligned real/synthetic volume sets.

    ``scale_mode="parity"`` first maps intensities affinely from [-1, 1] to
    [0, 20] so pixel metrics live on the scale implied by the parity PSNR
    peak; ``"normalized"`` evaluates the volumes as supplied.
    """
    if len(reals) != len(fakes) or not reals:
        raise ValueError("need equally many real and synthetic volumes, at least one each")
    if scale_mode not in ("normalized", "parity"):
        raise ValueError(f"unknown scale_mode {scale_mode!r}")
    if sample_ids is None:
        sample_ids = [f"pair{i:04d}" for i in range(len(reals))]

    def to_scale(v):
        arr = _as_array(v)
        return (arr + 1.0) * (PAPER_PARITY_PEAK / 2.0) if scale_mode == "parity" else arr

    if scale_mode == "parity":
        params = SsimParams(
            window=params.window,
            sigma=params.sigma,
            data_range=PAPER_PARITY_PEAK,
            k1=params.k1,
            k2=params.k2,
            scales=params.scales,
            scale_weights=params.scale_weights,
        )

    per_sample = []
    for sid, real, fake in zip(sample_ids, reals, fakes):
        r, s = to_scale(real), to_scale(fake)
        rng_peak = float(r.max() - r.min())
        per_sample.append(
            {
                "sample_id": sid,
                "mae": mae(r, s),
                "psnr": psnr(r, s, PAPER_PARITY_PEAK),
                "psnr_range": psnr(r, s, rng_peak) if rng_peak > 0 else math.inf,
                "ssim": ssim(r, s, params),
                "ms_ssim": ms_ssim(r, s, params),
            }
        )

    fid_value = fid([to_scale(v) for v in reals], [to_scale(v) for v in fakes], embedder)
    summary = {
        key: _mean_std([row[key] for row in per_sample])
        for key in ("mae", "psnr", "psnr_range", "ssim", "ms_ssim")
    }
    summary["fid"] = {"mean": fid_value, "std": 0.0}
    return MetricReport(
        mae=summary["mae"]["mean"],
        psnr=summary["psnr"]["mean"],
        ms_ssim=summary["ms_ssim"]["mean"],
        fid=fid_value,
        per_sample=per_sample,
        config={
            "window": params.window,
            "sigma": params.sigma,
            "data_range": params.data_range,
            "scales_requested": params.scales,
            "scales_used": effective_scale_count(reals[0].shape, params),
            "scale_mode": scale_mode,
        },
        summary=summary,
    )

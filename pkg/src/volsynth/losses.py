"""Objective terms: least-squares adversarial, KL, pixel, and perceptual.

All losses are pure functions of tensors and stay differentiable.  The
perceptual term compares activations of a fixed, seeded convolutional
feature extractor applied to axial slices; the same extractor doubles as
the feature embedding behind the distributional metric, and any module
with the same call signature can be plugged in instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .seeds import derive_seed
from .volume import Volume

__all__ = [
    "LossWeights",
    "FeatureExtractor",
    "d_loss",
    "g_adv_loss",
    "kl_standard_normal",
    "l1_loss",
    "perceptual_loss",
    "g_total_loss",
    "DEFAULT_FEATURE_SEED",
]

# Fixed default so feature-based scores stay comparable across runs.
DEFAULT_FEATURE_SEED = 101


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the generator objective terms."""

    lambda1: float = 100.0
    lambda2: float = 10.0
    kl_weight: float = 1.0
    latent_recovery_weight: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "kl_weight", "latent_recovery_weight"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


class FeatureExtractor(nn.Module):
    """Fixed (non-trainable) 2D convolutional feature extractor.

    Two conv stages with the tap point right before the second pooling:
    conv-relu, conv-relu, pool, conv-relu, conv-relu -> features.  Weights
    are drawn once from a seeded generator and frozen, so the extractor is
    a pure deterministic function of its seed.

    The random 5x5 kernels are Gaussian-smoothed (band-limited) and the
    first pooling averages over 4x4; both were calibrated so the feature
    distance forgives one-pixel misalignment more than the raw voxel
    distance does, which is the role this loss plays.
    """

    KERNEL = 5
    KERNEL_SMOOTHING = 1.2
    POOL = 4

    def __init__(self, channels: tuple[int, int] = (8, 16), seed: int = DEFAULT_FEATURE_SEED):
        super().__init__()
        from scipy.ndimage import gaussian_filter

        c1, c2 = channels
        k, pad = self.KERNEL, self.KERNEL // 2
        self.seed = int(seed)
        self.stage1 = nn.Sequential(
            nn.Conv2d(1, c1, k, padding=pad), nn.ReLU(),
            nn.Conv2d(c1, c1, k, padding=pad), nn.ReLU(),
        )
        self.pool = nn.AvgPool2d(self.POOL)
        self.stage2 = nn.Sequential(
            nn.Conv2d(c1, c2, k, padding=pad), nn.ReLU(),
            nn.Conv2d(c2, c2, k, padding=pad), nn.ReLU(),
        )
        gen = torch.Generator().manual_seed(derive_seed(self.seed, "feature-extractor"))
        with torch.no_grad():
            for m in self.modules():
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
                    m.weight.normal_(0.0, (2.0 / fan_in) ** 0.5, generator=gen)
                    m.bias.zero_()
                    raw_std = m.weight.std().item()
                    smoothed = gaussian_filter(
                        m.weight.numpy(), sigma=(0, 0, self.KERNEL_SMOOTHING, self.KERNEL_SMOOTHING)
                    )
                    m.weight.copy_(
                        torch.from_numpy(smoothed * (raw_std / smoothed.std()))
                    )
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, slices: torch.Tensor) -> torch.Tensor:
        """Feature maps for a batch of single-channel 2D slices."""
        return self.stage2(self.pool(self.stage1(slices)))

    def features(self, volumes: torch.Tensor) -> torch.Tensor:
        """Slice-wise features: accepts (B,1,H,W) slices or (B,1,D,H,W) volumes."""
        if volumes.ndim == 4:
            return self(volumes)
        if volumes.ndim != 5 or volumes.shape[1] != 1:
            raise ValueError(f"expected (B,1,D,H,W) or (B,1,H,W), got {tuple(volumes.shape)}")
        b, _, d, h, w = volumes.shape
        slices = volumes.permute(0, 2, 1, 3, 4).reshape(b * d, 1, h, w)
        return self(slices)

    @torch.no_grad()
    def embed(self, volumes) -> np.ndarray:
        """Fixed-length vector per volume: channel-wise global average pooling."""
        rows = []
        for v in volumes:
            data = v.data if isinstance(v, Volume) else np.asarray(v)
            t = torch.as_tensor(np.asarray(data, dtype=np.float32))[None, None]
            feats = self.features(t)
            rows.append(feats.mean(dim=(0, 2, 3)).numpy())
        return np.stack(rows, axis=0).astype(np.float64)


def _check_scores(scores: torch.Tensor, name: str) -> None:
    if scores.numel() == 0:
        raise ValueError(f"{name} score grid is empty")


def d_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator objective: E[fake^2] + E[(real - 1)^2]."""
    _check_scores(real_scores, "real")
    _check_scores(fake_scores, "fake")
    return torch.mean(fake_scores**2) + torch.mean((real_scores - 1.0) ** 2)


def g_adv_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    """Least-squares generator objective: E[(fake - 1)^2]."""
    _check_scores(fake_scores, "fake")
    return torch.mean((fake_scores - 1.0) ** 2)


def kl_standard_normal(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, diag exp(logvar)) || N(0, I)), averaged over the batch."""
    if mu.shape != logvar.shape:
        raise ValueError(f"mu/logvar shapes differ: {tuple(mu.shape)} vs {tuple(logvar.shape)}")
    if not (torch.isfinite(mu).all() and torch.isfinite(logvar).all()):
        raise ValueError("mu and logvar must be finite")
    per_sample = 0.5 * torch.sum(mu**2 + torch.exp(logvar) - logvar - 1.0, dim=-1)
    return per_sample.mean()


def l1_loss(y_real: torch.Tensor, y_fake: torch.Tensor) -> torch.Tensor:
    """Mean absolute voxel difference."""
    if y_real.shape != y_fake.shape:
        raise ValueError(f"shapes differ: {tuple(y_real.shape)} vs {tuple(y_fake.shape)}")
    return torch.mean(torch.abs(y_real - y_fake))


def perceptual_loss(
    y_real: torch.Tensor, y_fake: torch.Tensor, extractor: FeatureExtractor
) -> torch.Tensor:
    """Mean absolute difference in extractor feature space, slice-averaged."""
    if y_real.shape != y_fake.shape:
        raise ValueError(f"shapes differ: {tuple(y_real.shape)} vs {tuple(y_fake.shape)}")
    return torch.mean(torch.abs(extractor.features(y_real) - extractor.features(y_fake)))


def g_total_loss(adv, l1, perc, w: LossWeights):
    """Aggregate generator objective: adv + lambda1 * l1 + lambda2 * perc."""
    return adv + w.lambda1 * l1 + w.lambda2 * perc

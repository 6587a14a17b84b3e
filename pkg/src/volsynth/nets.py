"""The three networks: translation generator, patch discriminator, encoder.

The generator is a U-shaped encoder-decoder whose per-resolution blocks are
densely connected convolutions (variants swap in residual or plain blocks).
The latent vector is spatially broadcast and channel-concatenated to the
input volume.  The discriminator scores overlapping patches through a
stack of stride-2 stages; the encoder is a residual stack with Gaussian
(mu, logvar) heads.  Everything is dimension-parametric (2D or 3D) so the
slice-based ablation reuses the same code.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .container import load_container, save_container
from .seeds import derive_seed

__all__ = [
    "GeneratorConfig",
    "DiscriminatorConfig",
    "EncoderConfig",
    "NetParams",
    "Generator",
    "Discriminator",
    "Encoder",
    "DenseBlock",
    "ResidualBlock",
    "PlainBlock",
    "init_params",
    "reparameterize",
    "PAPER_GENERATOR",
    "PAPER_DISCRIMINATOR",
    "PAPER_ENCODER",
]

_CONV = {2: nn.Conv2d, 3: nn.Conv3d}
_CONV_T = {2: nn.ConvTranspose2d, 3: nn.ConvTranspose3d}
_POOL = {2: nn.MaxPool2d, 3: nn.MaxPool3d}
_NORM = {2: nn.InstanceNorm2d, 3: nn.InstanceNorm3d}


@dataclass(frozen=True)
class GeneratorConfig:
    """Generator hyperparameters.

    ``depth`` counts resolution halvings.  With ``extra_plain_stage`` the
    outermost halving carries no block (plain transition down, plain
    upsample back), which is how the full-scale preset reaches 13 blocks
    with 7 transition and 7 upsampling layers.
    """

    depth: int = 3
    base_channels: int = 8
    growth_rate: int = 8
    layers_per_block: int = 2
    variant: str = "dense"
    latent_dim: int = 8
    norm: str = "instance"
    negative_slope: float = 0.2
    extra_plain_stage: bool = True
    dims: int = 3
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.extra_plain_stage and self.depth < 2:
            raise ValueError("extra_plain_stage requires depth >= 2")
        if self.layers_per_block < 1:
            raise ValueError(f"layers_per_block must be >= 1, got {self.layers_per_block}")
        if self.growth_rate < 1:
            raise ValueError(f"growth_rate must be >= 1, got {self.growth_rate}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.variant not in ("dense", "residual", "plain"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.norm not in ("instance", "none"):
            raise ValueError(f"unknown norm {self.norm!r}")
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")

    @property
    def block_levels(self) -> int:
        return self.depth - 1 if self.extra_plain_stage else self.depth


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Patch discriminator hyperparameters (kernel fixed at 3)."""

    patch_size: int = 32
    channel_schedule: tuple[int, ...] = (8, 16, 32, 64)
    kernel: int = 3
    condition_on_source: bool = False
    norm: str = "instance"
    dims: int = 3
    in_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "channel_schedule", tuple(self.channel_schedule))
        if not self.channel_schedule:
            raise ValueError("channel_schedule must be nonempty")
        if any(b <= a for a, b in zip(self.channel_schedule, self.channel_schedule[1:])):
            raise ValueError(f"channel_schedule must be strictly increasing, got {self.channel_schedule}")
        if self.kernel != 3:
            raise ValueError(f"kernel is fixed at 3, got {self.kernel}")
        if self.patch_size < 1:
            raise ValueError(f"patch_size must be positive, got {self.patch_size}")
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")


@dataclass(frozen=True)
class EncoderConfig:
    """Residual encoder hyperparameters (blocks per stage, doubling widths)."""

    block_schedule: tuple[int, ...] = (1, 1, 1, 1)
    base_channels: int = 8
    latent_dim: int = 8
    norm: str = "instance"
    dims: int = 3
    in_channels: int = 1

    def __post_init__(self):
        object.__setattr__(self, "block_schedule", tuple(self.block_schedule))
        if not self.block_schedule or any(b < 1 for b in self.block_schedule):
            raise ValueError(f"block_schedule must be nonempty positive ints, got {self.block_schedule}")
        if self.latent_dim < 1:
            raise ValueError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.dims not in (2, 3):
            raise ValueError(f"dims must be 2 or 3, got {self.dims}")


PAPER_GENERATOR = GeneratorConfig(
    depth=7, base_channels=32, growth_rate=16, latent_dim=16, extra_plain_stage=True
)
PAPER_DISCRIMINATOR = DiscriminatorConfig(patch_size=32, channel_schedule=(32, 64, 128, 256))
PAPER_ENCODER = EncoderConfig(block_schedule=(3, 4, 6, 3), base_channels=32, latent_dim=16)


def _make_norm(norm: str, dims: int, channels: int) -> nn.Module:
    if norm == "instance":
        return _NORM[dims](channels, affine=True)
    return nn.Identity()


class _ConvUnit(nn.Module):
    """conv(3) -> norm -> LeakyReLU, spatial size preserved."""

    def __init__(self, in_ch, out_ch, dims, norm, slope):
        super().__init__()
        self.conv = _CONV[dims](in_ch, out_ch, 3, padding=1)
        self.norm = _make_norm(norm, dims, out_ch)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class DenseBlock(nn.Module):
    """Densely connected block: layer l sees the concatenation of the block
    input and every earlier layer output; the block output concatenates all
    of them, adding layers * growth channels."""

    def __init__(self, in_ch, growth, layers, dims=3, norm="instance", slope=0.2):
        super().__init__()
        if layers < 1 or growth < 1:
            raise ValueError(f"need layers >= 1 and growth >= 1, got {layers}, {growth}")
        self.in_channels = in_ch
        self.layers = nn.ModuleList(
            _ConvUnit(in_ch + i * growth, growth, dims, norm, slope) for i in range(layers)
        )
        self.out_channels = in_ch + layers * growth

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channels, got {x.shape[1]}")
        feats = [x]
        for layer in self.layers:
            feats.append(layer(torch.cat(feats, dim=1)))
        return torch.cat(feats, dim=1)


class ResidualBlock(nn.Module):
    """Two-convolution residual block growing to in + layers * growth channels."""

    def __init__(self, in_ch, growth, layers, dims=3, norm="instance", slope=0.2):
        super().__init__()
        out_ch = in_ch + layers * growth
        self.in_channels = in_ch
        self.out_channels = out_ch
        self.conv1 = _CONV[dims](in_ch, out_ch, 3, padding=1)
        self.norm1 = _make_norm(norm, dims, out_ch)
        self.conv2 = _CONV[dims](out_ch, out_ch, 3, padding=1)
        self.norm2 = _make_norm(norm, dims, out_ch)
        self.project = _CONV[dims](in_ch, out_ch, 1)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + self.project(x))


class PlainBlock(nn.Module):
    """Two plain convolutions growing to in + layers * growth channels."""

    def __init__(self, in_ch, growth, layers, dims=3, norm="instance", slope=0.2):
        super().__init__()
        out_ch = in_ch + layers * growth
        self.in_channels = in_ch
        self.out_channels = out_ch
        self.unit1 = _ConvUnit(in_ch, out_ch, dims, norm, slope)
        self.unit2 = _ConvUnit(out_ch, out_ch, dims, norm, slope)

    def forward(self, x):
        return self.unit2(self.unit1(x))


_BLOCKS = {"dense": DenseBlock, "residual": ResidualBlock, "plain": PlainBlock}


class TransitionDown(nn.Module):
    """1x1 convolution (channel-preserving) followed by 2x max pooling."""

    def __init__(self, channels, dims=3):
        super().__init__()
        self.conv = _CONV[dims](channels, channels, 1)
        self.pool = _POOL[dims](2)

    def forward(self, x):
        return self.pool(self.conv(x))


class Generator(nn.Module):
    """U-shaped translation generator with latent concatenation at the input."""

    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        block_cls = _BLOCKS[cfg.variant]
        dims, norm, slope = cfg.dims, cfg.norm, cfg.negative_slope

        self.stem = _ConvUnit(cfg.in_channels + cfg.latent_dim, cfg.base_channels, dims, norm, slope)
        self.down_blocks = nn.ModuleList()
        self.transitions = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        self.up_blocks = nn.ModuleList()

        ch = cfg.base_channels
        if cfg.extra_plain_stage:
            self.transitions.append(TransitionDown(ch, dims))

        skip_channels = []
        for _ in range(cfg.block_levels):
            block = block_cls(ch, cfg.growth_rate, cfg.layers_per_block, dims, norm, slope)
            self.down_blocks.append(block)
            skip_channels.append(block.out_channels)
            self.transitions.append(TransitionDown(block.out_channels, dims))
            ch = block.out_channels

        self.bottleneck = block_cls(ch, cfg.growth_rate, cfg.layers_per_block, dims, norm, slope)
        ch = self.bottleneck.out_channels

        for skip_ch in reversed(skip_channels):
            self.upsamples.append(_CONV_T[dims](ch, skip_ch, 2, stride=2))
            block = block_cls(2 * skip_ch, cfg.growth_rate, cfg.layers_per_block, dims, norm, slope)
            self.up_blocks.append(block)
            ch = block.out_channels

        if cfg.extra_plain_stage:
            self.upsamples.append(_CONV_T[dims](ch, cfg.base_channels, 2, stride=2))
            ch = 2 * cfg.base_channels  # concatenated with the stem skip

        # Output stage: 1x1 convolution without normalization, then Tanh.
        self.head = _CONV[dims](ch, cfg.out_channels, 1)
        self.tanh = nn.Tanh()

    def _check_input(self, x: torch.Tensor, z: torch.Tensor) -> None:
        cfg = self.cfg
        if x.ndim != cfg.dims + 2:
            raise ValueError(f"expected {cfg.dims + 2}-d input, got shape {tuple(x.shape)}")
        if x.shape[1] != cfg.in_channels:
            raise ValueError(f"expected {cfg.in_channels} input channels, got {x.shape[1]}")
        divisor = 2**cfg.depth
        for extent in x.shape[2:]:
            if extent % divisor != 0 or extent < divisor:
                raise ValueError(
                    f"spatial extent {tuple(x.shape[2:])} must be divisible by 2^{cfg.depth} = {divisor}"
                )
        if z.ndim != 2 or z.shape[0] != x.shape[0] or z.shape[1] != cfg.latent_dim:
            raise ValueError(
                f"latent batch must be ({x.shape[0]}, {cfg.latent_dim}), got {tuple(z.shape)}"
            )

    def forward(self, x: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        self._check_input(x, z)
        cfg = self.cfg
        zmap = z.view(*z.shape, *([1] * cfg.dims)).expand(*z.shape, *x.shape[2:])
        h = self.stem(torch.cat([x, zmap], dim=1))

        stem_skip = h
        transitions = list(self.transitions)
        if cfg.extra_plain_stage:
            h = transitions.pop(0)(h)

        skips = []
        for block, transition in zip(self.down_blocks, transitions):
            h = block(h)
            skips.append(h)
            h = transition(h)

        h = self.bottleneck(h)

        upsamples = list(self.upsamples)
        for block, skip in zip(self.up_blocks, reversed(skips)):
            h = upsamples.pop(0)(h)
            h = block(torch.cat([h, skip], dim=1))

        if cfg.extra_plain_stage:
            h = upsamples.pop(0)(h)
            h = torch.cat([h, stem_skip], dim=1)

        return self.tanh(self.head(h))


class Discriminator(nn.Module):
    """Patch-level real/fake scorer: stride-2 stages, sigmoid score grid."""

    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        dims = cfg.dims
        in_ch = cfg.in_channels * (2 if cfg.condition_on_source else 1)
        stages = []
        for i, ch in enumerate(cfg.channel_schedule):
            stage = [_CONV[dims](in_ch, ch, 3, padding=1)]
            if i > 0:
                stage.append(_make_norm(cfg.norm, dims, ch))
            stage += [nn.ReLU(), _POOL[dims](2)]
            stages.append(nn.Sequential(*stage))
            in_ch = ch
        self.stages = nn.ModuleList(stages)
        self.head = _CONV[dims](in_ch, 1, 3, padding=1)
        self.sigmoid = nn.Sigmoid()

    def forward(self, v: torch.Tensor, source: torch.Tensor | None = None) -> torch.Tensor:
        cfg = self.cfg
        if cfg.condition_on_source:
            if source is None:
                raise ValueError("this discriminator conditions on the source volume")
            v = torch.cat([v, source], dim=1)
        elif source is not None:
            raise ValueError("this discriminator does not take a source volume")
        min_extent = 2 ** len(cfg.channel_schedule)
        if min(v.shape[2:]) < min_extent:
            raise ValueError(
                f"input extent {tuple(v.shape[2:])} below receptive field (needs >= {min_extent})"
            )
        h = v
        for stage in self.stages:
            h = stage(h)
        return self.sigmoid(self.head(h))


class _EncoderResBlock(nn.Module):
    """Width-preserving two-convolution residual block (identity shortcut)."""

    def __init__(self, channels, dims, norm):
        super().__init__()
        self.conv1 = _CONV[dims](channels, channels, 3, padding=1)
        self.norm1 = _make_norm(norm, dims, channels)
        self.conv2 = _CONV[dims](channels, channels, 3, padding=1)
        self.norm2 = _make_norm(norm, dims, channels)
        self.act = nn.ReLU()

    def forward(self, x):
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(h + x)


class Encoder(nn.Module):
    """Residual encoder producing Gaussian code parameters (mu, logvar)."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        dims, norm = cfg.dims, cfg.norm
        width = cfg.base_channels
        self.stem = nn.Sequential(
            _CONV[dims](cfg.in_channels, width, 3, padding=1),
            _make_norm(norm, dims, width),
            nn.ReLU(),
        )
        stages = []
        in_w = width
        for i, n_blocks in enumerate(cfg.block_schedule):
            out_w = width * 2**i
            layers = [
                _CONV[dims](in_w, out_w, 3, stride=2, padding=1),
                _make_norm(norm, dims, out_w),
                nn.ReLU(),
            ]
            layers += [_EncoderResBlock(out_w, dims, norm) for _ in range(n_blocks)]
            stages.append(nn.Sequential(*layers))
            in_w = out_w
        self.stages = nn.ModuleList(stages)
        self.mu_head = nn.Linear(in_w, cfg.latent_dim)
        self.logvar_head = nn.Linear(in_w, cfg.latent_dim)

    def forward(self, y: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        cfg = self.cfg
        if y.ndim != cfg.dims + 2:
            raise ValueError(f"expected {cfg.dims + 2}-d input, got shape {tuple(y.shape)}")
        min_extent = 2 ** len(cfg.block_schedule)
        if min(y.shape[2:]) < min_extent:
            raise ValueError(
                f"input extent {tuple(y.shape[2:])} too small for {len(cfg.block_schedule)} stages"
            )
        h = self.stem(y)
        for stage in self.stages:
            h = stage(h)
        h = h.mean(dim=tuple(range(2, h.ndim)))
        return self.mu_head(h), self.logvar_head(h)


def init_params(module: nn.Module, seed: int) -> nn.Module:
    """Deterministic init: conv/linear weights ~ N(0, 0.02^2), norm gain 1, biases 0."""
    gen = torch.Generator().manual_seed(derive_seed(seed, "init"))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(
                m,
                (nn.Conv2d, nn.Conv3d, nn.ConvTranspose2d, nn.ConvTranspose3d, nn.Linear),
            ):
                m.weight.normal_(0.0, 0.02, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, (nn.InstanceNorm2d, nn.InstanceNorm3d)) and m.affine:
                m.weight.fill_(1.0)
                m.bias.zero_()
    return module


def reparameterize(
    mu: torch.Tensor, logvar: torch.Tensor, generator: torch.Generator | None = None
) -> torch.Tensor:
    """Differentiable Gaussian sampling: z = mu + exp(logvar / 2) * eps."""
    if mu.shape != logvar.shape:
        raise ValueError(f"mu/logvar shapes differ: {tuple(mu.shape)} vs {tuple(logvar.shape)}")
    eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
    return mu + torch.exp(0.5 * logvar) * eps


@dataclass
class NetParams:
    """Snapshot of a network's named parameter arrays plus its init seed."""

    arrays: "OrderedDict[str, np.ndarray]"
    seed: int

    def __post_init__(self):
        for name, arr in self.arrays.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter array {name!r} contains non-finite values")

    @classmethod
    def from_module(cls, module: nn.Module, seed: int) -> "NetParams":
        arrays = OrderedDict(
            (name, tensor.detach().cpu().numpy().copy())
            for name, tensor in module.state_dict().items()
        )
        return cls(arrays=arrays, seed=int(seed))

    def load_into(self, module: nn.Module) -> nn.Module:
        state = {name: torch.as_tensor(arr) for name, arr in self.arrays.items()}
        module.load_state_dict(state)
        return module

    def save(self, path, config_doc: dict | None = None) -> None:
        save_container(path, {"seed": self.seed, "config": config_doc or {}}, dict(self.arrays))

    @classmethod
    def load(cls, path) -> tuple["NetParams", dict]:
        meta, arrays = load_container(path)
        return cls(arrays=OrderedDict(arrays), seed=int(meta["seed"])), meta.get("config", {})

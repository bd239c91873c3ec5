"""The two asymmetric restoration branches.

``MambaUNet`` is the high-frequency branch: a U-Net whose stages are stacks
of selective-scan blocks, downsampling with Haar wavelet downsampling and
upsampling bilinearly with concatenated skips. ``DualEnhancementNet`` is the
low-frequency branch: it corrects the Fourier amplitude spectrum additively
while leaving the phase untouched, cascading three such stages with
convolutional groups and a fusion layer.

Plain convolutional counterparts (``ConvUNet``, ``ConvBlockNet``) back the
ablation variants that swap out the specialized branches.
"""

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .ssm import MambaBlock
from .wavelet import HaarDownsample


class Spectrum(NamedTuple):
    """Half-plane real-FFT spectrum split into amplitude and phase."""

    amplitude: torch.Tensor
    phase: torch.Tensor


def amplitude_phase_split(x: torch.Tensor) -> Spectrum:
    """Amplitude/phase of the 2D real FFT over the trailing two dims."""
    z = torch.fft.rfft2(x)
    return Spectrum(amplitude=z.abs(), phase=z.angle())


def recombine(spectrum: Spectrum, spatial_size: tuple[int, int]) -> torch.Tensor:
    """Inverse transform of amplitude * exp(j phase), back to spatial_size."""
    z = torch.polar(spectrum.amplitude, spectrum.phase)
    return torch.fft.irfft2(z, s=spatial_size)


class DenStage(nn.Module):
    """One amplitude-enhancement stage.

    The amplitude spectrum gets an additive learned residual and is clamped
    non-negative, so the recombined signal keeps the input phase at every
    bin with surviving amplitude. Zeroing the residual map makes the stage
    an identity up to transform round-off.
    """

    def __init__(self, channels: int, width: int = 16):
        super().__init__()
        self.g = nn.Sequential(
            nn.Conv2d(channels, width, kernel_size=3, padding=1),
            nn.GELU(),
            nn.Conv2d(width, channels, kernel_size=3, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        amp, phase = amplitude_phase_split(x)
        enhanced = torch.relu(amp + self.g(amp))
        return recombine(Spectrum(enhanced, phase), x.shape[-2:])

    def zero_enhancement(self) -> None:
        with torch.no_grad():
            for m in self.g:
                if isinstance(m, nn.Conv2d):
                    m.weight.zero_()
                    m.bias.zero_()


class _ResidualConvGroup(nn.Module):
    def __init__(self, channels: int, width: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, width, kernel_size=3, padding=1),
            nn.GELU(),
            nn.Conv2d(width, channels, kernel_size=3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class DualEnhancementNet(nn.Module):
    """Three cascaded amplitude-enhancement stages with conv groups.

    Stage outputs are concatenated and fused by a 1x1 convolution into
    ``out_channels`` (defaults to the input channel count).
    """

    def __init__(self, channels: int, out_channels: int | None = None, width: int = 16):
        super().__init__()
        out_channels = channels if out_channels is None else out_channels
        self.stages = nn.ModuleList(DenStage(channels, width) for _ in range(3))
        self.groups = nn.ModuleList(_ResidualConvGroup(channels, width) for _ in range(2))
        self.fusion = nn.Conv2d(3 * channels, out_channels, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y1 = self.stages[0](x)
        y2 = self.stages[1](self.groups[0](y1))
        y3 = self.stages[2](self.groups[1](y2))
        return self.fusion(torch.cat([y1, y2, y3], dim=1))

    def init_passthrough(self) -> None:
        """Zero all enhancements/groups and fuse to the last stage output.

        Only meaningful when out_channels == in_channels; makes the whole
        net an identity up to transform round-off.
        """
        c = self.stages[0].g[0].in_channels
        if self.fusion.out_channels != c:
            raise ValueError("passthrough needs out_channels == in_channels")
        with torch.no_grad():
            for st in self.stages:
                st.zero_enhancement()
            for gr in self.groups:
                gr.body[2].weight.zero_()
                gr.body[2].bias.zero_()
            self.fusion.weight.zero_()
            self.fusion.bias.zero_()
            for i in range(c):
                self.fusion.weight[i, 2 * c + i, 0, 0] = 1.0


class UNetTopology(NamedTuple):
    """Block counts per U-Net layer: encoder stages, bottleneck, decoder stages."""

    blocks_per_layer: tuple[int, ...]
    base_channels: int

    @property
    def depth(self) -> int:
        return (len(self.blocks_per_layer) - 1) // 2

    def validate(self) -> "UNetTopology":
        if len(self.blocks_per_layer) < 3 or len(self.blocks_per_layer) % 2 == 0:
            raise ValueError("blocks_per_layer must have odd length >= 3")
        if any(b < 1 for b in self.blocks_per_layer):
            raise ValueError("block counts must be >= 1")
        return self


def _block_stack(channels, count, state_dim, directions):
    return nn.Sequential(*[MambaBlock(channels, state_dim, directions)
                           for _ in range(count)])


class MambaUNet(nn.Module):
    """U-Net of selective-scan blocks with Haar downsampling.

    Encoder stage i: block stack then HaarDownsample (width doubles).
    Decoder stage i: bilinear upsample, concat the stage-i encoder features,
    reduce with a 3x3 conv, then the stage's block stack. Spatial sides must
    be divisible by 2**depth.
    """

    def __init__(self, in_channels: int, out_channels: int, topology: UNetTopology,
                 state_dim: int = 8, directions: int = 2):
        super().__init__()
        topology.validate()
        self.topology = topology
        depth = topology.depth
        widths = [topology.base_channels * (2 ** i) for i in range(depth + 1)]
        enc_counts = topology.blocks_per_layer[:depth]
        mid_count = topology.blocks_per_layer[depth]
        dec_counts = topology.blocks_per_layer[depth + 1:]  # deepest first

        self.conv_in = nn.Conv2d(in_channels, widths[0], kernel_size=3, padding=1)
        self.enc_blocks = nn.ModuleList(
            _block_stack(widths[i], enc_counts[i], state_dim, directions)
            for i in range(depth))
        self.downs = nn.ModuleList(
            HaarDownsample(widths[i], widths[i + 1]) for i in range(depth))
        self.bottleneck = _block_stack(widths[depth], mid_count, state_dim, directions)
        # decoder entries run from the deepest stage (i = depth-1) to stage 0
        self.dec_reduce = nn.ModuleList(
            nn.Conv2d(widths[i + 1] + widths[i], widths[i], kernel_size=3, padding=1)
            for i in reversed(range(depth)))
        self.dec_blocks = nn.ModuleList(
            _block_stack(widths[i], dec_counts[depth - 1 - i], state_dim, directions)
            for i in reversed(range(depth)))
        self.conv_out = nn.Conv2d(widths[0], out_channels, kernel_size=3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        depth = self.topology.depth
        if x.shape[-2] % (2 ** depth) or x.shape[-1] % (2 ** depth):
            raise ValueError(f"spatial size {tuple(x.shape[-2:])} not divisible "
                             f"by 2**{depth}")
        feats = [self.conv_in(x)]
        for blocks, down in zip(self.enc_blocks, self.downs):
            feats.append(down(blocks(feats[-1])))
        out = self.bottleneck(feats[-1])
        for j, (reduce, blocks) in enumerate(zip(self.dec_reduce, self.dec_blocks)):
            skip = feats[depth - 1 - j]
            out = F.interpolate(out, scale_factor=2, mode="bilinear",
                                align_corners=False)
            out = blocks(reduce(torch.cat([out, skip], dim=1)))
        return self.conv_out(out)


# --------------------------------------------------------------------------
# Plain convolutional stand-ins for the ablation variants

class _DoubleConv(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1), nn.GELU(),
            nn.Conv2d(out_ch, out_ch, 3, padding=1), nn.GELU(),
        )

    def forward(self, x):
        return self.body(x)


class ConvUNet(nn.Module):
    """Small conventional U-Net (stride-2 pooling, bilinear up, concat skips)."""

    def __init__(self, in_channels: int, out_channels: int, base: int = 16,
                 depth: int = 2):
        super().__init__()
        widths = [base * (2 ** i) for i in range(depth + 1)]
        self.inc = _DoubleConv(in_channels, widths[0])
        self.downs = nn.ModuleList(_DoubleConv(widths[i], widths[i + 1])
                                   for i in range(depth))
        self.ups = nn.ModuleList(_DoubleConv(widths[i + 1] + widths[i], widths[i])
                                 for i in reversed(range(depth)))
        self.outc = nn.Conv2d(widths[0], out_channels, kernel_size=1)
        self.depth = depth

    def forward(self, x):
        feats = [self.inc(x)]
        for down in self.downs:
            feats.append(down(F.avg_pool2d(feats[-1], 2)))
        out = feats[-1]
        for j, up in enumerate(self.ups):
            skip = feats[self.depth - 1 - j]
            out = F.interpolate(out, scale_factor=2, mode="bilinear",
                                align_corners=False)
            out = up(torch.cat([out, skip], dim=1))
        return self.outc(out)


class ConvBlockNet(nn.Module):
    """Flat residual conv stack (the non-spectral low-frequency stand-in)."""

    def __init__(self, in_channels: int, out_channels: int, width: int = 16,
                 n_groups: int = 3):
        super().__init__()
        self.head = nn.Conv2d(in_channels, width, 3, padding=1)
        self.groups = nn.Sequential(*[_ResidualConvGroup(width, width)
                                      for _ in range(n_groups)])
        self.tail = nn.Conv2d(width, out_channels, 3, padding=1)

    def forward(self, x):
        return self.tail(self.groups(self.head(x)))

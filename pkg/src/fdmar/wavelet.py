"""One-level orthonormal Haar transforms and Haar wavelet downsampling.

All transforms here use the orthonormal filter pair g = (1, 1)/sqrt(2) and
h = (1, -1)/sqrt(2), so a single analysis/synthesis round trip is exact and
band energy equals input energy (Parseval). Tensors are channels-first:
(..., C, H, W) with even H and W.

Band convention (fixed by the 2x2 block [[a, b], [c, d]]):

    ll = (a + b + c + d) / 2      lowpass rows, lowpass cols
    lh = (a - b + c - d) / 2      lowpass rows, highpass cols (horizontal detail)
    hl = (a + b - c - d) / 2      highpass rows, lowpass cols (vertical detail)
    hh = (a - b - c + d) / 2      highpass both
"""

from typing import NamedTuple

import torch
import torch.nn as nn
import torch.nn.functional as F


class SubBands(NamedTuple):
    """The four half-resolution sub-bands of a one-level 2D analysis."""

    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor


def _check_bands(bands: SubBands) -> None:
    shape = bands.ll.shape
    for name, b in zip(("ll", "lh", "hl", "hh"), bands):
        if b.shape != shape:
            raise ValueError(f"sub-band '{name}' has shape {tuple(b.shape)}, "
                             f"expected {tuple(shape)}")


def dwt2(x: torch.Tensor) -> SubBands:
    """One-level orthonormal Haar analysis of a (..., H, W) tensor.

    Raises ValueError on odd spatial sizes; callers pad first (see
    ``pad_to_even``).
    """
    h, w = x.shape[-2], x.shape[-1]
    if h % 2 or w % 2:
        raise ValueError(f"dwt2 requires even spatial sizes, got {h}x{w}")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (a - b + c - d) * 0.5
    hl = (a + b - c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return SubBands(ll, lh, hl, hh)


def idwt2(bands: SubBands) -> torch.Tensor:
    """Exact inverse of :func:`dwt2`."""
    _check_bands(bands)
    ll, lh, hl, hh = bands
    a = (ll + lh + hl + hh) * 0.5
    b = (ll - lh + hl - hh) * 0.5
    c = (ll + lh - hl - hh) * 0.5
    d = (ll - lh - hl + hh) * 0.5
    out = torch.empty(*ll.shape[:-2], ll.shape[-2] * 2, ll.shape[-1] * 2,
                      dtype=ll.dtype, device=ll.device)
    out[..., 0::2, 0::2] = a
    out[..., 0::2, 1::2] = b
    out[..., 1::2, 0::2] = c
    out[..., 1::2, 1::2] = d
    return out


def concat_bands(bands: SubBands) -> torch.Tensor:
    """Stack all four bands on the channel axis, order (ll, lh, hl, hh)."""
    return torch.cat(list(bands), dim=-3)


def split_bands(x: torch.Tensor) -> SubBands:
    """Inverse of :func:`concat_bands`."""
    c = x.shape[-3]
    if c % 4:
        raise ValueError(f"channel count {c} not divisible by 4")
    return SubBands(*torch.split(x, c // 4, dim=-3))


def concat_hf(bands: SubBands) -> torch.Tensor:
    """Stack the detail bands on the channel axis, fixed order (lh, hl, hh)."""
    return torch.cat([bands.lh, bands.hl, bands.hh], dim=-3)


def split_hf(x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Inverse of :func:`concat_hf`, bit-exact."""
    c = x.shape[-3]
    if c % 3:
        raise ValueError(f"channel count {c} not divisible by 3")
    lh, hl, hh = torch.split(x, c // 3, dim=-3)
    return lh, hl, hh


def pad_to_even(x: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
    """Reflection-pad the trailing spatial dims to even sizes.

    Returns the padded tensor and the (bottom, right) padding applied, for
    use with :func:`crop_padding` after synthesis.
    """
    h, w = x.shape[-2], x.shape[-1]
    pad_h, pad_w = h % 2, w % 2
    if pad_h or pad_w:
        x = F.pad(x, (0, pad_w, 0, pad_h), mode="reflect")
    return x, (pad_h, pad_w)


def crop_padding(x: torch.Tensor, pad: tuple[int, int]) -> torch.Tensor:
    pad_h, pad_w = pad
    if pad_h:
        x = x[..., :-pad_h, :]
    if pad_w:
        x = x[..., :, :-pad_w]
    return x


class HaarDownsample(nn.Module):
    """Haar wavelet downsampling: lossless band stacking + learnable 1x1 mix.

    Replaces strided pooling in encoders. The band stack quadruples the
    channel count and halves the resolution without losing information; the
    1x1 convolution then mixes it to ``out_channels``.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.mix = nn.Conv2d(4 * in_channels, out_channels, kernel_size=1)

    def premix(self, x: torch.Tensor) -> torch.Tensor:
        """Band stack before the mixing map; invertible via idwt2."""
        return concat_bands(dwt2(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mix(self.premix(x))

    def init_identity(self) -> None:
        """Make the mixing map the identity (requires out == 4 * in)."""
        if self.out_channels != 4 * self.in_channels:
            raise ValueError("identity mixing needs out_channels == 4 * in_channels")
        with torch.no_grad():
            self.mix.weight.zero_()
            self.mix.bias.zero_()
            for i in range(self.out_channels):
                self.mix.weight[i, i, 0, 0] = 1.0

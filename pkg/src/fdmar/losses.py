"""Training objective: masked reconstruction loss plus self-guided
contrastive regularization.

The contrastive term treats the network output as the anchor, the ground
truth as the positive, and the coarse initial reconstruction as a hard
negative: an absolute perceptual distance pulls toward the target while a
ratio term pushes away from the coarse estimate. A curriculum coefficient
shifts the balance toward the absolute term over training.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn as nn


class ContrastiveTriplet(NamedTuple):
    anchor: torch.Tensor
    positive: torch.Tensor
    negative: torch.Tensor


class IdentityExtractor(nn.Module):
    """Single raw-pixel feature layer with unit weight."""

    layer_weights = (1.0,)

    def forward(self, x):
        return [x]


class RandomConvExtractor(nn.Module):
    """Frozen random-convolution features; deterministic under a fixed seed.

    A download-free stand-in for pretrained perceptual features: three
    strided conv+activation stages whose weights are drawn once from a
    seeded generator and never trained.
    """

    layer_weights = (0.25, 0.5, 1.0)

    def __init__(self, in_channels: int = 1, width: int = 16, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = [in_channels, width, 2 * width, 4 * width]
        self.convs = nn.ModuleList()
        for cin, cout in zip(chans[:-1], chans[1:]):
            conv = nn.Conv2d(cin, cout, kernel_size=3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen)
                                  / math.sqrt(cin * 9))
                conv.bias.zero_()
            self.convs.append(conv)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        feats = []
        for conv in self.convs:
            x = torch.tanh(conv(x))
            feats.append(x)
        return feats


class Vgg19Extractor(nn.Module):
    """Pretrained VGG-19 features at relu1_2, relu2_2, relu3_3 (frozen).

    Needs torchvision plus a one-time weight download; prefer
    ``RandomConvExtractor`` in offline or test settings.
    """

    layer_weights = (0.25, 0.5, 1.0)
    _taps = (3, 8, 15)

    def __init__(self):
        super().__init__()
        try:
            from torchvision.models import VGG19_Weights, vgg19
        except ImportError as exc:
            raise RuntimeError("the vgg19 extractor requires torchvision; "
                               "use extractor='random' instead") from exc
        self.features = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features[:self._taps[-1] + 1]
        self.features.eval()
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        if x.shape[1] == 1:
            x = x.repeat(1, 3, 1, 1)
        feats = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self._taps:
                feats.append(x)
        return feats


def make_extractor(kind: str, **kwargs) -> nn.Module:
    builders = {
        "identity": IdentityExtractor,
        "random": RandomConvExtractor,
        "vgg19": Vgg19Extractor,
    }
    if kind not in builders:
        raise ValueError(f"unknown extractor '{kind}' (choose from {sorted(builders)})")
    return builders[kind](**kwargs)


def _check_triplet(triplet: ContrastiveTriplet) -> None:
    a, p, n = triplet
    if a.shape != p.shape or a.shape != n.shape:
        raise ValueError("triplet members must share one shape")


def sgcr_loss(triplet: ContrastiveTriplet, extractor: nn.Module, mu: float,
              epsilon: float = 1e-7) -> torch.Tensor:
    """Self-guided contrastive loss over the extractor's feature layers.

    Per layer i: d_i = L1(anchor, positive), r_i = d_i / (L1(anchor,
    negative) + epsilon); the total is sum_i w_i * ((1 - mu) * r_i +
    (1 + mu) * d_i). Zero exactly when anchor == positive.
    """
    if not 0.0 <= mu <= 1.0:
        raise ValueError("mu must lie in [0, 1]")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    _check_triplet(triplet)
    f_anchor = extractor(triplet.anchor)
    f_pos = extractor(triplet.positive)
    f_neg = extractor(triplet.negative)
    total = 0.0
    for w, fa, fp, fn in zip(extractor.layer_weights, f_anchor, f_pos, f_neg):
        dist = (fa - fp).abs().mean()
        ratio = dist / ((fa - fn).abs().mean() + epsilon)
        total = total + w * ((1.0 - mu) * ratio + (1.0 + mu) * dist)
    return total


def cr_loss(triplet: ContrastiveTriplet, extractor: nn.Module,
            epsilon: float = 1e-7) -> torch.Tensor:
    """Conventional contrastive ratio term (no absolute component)."""
    _check_triplet(triplet)
    f_anchor = extractor(triplet.anchor)
    f_pos = extractor(triplet.positive)
    f_neg = extractor(triplet.negative)
    total = 0.0
    for w, fa, fp, fn in zip(extractor.layer_weights, f_anchor, f_pos, f_neg):
        total = total + w * (fa - fp).abs().mean() / ((fa - fn).abs().mean() + epsilon)
    return total


def masked_l1(pred: torch.Tensor, target: torch.Tensor,
              mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute error restricted to mask == 1."""
    weight = mask.sum().clamp_min(1.0)
    return ((pred - target).abs() * mask).sum() / weight


LOSS_MODES = ("none", "cr", "sgcr", "cr+sgcr")


def joint_loss(u_final: torch.Tensor, u0: torch.Tensor, x_gt: torch.Tensor,
               mask_i: torch.Tensor, lambda_g: float, mu: float,
               extractor: nn.Module, epsilon: float = 1e-7,
               mode: str = "sgcr") -> torch.Tensor:
    """Masked L1 reconstruction loss plus the weighted contrastive term.

    ``mode`` selects the regularizer: 'none' (lambda_g ignored), 'cr',
    'sgcr', or 'cr+sgcr' (their sum).
    """
    if lambda_g < 0:
        raise ValueError("lambda_g must be >= 0")
    if mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode '{mode}'")
    rec = masked_l1(u_final, x_gt, mask_i)
    if mode == "none" or lambda_g == 0.0:
        return rec
    triplet = ContrastiveTriplet(u_final, x_gt, u0)
    reg = 0.0
    if mode in ("cr", "cr+sgcr"):
        reg = reg + cr_loss(triplet, extractor, epsilon)
    if mode in ("sgcr", "cr+sgcr"):
        reg = reg + sgcr_loss(triplet, extractor, mu, epsilon)
    return rec + lambda_g * reg


@dataclass(frozen=True)
class CurriculumSchedule:
    """Linear ramp of the contrastive balance coefficient over epochs."""

    mu_start: float = 0.0
    mu_end: float = 0.5
    total_epochs: int = 200

    def mu_at(self, epoch: int) -> float:
        lo, hi = sorted((self.mu_start, self.mu_end))
        mu = self.mu_start + (self.mu_end - self.mu_start) * epoch / self.total_epochs
        return min(max(mu, lo), hi)

"""Model assembly: the full dual-branch + unrolled-refinement network and
the ablation variants that remove or swap its pieces.

Every variant maps (x_m, x_l, mask_i) to (u_final, u0): the refined output
and the coarse initial reconstruction (the contrastive hard negative).
"""

import enum

import torch
import torch.nn as nn

from .config import TrainConfig
from .nets import ConvBlockNet, ConvUNet, DualEnhancementNet, MambaUNet, UNetTopology
from .unroll import UnrolledRefiner, init_reconstruction
from .wavelet import concat_bands, concat_hf, dwt2, idwt2, split_bands


class AblationVariant(enum.Enum):
    FULL = "full"
    FDR_NET = "fdr"        # frequency-decoupled reconstruction only, no refinement
    SDI_NET = "sdi"        # spatial-domain processing, no wavelet pipeline
    UWP_NET = "uwp"        # unified processing of all four bands
    VARIANT_A = "variant_a"  # spectral low-frequency branch -> plain convs
    VARIANT_B = "variant_b"  # scan-based high-frequency branch -> plain conv U-Net


def _desk_topology(cfg: TrainConfig) -> UNetTopology:
    return UNetTopology(tuple(cfg.blocks_per_layer), cfg.base_channels).validate()


class DecoupledBranches(nn.Module):
    """Wavelet split, the two branch networks, and band reassembly."""

    def __init__(self, low_net: nn.Module, high_net: nn.Module):
        super().__init__()
        self.low_net = low_net
        self.high_net = high_net

    def forward(self, x_m, x_l):
        bands = dwt2(torch.cat([x_m, x_l], dim=1))
        ll_hat = self.low_net(bands.ll)
        hf_hat = self.high_net(concat_hf(bands))
        return init_reconstruction(ll_hat, hf_hat)


class RefinedModel(nn.Module):
    """Coarse reconstruction followed by optional unrolled refinement."""

    def __init__(self, coarse: nn.Module, refiner: UnrolledRefiner | None):
        super().__init__()
        self.coarse = coarse
        self.refiner = refiner

    def forward(self, x_m, x_l, mask_i):
        u0 = self.coarse(x_m, x_l)
        if self.refiner is None:
            return u0, u0
        return self.refiner(y=x_m, u0=u0, mask_i=mask_i), u0


class _UnifiedBandsCoarse(nn.Module):
    """All four bands processed jointly by one network (no decoupling)."""

    def __init__(self, net: nn.Module):
        super().__init__()
        self.net = net

    def forward(self, x_m, x_l):
        bands = dwt2(torch.cat([x_m, x_l], dim=1))
        out = self.net(concat_bands(bands))
        return idwt2(split_bands(out))


class _SpatialCoarse(nn.Module):
    def __init__(self, net: nn.Module):
        super().__init__()
        self.net = net

    def forward(self, x_m, x_l):
        return self.net(torch.cat([x_m, x_l], dim=1))


def build_model(variant: AblationVariant, cfg: TrainConfig) -> RefinedModel:
    """Construct one architecture variant with seeded, reproducible init."""
    if not isinstance(variant, AblationVariant):
        try:
            variant = AblationVariant(variant)
        except ValueError as exc:
            raise ValueError(f"unknown ablation variant {variant!r}") from exc
    torch.manual_seed(cfg.seed)
    topo = _desk_topology(cfg)
    in_ch = 2  # corrupted image + interpolation prior
    kw = dict(state_dim=cfg.state_dim, directions=cfg.scan_directions)

    def refiner(domain="wavelet"):
        return UnrolledRefiner(stages=cfg.stages_T, band_channels=1,
                               wm_blocks=cfg.wm_blocks, domain=domain, **kw)

    if variant is AblationVariant.FULL:
        coarse = DecoupledBranches(
            low_net=DualEnhancementNet(in_ch, out_channels=1, width=cfg.den_width),
            high_net=MambaUNet(3 * in_ch, 3, topo, **kw))
        return RefinedModel(coarse, refiner())
    if variant is AblationVariant.FDR_NET:
        coarse = DecoupledBranches(
            low_net=DualEnhancementNet(in_ch, out_channels=1, width=cfg.den_width),
            high_net=MambaUNet(3 * in_ch, 3, topo, **kw))
        return RefinedModel(coarse, None)
    if variant is AblationVariant.SDI_NET:
        coarse = _SpatialCoarse(ConvUNet(in_ch, 1, base=cfg.base_channels))
        return RefinedModel(coarse, refiner(domain="spatial"))
    if variant is AblationVariant.UWP_NET:
        coarse = _UnifiedBandsCoarse(MambaUNet(4 * in_ch, 4, topo, **kw))
        return RefinedModel(coarse, refiner())
    if variant is AblationVariant.VARIANT_A:
        coarse = DecoupledBranches(
            low_net=ConvBlockNet(in_ch, 1, width=cfg.den_width),
            high_net=MambaUNet(3 * in_ch, 3, topo, **kw))
        return RefinedModel(coarse, refiner())
    if variant is AblationVariant.VARIANT_B:
        coarse = DecoupledBranches(
            low_net=DualEnhancementNet(in_ch, out_channels=1, width=cfg.den_width),
            high_net=ConvUNet(3 * in_ch, 3, base=cfg.base_channels))
        return RefinedModel(coarse, refiner())
    raise ValueError(f"unknown ablation variant {variant!r}")


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())

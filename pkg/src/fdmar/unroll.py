"""Unrolled proximal-gradient refinement.

Starting from the coarse reconstruction assembled from the two branch
outputs, each stage alternates three updates: a gradient step on the
artifact coefficients followed by a learned proximal module, the same for
the image coefficients with a composite data/consistency guidance term, and
a convex-combination update of the spatial reconstruction.

The gradient-step algebra lives in free functions taking explicit step
values, so every special case (tau = 0, tau = 1/2) is testable exactly; the
stage module wraps them with sigmoid/softplus parameterizations that keep
tau in (0, 1) and gamma, delta positive.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .ssm import MambaBlock
from .wavelet import SubBands, concat_bands, dwt2, idwt2, split_bands, split_hf


@dataclass(frozen=True)
class VariationalWeights:
    """Weights of the underlying variational objective, for documentation.

    The unrolled network never evaluates the objective's penalty or
    regularizer weights numerically: the regularizers are absorbed into the
    learned proximal modules and the balance into the learned step sizes.
    Kept so the correspondence between objective and network stays written
    down.
    """

    mu: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        if min(self.mu, self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("objective weights must be non-negative")


def init_reconstruction(x_ll_hat: torch.Tensor, x_hf_hat: torch.Tensor) -> torch.Tensor:
    """Coarse reconstruction: synthesize the corrected bands back to an image.

    ``x_ll_hat`` is the corrected approximation band; ``x_hf_hat`` carries the
    three corrected detail bands channel-stacked in (lh, hl, hh) order.
    """
    lh, hl, hh = split_hf(x_hf_hat)
    for name, band in (("lh", lh), ("hl", hl), ("hh", hh)):
        if band.shape != x_ll_hat.shape:
            raise ValueError(f"band '{name}' shape {tuple(band.shape)} does not "
                             f"match ll {tuple(x_ll_hat.shape)}")
    return idwt2(SubBands(x_ll_hat, lh, hl, hh))


def _map_bands(bands: SubBands, fn) -> SubBands:
    return SubBands(*[fn(b) for b in bands])


def _lincomb(w1: torch.Tensor | float, b1: SubBands,
             w2: torch.Tensor | float, b2: SubBands) -> SubBands:
    return SubBands(*[w1 * x + w2 * y for x, y in zip(b1, b2)])


def artifact_update(a_prev: SubBands, y: torch.Tensor, x_prev: torch.Tensor,
                    tau1, wm_a=None) -> SubBands:
    """Gradient step on the artifact coefficients, then the proximal module.

    a_tilde = (1 - 2 tau1) * a_prev + 2 tau1 * W(y - x_prev); with tau1 = 1/2
    this is exactly W(y - x_prev), with tau1 = 0 it keeps a_prev.
    """
    grad_term = dwt2(y - x_prev)
    a_tilde = _lincomb(1.0 - 2.0 * tau1, a_prev, 2.0 * tau1, grad_term)
    return wm_a(a_tilde) if wm_a is not None else a_tilde


def image_update(x_prev: SubBands, y: torch.Tensor, a_k: SubBands,
                 u_prev: torch.Tensor, tau2, gamma, delta, wm_x=None) -> SubBands:
    """Gradient step on the image coefficients with composite guidance.

    phi = gamma * W(y - idwt2(a_k)) + delta * W(u_prev)
    x_tilde = (1 - 2 tau2) * x_prev + (2 tau2 / (gamma + delta)) * phi
    """
    total = gamma + delta
    total_val = total.detach().item() if torch.is_tensor(total) else float(total)
    if total_val < 1e-8:
        raise ValueError("gamma + delta must stay positive")
    a_spatial = idwt2(a_k)
    phi = _lincomb(gamma, dwt2(y - a_spatial), delta, dwt2(u_prev))
    x_tilde = _lincomb(1.0 - 2.0 * tau2, x_prev, 2.0 * tau2 / total, phi)
    return wm_x(x_tilde) if wm_x is not None else x_tilde


def u_update(u_prev: torch.Tensor, x_w_k: SubBands, tau3) -> torch.Tensor:
    """Convex blend of the previous reconstruction with the synthesized image."""
    return (1.0 - 2.0 * tau3) * u_prev + 2.0 * tau3 * idwt2(x_w_k)


class WMModule(nn.Module):
    """Learned proximal operator: selective-scan blocks over the stacked bands.

    In wavelet mode the four bands are channel-stacked (width 4C) and split
    back afterwards. In spatial mode the image is lifted to the same width
    with 1x1 convolutions around the blocks; the projection conv starts at
    zero so a fresh module is an exact identity, like the wavelet path with
    zeroed residual gains.
    """

    def __init__(self, band_channels: int, n_blocks: int = 2, state_dim: int = 8,
                 directions: int = 2, spatial: bool = False):
        super().__init__()
        self.spatial = spatial
        width = 4 * band_channels
        self.blocks = nn.Sequential(*[MambaBlock(width, state_dim, directions)
                                      for _ in range(n_blocks)])
        if spatial:
            self.lift = nn.Conv2d(band_channels, width, kernel_size=1)
            self.proj = nn.Conv2d(width, band_channels, kernel_size=1)
            nn.init.zeros_(self.proj.weight)
            nn.init.zeros_(self.proj.bias)

    def forward(self, bands):
        if self.spatial:
            return bands + self.proj(self.blocks(self.lift(bands)))
        return split_bands(self.blocks(concat_bands(bands)))

    def zero_residuals(self):
        for b in self.blocks:
            b.zero_residuals()
        if self.spatial:
            with torch.no_grad():
                self.proj.weight.zero_()
                self.proj.bias.zero_()


class StageSteps(nn.Module):
    """Per-stage learnable steps: tau's in (0, 1), gamma/delta positive."""

    def __init__(self, tau: float = 0.5, gamma: float = 1.0, delta: float = 0.1):
        super().__init__()

        def logit(p):
            return math.log(p / (1.0 - p))

        def softplus_inv(v):
            return math.log(math.expm1(v))

        self.tau1_raw = nn.Parameter(torch.tensor(logit(tau)))
        self.tau2_raw = nn.Parameter(torch.tensor(logit(tau)))
        self.tau3_raw = nn.Parameter(torch.tensor(logit(tau)))
        self.gamma_raw = nn.Parameter(torch.tensor(softplus_inv(gamma)))
        self.delta_raw = nn.Parameter(torch.tensor(softplus_inv(delta)))

    @property
    def tau1(self):
        return torch.sigmoid(self.tau1_raw)

    @property
    def tau2(self):
        return torch.sigmoid(self.tau2_raw)

    @property
    def tau3(self):
        return torch.sigmoid(self.tau3_raw)

    @property
    def gamma(self):
        return F.softplus(self.gamma_raw)

    @property
    def delta(self):
        return F.softplus(self.delta_raw)


class UnrolledRefiner(nn.Module):
    """T refinement stages over (artifact, image, reconstruction) state.

    The canonical artifact/image state lives in the wavelet domain
    (``domain="wavelet"``); the spatial ablation keeps it in image space
    with the transform replaced by the identity. Data terms see the observed
    image only on the non-metal mask; metal pixels are filled from the
    running reconstruction so they never drive the updates.
    """

    def __init__(self, stages: int, band_channels: int = 1, wm_blocks: int = 2,
                 state_dim: int = 8, directions: int = 2, domain: str = "wavelet"):
        super().__init__()
        if stages < 1:
            raise ValueError("stage count must be >= 1")
        if domain not in ("wavelet", "spatial"):
            raise ValueError(f"unknown domain '{domain}'")
        self.domain = domain
        spatial = domain == "spatial"
        self.steps = nn.ModuleList(StageSteps() for _ in range(stages))
        self.wm_a = nn.ModuleList(
            WMModule(band_channels, wm_blocks, state_dim, directions, spatial)
            for _ in range(stages))
        self.wm_x = nn.ModuleList(
            WMModule(band_channels, wm_blocks, state_dim, directions, spatial)
            for _ in range(stages))

    @property
    def stages(self) -> int:
        return len(self.steps)

    def forward(self, y: torch.Tensor, u0: torch.Tensor,
                mask_i: torch.Tensor | None = None,
                step_overrides: dict | None = None) -> torch.Tensor:
        if self.domain == "wavelet":
            fwd, inv = dwt2, idwt2
            zero_like = lambda b: _map_bands(b, torch.zeros_like)
        else:
            fwd, inv = (lambda t: t), (lambda t: t)
            zero_like = torch.zeros_like

        u = u0
        x_w = fwd(u0)
        a_w = zero_like(x_w)

        for k in range(self.stages):
            st = self.steps[k]
            ov = step_overrides or {}
            tau1 = ov.get("tau1", st.tau1)
            tau2 = ov.get("tau2", st.tau2)
            tau3 = ov.get("tau3", st.tau3)
            gamma = ov.get("gamma", st.gamma)
            delta = ov.get("delta", st.delta)

            y_eff = y if mask_i is None else mask_i * y + (1.0 - mask_i) * u
            x_spatial = inv(x_w)

            if self.domain == "wavelet":
                a_w = artifact_update(a_w, y_eff, x_spatial, tau1, self.wm_a[k])
                x_w = image_update(x_w, y_eff, a_w, u, tau2, gamma, delta,
                                   self.wm_x[k])
                u = u_update(u, x_w, tau3)
            else:
                a_tilde = (1.0 - 2.0 * tau1) * a_w + 2.0 * tau1 * (y_eff - x_spatial)
                a_w = self.wm_a[k](a_tilde)
                phi = gamma * (y_eff - a_w) + delta * u
                x_tilde = (1.0 - 2.0 * tau2) * x_w + (2.0 * tau2 / (gamma + delta)) * phi
                x_w = self.wm_x[k](x_tilde)
                u = (1.0 - 2.0 * tau3) * u + 2.0 * tau3 * x_w
        return u

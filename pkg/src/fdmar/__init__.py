"""Desk-scale metal artifact reduction: physics-based artifact synthesis,
frequency-decoupled dual-branch restoration, unrolled refinement, and a
self-guided contrastive training objective."""

__version__ = "0.1.0"

from .config import TrainConfig
from .ctsim import (ArtifactPair, PhantomImage, ProjectionGeometry,
                    beam_hardening_error, fbp, li_prior, radon, synthesize_pair)
from .model import AblationVariant, build_model
from .wavelet import SubBands, dwt2, idwt2

__all__ = [
    "TrainConfig", "ArtifactPair", "PhantomImage", "ProjectionGeometry",
    "beam_hardening_error", "fbp", "li_prior", "radon", "synthesize_pair",
    "AblationVariant", "build_model", "SubBands", "dwt2", "idwt2",
    "__version__",
]

"""Inference service for masked-autoencoder map inpainting."""

from .model import MaeArch, MaskedAutoencoder, load_model, save_tiny_checkpoint
from .server import InpaintService, ServiceConfig

__all__ = [
    "InpaintService",
    "MaeArch",
    "MaskedAutoencoder",
    "ServiceConfig",
    "load_model",
    "save_tiny_checkpoint",
]

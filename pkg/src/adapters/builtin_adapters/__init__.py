"""Built-in backends; heavy ones import their packages lazily."""

from .griffinlim_vocoder import GriffinLimVocoder
from .phonemizers import CharacterPhonemizer
from .sidecar_asr import SidecarASR
from .spectral_embedder import SpectralEmbedder
from .synthetic_encoder import SyntheticEncoder

__all__ = ["SyntheticEncoder", "GriffinLimVocoder", "SidecarASR", "CharacterPhonemizer",
           "SpectralEmbedder"]

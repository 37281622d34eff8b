"""Base classes for pluggable external models (encoders, vocoders, ASR, embedders)."""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

import numpy as np

from ..errors import AdapterError, XVCError

logger = logging.getLogger(__name__)


class BaseAdapter(ABC):
    """Abstract base class for every backend the pipeline can call into.

    Instances are exclusive-access: callers serialize calls per instance and
    use :meth:`spawn` to get one instance per worker.
    """

    kind: str = "adapter"

    def __init__(self, name: str, description: str, **options):
        """Initialize the base adapter.

        Args:
            name: Backend id the adapter is registered under
            description: Human-readable description
            **options: Constructor options, kept so the adapter can be spawned again
        """
        self.name = name
        self.description = description
        self.options = options
        self.logger = logging.getLogger(f"{__name__}.{name}")

    def spawn(self) -> "BaseAdapter":
        """Create a fresh instance with the same options (one per worker)."""
        return type(self)(**self.options)

    def get_schema(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "description": self.description,
            "options": dict(self.options),
        }

    def safe_call(self, method: str, *args, **kwargs) -> Any:
        """Call a backend method, turning unexpected failures into AdapterError.

        Args:
            method: Name of the adapter method to call
            *args: Positional arguments
            **kwargs: Keyword arguments

        Returns:
            Whatever the method returns
        """
        self.logger.debug(f"Calling {self.kind} '{self.name}.{method}'")
        try:
            return getattr(self, method)(*args, **kwargs)
        except XVCError:
            raise
        except Exception as e:
            self.logger.error(f"{self.kind} '{self.name}' failed in {method}: {e}")
            raise AdapterError(f"{self.kind} '{self.name}' failed in {method}: {e}") from e

    def __str__(self) -> str:
        return f"{self.kind}({self.name}): {self.description}"

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__}(name='{self.name}')>"


class ContentEncoderAdapter(BaseAdapter):
    """Waveform in, frame-level SSL features out."""

    kind = "encoder"
    sample_rate: int = 16000
    frame_hop_samples: int = 320

    @abstractmethod
    def encode(self, samples: np.ndarray, layer_index: int) -> np.ndarray:
        """Return a (T_ssl, s) feature matrix for mono samples at ``sample_rate``."""


class VocoderAdapter(BaseAdapter):
    """Log-mel frames in, waveform out."""

    kind = "vocoder"
    sample_rate: int = 16000
    # DspConfig the weights were trained on; None when any front-end can be inverted
    trained_dsp = None

    def front_end(self, dsp):
        """Mel front-end this vocoder accepts when the pipeline produces ``dsp``."""
        return dsp if self.trained_dsp is None else self.trained_dsp

    @abstractmethod
    def synthesize(self, mel, dsp) -> np.ndarray:
        """Return waveform samples for a MelSpectrogram produced under ``dsp``."""


class ASRAdapter(BaseAdapter):
    """Speech recognizer used for the intelligibility metrics."""

    kind = "asr"
    sample_rate: int = 16000

    @abstractmethod
    def transcribe(self, clip, source_path: Optional[str] = None,
                   language: Optional[str] = None) -> str:
        """Return the transcript of a clip."""


class PhonemizerAdapter(BaseAdapter):
    """Text to phoneme tokens for PER."""

    kind = "phonemizer"

    @abstractmethod
    def phonemize(self, text: str, language: Optional[str] = None) -> List[str]:
        """Return the phoneme tokens of ``text``."""


class SpeakerEmbedderAdapter(BaseAdapter):
    """Waveform to a fixed-dimension speaker embedding (d-vector)."""

    kind = "embedder"
    sample_rate: int = 16000
    dim: int = 0

    @abstractmethod
    def embed(self, clip) -> np.ndarray:
        """Return a 1-D embedding of length ``dim``."""


def missing_package(package: str, backend: str) -> AdapterError:
    """AdapterError for a backend whose optional package is not installed."""
    return AdapterError(
        f"Backend '{backend}' needs the '{package}' package, which is not installed",
        hint=f"pip install {package}",
    )

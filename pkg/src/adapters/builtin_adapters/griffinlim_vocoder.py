"""Signal-processing fallback vocoder."""

import numpy as np

from ..base_adapter import VocoderAdapter


class GriffinLimVocoder(VocoderAdapter):
    """Pseudo-inverse mel filterbank + Griffin-Lim phase reconstruction."""

    def __init__(self, iterations: int = 32, sample_rate: int = 16000):
        super().__init__(
            name="griffinlim",
            description="Deterministic mel inversion with iterative phase estimation",
            iterations=iterations, sample_rate=sample_rate,
        )
        self.iterations = iterations
        self.sample_rate = sample_rate

    def synthesize(self, mel, dsp) -> np.ndarray:
        from ...vocoder import vocode_fallback

        return vocode_fallback(mel, self.iterations, dsp).samples

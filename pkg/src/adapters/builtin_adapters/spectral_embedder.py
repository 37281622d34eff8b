"""Spectral-statistics speaker embedding (test embedder)."""

import numpy as np

from ...audio import DspConfig, compute_mel, resample
from ..base_adapter import SpeakerEmbedderAdapter


class SpectralEmbedder(SpeakerEmbedderAdapter):
    """Per-band mean and std of a 40-band log-mel, L2-normalized."""

    def __init__(self, n_mels: int = 40, sample_rate: int = 16000):
        super().__init__(
            name="spectral",
            description="Log-mel band statistics as a d-vector stand-in",
            n_mels=n_mels, sample_rate=sample_rate,
        )
        self.sample_rate = sample_rate
        self.dim = 2 * n_mels
        self.dsp = DspConfig(sample_rate=sample_rate, n_fft=512, win_length=400, hop_length=160,
                             n_mels=n_mels)

    def embed(self, clip) -> np.ndarray:
        if clip.sample_rate != self.sample_rate:
            clip = type(clip)(samples=resample(clip.samples, clip.sample_rate, self.sample_rate),
                              sample_rate=self.sample_rate)
        frames = compute_mel(clip, self.dsp).frames.astype(np.float64)
        vector = np.concatenate([frames.mean(axis=0), frames.std(axis=0)])
        norm = np.linalg.norm(vector)
        return vector / norm if norm > 0 else vector

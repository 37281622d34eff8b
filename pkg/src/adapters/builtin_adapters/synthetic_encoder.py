"""Deterministic stand-in for the pretrained content encoder."""

import numpy as np

from ..base_adapter import ContentEncoderAdapter


class SyntheticEncoder(ContentEncoderAdapter):
    """Strided projection of framed audio.

    Audio is cut into non-overlapping frames of ``hop`` samples; each frame's
    log-magnitude spectrum is multiplied by a fixed Gaussian matrix drawn from
    ``seed``. Same input, same output, no model download.
    """

    def __init__(self, dim: int = 1024, hop: int = 320, sample_rate: int = 16000, seed: int = 0):
        super().__init__(
            name="synthetic",
            description="Seeded linear projection of framed log spectra (test encoder)",
            dim=dim, hop=hop, sample_rate=sample_rate, seed=seed,
        )
        self.dim = dim
        self.frame_hop_samples = hop
        self.sample_rate = sample_rate
        n_bins = hop // 2 + 1
        rng = np.random.default_rng(seed)
        self.projection = rng.standard_normal((n_bins, dim)) / np.sqrt(n_bins)
        self.window = np.hanning(hop)

    def encode(self, samples: np.ndarray, layer_index: int) -> np.ndarray:
        n_frames = len(samples) // self.frame_hop_samples
        frames = np.asarray(samples[:n_frames * self.frame_hop_samples], dtype=np.float64)
        frames = frames.reshape(n_frames, self.frame_hop_samples) * self.window
        spectra = np.log1p(np.abs(np.fft.rfft(frames, axis=1)))
        return (spectra @ self.projection).astype(np.float32)

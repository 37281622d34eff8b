"""ECAPA speaker-verification embeddings from SpeechBrain."""

import numpy as np

from ...audio import resample
from ...errors import AdapterError
from ..base_adapter import SpeakerEmbedderAdapter, missing_package


class SpeechBrainEmbedder(SpeakerEmbedderAdapter):

    def __init__(self, source: str = "speechbrain/spkrec-ecapa-voxceleb", device: str = "cpu"):
        super().__init__(
            name="speechbrain",
            description=f"Speaker verification embeddings ({source})",
            source=source, device=device,
        )
        self.source = source
        self.device = device
        self.sample_rate = 16000
        self.dim = 192
        self.model = None

    def _load(self):
        try:
            from speechbrain.inference.speaker import EncoderClassifier
        except ImportError as e:
            raise missing_package("speechbrain", self.name) from e
        try:
            self.model = EncoderClassifier.from_hparams(source=self.source,
                                                        run_opts={"device": self.device})
        except Exception as e:
            raise AdapterError(f"Could not load {self.source}: {e}",
                               hint="check network access or use the 'spectral' embedder") from e

    def embed(self, clip) -> np.ndarray:
        import torch

        if self.model is None:
            self._load()
        samples = resample(clip.samples, clip.sample_rate, self.sample_rate)
        with torch.inference_mode():
            emb = self.model.encode_batch(torch.as_tensor(samples, dtype=torch.float32)[None])
        return emb.squeeze().cpu().numpy().astype(np.float64)

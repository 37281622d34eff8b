"""d-vector speaker embeddings from Resemblyzer's GE2E voice encoder."""

import numpy as np

from ...errors import AdapterError
from ..base_adapter import SpeakerEmbedderAdapter, missing_package


class ResemblyzerEmbedder(SpeakerEmbedderAdapter):
    """256-dim unit-norm d-vectors; silence is trimmed before embedding."""

    def __init__(self, device: str = "cpu"):
        super().__init__(
            name="resemblyzer",
            description="GE2E d-vector speaker embeddings (Resemblyzer)",
            device=device,
        )
        self.device = device
        self.sample_rate = 16000
        self.dim = 256
        self.model = None

    def _load(self):
        try:
            from resemblyzer import VoiceEncoder
        except ImportError as e:
            raise missing_package("resemblyzer", self.name) from e
        try:
            self.model = VoiceEncoder(device=self.device, verbose=False)
        except Exception as e:
            raise AdapterError(f"Could not load the Resemblyzer voice encoder: {e}",
                               hint="use the 'spectral' or 'speechbrain' embedder") from e

    def embed(self, clip) -> np.ndarray:
        if self.model is None:
            self._load()
        from resemblyzer import preprocess_wav

        wav = preprocess_wav(clip.samples.astype(np.float32), source_sr=clip.sample_rate)
        if len(wav) == 0:
            raise AdapterError("Resemblyzer found no speech in the clip")
        return np.asarray(self.model.embed_utterance(wav), dtype=np.float64)

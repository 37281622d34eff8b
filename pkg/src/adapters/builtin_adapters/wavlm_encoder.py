"""WavLM content encoder through Hugging Face transformers."""

import numpy as np

from ...errors import AdapterError
from ..base_adapter import ContentEncoderAdapter, missing_package


class WavLMEncoder(ContentEncoderAdapter):
    """Hidden states of one transformer layer of a pretrained WavLM model."""

    def __init__(self, model_name: str = "microsoft/wavlm-large", device: str = "cpu"):
        super().__init__(
            name="wavlm",
            description=f"WavLM hidden states ({model_name})",
            model_name=model_name, device=device,
        )
        self.sample_rate = 16000
        self.frame_hop_samples = 320
        self.device = device
        self.model = None
        self.model_name = model_name

    def _load(self):
        try:
            import torch  # noqa: F401
            from transformers import WavLMModel
        except ImportError as e:
            raise missing_package("transformers", self.name) from e
        try:
            self.logger.info(f"Loading content encoder {self.model_name}")
            self.model = WavLMModel.from_pretrained(self.model_name).to(self.device).eval()
        except Exception as e:
            raise AdapterError(f"Could not load {self.model_name}: {e}",
                               hint="check network access or the Hugging Face cache") from e

    def encode(self, samples: np.ndarray, layer_index: int) -> np.ndarray:
        import torch

        if self.model is None:
            self._load()
        wav = torch.as_tensor(samples, dtype=torch.float32, device=self.device)[None]
        with torch.inference_mode():
            outputs = self.model(wav, output_hidden_states=True)
        # hidden_states[0] is the CNN feature projection; transformer layer k is index k
        if layer_index >= len(outputs.hidden_states):
            raise AdapterError(f"{self.model_name} has no layer {layer_index}")
        return outputs.hidden_states[layer_index][0].cpu().numpy()

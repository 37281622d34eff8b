"""Pretrained HiFi-GAN vocoder loaded through torch.hub."""

import numpy as np

from ...audio import DspConfig
from ...config import DSP_PRESETS
from ...errors import AdapterError, ConfigError, ContractViolation
from ..base_adapter import VocoderAdapter


class HifiGanVocoder(VocoderAdapter):
    """Neural vocoder; weights are never trained here, only loaded.

    The weights only understand the mel front-end they were trained on
    (``front_end_preset``), so the pipeline's DSP config must match it.
    """

    def __init__(self, repo: str = "bshall/hifigan:main", entry: str = "hifigan_hubert_soft",
                 front_end_preset: str = "16k_h160", device: str = "cpu"):
        if front_end_preset not in DSP_PRESETS:
            raise ConfigError(f"Unknown front_end_preset '{front_end_preset}'; "
                              f"expected one of {sorted(DSP_PRESETS)}")
        super().__init__(
            name="hifigan",
            description=f"HiFi-GAN from torch.hub ({repo}, {entry})",
            repo=repo, entry=entry, front_end_preset=front_end_preset, device=device,
        )
        self.trained_dsp = DspConfig.from_dict(DSP_PRESETS[front_end_preset])
        self.sample_rate = self.trained_dsp.sample_rate
        self.repo = repo
        self.entry = entry
        self.device = device
        self.model = None

    def _load(self):
        import torch

        try:
            self.logger.info(f"Loading vocoder {self.repo}:{self.entry}")
            self.model = torch.hub.load(self.repo, self.entry, trust_repo=True).to(self.device).eval()
        except Exception as e:
            raise AdapterError(f"Could not load HiFi-GAN {self.repo}:{self.entry}: {e}",
                               hint="check network access or use the 'griffinlim' vocoder") from e

    def synthesize(self, mel, dsp) -> np.ndarray:
        import torch

        if dsp != self.trained_dsp or not mel.matches(self.trained_dsp):
            raise ContractViolation(
                f"HiFi-GAN {self.entry} was trained on hop {self.trained_dsp.hop_length} / "
                f"{self.trained_dsp.n_mels} mels at {self.trained_dsp.sample_rate} Hz, got hop "
                f"{mel.hop_length} / {mel.n_mels} mels at {mel.sample_rate} Hz"
            )
        if self.model is None:
            self._load()
        x = torch.as_tensor(mel.frames.T, dtype=torch.float32, device=self.device)[None]
        with torch.inference_mode():
            wav = self.model(x)
        return wav.squeeze().cpu().numpy()

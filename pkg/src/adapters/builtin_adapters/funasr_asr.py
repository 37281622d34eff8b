"""Mandarin ASR with FunASR's Paraformer models."""

from typing import Optional

import numpy as np

from ...errors import AdapterError
from ..base_adapter import ASRAdapter, missing_package


class FunASR(ASRAdapter):

    def __init__(self, model_name: str = "paraformer-zh", vad_model: Optional[str] = "fsmn-vad",
                 device: str = "cpu"):
        super().__init__(
            name="funasr",
            description=f"FunASR speech recognition ({model_name})",
            model_name=model_name, vad_model=vad_model, device=device,
        )
        self.model_name = model_name
        self.vad_model = vad_model
        self.device = device
        self.sample_rate = 16000
        self.model = None

    def _load(self):
        try:
            from funasr import AutoModel
        except ImportError as e:
            raise missing_package("funasr", self.name) from e
        try:
            self.logger.info(f"Loading ASR model {self.model_name}")
            options = {"model": self.model_name, "device": self.device, "disable_update": True}
            if self.vad_model:
                options["vad_model"] = self.vad_model
            self.model = AutoModel(**options)
        except Exception as e:
            raise AdapterError(f"Could not load {self.model_name}: {e}",
                               hint="check network access or the ModelScope cache") from e

    def transcribe(self, clip, source_path: Optional[str] = None,
                   language: Optional[str] = None) -> str:
        if self.model is None:
            self._load()
        if language and language.split("-")[0].lower() != "zh":
            self.logger.warning(f"FunASR model {self.model_name} is trained on Mandarin, got '{language}'")
        if clip.sample_rate != self.sample_rate:
            raise AdapterError(f"FunASR needs {self.sample_rate} Hz audio, got {clip.sample_rate} Hz")
        result = self.model.generate(input=clip.samples.astype(np.float32))
        if not result:
            return ""
        return result[0].get("text", "").strip()

"""Whisper ASR through the transformers pipeline API."""

from typing import Optional

from ...errors import AdapterError
from ..base_adapter import ASRAdapter, missing_package

# BCP-47 primary subtag -> Whisper language name
WHISPER_LANGUAGES = {"en": "english", "fr": "french", "es": "spanish", "zh": "chinese",
                     "de": "german", "it": "italian"}


class WhisperASR(ASRAdapter):

    def __init__(self, model_name: str = "openai/whisper-medium", device: str = "cpu"):
        super().__init__(
            name="whisper",
            description=f"Whisper speech recognition ({model_name})",
            model_name=model_name, device=device,
        )
        self.model_name = model_name
        self.device = device
        self.pipe = None

    def _load(self):
        try:
            from transformers import pipeline
        except ImportError as e:
            raise missing_package("transformers", self.name) from e
        try:
            self.logger.info(f"Loading ASR model {self.model_name}")
            self.pipe = pipeline("automatic-speech-recognition", model=self.model_name, device=self.device)
        except Exception as e:
            raise AdapterError(f"Could not load {self.model_name}: {e}",
                               hint="check network access or the Hugging Face cache") from e

    def transcribe(self, clip, source_path: Optional[str] = None,
                   language: Optional[str] = None) -> str:
        if self.pipe is None:
            self._load()
        generate_kwargs = {"task": "transcribe"}
        if language:
            primary = language.split("-")[0].lower()
            if primary in WHISPER_LANGUAGES:
                generate_kwargs["language"] = WHISPER_LANGUAGES[primary]
        result = self.pipe({"raw": clip.samples, "sampling_rate": clip.sample_rate},
                           generate_kwargs=generate_kwargs)
        return result["text"].strip()

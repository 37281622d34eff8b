"""Text-to-phoneme backends for PER."""

from typing import List, Optional

from ...errors import AdapterError
from ..base_adapter import PhonemizerAdapter, missing_package

# BCP-47 primary subtag -> espeak voice
ESPEAK_VOICES = {"en": "en-us", "fr": "fr-fr", "es": "es", "zh": "cmn", "de": "de"}


class CharacterPhonemizer(PhonemizerAdapter):
    """One token per non-space character; a language-free proxy for phonemes."""

    def __init__(self):
        super().__init__(name="characters", description="Character tokens as phoneme proxy")

    def phonemize(self, text: str, language: Optional[str] = None) -> List[str]:
        return [ch for ch in text if not ch.isspace()]


class EspeakPhonemizer(PhonemizerAdapter):
    """IPA phones from espeak-ng via the ``phonemizer`` package."""

    def __init__(self, default_language: str = "en"):
        super().__init__(name="espeak", description="espeak-ng phonemes",
                         default_language=default_language)
        self.default_language = default_language

    def phonemize(self, text: str, language: Optional[str] = None) -> List[str]:
        try:
            from phonemizer import phonemize
            from phonemizer.separator import Separator
        except ImportError as e:
            raise missing_package("phonemizer", self.name) from e

        primary = (language or self.default_language).split("-")[0].lower()
        if primary not in ESPEAK_VOICES:
            raise AdapterError(f"No espeak voice for language '{language}'")
        phones = phonemize(text, language=ESPEAK_VOICES[primary], backend="espeak",
                           separator=Separator(phone=" ", word=" ", syllable=""), strip=True)
        return phones.split()

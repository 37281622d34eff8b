"""Echo ASR: returns the transcript stored next to the audio file."""

from pathlib import Path
from typing import Optional

from ...errors import AdapterError
from ..base_adapter import ASRAdapter


class SidecarASR(ASRAdapter):
    """Reads ``<audio>.txt`` instead of recognizing speech."""

    def __init__(self, suffix: str = ".txt"):
        super().__init__(
            name="sidecar",
            description="Reads sidecar transcript files (test ASR)",
            suffix=suffix,
        )
        self.suffix = suffix

    def transcribe(self, clip, source_path: Optional[str] = None,
                   language: Optional[str] = None) -> str:
        if source_path is None:
            raise AdapterError("Sidecar ASR needs the audio file path")
        sidecar = Path(source_path).with_suffix(self.suffix)
        if not sidecar.exists():
            raise AdapterError(f"No sidecar transcript for {source_path}",
                               hint=f"write the transcript to {sidecar}")
        return sidecar.read_text(encoding="utf-8").strip()

"""Pluggable backends for the pretrained models the pipeline consumes."""

from .adapter_manager import AdapterManager, AdapterSet, get_adapter_manager
from .base_adapter import (
    ASRAdapter,
    BaseAdapter,
    ContentEncoderAdapter,
    PhonemizerAdapter,
    SpeakerEmbedderAdapter,
    VocoderAdapter,
)

__all__ = [
    "AdapterManager",
    "AdapterSet",
    "get_adapter_manager",
    "BaseAdapter",
    "ContentEncoderAdapter",
    "VocoderAdapter",
    "ASRAdapter",
    "PhonemizerAdapter",
    "SpeakerEmbedderAdapter",
]

"""Adapter manager for registering and instantiating model backends."""

import importlib
import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Type, Union

from ..config import ADAPTER_BACKENDS
from ..errors import AdapterError
from .base_adapter import (
    ASRAdapter,
    BaseAdapter,
    ContentEncoderAdapter,
    PhonemizerAdapter,
    SpeakerEmbedderAdapter,
    VocoderAdapter,
)

logger = logging.getLogger(__name__)

BackendTarget = Union[str, Type[BaseAdapter]]


class AdapterManager:
    """Maps backend ids to adapter classes and builds instances on demand."""

    def __init__(self, backends: Optional[Dict[str, BackendTarget]] = None):
        """Initialize the adapter manager.

        Args:
            backends: backend_id -> "module:Class" or class; defaults to config.ADAPTER_BACKENDS
        """
        self.backends: Dict[str, BackendTarget] = dict(backends or ADAPTER_BACKENDS)
        self.logger = logging.getLogger(__name__)

    def register_backend(self, backend_id: str, target: BackendTarget) -> None:
        """Register (or replace) a backend.

        Args:
            backend_id: Id used in config files
            target: Adapter class or "module:Class" import path
        """
        self.backends[backend_id.lower()] = target
        self.logger.info(f"Registered backend: {backend_id}")

    def unregister_backend(self, backend_id: str) -> bool:
        backend_id = backend_id.lower()
        if backend_id in self.backends:
            del self.backends[backend_id]
            self.logger.info(f"Unregistered backend: {backend_id}")
            return True
        return False

    def available_backends(self) -> Dict[str, BackendTarget]:
        return self.backends.copy()

    def resolve(self, backend_id: str) -> Type[BaseAdapter]:
        """Import the adapter class for a backend id."""
        key = backend_id.lower()
        if key not in self.backends:
            raise AdapterError(
                f"Unknown backend '{backend_id}'. Available backends: {sorted(self.backends)}",
                hint="register it with AdapterManager.register_backend or fix the config key",
            )
        target = self.backends[key]
        if not isinstance(target, str):
            return target
        module_path, _, class_name = target.partition(":")
        try:
            module = importlib.import_module(module_path)
            return getattr(module, class_name)
        except (ImportError, AttributeError) as e:
            raise AdapterError(f"Cannot load backend '{backend_id}' from {target}: {e}",
                               hint="check ADAPTER_BACKENDS in src/config.py") from e

    def create(self, backend_id: str, **options: Any) -> BaseAdapter:
        """Instantiate a backend.

        Args:
            backend_id: Registered backend id
            **options: Constructor options for the adapter

        Returns:
            Adapter instance
        """
        cls = self.resolve(backend_id)
        adapter = cls(**options)
        self.logger.info(f"Created {adapter.kind} backend '{backend_id}'")
        return adapter


@dataclass
class AdapterSet:
    """The external models one worker needs; any slot may be empty."""

    encoder: Optional[ContentEncoderAdapter] = None
    vocoder: Optional[VocoderAdapter] = None
    asr: Optional[ASRAdapter] = None
    phonemizer: Optional[PhonemizerAdapter] = None
    embedder: Optional[SpeakerEmbedderAdapter] = None

    def spawn(self) -> "AdapterSet":
        """Fresh instances of every adapter, for another worker."""
        return AdapterSet(**{
            slot: (adapter.spawn() if adapter is not None else None)
            for slot, adapter in vars(self).items()
        })

    def require(self, slot: str) -> BaseAdapter:
        adapter = getattr(self, slot)
        if adapter is None:
            raise AdapterError(f"No {slot} backend configured",
                               hint=f"set the {slot} backend in the config file")
        return adapter


# Global adapter manager instance
_adapter_manager_instance = None


def get_adapter_manager() -> AdapterManager:
    """Get the global adapter manager instance (singleton pattern).

    Returns:
        AdapterManager instance
    """
    global _adapter_manager_instance
    if _adapter_manager_instance is None:
        _adapter_manager_instance = AdapterManager()
    return _adapter_manager_instance

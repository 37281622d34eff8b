"""Single-file acoustic model checkpoints: the unit of pre-train -> fine-tune transfer.

Layout (all integers little-endian):
    b"XVCK", uint32 version
    uint32 length + UTF-8 TOML   configs ([acoustic], [dsp])
    uint32 tensor count, then per tensor:
        uint16 name length + UTF-8 name, uint8 ndim, uint32 dims..., float32 data
    uint32 length + UTF-8 TOML   metadata ([meta])
"""

import hashlib
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import toml
import torch

from .acoustic_model import AcousticConfig, AcousticModel
from .audio import DspConfig
from .containers import atomic_write_bytes
from .errors import ContractViolation, DecodeError, IncompatibleCheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"XVCK"
CHECKPOINT_VERSION = 1


@dataclass
class TrainMeta:
    phase: str
    step: int
    seed: int
    source_manifest_hash: str
    parent_checkpoint_hash: Optional[str] = None
    feature_transform: str = "raw"
    regulator_mode: str = "nearest"
    regulate_after_encoder: bool = True

    def __post_init__(self):
        if (self.phase == "finetune") != (self.parent_checkpoint_hash is not None):
            raise ContractViolation("parent_checkpoint_hash must be set exactly when phase == 'finetune'")

    def to_dict(self) -> Dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class AcousticCheckpoint:
    params: Dict[str, np.ndarray]
    config: AcousticConfig
    dsp: DspConfig
    train_meta: TrainMeta
    _hash: Optional[str] = field(default=None, repr=False, compare=False)

    @classmethod
    def from_model(cls, model: AcousticModel, dsp: DspConfig, meta: TrainMeta) -> "AcousticCheckpoint":
        params = {name: tensor.detach().cpu().numpy().astype(np.float32).copy()
                  for name, tensor in model.state_dict().items()}
        return cls(params=params, config=model.cfg, dsp=dsp, train_meta=meta)

    def to_model(self) -> AcousticModel:
        """Rebuild the model; shapes must match the stored config."""
        model = AcousticModel(self.config)
        expected = model.state_dict()
        for name, tensor in expected.items():
            if name not in self.params:
                raise IncompatibleCheckpointError(f"Checkpoint lacks parameter '{name}'")
            if tuple(self.params[name].shape) != tuple(tensor.shape):
                raise IncompatibleCheckpointError(
                    f"Parameter '{name}' has shape {self.params[name].shape}, model expects {tuple(tensor.shape)}"
                )
        extra = set(self.params) - set(expected)
        if extra:
            raise IncompatibleCheckpointError(f"Checkpoint has unknown parameters: {sorted(extra)}")
        model.load_state_dict({name: torch.from_numpy(self.params[name].copy()) for name in expected})
        return model

    def to_bytes(self) -> bytes:
        chunks = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
        chunks.append(_text_block({"acoustic": self.config.to_dict(), "dsp": self.dsp.to_dict()}))
        chunks.append(struct.pack("<I", len(self.params)))
        for name, array in self.params.items():
            encoded = name.encode("utf-8")
            chunks.append(struct.pack("<H", len(encoded)) + encoded)
            chunks.append(struct.pack("<B", array.ndim))
            chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
            chunks.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
        chunks.append(_text_block({"meta": self.train_meta.to_dict()}))
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, payload: bytes) -> "AcousticCheckpoint":
        reader = _Reader(payload)
        if reader.take(4) != CHECKPOINT_MAGIC:
            raise DecodeError("Not an acoustic checkpoint (bad magic)")
        (version,) = reader.unpack("<I")
        if version != CHECKPOINT_VERSION:
            raise DecodeError(f"Unsupported checkpoint version {version}")
        configs = reader.text_block()
        (count,) = reader.unpack("<I")
        params = {}
        for _ in range(count):
            (name_len,) = reader.unpack("<H")
            name = reader.take(name_len).decode("utf-8")
            (ndim,) = reader.unpack("<B")
            shape = reader.unpack(f"<{ndim}I") if ndim else ()
            size = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(reader.take(size * 4), dtype="<f4").astype(np.float32)
            params[name] = data.reshape(shape)
        meta = reader.text_block()
        if not reader.exhausted:
            raise DecodeError("Trailing bytes after checkpoint metadata")
        try:
            return cls(
                params=params,
                config=AcousticConfig.from_dict(configs["acoustic"]),
                dsp=DspConfig.from_dict(configs["dsp"]),
                train_meta=TrainMeta(**meta["meta"]),
                _hash=hashlib.sha256(payload).hexdigest(),
            )
        except (KeyError, TypeError) as e:
            raise DecodeError(f"Malformed checkpoint metadata: {e}") from e

    @property
    def checkpoint_hash(self) -> str:
        if self._hash is None:
            self._hash = hashlib.sha256(self.to_bytes()).hexdigest()
        return self._hash

    def save(self, path: Union[str, Path]) -> Path:
        payload = self.to_bytes()
        self._hash = hashlib.sha256(payload).hexdigest()
        atomic_write_bytes(path, payload)
        logger.info("Saved checkpoint", extra={"path": str(path), "phase": self.train_meta.phase,
                                               "step": self.train_meta.step, "hash": self._hash})
        return Path(path)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "AcousticCheckpoint":
        try:
            payload = Path(path).read_bytes()
        except OSError as e:
            raise DecodeError(f"Could not read checkpoint {path}: {e}") from e
        return cls.from_bytes(payload)


def _text_block(document: Dict) -> bytes:
    encoded = toml.dumps(document).encode("utf-8")
    return struct.pack("<I", len(encoded)) + encoded


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    @property
    def exhausted(self) -> bool:
        return self.offset == len(self.payload)

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.payload):
            raise DecodeError("Checkpoint is truncated")
        chunk = self.payload[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text_block(self) -> Dict:
        (length,) = self.unpack("<I")
        try:
            return toml.loads(self.take(length).decode("utf-8"))
        except (UnicodeDecodeError, toml.TomlDecodeError) as e:
            raise DecodeError(f"Malformed checkpoint text block: {e}") from e

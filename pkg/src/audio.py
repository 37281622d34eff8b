"""Audio I/O, resampling and log-mel extraction shared by training and evaluation."""

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from math import gcd
from pathlib import Path
from typing import Any, Dict, Union

import librosa
import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from .config import DSP_PRESETS
from .errors import ConfigError, DecodeError, EmptyInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DspConfig:
    """Mel front-end parameters; serialized into checkpoints and cache keys."""

    sample_rate: int
    n_fft: int
    win_length: int
    hop_length: int
    n_mels: int
    fmin: float = 0.0
    fmax: float = 0.0
    log_floor: float = 1e-5
    mel_norm: str = "slaney"

    def __post_init__(self):
        if not self.hop_length <= self.win_length <= self.n_fft:
            raise ConfigError(
                f"Need hop_length <= win_length <= n_fft, got "
                f"{self.hop_length}/{self.win_length}/{self.n_fft}"
            )
        if self.n_mels < 1:
            raise ConfigError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.log_floor <= 0:
            raise ConfigError(f"log_floor must be > 0, got {self.log_floor}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        # fmax=0 means Nyquist
        if self.fmax == 0.0:
            object.__setattr__(self, "fmax", self.sample_rate / 2.0)
        if not 0.0 <= self.fmin < self.fmax <= self.sample_rate / 2.0:
            raise ConfigError(f"Need 0 <= fmin < fmax <= sample_rate/2, got {self.fmin}/{self.fmax}")
        if self.mel_norm not in ("slaney", "none"):
            raise ConfigError(f"mel_norm must be 'slaney' or 'none', got {self.mel_norm}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "DspConfig":
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"Bad DSP config: {e}") from e

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def mel_config_16k() -> DspConfig:
    """LJSpeech setup: 16 kHz, 128 mel bands, 20 ms hop."""
    return DspConfig(**DSP_PRESETS["16k"])


def mel_config_22k() -> DspConfig:
    """22050 Hz setup: 80 mel bands, n_fft/window 1024, hop 256."""
    return DspConfig(**DSP_PRESETS["22k"])


@dataclass
class AudioClip:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    channel_count: int = 1

    @property
    def duration(self) -> float:
        return len(self.samples) / float(self.sample_rate)

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class MelSpectrogram:
    """Log-mel matrix of shape (T_mel, n_mels) plus the parameters that produced it."""

    frames: np.ndarray
    n_mels: int
    hop_length: int
    win_length: int
    n_fft: int
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    def matches(self, cfg: DspConfig) -> bool:
        return (
            self.n_mels == cfg.n_mels
            and self.hop_length == cfg.hop_length
            and self.win_length == cfg.win_length
            and self.n_fft == cfg.n_fft
            and self.sample_rate == cfg.sample_rate
        )

    @classmethod
    def from_frames(cls, frames: np.ndarray, cfg: DspConfig) -> "MelSpectrogram":
        return cls(
            frames=np.ascontiguousarray(frames, dtype=np.float32),
            n_mels=cfg.n_mels,
            hop_length=cfg.hop_length,
            win_length=cfg.win_length,
            n_fft=cfg.n_fft,
            sample_rate=cfg.sample_rate,
        )


def resample(samples: np.ndarray, source_rate: int, target_rate: int) -> np.ndarray:
    """Windowed-sinc polyphase resampling (Kaiser window)."""
    if source_rate == target_rate:
        return samples
    divisor = gcd(int(source_rate), int(target_rate))
    up, down = target_rate // divisor, source_rate // divisor
    return resample_poly(samples.astype(np.float64), up, down).astype(np.float32)


def load_audio(path: Union[str, Path], target_rate: int) -> AudioClip:
    """Load a WAV file as a mono clip at ``target_rate``.

    Args:
        path: Audio file (PCM 16-bit or float32 WAV)
        target_rate: Output sample rate in Hz

    Returns:
        Mono AudioClip; multi-channel input is averaged, other rates are resampled
    """
    try:
        data, source_rate = sf.read(str(path), dtype="float32", always_2d=True)
    except (RuntimeError, sf.LibsndfileError, OSError) as e:
        raise DecodeError(f"Could not decode {path}: {e}") from e

    if data.shape[0] == 0:
        raise EmptyInputError(f"Audio file {path} contains no samples")

    samples = data.mean(axis=1) if data.shape[1] > 1 else data[:, 0]
    if source_rate != target_rate:
        logger.debug("Resampling audio", extra={"path": str(path), "from_rate": source_rate,
                                                 "to_rate": target_rate})
        samples = resample(samples, source_rate, target_rate)

    if not np.all(np.isfinite(samples)):
        raise DecodeError(f"Audio file {path} contains non-finite samples")
    samples = np.clip(samples, -1.0, 1.0).astype(np.float32)
    return AudioClip(samples=samples, sample_rate=int(target_rate))


def save_wav(clip: AudioClip, path: Union[str, Path]) -> Path:
    """Write a clip as 16-bit PCM WAV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.clip(clip.samples, -1.0, 1.0), clip.sample_rate, subtype="PCM_16")
    return path


@lru_cache(maxsize=16)
def mel_filterbank(cfg: DspConfig) -> np.ndarray:
    """Mel filterbank of shape (n_mels, 1 + n_fft // 2); read-only, shared."""
    basis = librosa.filters.mel(
        sr=cfg.sample_rate,
        n_fft=cfg.n_fft,
        n_mels=cfg.n_mels,
        fmin=cfg.fmin,
        fmax=cfg.fmax,
        norm="slaney" if cfg.mel_norm == "slaney" else None,
    ).astype(np.float64)
    basis.setflags(write=False)
    return basis


def magnitude_spectrogram(samples: np.ndarray, cfg: DspConfig) -> np.ndarray:
    """Centered, reflection-padded STFT magnitude of shape (1 + n_fft // 2, T)."""
    spectrum = librosa.stft(
        samples.astype(np.float64),
        n_fft=cfg.n_fft,
        hop_length=cfg.hop_length,
        win_length=cfg.win_length,
        window="hann",
        center=True,
        pad_mode="reflect",
    )
    return np.abs(spectrum)


def compute_mel(clip: AudioClip, cfg: DspConfig) -> MelSpectrogram:
    """Log-mel spectrogram, log(max(mel magnitude, log_floor)).

    Args:
        clip: Input audio at cfg.sample_rate
        cfg: Front-end parameters

    Returns:
        MelSpectrogram with 1 + len // hop frames
    """
    if clip.sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"Clip sample rate {clip.sample_rate} does not match DSP config rate {cfg.sample_rate}"
        )
    if len(clip.samples) == 0:
        raise EmptyInputError("Cannot compute a mel spectrogram of an empty clip")

    magnitude = magnitude_spectrogram(clip.samples, cfg)
    mel = mel_filterbank(cfg) @ magnitude
    log_mel = np.log(np.maximum(mel, cfg.log_floor))
    return MelSpectrogram.from_frames(log_mel.T, cfg)

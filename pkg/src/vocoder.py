"""Mel-to-waveform conversion through a vocoder adapter, with a Griffin-Lim fallback."""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import librosa
import numpy as np

from .audio import AudioClip, DspConfig, MelSpectrogram, magnitude_spectrogram, mel_filterbank
from .errors import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

DEFAULT_FALLBACK_ITERATIONS = 32


@dataclass(frozen=True)
class VocoderSpec:
    """Which vocoder to run and the mel front-end it was trained on."""

    backend_id: str
    expected_dsp: DspConfig
    output_rate: int

    def __post_init__(self):
        if self.output_rate != self.expected_dsp.sample_rate:
            raise ConfigError(
                f"Vocoder output rate {self.output_rate} differs from its mel rate "
                f"{self.expected_dsp.sample_rate}"
            )


@lru_cache(maxsize=16)
def _inverse_filterbank(cfg: DspConfig) -> np.ndarray:
    inverse = np.linalg.pinv(mel_filterbank(cfg))
    inverse.setflags(write=False)
    return inverse


def _dsp_from_mel(mel: MelSpectrogram) -> DspConfig:
    return DspConfig(sample_rate=mel.sample_rate, n_fft=mel.n_fft, win_length=mel.win_length,
                     hop_length=mel.hop_length, n_mels=mel.n_mels)


def mel_to_magnitude(mel: MelSpectrogram, dsp: DspConfig) -> np.ndarray:
    """Approximate linear STFT magnitude (freq x T) via the filterbank pseudo-inverse."""
    mel_linear = np.exp(mel.frames.astype(np.float64)).T
    return np.maximum(_inverse_filterbank(dsp) @ mel_linear, 0.0)


def spectral_convergence(samples: np.ndarray, target_magnitude: np.ndarray, dsp: DspConfig) -> float:
    """||  |STFT(x)| - S  ||_F / || S ||_F over the common frames."""
    rebuilt = magnitude_spectrogram(samples, dsp)
    frames = min(rebuilt.shape[1], target_magnitude.shape[1])
    diff = rebuilt[:, :frames] - target_magnitude[:, :frames]
    denom = np.linalg.norm(target_magnitude[:, :frames])
    return float(np.linalg.norm(diff) / denom) if denom > 0 else float(np.linalg.norm(diff))


def vocode_fallback(mel: MelSpectrogram, iterations: int = DEFAULT_FALLBACK_ITERATIONS,
                    dsp: Optional[DspConfig] = None) -> AudioClip:
    """Deterministic mel inversion: pseudo-inverse filterbank, then Griffin-Lim.

    Phase starts at zero and momentum is off, so the output is a pure function
    of the input.

    Args:
        mel: Log-mel spectrogram
        iterations: Griffin-Lim iterations (>= 1)
        dsp: Front-end the mel was computed with (rebuilt from the mel's fields if omitted)

    Returns:
        AudioClip of exactly T_mel * hop samples
    """
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    if mel.frames.ndim != 2 or mel.frames.shape[1] != mel.n_mels or mel.num_frames < 1:
        raise ContractViolation(f"Bad mel shape {mel.frames.shape} for n_mels={mel.n_mels}")
    dsp = dsp or _dsp_from_mel(mel)

    magnitude = mel_to_magnitude(mel, dsp)
    samples = librosa.griffinlim(
        magnitude,
        n_iter=iterations,
        hop_length=dsp.hop_length,
        win_length=dsp.win_length,
        n_fft=dsp.n_fft,
        window="hann",
        center=True,
        pad_mode="reflect",
        length=mel.num_frames * dsp.hop_length,
        momentum=0.0,
        init=None,
    )
    samples = np.clip(samples, -1.0, 1.0).astype(np.float32)
    return AudioClip(samples=samples, sample_rate=dsp.sample_rate)


def vocode(mel: MelSpectrogram, spec: VocoderSpec, backend) -> AudioClip:
    """Run a vocoder adapter on a predicted mel spectrogram.

    Output within one hop of T_mel * hop is trimmed or zero-padded to exactly
    that length; anything further off means the vocoder and the mel front-end
    disagree and is rejected.

    Args:
        mel: Log-mel spectrogram matching spec.expected_dsp
        spec: Vocoder spec
        backend: Vocoder adapter

    Returns:
        AudioClip at spec.output_rate with T_mel * hop samples, amplitudes in [-1, 1]
    """
    if not mel.matches(spec.expected_dsp):
        raise ContractViolation(
            f"Mel parameters (n_mels={mel.n_mels}, hop={mel.hop_length}, rate={mel.sample_rate}) "
            f"do not match vocoder '{spec.backend_id}'"
        )
    declared = backend.front_end(spec.expected_dsp)
    if declared != spec.expected_dsp:
        raise ContractViolation(
            f"Vocoder '{spec.backend_id}' was trained on hop {declared.hop_length} / "
            f"{declared.n_mels} mels at {declared.sample_rate} Hz, pipeline expects hop "
            f"{spec.expected_dsp.hop_length} / {spec.expected_dsp.n_mels} mels at {spec.expected_dsp.sample_rate} Hz"
        )
    samples = np.asarray(backend.safe_call("synthesize", mel, spec.expected_dsp), dtype=np.float32)

    expected = mel.num_frames * mel.hop_length
    if abs(len(samples) - expected) > mel.hop_length:
        raise ContractViolation(
            f"Vocoder '{spec.backend_id}' returned {len(samples)} samples for {mel.num_frames} frames "
            f"at hop {mel.hop_length} (expected {expected})"
        )
    if len(samples) != expected:
        logger.debug("Fitting vocoder output to T_mel * hop",
                     extra={"backend": spec.backend_id, "samples": len(samples), "expected": expected})
        samples = samples[:expected] if len(samples) > expected else np.pad(samples, (0, expected - len(samples)))

    return AudioClip(samples=np.clip(samples, -1.0, 1.0), sample_rate=spec.output_rate)

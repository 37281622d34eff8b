"""Shared fixtures: synthetic voices on disk and desk-scale configs."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest
import soundfile as sf

# Add the repo root to path so ``src`` imports as a package
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.acoustic_model import AcousticConfig
from src.adapters import AdapterSet
from src.adapters.builtin_adapters import (
    CharacterPhonemizer,
    GriffinLimVocoder,
    SidecarASR,
    SpectralEmbedder,
    SyntheticEncoder,
)
from src.audio import DspConfig
from src.config import DSP_PRESETS
from src.features import ContentEncoderSpec
from src.manifest import DatasetManifest, ManifestEntry
from src.training import TrainConfig, TrainContext

SAMPLE_RATE = 16000
TINY_DIM = 16


def voice(seconds: float, f0: float, seed: int, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Harmonic 'voice' with vibrato, a syllable-like envelope and a little noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(seconds * rate))) / rate
    pitch = f0 * (1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t))
    phase = 2 * np.pi * np.cumsum(pitch) / rate
    harmonics = sum((0.6 / k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi)) for k in range(1, 6))
    envelope = 0.5 + 0.5 * np.sin(2 * np.pi * rng.uniform(2, 4) * t) ** 2
    signal = 0.3 * envelope * harmonics + 0.005 * rng.standard_normal(len(t))
    return np.clip(signal, -1.0, 1.0).astype(np.float32)


def write_wav(path: Path, samples: np.ndarray, rate: int = SAMPLE_RATE) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), samples, rate, subtype="FLOAT")
    return path


def make_corpus(root: Path, speaker: str, count: int, f0: float, language: str = "en",
                seconds: float = 0.6, seed: int = 0, words=("hello", "world", "again")) -> DatasetManifest:
    """Write ``count`` utterances (plus sidecar transcripts) and return their manifest."""
    entries = []
    for i in range(count):
        uid = f"{speaker}_{i:03d}"
        duration = seconds + 0.04 * (i % 3)
        samples = voice(duration, f0 * (1.0 + 0.02 * i), seed + 97 * i)
        write_wav(root / f"{uid}.wav", samples)
        transcript = " ".join(words[(i + k) % len(words)] for k in range(2))
        (root / f"{uid}.txt").write_text(transcript, encoding="utf-8")
        entries.append(ManifestEntry(utterance_id=uid, audio_path=f"{uid}.wav", speaker_id=speaker,
                                     language_tag=language, duration_sec=len(samples) / SAMPLE_RATE,
                                     transcript=transcript))
    return DatasetManifest(entries=entries, root=root)


@pytest.fixture
def tiny_dsp() -> DspConfig:
    return DspConfig(**DSP_PRESETS["tiny"])


@pytest.fixture
def tiny_acoustic() -> AcousticConfig:
    return AcousticConfig.preset("tiny")


@pytest.fixture
def tiny_encoder_spec() -> ContentEncoderSpec:
    return ContentEncoderSpec(backend_id="synthetic", layer_index=0, expected_dim=TINY_DIM)


@pytest.fixture
def adapters() -> AdapterSet:
    return AdapterSet(
        encoder=SyntheticEncoder(dim=TINY_DIM),
        vocoder=GriffinLimVocoder(iterations=4),
        asr=SidecarASR(),
        phonemizer=CharacterPhonemizer(),
        embedder=SpectralEmbedder(),
    )


@pytest.fixture
def tiny_context(tiny_dsp, tiny_encoder_spec) -> TrainContext:
    return TrainContext(dsp=tiny_dsp, encoder_spec=tiny_encoder_spec)


@pytest.fixture
def fast_train() -> TrainConfig:
    return TrainConfig(batch_size=4, max_steps=20, learning_rate=3e-3, weight_decay=0.0, warmup_steps=0,
                       seed=7, grad_clip_norm=1.0, phase="standard", schedule="constant")


@pytest.fixture
def speaker_a(tmp_path) -> DatasetManifest:
    return make_corpus(tmp_path / "spk_a", "spk_a", count=3, f0=120.0, language="zh", seed=1)


@pytest.fixture
def speaker_b(tmp_path) -> DatasetManifest:
    return make_corpus(tmp_path / "spk_b", "spk_b", count=2, f0=210.0, language="en", seed=2)

"""Configuration settings for the voice conversion toolkit."""

from pathlib import Path
from typing import Any, Dict, Optional

import toml

from .errors import ConfigError

CONFIG_DIR = Path(__file__).parent.parent / "configs"
DEFAULT_CACHE_DIR = Path(__file__).parent.parent / "cache"

# Mel front-ends. "22k" is the 22050 Hz emotional-speech setup, "16k" the LJSpeech one.
DSP_PRESETS = {
    "16k": {
        "sample_rate": 16000,
        "n_fft": 1280,          # 22k window/hop ratio carried over to hop 320
        "win_length": 1280,
        "hop_length": 320,      # 20 ms, same stride as the content encoder
        "n_mels": 128,
        "fmin": 0.0,
        "fmax": 8000.0,
        "log_floor": 1e-5,
        "mel_norm": "slaney",
    },
    "16k_h160": {          # front-end of the pretrained 16 kHz HiFi-GAN
        "sample_rate": 16000,
        "n_fft": 1024,
        "win_length": 1024,
        "hop_length": 160,      # 10 ms, two mel frames per content-encoder frame
        "n_mels": 128,
        "fmin": 0.0,
        "fmax": 8000.0,
        "log_floor": 1e-5,
        "mel_norm": "slaney",
    },
    "22k": {
        "sample_rate": 22050,
        "n_fft": 1024,
        "win_length": 1024,
        "hop_length": 256,
        "n_mels": 80,
        "fmin": 0.0,
        "fmax": 11025.0,
        "log_floor": 1e-5,
        "mel_norm": "slaney",
    },
    "tiny": {
        "sample_rate": 16000,
        "n_fft": 640,
        "win_length": 640,
        "hop_length": 320,
        "n_mels": 16,
        "fmin": 0.0,
        "fmax": 8000.0,
        "log_floor": 1e-5,
        "mel_norm": "slaney",
    },
}

ACOUSTIC_PRESETS = {
    "full": {
        "s": 1024,
        "d": 256,               # bottleneck
        "prenet_units": 256,
        "prenet_layers": 2,
        "prenet_dropout": 0.5,
        "enc_channels": 512,
        "enc_layers": 3,
        "enc_kernel": 5,
        "dec_lstm_units": 768,
        "dec_lstm_layers": 3,
        "n_mels": 128,
        "init_seed": 1234,
    },
    "tiny": {
        "s": 16,
        "d": 8,
        "prenet_units": 32,
        "prenet_layers": 2,
        "prenet_dropout": 0.0,  # smoke runs want exact reproducibility of teacher forcing
        "enc_channels": 32,
        "enc_layers": 3,
        "enc_kernel": 5,
        "dec_lstm_units": 64,
        "dec_lstm_layers": 2,
        "n_mels": 16,
        "init_seed": 1234,
    },
}

TRAIN_PRESETS = {
    "standard": {
        "batch_size": 32,
        "max_steps": 200000,
        "learning_rate": 1e-4,
        "weight_decay": 0.01,
        "warmup_steps": 4000,
        "seed": 1234,
        "grad_clip_norm": 1.0,
        "phase": "standard",
        "schedule": "warmup_linear",
    },
    "pretrain": {
        "batch_size": 32,
        "max_steps": 200000,
        "learning_rate": 1e-4,
        "weight_decay": 0.01,
        "warmup_steps": 4000,
        "seed": 1234,
        "grad_clip_norm": 1.0,
        "phase": "pretrain",
        "schedule": "warmup_linear",
    },
    "finetune": {
        "batch_size": 8,
        "max_steps": 15000,
        "learning_rate": 1e-4,
        "weight_decay": 0.01,
        "warmup_steps": 0,
        "seed": 1234,
        "grad_clip_norm": 1.0,
        "phase": "finetune",
        "schedule": "constant",
    },
}

# Content encoder defaults; layer 15 of WavLM-Large at a 20 ms stride.
ENCODER_CONFIG = {
    "backend_id": "wavlm",
    "layer_index": 15,
    "expected_dim": 1024,
}

VOCODER_CONFIG = {
    "backend_id": "griffinlim",  # inverts any front-end
    "fallback_iterations": 32,
}

# backend_id -> "module:Class", resolved by the adapter manager
ADAPTER_BACKENDS = {
    "synthetic": "src.adapters.builtin_adapters.synthetic_encoder:SyntheticEncoder",
    "wavlm": "src.adapters.builtin_adapters.wavlm_encoder:WavLMEncoder",
    "griffinlim": "src.adapters.builtin_adapters.griffinlim_vocoder:GriffinLimVocoder",
    "hifigan": "src.adapters.builtin_adapters.hifigan_vocoder:HifiGanVocoder",
    "sidecar": "src.adapters.builtin_adapters.sidecar_asr:SidecarASR",
    "whisper": "src.adapters.builtin_adapters.whisper_asr:WhisperASR",
    "funasr": "src.adapters.builtin_adapters.funasr_asr:FunASR",
    "characters": "src.adapters.builtin_adapters.phonemizers:CharacterPhonemizer",
    "espeak": "src.adapters.builtin_adapters.phonemizers:EspeakPhonemizer",
    "spectral": "src.adapters.builtin_adapters.spectral_embedder:SpectralEmbedder",
    "speechbrain": "src.adapters.builtin_adapters.speechbrain_embedder:SpeechBrainEmbedder",
    "resemblyzer": "src.adapters.builtin_adapters.resemblyzer_embedder:ResemblyzerEmbedder",
}

PIPELINE_CONFIG = {
    "regulator_mode": "nearest",
    "regulate_after_encoder": True,  # False: interpolate raw SSL features before the pre-net
    "feature_transform": "raw",
    "codebook_path": None,
    "inference_seed": 0,
    "workers": 1,
}

EVAL_CONFIG = {
    "asr_backend": "sidecar",
    "phonemizer_backend": "characters",
    "embedding_backend": "spectral",
    "reference_mode": "asr",        # "asr": ASR on source audio, "transcript": manifest text
    "target_utterances": 50,
    "kmeans_clusters": 100,
}

# CLI colors
COLORS = {
    "green": "\033[92m",
    "yellow": "\033[93m",
    "blue": "\033[94m",
    "magenta": "\033[95m",
    "cyan": "\033[96m",
    "white": "\033[97m",
    "red": "\033[91m",
    "reset": "\033[0m",
    "bold": "\033[1m",
}


def load_toml(path: Path) -> Dict[str, Any]:
    """Read a TOML config file.

    Args:
        path: Path to the file

    Returns:
        Parsed document
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return toml.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except toml.TomlDecodeError as e:
        raise ConfigError(f"Malformed config file {path}: {e}") from e


def section(document: Dict[str, Any], name: str, presets: Dict[str, Dict[str, Any]],
            default_preset: str) -> Dict[str, Any]:
    """Resolve one config table, layering its keys over a named preset.

    Args:
        document: Parsed TOML document
        name: Table name ("dsp", "acoustic", ...)
        presets: Preset dictionary to start from
        default_preset: Preset used when the table names none

    Returns:
        Flat dictionary of values
    """
    table = dict(document.get(name, {}))
    preset_name = table.pop("preset", default_preset)
    if preset_name not in presets:
        raise ConfigError(f"Unknown {name} preset '{preset_name}'. Available: {sorted(presets)}")
    values = dict(presets[preset_name])
    unknown = set(table) - set(values)
    if unknown:
        raise ConfigError(f"Unknown keys in [{name}]: {sorted(unknown)}")
    values.update(table)
    return values


def merged(document: Dict[str, Any], name: str, defaults: Dict[str, Any]) -> Dict[str, Any]:
    """Layer a config table over a flat defaults dict."""
    values = dict(defaults)
    table = document.get(name, {})
    unknown = set(table) - set(values)
    if unknown:
        raise ConfigError(f"Unknown keys in [{name}]: {sorted(unknown)}")
    values.update(table)
    return values


def resolve_config_path(path: Optional[str]) -> Optional[Path]:
    """Accept either a path or the bare name of a shipped config ("lj16k")."""
    if path is None:
        return None
    candidate = Path(path)
    if candidate.exists():
        return candidate
    shipped = CONFIG_DIR / f"{path}.toml"
    if shipped.exists():
        return shipped
    raise ConfigError(f"Config file not found: {path}")

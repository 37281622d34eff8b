"""Typed settings for one CLI run, assembled from a TOML file layered over the presets."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from .acoustic_model import AcousticConfig
from .adapters import AdapterSet, VocoderAdapter, get_adapter_manager
from .audio import DspConfig
from .config import (
    ACOUSTIC_PRESETS,
    DSP_PRESETS,
    ENCODER_CONFIG,
    EVAL_CONFIG,
    PIPELINE_CONFIG,
    TRAIN_PRESETS,
    VOCODER_CONFIG,
    load_toml,
    merged,
    resolve_config_path,
    section,
)
from .errors import ConfigError
from .features import ContentEncoderSpec, KMeansCodebook
from .pipeline import PipelineConfig
from .training import TrainConfig, TrainContext
from .vocoder import VocoderSpec

logger = logging.getLogger(__name__)

# Tables a config file may contain
KNOWN_TABLES = {"dsp", "acoustic", "train", "encoder", "vocoder", "pipeline", "eval", "data"}

DATA_DEFAULTS = {
    "budget_hours": 0.0,          # 0: use the whole manifest
    "selection": "shortest_first",
    "cache_dir": "",
}


def _split_options(document: Dict[str, Any], name: str) -> Dict[str, Any]:
    table = dict(document.get(name, {}))
    options = table.pop("options", {})
    document[name] = table
    return dict(options)


@dataclass
class RunConfig:
    dsp: DspConfig
    acoustic: AcousticConfig
    train: TrainConfig
    encoder_spec: ContentEncoderSpec
    encoder_options: Dict[str, Any] = field(default_factory=dict)
    vocoder_backend: str = "griffinlim"
    vocoder_options: Dict[str, Any] = field(default_factory=dict)
    pipeline: Dict[str, Any] = field(default_factory=lambda: dict(PIPELINE_CONFIG))
    evaluation: Dict[str, Any] = field(default_factory=lambda: dict(EVAL_CONFIG))
    data: Dict[str, Any] = field(default_factory=lambda: dict(DATA_DEFAULTS))
    document: Dict[str, Any] = field(default_factory=dict, repr=False)
    source: Optional[Path] = None

    @classmethod
    def from_document(cls, document: Dict[str, Any], train_preset: str = "standard",
                      source: Optional[Path] = None) -> "RunConfig":
        """Resolve every table of a parsed config.

        Args:
            document: Parsed TOML
            train_preset: Preset for [train] when the table names none
            source: File the document came from, for messages
        """
        unknown = set(document) - KNOWN_TABLES
        if unknown:
            raise ConfigError(f"Unknown tables in {source or 'config'}: {sorted(unknown)}")
        document = {k: dict(v) for k, v in document.items()}
        encoder_options = _split_options(document, "encoder")
        vocoder_options = _split_options(document, "vocoder")

        dsp = DspConfig(**section(document, "dsp", DSP_PRESETS, "16k"))
        acoustic = AcousticConfig(**section(document, "acoustic", ACOUSTIC_PRESETS, "full"))
        train = TrainConfig(**section(document, "train", TRAIN_PRESETS, train_preset))
        encoder = merged(document, "encoder", ENCODER_CONFIG)
        vocoder = merged(document, "vocoder", VOCODER_CONFIG)

        if vocoder["backend_id"] == "griffinlim":
            vocoder_options.setdefault("sample_rate", dsp.sample_rate)
            vocoder_options.setdefault("iterations", vocoder["fallback_iterations"])

        return cls(
            dsp=dsp,
            acoustic=acoustic,
            train=train,
            encoder_spec=ContentEncoderSpec(**encoder),
            encoder_options=encoder_options,
            vocoder_backend=vocoder["backend_id"],
            vocoder_options=vocoder_options,
            pipeline=merged(document, "pipeline", PIPELINE_CONFIG),
            evaluation=merged(document, "eval", EVAL_CONFIG),
            data=merged(document, "data", DATA_DEFAULTS),
            document=document,
            source=source,
        )

    @classmethod
    def load(cls, path: Optional[Union[str, Path]], train_preset: str = "standard") -> "RunConfig":
        """Load a config file (or a shipped config name); ``None`` means presets only."""
        resolved = resolve_config_path(str(path)) if path is not None else None
        document = load_toml(resolved) if resolved is not None else {}
        config = cls.from_document(document, train_preset, resolved)
        logger.info("Loaded config", extra={"path": str(resolved) if resolved else None,
                                            "dsp_hash": config.dsp.config_hash()})
        return config

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        values = self.train.to_dict()
        values["seed"] = seed
        self.train = TrainConfig(**values)
        self.pipeline = {**self.pipeline, "inference_seed": seed}
        return self

    def train_context(self, cache_dir: Optional[Union[str, Path]] = None, codebook=None,
                      show_progress: bool = False) -> TrainContext:
        cache = cache_dir or self.data["cache_dir"] or None
        if codebook is None and self.pipeline["codebook_path"]:
            codebook = KMeansCodebook.load(self.pipeline["codebook_path"])
        return TrainContext(
            dsp=self.dsp,
            encoder_spec=self.encoder_spec,
            cache_dir=Path(cache) if cache else None,
            transform=self.pipeline["feature_transform"],
            codebook=codebook,
            regulator_mode=self.pipeline["regulator_mode"],
            regulate_after_encoder=self.pipeline["regulate_after_encoder"],
            workers=self.pipeline["workers"],
            show_progress=show_progress,
        )

    def vocoder_spec(self, vocoder: Optional[VocoderAdapter] = None) -> VocoderSpec:
        """Spec of the configured vocoder, carrying the mel front-end the adapter declares."""
        if vocoder is None:
            vocoder = get_adapter_manager().create(self.vocoder_backend, **self.vocoder_options)
        expected = vocoder.front_end(self.dsp)
        return VocoderSpec(backend_id=self.vocoder_backend, expected_dsp=expected,
                           output_rate=expected.sample_rate)

    def pipeline_config(self, checkpoint: Union[str, Path],
                        vocoder: Optional[VocoderAdapter] = None) -> PipelineConfig:
        table = self.document.get("pipeline", {})
        return PipelineConfig(
            encoder_spec=self.encoder_spec,
            acoustic_checkpoint=Path(checkpoint),
            vocoder_spec=self.vocoder_spec(vocoder),
            dsp=self.dsp,
            regulator_mode=self.pipeline["regulator_mode"],
            transform=table.get("feature_transform"),
            regulate_after_encoder=table.get("regulate_after_encoder"),
            codebook_path=self.pipeline["codebook_path"] or None,
            inference_seed=self.pipeline["inference_seed"],
        )

    def build_adapters(self, slots: Iterable[str]) -> AdapterSet:
        """Instantiate the backends a command needs."""
        manager = get_adapter_manager()
        backends = {
            "encoder": (self.encoder_spec.backend_id, self.encoder_options),
            "vocoder": (self.vocoder_backend, self.vocoder_options),
            "asr": (self.evaluation["asr_backend"], {}),
            "phonemizer": (self.evaluation["phonemizer_backend"], {}),
            "embedder": (self.evaluation["embedding_backend"], {}),
        }
        adapters = AdapterSet()
        for slot in slots:
            backend_id, options = backends[slot]
            setattr(adapters, slot, manager.create(backend_id, **options))
        return adapters

"""End-to-end conversion: content encoder -> acoustic model -> vocoder."""

import json
import logging
import threading
from contextlib import contextmanager
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

from tqdm import tqdm

from .acoustic_model import acoustic_forward
from .audio import AudioClip, DspConfig, load_audio, resample, save_wav
from .checkpoint import AcousticCheckpoint
from .errors import ConfigError, InsufficientDataError, StageError, XVCError
from .features import ContentEncoderSpec, FeatureTransform, KMeansCodebook, apply_feature_transform, extract_features
from .length_regulator import RegulatorMode, mel_frames_for
from .manifest import DatasetManifest, ManifestEntry
from .run_log import StageTimer
from .vocoder import VocoderSpec, vocode

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """Encoder, checkpoint and vocoder that together make one conversion system.

    ``transform`` and ``regulate_after_encoder`` default to what the checkpoint
    was trained with.
    """

    encoder_spec: ContentEncoderSpec
    acoustic_checkpoint: Path
    vocoder_spec: VocoderSpec
    dsp: DspConfig
    regulator_mode: RegulatorMode = RegulatorMode.NEAREST
    transform: Optional[FeatureTransform] = None
    regulate_after_encoder: Optional[bool] = None
    codebook_path: Optional[Path] = None
    inference_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "acoustic_checkpoint", Path(self.acoustic_checkpoint))
        object.__setattr__(self, "regulator_mode", RegulatorMode(self.regulator_mode))
        if self.transform is not None:
            object.__setattr__(self, "transform", FeatureTransform(self.transform))
        if self.codebook_path is not None:
            object.__setattr__(self, "codebook_path", Path(self.codebook_path))
        if self.vocoder_spec.expected_dsp != self.dsp:
            raise ConfigError(
                f"Vocoder '{self.vocoder_spec.backend_id}' expects a different mel front-end than the pipeline"
            )

    def validate(self, checkpoint: AcousticCheckpoint) -> None:
        """Reject encoder/checkpoint/vocoder mismatches before any audio is touched."""
        if checkpoint.dsp != self.dsp:
            raise ConfigError(
                f"Checkpoint mel front-end {checkpoint.dsp.to_dict()} differs from pipeline {self.dsp.to_dict()}"
            )
        if self.encoder_spec.expected_dim != checkpoint.config.s:
            raise ConfigError(
                f"Encoder dimension {self.encoder_spec.expected_dim} differs from checkpoint s={checkpoint.config.s}"
            )


@dataclass
class BatchResult:
    outputs: List[Path] = field(default_factory=list)
    failures: List[Dict[str, str]] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failures)


class ConversionPipeline:
    """A loaded, validated conversion system; the checkpoint is shared across workers."""

    def __init__(self, cfg: PipelineConfig):
        checkpoint = AcousticCheckpoint.load(cfg.acoustic_checkpoint)
        cfg.validate(checkpoint)
        meta = checkpoint.train_meta

        transform = cfg.transform or FeatureTransform(meta.feature_transform)
        if transform.value != meta.feature_transform:
            logger.warning("Feature transform differs from the one the checkpoint was trained with",
                           extra={"checkpoint": meta.feature_transform, "pipeline": transform.value})
        after = meta.regulate_after_encoder if cfg.regulate_after_encoder is None else cfg.regulate_after_encoder

        self.codebook = None
        if transform is FeatureTransform.DISCRETIZE:
            if cfg.codebook_path is None:
                raise ConfigError("The 'discretize' feature transform needs pipeline.codebook_path")
            self.codebook = KMeansCodebook.load(cfg.codebook_path)
            if self.codebook.s != checkpoint.config.s:
                raise ConfigError(f"Codebook dimension {self.codebook.s} differs from checkpoint s")

        self.cfg = replace(cfg, transform=transform, regulate_after_encoder=after)
        self.checkpoint = checkpoint
        self.model = checkpoint.to_model().eval()
        self._model_lock = threading.Lock()

    def convert(self, source: AudioClip, adapters) -> AudioClip:
        """Convert one clip to the target voice; the clip's language is never consulted."""
        timer = StageTimer()
        encoder = adapters.require("encoder")
        vocoder = adapters.require("vocoder")
        cfg = self.cfg

        with _stage(timer, "feature"):
            clip = source
            if clip.sample_rate != encoder.sample_rate:
                clip = AudioClip(samples=resample(clip.samples, clip.sample_rate, encoder.sample_rate),
                                 sample_rate=encoder.sample_rate)
            features = extract_features(clip, cfg.encoder_spec, encoder)
            features = apply_feature_transform(features, cfg.transform, self.codebook)

        with _stage(timer, "acoustic"):
            output_len = mel_frames_for(features, cfg.dsp)
            # the dropout generator is reseeded per call, so calls must not interleave
            with self._model_lock:
                mel = acoustic_forward(features, self.model, output_len=output_len, dsp=cfg.dsp,
                                       mode=cfg.regulator_mode,
                                       regulate_after_encoder=cfg.regulate_after_encoder,
                                       seed=cfg.inference_seed)

        with _stage(timer, "vocoder"):
            converted = vocode(mel, cfg.vocoder_spec, vocoder)

        logger.info("conversion_timing", extra={**timer.timings, "source_sec": round(source.duration, 4),
                                                "output_sec": round(converted.duration, 4),
                                                "mel_frames": mel.num_frames})
        return converted


@contextmanager
def _stage(timer: StageTimer, name: str) -> Iterator[None]:
    """Times a stage and attributes any failure inside it to that stage."""
    with timer.stage(name):
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e


def convert(source: AudioClip, cfg: Union[PipelineConfig, ConversionPipeline], adapters) -> AudioClip:
    """Convert one clip; ``cfg`` may be an already loaded pipeline."""
    pipeline = cfg if isinstance(cfg, ConversionPipeline) else ConversionPipeline(cfg)
    return pipeline.convert(source, adapters)


def convert_batch(manifest: DatasetManifest, cfg: Union[PipelineConfig, ConversionPipeline], adapters,
                  out_dir: Union[str, Path], workers: int = 1) -> BatchResult:
    """Convert every manifest entry to ``<out_dir>/<utterance_id>.wav``.

    A failing entry is recorded and skipped. The converted files are listed in
    ``<out_dir>/manifest.jsonl`` and failures in ``<out_dir>/failures.jsonl``.

    Args:
        manifest: Source utterances
        cfg: Pipeline config or loaded pipeline
        adapters: AdapterSet with encoder and vocoder; spawned once per extra worker
        out_dir: Output directory
        workers: Parallel conversions

    Returns:
        BatchResult with output paths (manifest order) and failure records
    """
    if len(manifest) == 0:
        raise InsufficientDataError("Nothing to convert: the manifest is empty")
    pipeline = cfg if isinstance(cfg, ConversionPipeline) else ConversionPipeline(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    local = threading.local()

    def worker_adapters():
        if workers <= 1:
            return adapters
        if not hasattr(local, "adapters"):
            local.adapters = adapters.spawn()
        return local.adapters

    def run(entry: ManifestEntry) -> Tuple[ManifestEntry, Optional[AudioClip], Optional[Dict[str, str]]]:
        try:
            try:
                source = load_audio(manifest.resolve(entry), worker_adapters().require("encoder").sample_rate)
            except XVCError as e:
                raise StageError("load", e) from e
            converted = pipeline.convert(source, worker_adapters())
            save_wav(converted, out_dir / f"{entry.utterance_id}.wav")
            return entry, converted, None
        except XVCError as e:
            stage = e.stage if isinstance(e, StageError) else "output"
            cause = e.cause if isinstance(e, StageError) else e
            logger.error("conversion_failed", extra={"utterance_id": entry.utterance_id, "stage": stage,
                                                     "error": str(cause)})
            return entry, None, {"utterance_id": entry.utterance_id, "stage": stage,
                                 "error_type": type(cause).__name__, "error": str(cause)}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(tqdm(pool.map(run, manifest.entries), total=len(manifest), desc="Converting",
                            disable=len(manifest) < 2))

    result = BatchResult()
    converted_entries = []
    for entry, clip, failure in results:
        if failure is not None:
            result.failures.append(failure)
            continue
        result.outputs.append(out_dir / f"{entry.utterance_id}.wav")
        converted_entries.append(replace(entry, audio_path=f"{entry.utterance_id}.wav",
                                         duration_sec=max(clip.duration, 1e-6)))

    DatasetManifest(entries=converted_entries, root=out_dir).save(out_dir / "manifest.jsonl")
    if result.failures:
        lines = "".join(json.dumps(f, ensure_ascii=False) + "\n" for f in result.failures)
        (out_dir / "failures.jsonl").write_text(lines, encoding="utf-8")
    logger.info("Batch conversion finished", extra={"converted": len(result.outputs),
                                                    "failed": len(result.failures), "out_dir": str(out_dir)})
    return result

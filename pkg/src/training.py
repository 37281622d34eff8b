"""Training loops for the acoustic model: standard, cross-lingual pre-training and fine-tuning."""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import torch
from torch import Tensor, nn
from tqdm import tqdm

from .acoustic_model import AcousticConfig, AcousticModel
from .audio import DspConfig, MelSpectrogram, mel_config_16k
from .checkpoint import AcousticCheckpoint, TrainMeta
from .config import ENCODER_CONFIG, TRAIN_PRESETS
from .errors import ConfigError, ContractViolation, IncompatibleCheckpointError, InsufficientDataError
from .feature_cache import cache_features, compute_pair
from .features import ContentEncoderSpec, FeatureTransform, KMeansCodebook
from .length_regulator import RegulatorMode, mel_frames_for
from .manifest import DatasetManifest

logger = logging.getLogger(__name__)

PHASES = ("standard", "pretrain", "finetune")
SCHEDULES = ("warmup_linear", "constant")

# Utterances shuffled together before length-sorting into batches
BUCKET_FACTOR = 4


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    max_steps: int = 200000
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    warmup_steps: int = 4000
    seed: int = 1234
    grad_clip_norm: float = 1.0
    phase: str = "standard"
    schedule: str = "warmup_linear"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps must be >= 0, got {self.max_steps}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.warmup_steps < 0 or (self.warmup_steps > 0 and self.warmup_steps >= self.max_steps):
            raise ConfigError(
                f"warmup_steps must be 0 or below max_steps, got {self.warmup_steps}/{self.max_steps}"
            )
        if self.grad_clip_norm <= 0:
            raise ConfigError(f"grad_clip_norm must be positive, got {self.grad_clip_norm}")
        if self.phase not in PHASES:
            raise ConfigError(f"phase must be one of {PHASES}, got '{self.phase}'")
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got '{self.schedule}'")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> "TrainConfig":
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"Bad train config: {e}") from e

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        if name not in TRAIN_PRESETS:
            raise ConfigError(f"Unknown train preset '{name}'. Available: {sorted(TRAIN_PRESETS)}")
        values = dict(TRAIN_PRESETS[name])
        values.update(overrides)
        return cls(**values)


@dataclass
class TrainContext:
    """Everything besides the model and optimizer that shapes the training data."""

    dsp: DspConfig = field(default_factory=mel_config_16k)
    encoder_spec: ContentEncoderSpec = field(default_factory=lambda: ContentEncoderSpec(**ENCODER_CONFIG))
    cache_dir: Optional[Path] = None
    transform: FeatureTransform = FeatureTransform.RAW
    codebook: Optional[KMeansCodebook] = None
    regulator_mode: RegulatorMode = RegulatorMode.NEAREST
    regulate_after_encoder: bool = True
    workers: int = 1
    show_progress: bool = False

    def __post_init__(self):
        self.transform = FeatureTransform(self.transform)
        self.regulator_mode = RegulatorMode(self.regulator_mode)
        if self.cache_dir is not None:
            self.cache_dir = Path(self.cache_dir)
        if self.transform is FeatureTransform.DISCRETIZE and self.codebook is None:
            raise ConfigError("The 'discretize' feature transform needs a codebook")

    def check_model(self, acfg: AcousticConfig) -> None:
        if self.dsp.n_mels != acfg.n_mels:
            raise ConfigError(f"DSP has {self.dsp.n_mels} mel bands, acoustic model {acfg.n_mels}")
        if self.encoder_spec.expected_dim != acfg.s:
            raise ConfigError(
                f"Encoder produces {self.encoder_spec.expected_dim}-dim features, model expects s={acfg.s}"
            )


@dataclass
class TrainingExample:
    utterance_id: str
    features: np.ndarray   # (T_in, s)
    mel: np.ndarray        # (T_out, n_mels), trimmed to the regulated length


def l1_mel_loss(pred: MelSpectrogram, target: MelSpectrogram) -> float:
    """Mean absolute difference between two mel spectrograms of identical shape."""
    if pred.frames.shape != target.frames.shape:
        raise ContractViolation(f"Mel shapes differ: {pred.frames.shape} vs {target.frames.shape}")
    diff = pred.frames.astype(np.float64) - target.frames.astype(np.float64)
    return float(np.mean(np.abs(diff)))


def masked_l1_loss(pred: Tensor, target: Tensor, lengths: Sequence[int]) -> Tensor:
    """L1 averaged over the valid frames of a padded (B, T, n_mels) batch."""
    steps = pred.shape[1]
    ids = torch.arange(steps, device=pred.device)
    mask = (ids[None, :] < torch.as_tensor(list(lengths), device=pred.device)[:, None]).to(pred.dtype)
    mask = mask.unsqueeze(-1)
    total = (torch.abs(pred - target) * mask).sum()
    return total / (mask.sum() * pred.shape[2])


def lr_at_step(step: int, cfg: TrainConfig) -> float:
    """Learning rate after ``step`` updates: linear warmup, then linear decay to 0 at max_steps."""
    if not 0 <= step <= cfg.max_steps:
        raise ContractViolation(f"step must be in [0, {cfg.max_steps}], got {step}")
    if cfg.schedule == "constant":
        return cfg.learning_rate
    if step < cfg.warmup_steps:
        return cfg.learning_rate * step / cfg.warmup_steps
    decay_span = cfg.max_steps - cfg.warmup_steps
    if decay_span == 0:
        return cfg.learning_rate
    return cfg.learning_rate * (cfg.max_steps - step) / decay_span


def build_optimizer(params, cfg: TrainConfig):
    """AdamW (decoupled weight decay) driven by :func:`lr_at_step`.

    The k-th update (0-based) uses ``lr_at_step(k + 1)``.
    """
    optimizer = torch.optim.AdamW(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)

    def factor(i: int) -> float:
        if cfg.max_steps == 0:
            return 1.0
        return lr_at_step(min(i + 1, cfg.max_steps), cfg) / cfg.learning_rate

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, factor)
    return optimizer, scheduler


def load_examples(manifest: DatasetManifest, adapters, context: TrainContext) -> List[TrainingExample]:
    """Feature/mel pairs for every utterance, from the cache when one is configured."""
    encoder = adapters.require("encoder")
    if context.cache_dir is not None:
        index = cache_features(manifest, adapters, context.cache_dir, context.dsp, context.encoder_spec,
                               context.transform, context.codebook, context.workers)
        pairs = [(e.utterance_id, *index.load(e.utterance_id)) for e in manifest]
    else:
        pairs = [
            (e.utterance_id, *compute_pair(manifest.resolve(e), encoder, context.dsp, context.encoder_spec,
                                           context.transform, context.codebook))
            for e in tqdm(manifest.entries, desc="Extracting features", disable=not context.show_progress)
        ]

    examples = []
    for utterance_id, features, mel in pairs:
        out_len = min(mel_frames_for(features, context.dsp), mel.num_frames)
        examples.append(TrainingExample(utterance_id=utterance_id, features=features.vectors,
                                        mel=mel.frames[:out_len]))
    return examples


class Trainer:
    """Teacher-forced L1 training of one acoustic model on a fixed set of examples."""

    def __init__(self, model: AcousticModel, tcfg: TrainConfig, context: TrainContext):
        self.model = model
        self.tcfg = tcfg
        self.context = context
        self.rng = np.random.default_rng(tcfg.seed)
        self.model.seed_dropout(tcfg.seed)
        self.optimizer, self.scheduler = build_optimizer(model.parameters(), tcfg)
        self.logger = logging.getLogger(__name__)

    def batches(self, examples: List[TrainingExample]):
        """Endless stream of length-bucketed batches in seeded order."""
        size = min(self.tcfg.batch_size, len(examples))
        while True:
            order = self.rng.permutation(len(examples))
            epoch = []
            for start in range(0, len(order), size * BUCKET_FACTOR):
                bucket = sorted(order[start:start + size * BUCKET_FACTOR],
                                key=lambda i: (examples[i].mel.shape[0], i))
                epoch.extend(bucket[k:k + size] for k in range(0, len(bucket), size))
            for k in self.rng.permutation(len(epoch)):
                yield [examples[i] for i in epoch[k]]

    def collate(self, batch: List[TrainingExample]):
        param = next(self.model.parameters())

        def pad(arrays):
            return nn.utils.rnn.pad_sequence(
                [torch.as_tensor(a, dtype=param.dtype) for a in arrays], batch_first=True
            )

        features = pad([ex.features for ex in batch])
        teacher = pad([ex.mel for ex in batch])
        return features, [len(ex.features) for ex in batch], [len(ex.mel) for ex in batch], teacher

    def batch_loss(self, batch: List[TrainingExample]) -> Tensor:
        features, lengths, out_lengths, teacher = self.collate(batch)
        pred = self.model(features, lengths, out_lengths, teacher, self.context.regulator_mode,
                          self.context.regulate_after_encoder)
        return masked_l1_loss(pred, teacher, out_lengths)

    def train(self, examples: List[TrainingExample], history: Optional[List[float]] = None) -> List[float]:
        """Run ``max_steps`` updates; returns the loss measured before each update."""
        history = history if history is not None else []
        if self.tcfg.max_steps == 0:
            return history

        self.model.train()
        params = [p for p in self.model.parameters() if p.requires_grad]
        log_every = max(1, self.tcfg.max_steps // 20)
        stream = self.batches(examples)
        progress = tqdm(range(self.tcfg.max_steps), desc=f"Training ({self.tcfg.phase})",
                        disable=not self.context.show_progress)
        for step in progress:
            loss = self.batch_loss(next(stream))
            self.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            nn.utils.clip_grad_norm_(params, self.tcfg.grad_clip_norm)
            lr = self.optimizer.param_groups[0]["lr"]
            self.optimizer.step()
            self.scheduler.step()

            value = float(loss.detach())
            history.append(value)
            progress.set_postfix(loss=f"{value:.4f}")
            if step % log_every == 0 or step == self.tcfg.max_steps - 1:
                self.logger.info("train_step", extra={"phase": self.tcfg.phase, "step": step + 1,
                                                      "loss": value, "lr": lr})
        self.model.eval()
        return history


def _require_single_speaker(manifest: DatasetManifest, phase: str) -> None:
    speakers = manifest.speakers()
    if len(speakers) != 1:
        raise ContractViolation(
            f"{phase} training converts to one target speaker; manifest has {len(speakers)}: {speakers}"
        )


def _require_entries(manifest: DatasetManifest) -> None:
    if len(manifest) == 0:
        raise InsufficientDataError("Training manifest is empty")


def _check_phase(tcfg: TrainConfig, phase: str) -> TrainConfig:
    if tcfg.phase != phase:
        logger.warning("Train config phase overridden", extra={"configured": tcfg.phase, "phase": phase})
        values = tcfg.to_dict()
        values["phase"] = phase
        return TrainConfig(**values)
    return tcfg


def _run(model: AcousticModel, manifest: DatasetManifest, tcfg: TrainConfig, adapters, context: TrainContext,
         history: Optional[List[float]], parent_hash: Optional[str] = None) -> AcousticCheckpoint:
    examples = load_examples(manifest, adapters, context)
    logger.info("Training started", extra={"phase": tcfg.phase, "utterances": len(examples),
                                           "speakers": len(manifest.speakers()),
                                           "max_steps": tcfg.max_steps, "batch_size": tcfg.batch_size})
    Trainer(model, tcfg, context).train(examples, history)
    meta = TrainMeta(
        phase=tcfg.phase,
        step=tcfg.max_steps,
        seed=tcfg.seed,
        source_manifest_hash=manifest.content_hash(),
        parent_checkpoint_hash=parent_hash,
        feature_transform=context.transform.value,
        regulator_mode=context.regulator_mode.value,
        regulate_after_encoder=context.regulate_after_encoder,
    )
    return AcousticCheckpoint.from_model(model, context.dsp, meta)


def train_standard(manifest: DatasetManifest, acfg: AcousticConfig, tcfg: TrainConfig, adapters,
                   context: Optional[TrainContext] = None,
                   history: Optional[List[float]] = None) -> AcousticCheckpoint:
    """Train from scratch on the target speaker's data only.

    Args:
        manifest: Single-speaker training manifest
        acfg: Model shape
        tcfg: Optimizer settings
        adapters: AdapterSet with a content encoder
        context: Front-end, cache and regulator settings
        history: Receives the per-step losses

    Returns:
        Checkpoint with phase "standard"
    """
    _require_entries(manifest)
    _require_single_speaker(manifest, "Standard")
    context = context or TrainContext()
    context.check_model(acfg)
    tcfg = _check_phase(tcfg, "standard")
    return _run(AcousticModel(acfg), manifest, tcfg, adapters, context, history)


def pretrain_crosslingual(manifest_multi: DatasetManifest, acfg: AcousticConfig, tcfg: TrainConfig, adapters,
                          context: Optional[TrainContext] = None,
                          history: Optional[List[float]] = None) -> AcousticCheckpoint:
    """Pre-train on many speakers of one source language; same loss and loop as standard training."""
    _require_entries(manifest_multi)
    languages = manifest_multi.languages()
    if len(languages) > 1:
        logger.warning("Pre-training manifest mixes languages; one model per language is the usual recipe",
                       extra={"languages": languages})
    context = context or TrainContext()
    context.check_model(acfg)
    tcfg = _check_phase(tcfg, "pretrain")
    return _run(AcousticModel(acfg), manifest_multi, tcfg, adapters, context, history)


def fine_tune(parent: AcousticCheckpoint, manifest_target: DatasetManifest, tcfg: TrainConfig, adapters,
              context: Optional[TrainContext] = None, acfg: Optional[AcousticConfig] = None,
              history: Optional[List[float]] = None) -> AcousticCheckpoint:
    """Continue training a checkpoint on the target speaker's data.

    Every parameter starts from the parent; optimizer state starts fresh.

    Args:
        parent: Pre-trained checkpoint
        manifest_target: Single-speaker target manifest
        tcfg: Optimizer settings (the fine-tune preset uses a constant rate)
        adapters: AdapterSet with a content encoder
        context: Front-end settings; defaults follow the parent's metadata
        acfg: Expected model shape; must equal the parent's apart from init_seed
        history: Receives the per-step losses

    Returns:
        Checkpoint with phase "finetune" recording the parent's hash
    """
    if acfg is not None and acfg.architecture() != parent.config.architecture():
        diff = {k: (v, getattr(acfg, k)) for k, v in parent.config.architecture().items() if getattr(acfg, k) != v}
        raise IncompatibleCheckpointError(f"Parent checkpoint config differs (parent, requested): {diff}")
    if parent.train_meta.phase == "finetune":
        logger.warning("Fine-tuning a checkpoint that was itself fine-tuned",
                       extra={"parent_hash": parent.checkpoint_hash})
    _require_entries(manifest_target)
    _require_single_speaker(manifest_target, "Fine-tune")

    if context is None:
        encoder = adapters.require("encoder")
        context = TrainContext(
            dsp=parent.dsp,
            encoder_spec=ContentEncoderSpec(backend_id=encoder.name, layer_index=ENCODER_CONFIG["layer_index"],
                                            expected_dim=parent.config.s),
            transform=parent.train_meta.feature_transform,
            regulator_mode=parent.train_meta.regulator_mode,
            regulate_after_encoder=parent.train_meta.regulate_after_encoder,
        )
    elif context.dsp != parent.dsp:
        raise IncompatibleCheckpointError("Parent checkpoint was trained with a different DSP config")
    elif context.transform.value != parent.train_meta.feature_transform:
        logger.warning("Fine-tune feature transform differs from the parent's",
                       extra={"parent": parent.train_meta.feature_transform, "current": context.transform.value})
    context.check_model(parent.config)

    tcfg = _check_phase(tcfg, "finetune")
    model = parent.to_model()
    return _run(model, manifest_target, tcfg, adapters, context, history, parent_hash=parent.checkpoint_hash)


def save_history(history: Sequence[float], path: Union[str, Path]) -> Path:
    """Write per-step losses, one per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{i + 1}\t{loss:.6f}\n" for i, loss in enumerate(history)), encoding="utf-8")
    return path

"""Objective metrics: WER/PER through an ASR adapter, speaker similarity through d-vectors."""

import hashlib
import json
import logging
import re
import unicodedata
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .audio import AudioClip, load_audio
from .errors import (
    AlignmentError,
    ConfigError,
    ContractViolation,
    InsufficientDataError,
    UndefinedRateError,
    UndefinedSimilarityError,
)
from .manifest import DatasetManifest, ManifestEntry

logger = logging.getLogger(__name__)

REFERENCE_MODES = ("asr", "transcript")

# Norm below which an averaged embedding counts as cancelled out
DEGENERATE_NORM = 1e-8

_WHITESPACE = re.compile(r"\s+")


class TokenLevel(str, Enum):
    WORD = "word"
    PHONEME = "phoneme"


@dataclass(frozen=True)
class TokenSequence:
    tokens: List[str]
    level: TokenLevel = TokenLevel.WORD

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class EditCounts:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        if self.reference_length == 0:
            raise UndefinedRateError("Error rate is undefined for an empty reference")
        return self.errors / self.reference_length


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return (0x4E00 <= code <= 0x9FFF or 0x3400 <= code <= 0x4DBF or 0x20000 <= code <= 0x2A6DF
            or 0xF900 <= code <= 0xFAFF or 0x3040 <= code <= 0x30FF)


def normalize_text(text: str) -> str:
    """Lowercase, drop punctuation, collapse whitespace."""
    folded = unicodedata.normalize("NFKC", text).lower()
    stripped = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in folded)
    return _WHITESPACE.sub(" ", stripped).strip()


def word_tokens(text: str) -> TokenSequence:
    """Whitespace words of the normalized text; CJK characters are tokens of their own."""
    tokens: List[str] = []
    for word in normalize_text(text).split(" "):
        run = ""
        for ch in word:
            if _is_cjk(ch):
                if run:
                    tokens.append(run)
                    run = ""
                tokens.append(ch)
            else:
                run += ch
        if run:
            tokens.append(run)
    return TokenSequence(tokens=tokens, level=TokenLevel.WORD)


def phoneme_tokens(text: str, phonemizer, language: Optional[str] = None) -> TokenSequence:
    normalized = normalize_text(text)
    if not normalized:
        return TokenSequence(tokens=[], level=TokenLevel.PHONEME)
    phones = phonemizer.safe_call("phonemize", normalized, language)
    return TokenSequence(tokens=[str(p) for p in phones], level=TokenLevel.PHONEME)


def edit_counts(reference: TokenSequence, hypothesis: TokenSequence) -> EditCounts:
    """Minimal edit script between two token sequences, split by operation."""
    ref, hyp = reference.tokens, hypothesis.tokens
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=np.int64)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost[i, j] = min(
                cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]),
                cost[i - 1, j] + 1,
                cost[i, j - 1] + 1,
            )

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += int(ref[i - 1] != hyp[j - 1])
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(substitutions=subs, insertions=ins, deletions=dels, reference_length=n)


def edit_distance_rate(reference: TokenSequence, hypothesis: TokenSequence) -> float:
    """(S + I + D) / len(reference); may exceed 1."""
    if len(reference) == 0:
        raise UndefinedRateError("Error rate is undefined for an empty reference")
    return edit_counts(reference, hypothesis).rate


@dataclass
class SpeakerEmbedding:
    vector: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.vector)):
            raise ContractViolation("Speaker embedding has non-finite entries")

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])

    def embedding_hash(self) -> str:
        return hashlib.sha256(self.vector.astype("<f8").tobytes()).hexdigest()[:16]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractViolation(f"Embedding dims differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedSimilarityError("Cosine similarity with a zero-norm embedding")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def embed_clip(clip: AudioClip, embed) -> SpeakerEmbedding:
    return SpeakerEmbedding(vector=embed.safe_call("embed", clip))


def speaker_similarity(converted: AudioClip, target_embedding: SpeakerEmbedding, embed) -> float:
    """Cosine similarity between the converted clip's d-vector and the target's."""
    emb = embed_clip(converted, embed)
    if emb.dim != target_embedding.dim:
        raise ContractViolation(f"Embedder produced {emb.dim} dims, target embedding has {target_embedding.dim}")
    return cosine_similarity(emb.vector, target_embedding.vector)


def target_speaker_embedding(manifest: DatasetManifest, n: int, embed) -> SpeakerEmbedding:
    """Mean d-vector of the first ``n`` utterances (by utterance_id) of the target speaker."""
    speakers = manifest.speakers()
    if len(speakers) > 1:
        raise ContractViolation(f"Target embedding needs one speaker, manifest has {speakers}")
    if n < 1 or len(manifest) < n:
        raise InsufficientDataError(f"Need {n} target utterances, manifest has {len(manifest)}")

    chosen = sorted(manifest.entries, key=lambda e: e.utterance_id)[:n]
    vectors = [embed_clip(load_audio(manifest.resolve(e), embed.sample_rate), embed).vector for e in chosen]
    mean = np.mean(np.stack(vectors), axis=0)
    degenerate = bool(np.linalg.norm(mean) < DEGENERATE_NORM)
    if degenerate:
        logger.warning("Target speaker embedding averaged to (near) zero", extra={"utterances": n})
    return SpeakerEmbedding(vector=mean, degenerate=degenerate)


@dataclass
class EvalConfig:
    reference_mode: str = "asr"
    target_utterances: int = 50
    target_manifest: Optional[DatasetManifest] = None
    target_embedding: Optional[SpeakerEmbedding] = None
    system_name: str = "converted"
    show_progress: bool = False

    def __post_init__(self):
        if self.reference_mode not in REFERENCE_MODES:
            raise ConfigError(f"reference_mode must be one of {REFERENCE_MODES}, got '{self.reference_mode}'")
        if self.target_embedding is None and self.target_manifest is None:
            raise ConfigError("Evaluation needs a target manifest or a precomputed target embedding")


@dataclass
class UtteranceScores:
    """Scores of one utterance; a rate is None when its reference has no tokens."""

    utterance_id: str
    wer: Optional[float]
    per: Optional[float]
    ssim: float
    reference: str = ""
    hypothesis: str = ""


def _mean_defined(values) -> float:
    defined = [v for v in values if v is not None]
    return float(np.mean(defined)) if defined else float("nan")


@dataclass
class EvalReport:
    per_utterance: List[UtteranceScores]
    aggregate: Dict[str, float] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregate:
            self.aggregate = self.recompute_aggregate()

    def recompute_aggregate(self) -> Dict[str, float]:
        return {
            "mean_wer": _mean_defined(r.wer for r in self.per_utterance),
            "mean_per": _mean_defined(r.per for r in self.per_utterance),
            "mean_ssim": _mean_defined(r.ssim for r in self.per_utterance),
        }

    def save(self, path: Union[str, Path]) -> Path:
        """One JSON record per utterance, then an aggregate footer record."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps(asdict(r), ensure_ascii=False) for r in self.per_utterance]
        lines.append(json.dumps({"aggregate": self.aggregate, "metadata": self.metadata}, ensure_ascii=False))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EvalReport":
        records = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
        if not records or "aggregate" not in records[-1]:
            raise ContractViolation(f"{path} has no aggregate footer")
        footer = records.pop()
        return cls(per_utterance=[UtteranceScores(**r) for r in records],
                   aggregate=footer["aggregate"], metadata=footer.get("metadata", {}))

    def summary_table(self) -> pd.DataFrame:
        """WER / PER / SSIM in percent, one row per system."""
        name = self.metadata.get("system_name", "converted")
        return pd.DataFrame(
            {
                "WER": [100.0 * self.aggregate["mean_wer"]],
                "PER": [100.0 * self.aggregate["mean_per"]],
                "SSIM": [100.0 * self.aggregate["mean_ssim"]],
            },
            index=pd.Index([name], name="system"),
        ).round(2)


def _rate_or_none(reference: TokenSequence, hypothesis: TokenSequence, utterance_id: str,
                  metric: str) -> Optional[float]:
    try:
        return edit_distance_rate(reference, hypothesis)
    except UndefinedRateError:
        logger.warning("Empty reference; utterance left out of the mean",
                       extra={"utterance_id": utterance_id, "metric": metric})
        return None


def _transcribe(entry: ManifestEntry, manifest: DatasetManifest, asr) -> str:
    path = manifest.resolve(entry)
    clip = load_audio(path, asr.sample_rate)
    return asr.safe_call("transcribe", clip, source_path=str(path), language=entry.language_tag)


def evaluate(converted_manifest: DatasetManifest, reference_manifest: DatasetManifest, cfg: EvalConfig,
             adapters) -> EvalReport:
    """Score converted utterances against their sources.

    Args:
        converted_manifest: Converted audio, same utterance ids as the reference
        reference_manifest: Source utterances (transcripts used in "transcript" mode)
        cfg: Reference mode and target speaker
        adapters: AdapterSet with asr, phonemizer and embedder

    Returns:
        EvalReport with per-utterance WER/PER/SSIM and their means
    """
    converted_ids = {e.utterance_id for e in converted_manifest}
    reference_ids = {e.utterance_id for e in reference_manifest}
    if converted_ids != reference_ids:
        raise AlignmentError(converted_ids ^ reference_ids)
    if not converted_ids:
        raise InsufficientDataError("Nothing to evaluate: the manifests are empty")

    asr = adapters.require("asr")
    phonemizer = adapters.require("phonemizer")
    embedder = adapters.require("embedder")
    target = cfg.target_embedding or target_speaker_embedding(cfg.target_manifest, cfg.target_utterances, embedder)

    references = reference_manifest.by_id()
    rows = []
    for entry in tqdm(converted_manifest.entries, desc="Evaluating", disable=not cfg.show_progress):
        source = references[entry.utterance_id]
        if cfg.reference_mode == "transcript" and source.transcript:
            reference_text = source.transcript
        else:
            if cfg.reference_mode == "transcript":
                logger.warning("No transcript; using ASR on the source audio",
                               extra={"utterance_id": entry.utterance_id})
            reference_text = _transcribe(source, reference_manifest, asr)
        hypothesis_text = _transcribe(entry, converted_manifest, asr)

        language = source.language_tag
        wer = _rate_or_none(word_tokens(reference_text), word_tokens(hypothesis_text),
                            entry.utterance_id, "wer")
        per = _rate_or_none(phoneme_tokens(reference_text, phonemizer, language),
                            phoneme_tokens(hypothesis_text, phonemizer, language), entry.utterance_id, "per")
        clip = load_audio(converted_manifest.resolve(entry), embedder.sample_rate)
        ssim = speaker_similarity(clip, target, embedder)
        rows.append(UtteranceScores(utterance_id=entry.utterance_id, wer=wer, per=per, ssim=ssim,
                                    reference=reference_text, hypothesis=hypothesis_text))
        logger.debug("utterance_scored", extra={"utterance_id": entry.utterance_id, "wer": wer,
                                                "per": per, "ssim": ssim})

    report = EvalReport(per_utterance=rows, metadata={
        "asr_backend": asr.name,
        "phonemizer_backend": phonemizer.name,
        "embedding_backend": embedder.name,
        "target_embedding_hash": target.embedding_hash(),
        "reference_mode": cfg.reference_mode,
        "system_name": cfg.system_name,
        "undefined_rates": [r.utterance_id for r in rows if r.wer is None or r.per is None],
    })
    logger.info("Evaluation finished", extra={"utterances": len(rows), **report.aggregate})
    return report


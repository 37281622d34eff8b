"""On-disk cache of (SSL features, mel) pairs keyed by utterance id and config hash."""

import hashlib
import json
import logging
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import toml
from filelock import FileLock
from tqdm import tqdm

from .audio import DspConfig, MelSpectrogram, compute_mel, load_audio
from .containers import MEL_MAGIC, atomic_write_bytes, read_matrix, write_matrix
from .errors import DecodeError
from .features import (
    ContentEncoderSpec,
    FeatureTransform,
    KMeansCodebook,
    SSLFeatureMatrix,
    apply_feature_transform,
    extract_features,
)
from .manifest import DatasetManifest, ManifestEntry

logger = logging.getLogger(__name__)

INDEX_NAME = "index.toml"
ITEMS_DIR = "items"


@dataclass
class CacheIndex:
    """Where each utterance's cached pair lives, plus what was (re)computed this call."""

    cache_dir: Path
    config_hash: str
    dsp: DspConfig
    entries: Dict[str, Dict[str, str]] = field(default_factory=dict)
    computed: List[str] = field(default_factory=list)

    def load(self, utterance_id: str) -> Tuple[SSLFeatureMatrix, MelSpectrogram]:
        record = self.entries[utterance_id]
        features = SSLFeatureMatrix.load(self.cache_dir / record["features"])
        frames, hop, rate = read_matrix(self.cache_dir / record["mel"], MEL_MAGIC)
        if hop != self.dsp.hop_length or rate != self.dsp.sample_rate:
            raise DecodeError(f"Cached mel for {utterance_id} does not match the DSP config")
        return features, MelSpectrogram.from_frames(frames, self.dsp)


def cache_key(dsp: DspConfig, encoder_spec: ContentEncoderSpec, encoder_schema: Dict,
              transform: Union[str, FeatureTransform], codebook: Optional[KMeansCodebook]) -> str:
    """Hash of everything that determines a cached pair's contents."""
    payload = {
        "dsp": dsp.to_dict(),
        "encoder_spec": asdict(encoder_spec),
        "encoder": encoder_schema,
        "transform": FeatureTransform(transform).value,
        "codebook": (hashlib.sha256(codebook.centroids.tobytes()).hexdigest()
                     if codebook is not None else None),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode("utf-8")).hexdigest()[:16]


def compute_pair(path: Path, encoder, dsp: DspConfig, encoder_spec: ContentEncoderSpec,
                 transform: Union[str, FeatureTransform] = FeatureTransform.RAW,
                 codebook: Optional[KMeansCodebook] = None) -> Tuple[SSLFeatureMatrix, MelSpectrogram]:
    """Features at the encoder's rate and the mel target at the DSP rate for one file."""
    encoder_clip = load_audio(path, encoder.sample_rate)
    features = extract_features(encoder_clip, encoder_spec, encoder)
    features = apply_feature_transform(features, transform, codebook)
    mel_clip = encoder_clip if dsp.sample_rate == encoder.sample_rate else load_audio(path, dsp.sample_rate)
    return features, compute_mel(mel_clip, dsp)


def cache_features(manifest: DatasetManifest, adapters, cache_dir: Union[str, Path], dsp: DspConfig,
                   encoder_spec: ContentEncoderSpec,
                   transform: Union[str, FeatureTransform] = FeatureTransform.RAW,
                   codebook: Optional[KMeansCodebook] = None, workers: int = 1) -> CacheIndex:
    """Make sure every manifest utterance has a cached pair for the current config.

    A cache built under a different config hash is wiped and rebuilt; entries
    already present for the current hash are not recomputed.

    Args:
        manifest: Utterances to cache
        adapters: AdapterSet with an encoder
        cache_dir: Cache directory
        dsp: Mel front-end
        encoder_spec: Encoder layer/dimension contract
        transform: Feature transform applied before caching
        codebook: Required for the "discretize" transform
        workers: Parallel workers, one encoder instance each

    Returns:
        CacheIndex covering at least the manifest's utterances
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    encoder = adapters.require("encoder")
    key = cache_key(dsp, encoder_spec, encoder.get_schema(), transform, codebook)
    lock = FileLock(str(cache_dir / ".lock"))

    with lock:
        index = _read_index(cache_dir, dsp)
        if index is None or index.config_hash != key:
            if index is not None:
                logger.info("Feature cache config changed; rebuilding",
                            extra={"old_hash": index.config_hash, "new_hash": key})
            shutil.rmtree(cache_dir / ITEMS_DIR, ignore_errors=True)
            index = CacheIndex(cache_dir=cache_dir, config_hash=key, dsp=dsp)

    todo: List[ManifestEntry] = [
        e for e in manifest.entries
        if e.utterance_id not in index.entries
        or not all((cache_dir / f).exists() for f in index.entries[e.utterance_id].values())
    ]

    local = threading.local()

    def worker_encoder():
        if workers == 1:
            return encoder
        if not hasattr(local, "encoder"):
            local.encoder = encoder.spawn()
        return local.encoder

    def build(entry: ManifestEntry) -> Tuple[str, Dict[str, str]]:
        features, mel = compute_pair(manifest.resolve(entry), worker_encoder(), dsp, encoder_spec,
                                     transform, codebook)
        stem = hashlib.sha1(entry.utterance_id.encode("utf-8")).hexdigest()[:16]
        record = {"features": f"{ITEMS_DIR}/{stem}.feat", "mel": f"{ITEMS_DIR}/{stem}.mel"}
        features.save(cache_dir / record["features"])
        write_matrix(cache_dir / record["mel"], MEL_MAGIC, mel.frames, mel.hop_length, mel.sample_rate)
        return entry.utterance_id, record

    if todo:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(tqdm(pool.map(build, todo), total=len(todo), desc="Caching features",
                                disable=len(todo) < 2))
        with lock:
            for utterance_id, record in results:
                index.entries[utterance_id] = record
                index.computed.append(utterance_id)
            _write_index(index)

    logger.info("Feature cache ready", extra={"cache_dir": str(cache_dir), "config_hash": key,
                                              "computed": len(todo), "total": len(index.entries)})
    return index


def _read_index(cache_dir: Path, dsp: DspConfig) -> Optional[CacheIndex]:
    path = cache_dir / INDEX_NAME
    if not path.exists():
        return None
    try:
        document = toml.loads(path.read_text(encoding="utf-8"))
        return CacheIndex(cache_dir=cache_dir, config_hash=document["config_hash"], dsp=dsp,
                          entries={k: dict(v) for k, v in document.get("entries", {}).items()})
    except (toml.TomlDecodeError, KeyError) as e:
        logger.warning(f"Unreadable cache index {path}, rebuilding: {e}")
        return None


def _write_index(index: CacheIndex) -> None:
    document = {"config_hash": index.config_hash, "entries": index.entries}
    atomic_write_bytes(index.cache_dir / INDEX_NAME, toml.dumps(document).encode("utf-8"))

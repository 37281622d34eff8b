"""Dataset manifests: which utterances to train on, convert or evaluate.

File format is JSON Lines, UTF-8, one utterance per line. An optional first
record ``{"root": "<dir>"}`` declares the directory audio paths are relative
to; without it paths are relative to the manifest's own directory.
"""

import hashlib
import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Union

import numpy as np

from .errors import ConfigError, ContractViolation, DecodeError, InsufficientDataError

logger = logging.getLogger(__name__)

LANGUAGE_TAG = re.compile(r"^[A-Za-z]{2,3}(-[A-Za-z0-9]{2,8})*$")


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    audio_path: str
    speaker_id: str
    language_tag: str
    duration_sec: float
    transcript: Optional[str] = None

    def __post_init__(self):
        if not self.utterance_id:
            raise ContractViolation("Manifest entry without utterance_id")
        if self.duration_sec <= 0:
            raise ContractViolation(f"{self.utterance_id}: duration must be positive, got {self.duration_sec}")
        if not LANGUAGE_TAG.match(self.language_tag):
            raise ContractViolation(f"{self.utterance_id}: '{self.language_tag}' is not a BCP-47 language tag")

    def to_record(self) -> Dict:
        record = asdict(self)
        if record["transcript"] is None:
            del record["transcript"]
        return record


@dataclass
class DatasetManifest:
    """Ordered list of utterances plus the root their audio paths are relative to."""

    entries: List[ManifestEntry]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.utterance_id in seen:
                raise ContractViolation(f"Duplicate utterance_id '{entry.utterance_id}' in manifest")
            seen.add(entry.utterance_id)
        self.root = Path(self.root)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ManifestEntry]:
        return iter(self.entries)

    @classmethod
    def load(cls, path: Union[str, Path], root: Optional[Union[str, Path]] = None) -> "DatasetManifest":
        """Read a JSON Lines manifest.

        Args:
            path: Manifest file
            root: Overrides the declared root
        """
        path = Path(path)
        try:
            lines = path.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DecodeError(f"Could not read manifest {path}: {e}") from e

        declared_root = path.parent
        entries = []
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DecodeError(f"{path}:{lineno}: invalid JSON: {e}") from e
            if set(record) == {"root"}:
                declared_root = path.parent / record["root"]
                continue
            try:
                entries.append(ManifestEntry(**record))
            except TypeError as e:
                raise DecodeError(f"{path}:{lineno}: bad manifest record: {e}") from e
        return cls(entries=entries, root=Path(root) if root is not None else declared_root)

    def save(self, path: Union[str, Path], root_relative: Optional[str] = None) -> Path:
        """Write the manifest; ``root_relative`` is stored as the header record."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = []
        if root_relative is not None:
            lines.append(json.dumps({"root": root_relative}))
        lines.extend(json.dumps(e.to_record(), ensure_ascii=False) for e in self.entries)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def resolve(self, entry: ManifestEntry) -> Path:
        audio = Path(entry.audio_path)
        return audio if audio.is_absolute() else self.root / audio

    def by_id(self) -> Dict[str, ManifestEntry]:
        return {e.utterance_id: e for e in self.entries}

    def speakers(self) -> List[str]:
        return sorted({e.speaker_id for e in self.entries})

    def languages(self) -> List[str]:
        return sorted({e.language_tag for e in self.entries})

    def total_hours(self) -> float:
        return sum(e.duration_sec for e in self.entries) / 3600.0

    def subset(self, ids: Iterable[str]) -> "DatasetManifest":
        wanted = list(ids)
        index = self.by_id()
        missing = [i for i in wanted if i not in index]
        if missing:
            raise ContractViolation(f"Unknown utterance ids: {missing}")
        return DatasetManifest(entries=[index[i] for i in wanted], root=self.root)

    def content_hash(self) -> str:
        """Hash of the entries (not the root), stable across machines."""
        digest = hashlib.sha256()
        for entry in self.entries:
            digest.update(json.dumps(entry.to_record(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()


def select_by_duration(manifest: DatasetManifest, budget_hours: float, strategy: str = "shortest_first",
                       seed: int = 0) -> DatasetManifest:
    """Pick utterances until a duration budget is met.

    Args:
        manifest: Source manifest
        budget_hours: Stop once the selection reaches this many hours
        strategy: "shortest_first" (deterministic) or "random" (seeded shuffle)
        seed: Shuffle seed for "random"

    Returns:
        Manifest of the selected utterances, in selection order
    """
    if budget_hours <= 0:
        raise ConfigError(f"budget_hours must be positive, got {budget_hours}")
    if strategy == "shortest_first":
        order = sorted(manifest.entries, key=lambda e: (e.duration_sec, e.utterance_id))
    elif strategy == "random":
        perm = np.random.default_rng(seed).permutation(len(manifest.entries))
        order = [manifest.entries[i] for i in perm]
    else:
        raise ConfigError(f"Unknown selection strategy '{strategy}'")

    budget_sec = budget_hours * 3600.0
    chosen, total = [], 0.0
    for entry in order:
        if total >= budget_sec:
            break
        chosen.append(entry)
        total += entry.duration_sec

    if total < budget_sec:
        logger.warning("Manifest shorter than the requested budget",
                       extra={"budget_hours": budget_hours, "selected_hours": total / 3600.0})
    logger.info("Selected subset", extra={"strategy": strategy, "seed": seed, "utterances": len(chosen),
                                          "hours": round(total / 3600.0, 4)})
    return DatasetManifest(entries=chosen, root=manifest.root)


def sample_test_set(manifest: DatasetManifest, n_speakers: int = 20, per_speaker: int = 3,
                    seed: int = 0) -> DatasetManifest:
    """Random test set: ``per_speaker`` utterances from each of ``n_speakers`` speakers."""
    by_speaker: Dict[str, List[ManifestEntry]] = {}
    for entry in manifest.entries:
        by_speaker.setdefault(entry.speaker_id, []).append(entry)
    eligible = sorted(s for s, items in by_speaker.items() if len(items) >= per_speaker)
    if len(eligible) < n_speakers:
        raise InsufficientDataError(
            f"Need {n_speakers} speakers with >= {per_speaker} utterances, found {len(eligible)}"
        )

    rng = np.random.default_rng(seed)
    speakers = [eligible[i] for i in sorted(rng.choice(len(eligible), n_speakers, replace=False))]
    chosen = []
    for speaker in speakers:
        items = by_speaker[speaker]
        picks = sorted(rng.choice(len(items), per_speaker, replace=False))
        chosen.extend(items[i] for i in picks)
    return DatasetManifest(entries=chosen, root=manifest.root)

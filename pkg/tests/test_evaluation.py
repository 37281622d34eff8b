"""Tests for WER/PER, speaker similarity and the evaluation report."""

from dataclasses import replace

import numpy as np
import pytest

from src.adapters import AdapterSet, SpeakerEmbedderAdapter
from src.adapters.builtin_adapters import CharacterPhonemizer, SidecarASR, SpectralEmbedder
from src.audio import load_audio
from src.errors import (
    AlignmentError,
    ConfigError,
    ContractViolation,
    InsufficientDataError,
    UndefinedRateError,
    UndefinedSimilarityError,
)
from src.evaluation import (
    EvalConfig,
    EvalReport,
    SpeakerEmbedding,
    TokenLevel,
    TokenSequence,
    UtteranceScores,
    cosine_similarity,
    edit_counts,
    edit_distance_rate,
    evaluate,
    normalize_text,
    phoneme_tokens,
    speaker_similarity,
    target_speaker_embedding,
    word_tokens,
)
from src.manifest import DatasetManifest, ManifestEntry

from conftest import make_corpus, write_wav


def seq(*tokens: str) -> TokenSequence:
    return TokenSequence(tokens=list(tokens))


def brute_force_distance(ref, hyp) -> int:
    """Cheapest edit script found by enumerating every alignment."""
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    return min(
        brute_force_distance(ref[1:], hyp[1:]) + (ref[0] != hyp[0]),
        brute_force_distance(ref[1:], hyp) + 1,
        brute_force_distance(ref, hyp[1:]) + 1,
    )


class SignedEmbedder(SpeakerEmbedderAdapter):
    """+e for clips with positive mean, -e otherwise."""

    def __init__(self):
        super().__init__(name="signed", description="test embedder")
        self.dim = 3

    def embed(self, clip):
        return np.array([1.0, 2.0, 2.0]) * np.sign(float(np.mean(clip.samples)))


# Text


def test_normalize_text():
    assert normalize_text("  Hello,   World! ") == "hello world"
    assert normalize_text("ＡＢＣ") == "abc"


def test_word_tokens_split_cjk_characters():
    assert word_tokens("你好，世界").tokens == ["你", "好", "世", "界"]
    assert word_tokens("Say 你好 now").tokens == ["say", "你", "好", "now"]


def test_phoneme_tokens_use_the_phonemizer():
    tokens = phoneme_tokens("Hi, you!", CharacterPhonemizer(), "en")
    assert tokens.level is TokenLevel.PHONEME
    assert tokens.tokens == ["h", "i", "y", "o", "u"]
    assert phoneme_tokens("?!", CharacterPhonemizer()).tokens == []


# Edit distance


def test_edit_distance_basic_cases():
    assert edit_distance_rate(seq("a", "b", "c"), seq("a", "b", "c")) == 0.0
    assert edit_distance_rate(seq("a", "b", "c"), seq("a", "x", "c")) == pytest.approx(1 / 3)
    assert edit_distance_rate(seq("a"), seq("b", "c", "d")) == 3.0
    with pytest.raises(UndefinedRateError):
        edit_distance_rate(seq(), seq("a"))


def test_edit_counts_split_by_operation():
    counts = edit_counts(seq("a", "b", "c", "d"), seq("a", "c", "d", "e"))
    assert (counts.substitutions, counts.insertions, counts.deletions) == (0, 1, 1)
    counts = edit_counts(seq("a", "b"), seq("x", "y"))
    assert (counts.substitutions, counts.insertions, counts.deletions) == (2, 0, 0)


def test_edit_distance_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    alphabet = ["a", "b", "c"]
    for _ in range(1000):
        ref = [alphabet[i] for i in rng.integers(0, 3, size=int(rng.integers(0, 7)))]
        hyp = [alphabet[i] for i in rng.integers(0, 3, size=int(rng.integers(0, 7)))]
        counts = edit_counts(TokenSequence(ref), TokenSequence(hyp))
        assert counts.errors == brute_force_distance(ref, hyp)
        # the script must transform ref into hyp
        assert len(ref) - counts.deletions + counts.insertions == len(hyp)


def test_edit_distance_is_a_metric():
    rng = np.random.default_rng(1)

    def word():
        return TokenSequence([str(t) for t in rng.integers(0, 3, size=int(rng.integers(1, 6)))])

    for _ in range(200):
        a, b, c = word(), word(), word()
        ab, ba = edit_counts(a, b).errors, edit_counts(b, a).errors
        assert ab == ba
        assert edit_counts(a, c).errors <= ab + edit_counts(b, c).errors
        assert edit_distance_rate(a, b) <= max(len(a), len(b)) / len(a)


# Speaker similarity


def test_cosine_similarity_cases():
    e = np.array([1.0, 2.0, 3.0])
    assert cosine_similarity(e, e) == pytest.approx(1.0)
    assert cosine_similarity(e, -e) == pytest.approx(-1.0)
    assert cosine_similarity(e, 7.5 * e) == pytest.approx(1.0)
    assert cosine_similarity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(0.0)
    with pytest.raises(UndefinedSimilarityError):
        cosine_similarity(e, np.zeros(3))
    with pytest.raises(ContractViolation):
        cosine_similarity(e, np.ones(4))


def test_embedding_rejects_non_finite_values():
    with pytest.raises(ContractViolation):
        SpeakerEmbedding(vector=np.array([1.0, np.nan]))


def test_single_utterance_target_is_that_utterance(speaker_a):
    embedder = SpectralEmbedder()
    one = speaker_a.subset([speaker_a.entries[0].utterance_id])
    target = target_speaker_embedding(one, 1, embedder)
    clip = load_audio(speaker_a.resolve(speaker_a.entries[0]), 16000)
    assert np.array_equal(target.vector, embedder.embed(clip))
    assert speaker_similarity(clip, target, embedder) == pytest.approx(1.0, abs=1e-9)


def test_target_embedding_is_the_mean_of_the_first_n_by_id(speaker_a):
    embedder = SpectralEmbedder()
    reordered = DatasetManifest(entries=list(reversed(speaker_a.entries)), root=speaker_a.root)
    target = target_speaker_embedding(reordered, 2, embedder)
    vectors = [embedder.embed(load_audio(speaker_a.resolve(e), 16000)) for e in speaker_a.entries[:2]]
    expected = [(vectors[0][k] + vectors[1][k]) / 2 for k in range(len(vectors[0]))]
    np.testing.assert_allclose(target.vector, expected, atol=1e-7)
    assert not target.degenerate


def test_cancelling_embeddings_are_flagged_degenerate(tmp_path):
    write_wav(tmp_path / "a.wav", np.full(4000, 0.5, dtype=np.float32))
    write_wav(tmp_path / "b.wav", np.full(4000, -0.5, dtype=np.float32))
    manifest = DatasetManifest(entries=[
        ManifestEntry(utterance_id=name, audio_path=f"{name}.wav", speaker_id="t", language_tag="en",
                      duration_sec=0.25) for name in ("a", "b")
    ], root=tmp_path)
    target = target_speaker_embedding(manifest, 2, SignedEmbedder())
    assert target.degenerate
    with pytest.raises(UndefinedSimilarityError):
        cosine_similarity(np.ones(3), target.vector)


def test_target_embedding_errors(speaker_a, speaker_b, tmp_path):
    embedder = SpectralEmbedder()
    with pytest.raises(InsufficientDataError):
        target_speaker_embedding(speaker_a, 4, embedder)
    mixed = DatasetManifest(entries=[*speaker_a.entries, *speaker_b.entries], root=tmp_path)
    with pytest.raises(ContractViolation):
        target_speaker_embedding(mixed, 1, embedder)


# End to end


@pytest.fixture
def eval_adapters() -> AdapterSet:
    return AdapterSet(asr=SidecarASR(), phonemizer=CharacterPhonemizer(), embedder=SpectralEmbedder())


def test_identical_audio_scores_zero_error(speaker_a, speaker_b, eval_adapters):
    cfg = EvalConfig(target_manifest=speaker_b, target_utterances=2, system_name="echo")
    report = evaluate(speaker_a, speaker_a, cfg, eval_adapters)

    assert [r.utterance_id for r in report.per_utterance] == [e.utterance_id for e in speaker_a]
    assert all(r.wer == 0.0 and r.per == 0.0 for r in report.per_utterance)
    assert all(-1.0 <= r.ssim <= 1.0 for r in report.per_utterance)
    assert report.aggregate["mean_ssim"] == pytest.approx(np.mean([r.ssim for r in report.per_utterance]))
    assert report.metadata["asr_backend"] == "sidecar"
    assert report.metadata["reference_mode"] == "asr"


def test_transcript_mode_scores_against_manifest_text(tmp_path, speaker_b, eval_adapters):
    source = make_corpus(tmp_path / "src", "src", count=2, f0=150.0, language="en", seed=30)
    # the "converted" audio says something different from the source transcripts
    converted = make_corpus(tmp_path / "conv", "src", count=2, f0=150.0, language="en", seed=31,
                            words=("goodbye", "world", "again"))
    cfg = EvalConfig(reference_mode="transcript", target_manifest=speaker_b, target_utterances=1)
    report = evaluate(converted, source, cfg, eval_adapters)
    for row, entry in zip(report.per_utterance, source):
        assert row.reference == entry.transcript
        assert row.wer == pytest.approx(edit_distance_rate(word_tokens(row.reference),
                                                           word_tokens(row.hypothesis)))
    assert report.aggregate["mean_wer"] > 0.0


def test_empty_reference_leaves_only_that_utterance_unscored(tmp_path, speaker_b, eval_adapters):
    source = make_corpus(tmp_path / "src", "src", count=3, f0=150.0, language="en", seed=32)
    blank = source.entries[1].utterance_id
    source = DatasetManifest(
        entries=[replace(e, transcript="!!") if e.utterance_id == blank else e for e in source],
        root=source.root,
    )
    cfg = EvalConfig(reference_mode="transcript", target_manifest=speaker_b, target_utterances=1)
    report = evaluate(source, source, cfg, eval_adapters)

    rows = {r.utterance_id: r for r in report.per_utterance}
    assert len(rows) == 3
    assert rows[blank].wer is None and rows[blank].per is None
    assert -1.0 <= rows[blank].ssim <= 1.0
    scored = [r for r in report.per_utterance if r.utterance_id != blank]
    assert all(r.wer is not None and r.per is not None for r in scored)
    assert report.aggregate["mean_wer"] == pytest.approx(np.mean([r.wer for r in scored]))
    assert report.aggregate["mean_per"] == pytest.approx(np.mean([r.per for r in scored]))
    assert report.metadata["undefined_rates"] == [blank]


def test_report_with_no_defined_rate_has_nan_means():
    report = EvalReport(per_utterance=[UtteranceScores("u1", wer=None, per=None, ssim=0.5)])
    assert np.isnan(report.aggregate["mean_wer"]) and np.isnan(report.aggregate["mean_per"])
    assert report.aggregate["mean_ssim"] == 0.5


def test_unpaired_ids_are_reported(speaker_a, speaker_b, eval_adapters):
    partial = speaker_a.subset([e.utterance_id for e in speaker_a.entries[:2]])
    cfg = EvalConfig(target_manifest=speaker_b, target_utterances=1)
    with pytest.raises(AlignmentError) as info:
        evaluate(partial, speaker_a, cfg, eval_adapters)
    assert info.value.orphans == [speaker_a.entries[2].utterance_id]


def test_eval_config_validation(speaker_b):
    with pytest.raises(ConfigError):
        EvalConfig(reference_mode="oracle", target_manifest=speaker_b)
    with pytest.raises(ConfigError):
        EvalConfig()


def test_report_round_trip_and_summary(tmp_path):
    rows = [UtteranceScores("u1", wer=0.5, per=0.25, ssim=0.8), UtteranceScores("u2", wer=0.0, per=0.5, ssim=0.6)]
    report = EvalReport(per_utterance=rows, metadata={"system_name": "ft_2h"})
    assert report.aggregate == {"mean_wer": 0.25, "mean_per": 0.375, "mean_ssim": pytest.approx(0.7)}

    loaded = EvalReport.load(report.save(tmp_path / "report.jsonl"))
    assert loaded.per_utterance == rows
    assert loaded.aggregate == report.aggregate
    assert loaded.recompute_aggregate() == report.aggregate

    table = report.summary_table()
    assert list(table.columns) == ["WER", "PER", "SSIM"]
    assert table.loc["ft_2h", "WER"] == 25.0
    assert table.loc["ft_2h", "SSIM"] == 70.0

"""Tests for end-to-end conversion."""

import json
import logging

import numpy as np
import pytest

from src.adapters import AdapterSet
from src.adapters.builtin_adapters import GriffinLimVocoder, SyntheticEncoder
from src.audio import AudioClip, DspConfig, load_audio
from src.errors import ConfigError, InsufficientDataError, StageError
from src.features import ContentEncoderSpec, KMeansCodebook, extract_features
from src.length_regulator import mel_frames_for
from src.manifest import DatasetManifest, ManifestEntry
from src.pipeline import ConversionPipeline, PipelineConfig, convert, convert_batch
from src.training import TrainContext, train_standard
from src.vocoder import VocoderSpec

from conftest import TINY_DIM, voice, write_wav


@pytest.fixture
def checkpoint_path(tmp_path, speaker_b, adapters, tiny_acoustic, tiny_context, fast_train):
    checkpoint = train_standard(speaker_b, tiny_acoustic, fast_train, adapters, tiny_context)
    return checkpoint.save(tmp_path / "model" / "checkpoint.xvck")


@pytest.fixture
def pipeline_cfg(checkpoint_path, tiny_dsp, tiny_encoder_spec) -> PipelineConfig:
    return PipelineConfig(
        encoder_spec=tiny_encoder_spec,
        acoustic_checkpoint=checkpoint_path,
        vocoder_spec=VocoderSpec(backend_id="griffinlim", expected_dsp=tiny_dsp, output_rate=16000),
        dsp=tiny_dsp,
    )


def test_output_length_follows_the_input(pipeline_cfg, adapters):
    pipeline = ConversionPipeline(pipeline_cfg)
    out = pipeline.convert(AudioClip(samples=voice(1.0, 150.0, seed=0), sample_rate=16000), adapters)
    assert out.sample_rate == 16000
    assert abs(len(out.samples) - 16000) <= 320

    rng = np.random.default_rng(0)
    for seconds in rng.uniform(0.5, 2.0, size=100):
        source = AudioClip(samples=voice(float(seconds), 150.0, seed=1), sample_rate=16000)
        out = pipeline.convert(source, adapters)
        assert abs(len(out.samples) - len(source.samples)) <= 320
        assert abs(len(out.samples) - len(source.samples)) <= 0.05 * len(source.samples)


def test_conversion_is_deterministic(pipeline_cfg, adapters):
    source = AudioClip(samples=voice(0.7, 180.0, seed=2), sample_rate=16000)
    a = convert(source, pipeline_cfg, adapters)
    b = convert(source, pipeline_cfg, adapters)
    assert np.array_equal(a.samples, b.samples)


def test_other_rates_are_resampled_for_the_encoder(pipeline_cfg, adapters):
    source = AudioClip(samples=voice(1.0, 150.0, seed=3, rate=22050), sample_rate=22050)
    out = ConversionPipeline(pipeline_cfg).convert(source, adapters)
    assert abs(len(out.samples) - 16000) <= 320


def test_conversion_logs_stage_timings(pipeline_cfg, adapters, caplog):
    with caplog.at_level(logging.INFO, logger="src.pipeline"):
        ConversionPipeline(pipeline_cfg).convert(AudioClip(samples=voice(0.5, 150.0, seed=4),
                                                           sample_rate=16000), adapters)
    record = next(r for r in caplog.records if r.getMessage() == "conversion_timing")
    for key in ("feature_ms", "acoustic_ms", "vocoder_ms"):
        assert getattr(record, key) >= 0.0


def test_failures_are_attributed_to_their_stage(pipeline_cfg, adapters):
    pipeline = ConversionPipeline(pipeline_cfg)
    wrong_encoder = AdapterSet(encoder=SyntheticEncoder(dim=TINY_DIM // 2), vocoder=adapters.vocoder)
    with pytest.raises(StageError) as info:
        pipeline.convert(AudioClip(samples=voice(0.5, 150.0, seed=5), sample_rate=16000), wrong_encoder)
    assert info.value.stage == "feature"

    with pytest.raises(StageError) as info:
        pipeline.convert(AudioClip(samples=np.zeros(10, dtype=np.float32), sample_rate=16000), adapters)
    assert info.value.stage == "feature"


def test_mismatches_are_rejected_before_any_audio(pipeline_cfg, tiny_dsp):
    wide = ContentEncoderSpec(backend_id="synthetic", layer_index=0, expected_dim=2 * TINY_DIM)
    with pytest.raises(ConfigError):
        ConversionPipeline(PipelineConfig(**{**pipeline_cfg.__dict__, "encoder_spec": wide}))

    other = DspConfig(**{**tiny_dsp.to_dict(), "n_mels": 20})
    with pytest.raises(ConfigError):
        PipelineConfig(**{**pipeline_cfg.__dict__, "dsp": other})
    with pytest.raises(ConfigError):
        ConversionPipeline(PipelineConfig(**{
            **pipeline_cfg.__dict__, "dsp": other,
            "vocoder_spec": VocoderSpec(backend_id="griffinlim", expected_dsp=other, output_rate=16000),
        }))


def test_discretize_needs_a_matching_codebook(tmp_path, pipeline_cfg):
    with pytest.raises(ConfigError):
        ConversionPipeline(PipelineConfig(**{**pipeline_cfg.__dict__, "transform": "discretize"}))

    path = KMeansCodebook(centroids=np.zeros((4, TINY_DIM + 1), dtype=np.float32)).save(tmp_path / "bad.kmcb")
    with pytest.raises(ConfigError):
        ConversionPipeline(PipelineConfig(**{**pipeline_cfg.__dict__, "transform": "discretize",
                                             "codebook_path": path}))


def test_discretized_pipeline_runs(tmp_path, pipeline_cfg, adapters):
    rng = np.random.default_rng(6)
    path = KMeansCodebook(centroids=rng.normal(size=(4, TINY_DIM)).astype(np.float32)).save(tmp_path / "cb.kmcb")
    cfg = PipelineConfig(**{**pipeline_cfg.__dict__, "transform": "discretize", "codebook_path": path})
    out = convert(AudioClip(samples=voice(0.5, 150.0, seed=7), sample_rate=16000), cfg, adapters)
    assert abs(len(out.samples) - 8000) <= 320


def test_batch_writes_outputs_and_a_manifest(tmp_path, pipeline_cfg, speaker_a, adapters):
    out_dir = tmp_path / "converted"
    result = convert_batch(speaker_a, pipeline_cfg, adapters, out_dir)
    assert not result.partial
    assert [p.name for p in result.outputs] == [f"{e.utterance_id}.wav" for e in speaker_a]

    converted = DatasetManifest.load(out_dir / "manifest.jsonl")
    assert [e.utterance_id for e in converted] == [e.utterance_id for e in speaker_a]
    for entry in converted:
        clip = load_audio(converted.resolve(entry), 16000)
        assert entry.duration_sec == pytest.approx(clip.duration, abs=1e-6)
        assert entry.language_tag == "zh"


def test_batch_skips_broken_entries(tmp_path, pipeline_cfg, speaker_a, adapters):
    broken = speaker_a.resolve(speaker_a.entries[1])
    broken.write_bytes(b"not audio at all")

    result = convert_batch(speaker_a, pipeline_cfg, adapters, tmp_path / "out")
    assert result.partial
    assert len(result.outputs) == 2
    assert len(result.failures) == 1
    failure = result.failures[0]
    assert failure["utterance_id"] == speaker_a.entries[1].utterance_id
    assert failure["stage"] == "load"
    assert failure["error_type"] == "DecodeError"

    logged = [json.loads(line) for line in (tmp_path / "out" / "failures.jsonl").read_text().splitlines()]
    assert logged == result.failures
    assert len(DatasetManifest.load(tmp_path / "out" / "manifest.jsonl")) == 2


def test_batch_with_parallel_workers_matches_serial(tmp_path, pipeline_cfg, speaker_a, adapters):
    pipeline = ConversionPipeline(pipeline_cfg)
    convert_batch(speaker_a, pipeline, adapters, tmp_path / "serial", workers=1)
    convert_batch(speaker_a, pipeline, adapters, tmp_path / "parallel", workers=3)
    for entry in speaker_a:
        a = load_audio(tmp_path / "serial" / f"{entry.utterance_id}.wav", 16000).samples
        b = load_audio(tmp_path / "parallel" / f"{entry.utterance_id}.wav", 16000).samples
        assert np.array_equal(a, b)


def test_language_tags_do_not_change_the_output(tmp_path, pipeline_cfg, adapters):
    samples = voice(0.6, 170.0, seed=9)
    write_wav(tmp_path / "src" / "same.wav", samples)
    entries = [ManifestEntry(utterance_id=f"u_{lang}", audio_path="same.wav", speaker_id="s",
                             language_tag=lang, duration_sec=0.6) for lang in ("zh", "en", "fr")]
    result = convert_batch(DatasetManifest(entries=entries, root=tmp_path / "src"), pipeline_cfg, adapters,
                           tmp_path / "out")
    outputs = [load_audio(p, 16000).samples for p in result.outputs]
    assert all(np.array_equal(outputs[0], o) for o in outputs[1:])


def test_empty_batch_is_an_error(tmp_path, pipeline_cfg, adapters):
    with pytest.raises(InsufficientDataError):
        convert_batch(DatasetManifest(entries=[], root=tmp_path), pipeline_cfg, adapters, tmp_path / "out")


def test_vocoder_backend_is_pluggable(pipeline_cfg):
    adapters = AdapterSet(encoder=SyntheticEncoder(dim=TINY_DIM), vocoder=GriffinLimVocoder(iterations=1))
    out = convert(AudioClip(samples=voice(0.4, 150.0, seed=10), sample_rate=16000), pipeline_cfg, adapters)
    assert np.all(np.abs(out.samples) <= 1.0)


def test_cross_grid_output_length_is_mel_frames_times_hop(tmp_path, speaker_b, tiny_acoustic, tiny_encoder_spec,
                                                          fast_train):
    # 16 kHz content features driving a 22.05 kHz mel grid
    dsp = DspConfig(sample_rate=22050, n_fft=1024, win_length=1024, hop_length=256, n_mels=16)
    adapters = AdapterSet(encoder=SyntheticEncoder(dim=TINY_DIM),
                          vocoder=GriffinLimVocoder(iterations=2, sample_rate=22050))
    context = TrainContext(dsp=dsp, encoder_spec=tiny_encoder_spec)
    checkpoint = train_standard(speaker_b, tiny_acoustic, fast_train, adapters, context)
    cfg = PipelineConfig(
        encoder_spec=tiny_encoder_spec,
        acoustic_checkpoint=checkpoint.save(tmp_path / "model22" / "checkpoint.xvck"),
        vocoder_spec=VocoderSpec(backend_id="griffinlim", expected_dsp=dsp, output_rate=22050),
        dsp=dsp,
    )
    pipeline = ConversionPipeline(cfg)

    for seconds in (0.37, 0.5, 1.0, 1.23):
        source = AudioClip(samples=voice(seconds, 150.0, seed=12), sample_rate=16000)
        features = extract_features(source, tiny_encoder_spec, adapters.encoder)
        t_mel = mel_frames_for(features, dsp)
        assert t_mel == -(-features.num_frames * 320 * 22050 // (16000 * 256))

        out = pipeline.convert(source, adapters)
        assert out.sample_rate == 22050
        assert len(out.samples) == t_mel * 256

"""Tests for audio I/O and the log-mel front-end."""

import librosa
import numpy as np
import pytest
import soundfile as sf

from src.audio import (
    AudioClip,
    DspConfig,
    compute_mel,
    load_audio,
    mel_config_16k,
    mel_config_22k,
    resample,
    save_wav,
)
from src.errors import ConfigError, DecodeError, EmptyInputError

from conftest import voice, write_wav


def test_presets_match_the_two_setups():
    cfg16 = mel_config_16k()
    assert (cfg16.sample_rate, cfg16.n_mels, cfg16.hop_length) == (16000, 128, 320)
    cfg22 = mel_config_22k()
    assert (cfg22.sample_rate, cfg22.n_mels, cfg22.n_fft, cfg22.win_length, cfg22.hop_length) == \
        (22050, 80, 1024, 1024, 256)


def test_fmax_defaults_to_nyquist():
    cfg = DspConfig(sample_rate=16000, n_fft=512, win_length=400, hop_length=160, n_mels=40)
    assert cfg.fmax == 8000.0


@pytest.mark.parametrize("kwargs", [
    dict(n_fft=256, win_length=400, hop_length=160),   # window longer than FFT
    dict(n_fft=512, win_length=400, hop_length=500),   # hop longer than window
    dict(n_fft=512, win_length=400, hop_length=160, fmax=9000.0),
    dict(n_fft=512, win_length=400, hop_length=160, log_floor=0.0),
])
def test_invalid_dsp_configs_are_rejected(kwargs):
    with pytest.raises(ConfigError):
        DspConfig(sample_rate=16000, n_mels=40, **kwargs)


def test_config_hash_tracks_every_field():
    base = mel_config_16k()
    changed = DspConfig(**{**base.to_dict(), "n_mels": 80})
    assert base.config_hash() == mel_config_16k().config_hash()
    assert base.config_hash() != changed.config_hash()


def test_one_second_gives_fifty_one_frames():
    clip = AudioClip(samples=voice(1.0, 150.0, seed=0), sample_rate=16000)
    mel = compute_mel(clip, mel_config_16k())
    assert mel.frames.shape == (51, 128)
    assert mel.frames.dtype == np.float32
    assert np.all(np.isfinite(mel.frames))


def test_one_second_at_22k_gives_87_frames():
    cfg = mel_config_22k()
    clip = AudioClip(samples=voice(1.0, 150.0, seed=0, rate=22050), sample_rate=22050)
    assert len(clip.samples) == 22050
    mel = compute_mel(clip, cfg)
    assert abs(mel.num_frames - 87) <= 1
    assert mel.frames.shape[1] == 80


@pytest.mark.parametrize("gain", [1.5, 2.0, 3.0])
def test_louder_audio_never_lowers_any_mel_entry(gain):
    cfg = mel_config_16k()
    quiet = voice(0.5, 170.0, seed=4) * 0.25
    base = compute_mel(AudioClip(samples=quiet, sample_rate=16000), cfg)
    louder = compute_mel(AudioClip(samples=(quiet * gain).astype(np.float32), sample_rate=16000), cfg)
    assert np.all(louder.frames >= base.frames - 1e-5)
    # above the floor the log-mel shifts by log(gain)
    voiced = base.frames > np.log(cfg.log_floor) + 1.0
    np.testing.assert_allclose(louder.frames[voiced] - base.frames[voiced], np.log(gain), atol=1e-3)


def test_silence_sits_on_the_log_floor():
    cfg = mel_config_16k()
    mel = compute_mel(AudioClip(samples=np.zeros(8000, dtype=np.float32), sample_rate=16000), cfg)
    np.testing.assert_allclose(mel.frames, np.log(cfg.log_floor), rtol=0, atol=1e-6)


def test_tone_peaks_in_the_matching_band():
    cfg = mel_config_16k()
    t = np.arange(16000) / 16000.0
    clip = AudioClip(samples=(0.5 * np.sin(2 * np.pi * 1000.0 * t)).astype(np.float32), sample_rate=16000)
    mel = compute_mel(clip, cfg)
    centers = librosa.mel_frequencies(n_mels=cfg.n_mels + 2, fmin=cfg.fmin, fmax=cfg.fmax)[1:-1]
    peak = centers[int(np.argmax(mel.frames[25]))]
    assert abs(peak - 1000.0) < 100.0


def test_compute_mel_rejects_wrong_rate_and_empty_clips():
    cfg = mel_config_16k()
    with pytest.raises(ConfigError):
        compute_mel(AudioClip(samples=np.zeros(100, dtype=np.float32), sample_rate=22050), cfg)
    with pytest.raises(EmptyInputError):
        compute_mel(AudioClip(samples=np.zeros(0, dtype=np.float32), sample_rate=16000), cfg)


def test_compute_mel_is_deterministic():
    clip = AudioClip(samples=voice(0.5, 200.0, seed=3), sample_rate=16000)
    a = compute_mel(clip, mel_config_16k())
    b = compute_mel(clip, mel_config_16k())
    assert np.array_equal(a.frames, b.frames)


def test_load_audio_downmixes_stereo(tmp_path):
    left = voice(0.25, 120.0, seed=1)
    right = voice(0.25, 240.0, seed=2)
    path = tmp_path / "stereo.wav"
    sf.write(str(path), np.stack([left, right], axis=1), 16000, subtype="FLOAT")
    clip = load_audio(path, 16000)
    np.testing.assert_allclose(clip.samples, (left + right) / 2, atol=1e-6)
    assert clip.channel_count == 1


def test_load_audio_resamples(tmp_path):
    path = write_wav(tmp_path / "a.wav", voice(1.0, 150.0, seed=4, rate=22050), rate=22050)
    clip = load_audio(path, 16000)
    assert clip.sample_rate == 16000
    assert abs(len(clip.samples) - 16000) <= 1


@pytest.mark.parametrize("rate", [8000, 24000, 44100])
def test_load_audio_targets_any_rate_a_backend_asks_for(tmp_path, rate):
    path = write_wav(tmp_path / "a.wav", voice(0.5, 150.0, seed=5))
    clip = load_audio(path, rate)
    assert clip.sample_rate == rate
    assert abs(len(clip.samples) - rate // 2) <= 1


def test_resample_is_identity_at_equal_rates():
    x = voice(0.1, 100.0, seed=5)
    assert resample(x, 16000, 16000) is x


def test_load_audio_errors(tmp_path):
    bogus = tmp_path / "bogus.wav"
    bogus.write_bytes(b"definitely not a wav file")
    with pytest.raises(DecodeError):
        load_audio(bogus, 16000)
    with pytest.raises(DecodeError):
        load_audio(tmp_path / "missing.wav", 16000)

    empty = tmp_path / "empty.wav"
    sf.write(str(empty), np.zeros(0, dtype=np.float32), 16000)
    with pytest.raises(EmptyInputError):
        load_audio(empty, 16000)


def test_save_wav_writes_16_bit_pcm(tmp_path):
    clip = AudioClip(samples=voice(0.2, 180.0, seed=6), sample_rate=16000)
    path = save_wav(clip, tmp_path / "out" / "clip.wav")
    info = sf.info(str(path))
    assert info.subtype == "PCM_16"
    back = load_audio(path, 16000)
    np.testing.assert_allclose(back.samples, clip.samples, atol=1.0 / 32768 + 1e-6)

import numpy as np
import pytest

from matrir import dsp, fileio


def test_wav_float32_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 8000)) * 0.1
    p = tmp_path / "x.wav"
    fileio.wav_write(p, x, 16000, fmt="float32")
    y, rate = fileio.wav_read(p)
    assert rate == 16000
    np.testing.assert_allclose(y, x, atol=1e-7)


def test_wav_pcm16_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    x = np.clip(rng.normal(size=8000) * 0.2, -1, 1)
    p = tmp_path / "m.wav"
    fileio.wav_write(p, x, 16000, fmt="pcm16")
    y, rate = fileio.wav_read(p)
    assert y.shape == (1, 8000)
    np.testing.assert_allclose(y[0], x, atol=1.0 / 32767)


def test_specbin_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    mags = np.abs(rng.normal(size=(2, 256, 256))).astype(np.float32)
    spec = dsp.Spectrogram(mags)
    p = tmp_path / "a.spec.bin"
    fileio.specbin_write(p, spec)
    back = fileio.specbin_read(p)
    np.testing.assert_array_equal(back.magnitudes, mags.astype(np.float64))
    assert back.stft_config == spec.stft_config


def test_specbin_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(dsp.SignalError):
        fileio.specbin_read(p)


def test_specbin_rejects_truncated(tmp_path):
    rng = np.random.default_rng(3)
    spec = dsp.Spectrogram(np.abs(rng.normal(size=(2, 256, 256))))
    p = tmp_path / "t.bin"
    fileio.specbin_write(p, spec)
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])
    with pytest.raises(dsp.SignalError):
        fileio.specbin_read(p)

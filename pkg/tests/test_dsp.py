import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matrir import dsp


def make_waveform(samples):
    return dsp.RIRWaveform(samples)


def exponential_decay(t60, duration, sample_rate=16000, noise_seed=None):
    """Closed-form -60 dB/t60 amplitude envelope, optionally noise-modulated."""
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    env = np.exp(-np.log(1e3) * t / t60)
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        env = env * rng.normal(size=n)
    return dsp.RIRWaveform(np.stack([env, env]), sample_rate, duration)


def direct_dft_frame(x, frame_index, config=dsp.DEFAULT_STFT):
    """Oracle: one STFT frame computed with an explicit DFT sum."""
    half = config.window_length // 2
    padded = np.pad(x, (half, half))
    start = frame_index * config.hop
    seg = padded[start : start + config.window_length]
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(config.window_length) / config.window_length)
    windowed = np.zeros(config.fft_size)
    windowed[: config.window_length] = seg * w
    k = np.arange(config.fft_size // 2 + 1)
    nn = np.arange(config.fft_size)
    dft = (windowed[None, :] * np.exp(-2j * np.pi * k[:, None] * nn[None, :] / config.fft_size)).sum(axis=1)
    return np.abs(dft)


class TestStft:
    def test_zero_waveform_gives_zero_spectrogram(self):
        spec = dsp.stft(dsp.RIRWaveform.silence())
        assert spec.magnitudes.shape == (2, 256, 256)
        assert np.all(spec.magnitudes == 0)

    def test_impulse_frames_match_direct_dft(self):
        x = np.zeros((2, 8000))
        x[0, 0] = 1.0
        spec = dsp.stft(make_waveform(x))
        for frame in (0, 1, 2, 3, 4):
            oracle = direct_dft_frame(x[0], frame)[:256]
            np.testing.assert_allclose(spec.magnitudes[0, :, frame], oracle, atol=1e-12)
        assert np.all(spec.magnitudes[1] == 0)

    def test_random_signal_frames_match_direct_dft(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(2, 8000))
        spec = dsp.stft(make_waveform(x))
        for frame in (0, 17, 100, 250):
            oracle = direct_dft_frame(x[1], frame)[:256]
            np.testing.assert_allclose(spec.magnitudes[1, :, frame], oracle, atol=1e-9)

    def test_sine_peaks_at_expected_bin(self):
        t = np.arange(8000) / 16000
        sine = np.sin(2 * np.pi * 1000 * t)
        spec = dsp.stft(make_waveform(np.stack([sine, sine])))
        # 1 kHz at 16 kHz / 512-point fft: bin 1000 / 31.25 = 32
        for frame in range(20, 230, 30):
            assert np.argmax(spec.magnitudes[0, :, frame]) == 32

    def test_frame_budget_mismatch_raises(self):
        long = dsp.RIRWaveform(np.zeros((2, 16000)), 16000, 1.0)
        with pytest.raises(dsp.ConfigMismatchError):
            dsp.stft(long)

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(dsp.SignalError):
            dsp.RIRWaveform(np.zeros((3, 8000)))

    def test_rejects_non_finite(self):
        x = np.zeros((2, 8000))
        x[0, 5] = np.nan
        with pytest.raises(dsp.SignalError):
            dsp.RIRWaveform(x)

    def test_magnitude_invariant_under_sign_flip(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(2, 8000))
        a = dsp.stft(make_waveform(x)).magnitudes
        b = dsp.stft(make_waveform(-x)).magnitudes
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestInversion:
    def test_true_phase_round_trip(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 8000))
        spec = dsp.stft(make_waveform(x))
        ref = dsp.stft_complex(x)
        res = dsp.invert_magnitude(spec, phase_ref=ref)
        err = np.linalg.norm(res.waveform.samples - x) / np.linalg.norm(x)
        assert err < 1e-4
        assert not res.silent

    def test_zero_spectrogram_gives_silence(self):
        spec = dsp.Spectrogram(np.zeros((2, 256, 256)))
        res = dsp.invert_magnitude(spec)
        assert res.silent
        assert np.all(res.waveform.samples == 0)

    def test_sine_phase_retrieval_convergence(self):
        t = np.arange(8000) / 16000
        sine = 0.5 * np.sin(2 * np.pi * 500 * t)
        spec = dsp.stft(make_waveform(np.stack([sine, sine])))
        res = dsp.invert_magnitude(spec, iterations=32)
        assert res.spectral_convergence < 0.05


class TestEnergyDecay:
    def test_exponential_envelope_slope(self):
        w = exponential_decay(0.3, 0.5, noise_seed=5)
        edc = dsp.energy_decay_curve(w)
        # fit over the clean middle of the curve
        lo, hi = 800, 5600
        slope = np.polyfit(edc.times[lo:hi], edc.values_db[lo:hi], 1)[0]
        assert abs(slope - (-60.0 / 0.3)) / (60.0 / 0.3) < 0.05

    def test_single_impulse_drops_to_floor(self):
        x = np.zeros((2, 8000))
        x[:, 10] = 1.0
        edc = dsp.energy_decay_curve(make_waveform(x))
        assert edc.values_db[0] == 0.0
        assert edc.values_db[11] == pytest.approx(10 * np.log10(1e-12))

    def test_two_equal_impulses_step(self):
        x = np.zeros((2, 8000))
        x[:, 0] = 1.0
        x[:, 4000] = 1.0
        edc = dsp.energy_decay_curve(make_waveform(x))
        # after the first impulse half the energy remains: -3.01 dB
        assert edc.values_db[1] == pytest.approx(10 * np.log10(0.5), abs=1e-9)
        assert edc.values_db[4000] == pytest.approx(10 * np.log10(0.5), abs=1e-9)

    def test_monotone_non_increasing(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            x = rng.normal(size=(2, 8000)) * rng.uniform(0, 1, size=(2, 8000))
            edc = dsp.energy_decay_curve(make_waveform(x))
            assert np.all(np.diff(edc.values_db) <= 1e-12)


class TestRt60:
    @pytest.mark.parametrize("t60", [0.05, 0.1, 0.3, 0.6, 1.0])
    def test_closed_form_decays(self, t60):
        duration = max(0.5, 1.3 * t60 + 0.1)
        w = exponential_decay(t60, duration, noise_seed=11)
        est = dsp.estimate_rt60(w)
        assert abs(est - t60) / t60 <= 0.05

    def test_pure_impulse_raises(self):
        x = np.zeros((2, 8000))
        x[:, 0] = 1.0
        with pytest.raises(dsp.DecayRangeError):
            dsp.estimate_rt60(make_waveform(x))

    def test_silent_raises(self):
        with pytest.raises(dsp.DecayRangeError):
            dsp.estimate_rt60(dsp.RIRWaveform.silence())


class TestEarlyToLate:
    def test_hand_computed_ratio(self):
        # impulses at 10 ms and 60 ms, energy ratio 9:1; boundary at
        # onset + 50 ms = 60 ms puts the second impulse in the late window
        x = np.zeros((2, 8000))
        x[:, 160] = 3.0
        x[:, 960] = 1.0
        res = dsp.early_to_late_db(make_waveform(x))
        assert res.db == pytest.approx(10 * np.log10(9.0), abs=1e-6)
        assert not res.clamped

    def test_equal_energy_is_zero(self):
        x = np.zeros((2, 8000))
        x[:, 100] = 1.0
        x[:, 100 + 800] = 1.0
        res = dsp.early_to_late_db(make_waveform(x))
        assert res.db == pytest.approx(0.0, abs=1e-9)

    def test_all_early_clamps(self):
        x = np.zeros((2, 8000))
        x[:, 10] = 1.0
        x[:, 50] = 0.5
        res = dsp.early_to_late_db(make_waveform(x))
        assert res.db == pytest.approx(60.0)
        assert res.clamped

    @given(scale=st.floats(min_value=1e-3, max_value=1e3))
    @settings(max_examples=25, deadline=None)
    def test_scale_invariance(self, scale):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 8000)) * np.exp(-np.arange(8000) / 2000.0)
        a = dsp.early_to_late_db(make_waveform(x)).db
        b = dsp.early_to_late_db(make_waveform(x * scale)).db
        assert a == pytest.approx(b, abs=1e-9)


class TestConvolve:
    def test_delta_identity(self):
        rir = np.zeros((2, 8000))
        rir[:, 0] = 1.0
        dry = np.sin(np.arange(1000) / 7.0)
        out = dsp.convolve_rir(make_waveform(rir), dry)
        expected = 0.9 * dry / np.abs(dry).max()
        np.testing.assert_allclose(out[0, :1000], expected, atol=1e-9)

    def test_delayed_delta_shifts(self):
        rir = np.zeros((2, 8000))
        rir[:, 100] = 1.0
        dry = np.zeros(500)
        dry[3] = 1.0
        out = dsp.convolve_rir(make_waveform(rir), dry)
        assert np.argmax(np.abs(out[0])) == 103

    def test_two_tap_echo(self):
        # taps 1.0 and 0.5 at 50 ms: a click produces two clicks at 2:1
        rir = np.zeros((2, 8000))
        rir[:, 0] = 1.0
        rir[:, 800] = 0.5
        dry = np.zeros(2000)
        dry[0] = 1.0
        out = dsp.convolve_rir(make_waveform(rir), dry)
        assert out[0, 0] == pytest.approx(2 * out[0, 800], abs=1e-9)

    def test_sample_rate_mismatch(self):
        rir = make_waveform(np.zeros((2, 8000)))
        with pytest.raises(dsp.SignalError):
            dsp.convolve_rir(rir, np.zeros(100), dry_rate=44100)


class TestNoise:
    def test_infinite_snr_is_identity(self):
        rng = np.random.default_rng(4)
        w = make_waveform(rng.normal(size=(2, 8000)))
        out = dsp.add_gaussian_noise(w, np.inf, seed=1)
        np.testing.assert_array_equal(out.samples, w.samples)

    def test_zero_snr_doubles_power(self):
        rng = np.random.default_rng(4)
        w = make_waveform(rng.normal(size=(2, 8000)))
        out = dsp.add_gaussian_noise(w, 0.0, seed=1)
        ratio = (out.samples**2).mean() / (w.samples**2).mean()
        assert abs(ratio - 2.0) < 0.1

    def test_seed_determinism(self):
        rng = np.random.default_rng(4)
        w = make_waveform(rng.normal(size=(2, 8000)))
        a = dsp.add_gaussian_noise(w, 10.0, seed=9)
        b = dsp.add_gaussian_noise(w, 10.0, seed=9)
        np.testing.assert_array_equal(a.samples, b.samples)

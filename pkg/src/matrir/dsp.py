"""Waveform/spectrogram transforms and room-acoustic descriptors.

All functions are pure over value inputs; safe for concurrent callers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.signal import fftconvolve

SAMPLE_RATE = 16000
RIR_DURATION = 0.5
RIR_SAMPLES = int(round(RIR_DURATION * SAMPLE_RATE))
SPEC_BINS = 256
SPEC_FRAMES = 256

DB_FLOOR_EPS = 1e-12
CLARITY_CLAMP_DB = 60.0


class SignalError(ValueError):
    pass


class ConfigMismatchError(SignalError):
    pass


class DecayRangeError(SignalError):
    """Decay curve does not span the -5..-35 dB fit range."""


def _hann(n: int) -> np.ndarray:
    # Periodic Hann, exact overlap-add partition for hop = n / 2**k.
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 256
    hop: int = 32
    fft_size: int = 512
    window: str = "hann"
    pad_mode: str = "center"

    def __post_init__(self):
        if self.window_length % self.hop != 0:
            raise SignalError("hop must divide window_length")
        if self.fft_size < self.window_length:
            raise SignalError("fft_size must be >= window_length")
        if self.window != "hann":
            raise SignalError(f"unsupported window: {self.window}")
        if self.pad_mode != "center":
            raise SignalError(f"unsupported pad_mode: {self.pad_mode}")
        # Constant-overlap-add check: the WOLA denominator must be strictly
        # positive for every sample inside the analysis span.
        w = _hann(self.window_length)
        denom = np.zeros(self.window_length * 2)
        for start in range(0, self.window_length + 1, self.hop):
            denom[start : start + self.window_length] += w**2
        if denom[self.window_length // 2 : self.window_length * 3 // 2].min() <= 0:
            raise SignalError("window/hop combination violates overlap-add")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


DEFAULT_STFT = StftConfig()


@dataclass
class RIRWaveform:
    """Binaural impulse response: samples shaped (2, L)."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    duration: float = RIR_DURATION

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] != 2:
            raise SignalError(f"expected (2, L) samples, got {self.samples.shape}")
        expected = int(round(self.duration * self.sample_rate))
        if self.samples.shape[1] != expected:
            raise SignalError(
                f"length {self.samples.shape[1]} != duration*rate = {expected}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise SignalError("non-finite samples")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @classmethod
    def silence(cls, sample_rate: int = SAMPLE_RATE, duration: float = RIR_DURATION):
        n = int(round(duration * sample_rate))
        return cls(np.zeros((2, n)), sample_rate, duration)


@dataclass
class Spectrogram:
    """Two-channel non-negative magnitude grid, (2, F, T) with F = T = 256."""

    magnitudes: np.ndarray
    stft_config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        self.magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if self.magnitudes.ndim != 3 or self.magnitudes.shape[0] != 2:
            raise SignalError(f"expected (2, F, T), got {self.magnitudes.shape}")
        if not np.all(np.isfinite(self.magnitudes)):
            raise SignalError("non-finite magnitudes")
        if self.magnitudes.min() < 0:
            raise SignalError("negative magnitudes")

    @property
    def shape(self):
        return self.magnitudes.shape


@dataclass
class EnergyDecayCurve:
    """Backward-integrated energy in dB, 0 dB at t=0, non-increasing."""

    values_db: np.ndarray
    times: np.ndarray


class ClarityResult(NamedTuple):
    db: float
    clamped: bool


class InversionResult(NamedTuple):
    waveform: RIRWaveform
    spectral_convergence: float
    silent: bool


def _frame_signal(x: np.ndarray, config: StftConfig) -> np.ndarray:
    """Centered zero-padded frames, shape (n_frames, window_length)."""
    half = config.window_length // 2
    padded = np.pad(x, (half, half))
    n_frames = 1 + x.shape[-1] // config.hop
    idx = np.arange(config.window_length)[None, :] + (
        config.hop * np.arange(n_frames)[:, None]
    )
    return padded[idx]


def stft_complex(samples: np.ndarray, config: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Full half-spectrum STFT (keeps the Nyquist bin), shape (C, F+1, n_frames)."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    w = _hann(config.window_length)
    out = []
    for ch in samples:
        frames = _frame_signal(ch, config) * w
        out.append(np.fft.rfft(frames, n=config.fft_size).T)
    return np.stack(out)


def istft_complex(
    spec: np.ndarray, n_samples: int, config: StftConfig = DEFAULT_STFT
) -> np.ndarray:
    """Weighted overlap-add inverse of `stft_complex`, shape (C, n_samples)."""
    spec = np.asarray(spec)
    if spec.ndim == 2:
        spec = spec[None]
    w = _hann(config.window_length)
    half = config.window_length // 2
    n_frames = spec.shape[2]
    total = half * 2 + (n_frames - 1) * config.hop + config.window_length
    out = np.zeros((spec.shape[0], total))
    denom = np.zeros(total)
    frames = np.fft.irfft(spec, n=config.fft_size, axis=1)[
        :, : config.window_length, :
    ]
    for t in range(n_frames):
        start = t * config.hop
        sl = slice(start, start + config.window_length)
        out[:, sl] += frames[:, :, t] * w
        denom[sl] += w**2
    good = denom > 1e-12
    out[:, good] /= denom[good]
    return out[:, half : half + n_samples]


def stft(waveform: RIRWaveform, config: StftConfig = DEFAULT_STFT) -> Spectrogram:
    """Magnitude spectrogram of a binaural RIR, cropped/padded to 256x256.

    The 257-bin half spectrum loses its Nyquist bin; frames past the signal
    end are zero. Raises ConfigMismatchError when the waveform produces more
    frames than the target grid.
    """
    n_frames = 1 + waveform.n_samples // config.hop
    if n_frames > SPEC_FRAMES:
        raise ConfigMismatchError(
            f"waveform yields {n_frames} frames > {SPEC_FRAMES}; config mismatch"
        )
    full = stft_complex(waveform.samples, config)
    mags = np.abs(full[:, :SPEC_BINS, :])
    out = np.zeros((2, SPEC_BINS, SPEC_FRAMES))
    out[:, :, :n_frames] = mags
    return Spectrogram(out, config)


def _target_frames(spec: Spectrogram, n_samples: int) -> int:
    return 1 + n_samples // spec.stft_config.hop


def invert_magnitude(
    spec: Spectrogram,
    iterations: int = 32,
    phase_ref: Optional[np.ndarray] = None,
    n_samples: int = RIR_SAMPLES,
    sample_rate: int = SAMPLE_RATE,
) -> InversionResult:
    """Waveform from a magnitude spectrogram.

    With `phase_ref` (the complex array from `stft_complex`, which also
    supplies the dropped Nyquist bin) the reconstruction is exact. Otherwise
    phase is retrieved by iterative projection (Griffin-Lim) and the
    remaining spectral-convergence error is reported.
    """
    config = spec.stft_config
    n_frames = _target_frames(spec, n_samples)
    mags = spec.magnitudes[:, :, :n_frames]
    duration = n_samples / sample_rate

    if mags.max() <= 0.0:
        return InversionResult(
            RIRWaveform(np.zeros((2, n_samples)), sample_rate, duration), 0.0, True
        )

    full_mags = np.zeros((2, config.n_bins, n_frames))
    full_mags[:, :SPEC_BINS, :] = mags

    if phase_ref is not None:
        ref = np.asarray(phase_ref)[:, :, :n_frames]
        phase = np.angle(ref)
        cplx = full_mags * np.exp(1j * phase)
        cplx[:, SPEC_BINS:, :] = ref[:, SPEC_BINS:, :]
        wave = istft_complex(cplx, n_samples, config)
    else:
        cplx = full_mags.astype(np.complex128)
        for _ in range(iterations):
            wave = istft_complex(cplx, n_samples, config)
            reana = stft_complex(wave, config)
            phase = np.angle(reana)
            cplx = full_mags * np.exp(1j * phase)
            cplx[:, SPEC_BINS:, :] = 0.0
        wave = istft_complex(cplx, n_samples, config)

    reana = np.abs(stft_complex(wave, config)[:, :SPEC_BINS, :])
    err = float(np.linalg.norm(reana - mags) / np.linalg.norm(mags))
    return InversionResult(RIRWaveform(wave, sample_rate, duration), err, False)


def schroeder_db(x: np.ndarray) -> np.ndarray:
    """Backward-integrated squared signal in dB, normalized to 0 dB at t=0."""
    energy = np.cumsum((x**2)[::-1])[::-1]
    total = energy[0]
    if total <= 0:
        raise SignalError("all-zero input has no decay curve")
    return 10.0 * np.log10(np.maximum(energy / total, DB_FLOOR_EPS))


def energy_decay_curve(waveform: RIRWaveform) -> EnergyDecayCurve:
    """Schroeder curve of the summed channel energy."""
    energy = (waveform.samples**2).sum(axis=0)
    curve = schroeder_db(np.sqrt(energy))
    times = np.arange(waveform.n_samples) / waveform.sample_rate
    return EnergyDecayCurve(curve, times)


def _fit_rt60(curve_db: np.ndarray, sample_rate: int) -> float:
    below5 = np.nonzero(curve_db <= -5.0)[0]
    below35 = np.nonzero(curve_db <= -35.0)[0]
    if len(below5) == 0 or len(below35) == 0:
        raise DecayRangeError("decay curve never reaches -35 dB")
    i5, i35 = below5[0], below35[0]
    if i35 - i5 < 2:
        raise DecayRangeError("-5..-35 dB span too short for a line fit")
    t = np.arange(i5, i35 + 1) / sample_rate
    slope, _ = np.polyfit(t, curve_db[i5 : i35 + 1], 1)
    if slope >= 0:
        raise DecayRangeError("non-decaying fit")
    return -60.0 / slope


def estimate_rt60(waveform: RIRWaveform) -> float:
    """RT60 via T30 line fit (-5..-35 dB) of the Schroeder curve, per channel
    then averaged. Raises DecayRangeError when the range is unreachable."""
    values = []
    for ch in waveform.samples:
        if not np.any(ch):
            raise DecayRangeError("silent channel")
        values.append(_fit_rt60(schroeder_db(ch), waveform.sample_rate))
    return float(np.mean(values))


def early_to_late_db(waveform: RIRWaveform, boundary: float = 0.050) -> ClarityResult:
    """Early/late energy ratio (C50 for the default boundary), channel-averaged.

    The early window starts at the onset (first sample above 1% of the channel
    peak) and spans `boundary` seconds, half-open. Clamped to +-60 dB.
    """
    values, clamped = [], False
    for ch in waveform.samples:
        peak = np.abs(ch).max()
        if peak <= 0:
            raise SignalError("silent channel")
        onset = int(np.nonzero(np.abs(ch) > 0.01 * peak)[0][0])
        split = onset + int(round(boundary * waveform.sample_rate))
        early = float((ch[onset:split] ** 2).sum())
        late = float((ch[split:] ** 2).sum())
        if late <= 0.0 or early <= 0.0:
            values.append(CLARITY_CLAMP_DB if late <= 0.0 else -CLARITY_CLAMP_DB)
            clamped = True
            continue
        db = 10.0 * np.log10(early / late)
        if abs(db) > CLARITY_CLAMP_DB:
            db = float(np.clip(db, -CLARITY_CLAMP_DB, CLARITY_CLAMP_DB))
            clamped = True
        values.append(db)
    return ClarityResult(float(np.mean(values)), clamped)


def convolve_rir(rir: RIRWaveform, dry_audio: np.ndarray, dry_rate: int = SAMPLE_RATE):
    """Convolve mono dry audio with a binaural RIR; peak-normalized to 0.9.

    Returns a (2, L_audio + L_rir - 1) array.
    """
    if dry_rate != rir.sample_rate:
        raise SignalError(f"sample-rate mismatch: {dry_rate} != {rir.sample_rate}")
    dry = np.asarray(dry_audio, dtype=np.float64)
    if dry.ndim != 1:
        raise SignalError("dry audio must be mono")
    out = np.stack([fftconvolve(dry, ch) for ch in rir.samples])
    peak = np.abs(out).max()
    if peak > 0:
        out *= 0.9 / peak
    return out


def add_gaussian_noise(rir: RIRWaveform, snr_db: float, seed: int = 0) -> RIRWaveform:
    """Additive white noise at the given SNR; snr_db=inf returns a copy."""
    if not (np.isfinite(snr_db) or np.isposinf(snr_db)):
        raise SignalError("snr_db must be finite or +inf")
    if np.isposinf(snr_db):
        return RIRWaveform(rir.samples.copy(), rir.sample_rate, rir.duration)
    sig_power = float((rir.samples**2).mean())
    noise_power = sig_power / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, np.sqrt(noise_power), size=rir.samples.shape)
    return RIRWaveform(rir.samples + noise, rir.sample_rate, rir.duration)

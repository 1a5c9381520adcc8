"""Built-in anechoic test clips, synthesized deterministically at 16 kHz."""
from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .dsp import SAMPLE_RATE

CLIP_NAMES = ("click", "speech", "music")


def _normalize(x: np.ndarray, peak: float = 0.9) -> np.ndarray:
    m = np.abs(x).max()
    return x * (peak / m) if m > 0 else x


def click_clip(duration: float = 1.5, rate: int = SAMPLE_RATE) -> np.ndarray:
    """Four sharp band-limited clicks."""
    n = int(duration * rate)
    x = np.zeros(n)
    for k, t in enumerate((0.1, 0.5, 0.9, 1.3)):
        i = int(t * rate)
        x[i] = 1.0 * (0.9**k)
    # gentle band-limit so the click is not a single-sample alias
    kernel = np.hanning(9)
    kernel /= kernel.sum()
    return _normalize(np.convolve(x, kernel, mode="same"))


def _vowel(f0, formants, dur, rate, seed):
    n = int(dur * rate)
    pulse = np.zeros(n)
    period = int(rate / f0)
    pulse[::period] = 1.0
    rng = np.random.default_rng(seed)
    pulse += 0.01 * rng.normal(size=n)
    out = np.zeros(n)
    for fc, bw in formants:
        r = np.exp(-np.pi * bw / rate)
        theta = 2 * np.pi * fc / rate
        a = [1.0, -2 * r * np.cos(theta), r * r]
        out += lfilter([1.0 - r], a, pulse)
    env = np.minimum(1.0, np.arange(n) / (0.02 * rate))
    env *= np.minimum(1.0, (n - np.arange(n)) / (0.05 * rate))
    return out * env


def speech_clip(rate: int = SAMPLE_RATE) -> np.ndarray:
    """Speech-like vowel sequence from a filtered glottal pulse train."""
    vowels = [
        (115, [(700, 90), (1220, 110), (2600, 160)], 0.28),  # "a"
        (0, [], 0.06),
        (125, [(390, 80), (1990, 120), (2550, 160)], 0.22),  # "i"
        (0, [], 0.08),
        (105, [(450, 80), (800, 100), (2830, 170)], 0.30),  # "o"
        (0, [], 0.06),
        (120, [(530, 90), (1840, 120), (2480, 160)], 0.26),  # "e"
    ]
    parts = []
    for k, (f0, formants, dur) in enumerate(vowels):
        if f0 == 0:
            parts.append(np.zeros(int(dur * rate)))
        else:
            parts.append(_vowel(f0, formants, dur, rate, seed=k))
    return _normalize(np.concatenate(parts))


def _pluck(freq, dur, rate, seed):
    """Karplus-Strong plucked string."""
    n = int(dur * rate)
    period = int(rate / freq)
    rng = np.random.default_rng(seed)
    buf = rng.uniform(-1, 1, period)
    out = np.empty(n)
    for i in range(n):
        out[i] = buf[i % period]
        buf[i % period] = 0.5 * 0.996 * (buf[i % period] + buf[(i + 1) % period])
    return out


def music_clip(rate: int = SAMPLE_RATE) -> np.ndarray:
    """Short plucked-string phrase."""
    notes = [(220.0, 0.4), (277.2, 0.4), (329.6, 0.4), (440.0, 0.8)]
    parts = [_pluck(f, d, rate, seed=i) for i, (f, d) in enumerate(notes)]
    return _normalize(np.concatenate(parts))


def builtin_clip(name: str, rate: int = SAMPLE_RATE) -> np.ndarray:
    if name == "click":
        return click_clip(rate=rate)
    if name == "speech":
        return speech_clip(rate=rate)
    if name == "music":
        return music_clip(rate=rate)
    raise KeyError(f"unknown builtin clip {name!r}; have {CLIP_NAMES}")

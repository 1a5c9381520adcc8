"""WAV and spectrogram-container file formats."""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import SignalError, Spectrogram, StftConfig

SPECBIN_MAGIC = b"SPCB"  # header layout is versioned; bump on change
SPECBIN_VERSION = 1
_DTYPE_F32 = 1
_WINDOW_CODES = {"hann": 0}
_PAD_CODES = {"center": 0}
_HEADER = struct.Struct("<4sHHIIIBBIIIBB")  # magic, ver, reserved, C,F,T, dtype,
# window code, window_length, hop, fft_size, pad code, reserved


def wav_write(path, samples: np.ndarray, sample_rate: int, fmt: str = "float32"):
    """Write mono or multi-channel audio. fmt is 'float32' or 'pcm16'."""
    data = np.asarray(samples)
    if data.ndim == 2:
        data = data.T  # wavfile expects (frames, channels)
    if fmt == "float32":
        wavfile.write(path, sample_rate, data.astype(np.float32))
    elif fmt == "pcm16":
        clipped = np.clip(data, -1.0, 1.0)
        wavfile.write(path, sample_rate, np.round(clipped * 32767.0).astype(np.int16))
    else:
        raise SignalError(f"unsupported wav format: {fmt}")


def wav_read(path_or_bytes):
    """Read a WAV file; returns (samples shaped (C, L) float64 in [-1, 1], rate)."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        rate, data = wavfile.read(io.BytesIO(bytes(path_or_bytes)))
    else:
        rate, data = wavfile.read(path_or_bytes)
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32767.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483647.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 1:
        data = data[None, :]
    else:
        data = data.T
    return data, int(rate)


def specbin_write(path, spec: Spectrogram):
    """Self-describing binary tensor container for a magnitude spectrogram."""
    cfg = spec.stft_config
    c, f, t = spec.magnitudes.shape
    header = _HEADER.pack(
        SPECBIN_MAGIC,
        SPECBIN_VERSION,
        0,
        c,
        f,
        t,
        _DTYPE_F32,
        _WINDOW_CODES[cfg.window],
        cfg.window_length,
        cfg.hop,
        cfg.fft_size,
        _PAD_CODES[cfg.pad_mode],
        0,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(spec.magnitudes, dtype=np.float32).tobytes())


def specbin_read(path) -> Spectrogram:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SignalError("truncated spectrogram container")
    (magic, version, _, c, f, t, dtype, wcode, wlen, hop, nfft, pcode, _) = (
        _HEADER.unpack_from(raw)
    )
    if magic != SPECBIN_MAGIC:
        raise SignalError("bad magic in spectrogram container")
    if version != SPECBIN_VERSION or dtype != _DTYPE_F32:
        raise SignalError("unsupported spectrogram container version/dtype")
    window = {v: k for k, v in _WINDOW_CODES.items()}[wcode]
    pad = {v: k for k, v in _PAD_CODES.items()}[pcode]
    cfg = StftConfig(wlen, hop, nfft, window, pad)
    n = c * f * t
    if len(raw) - _HEADER.size < n * 4:
        raise SignalError("truncated spectrogram payload")
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=_HEADER.size)
    return Spectrogram(data.reshape(c, f, t).astype(np.float64), cfg)

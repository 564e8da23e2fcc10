"""WAV file input/output with normalization to [-1, 1] float buffers."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .errors import ValidationError

INT16_SCALE = 32768.0
INT32_SCALE = 2147483648.0


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file into a float64 (channels, samples) array in [-1, 1].

    Accepts 16-bit and 24-bit integer PCM (24-bit arrives left-justified in
    int32) and 32/64-bit float PCM.
    """
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        out = data.astype(np.float64) / INT16_SCALE
    elif data.dtype == np.int32:
        out = data.astype(np.float64) / INT32_SCALE
    elif data.dtype in (np.float32, np.float64):
        out = data.astype(np.float64)
    elif data.dtype == np.uint8:
        out = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise ValidationError(f"unsupported WAV sample format {data.dtype} in {path}")
    return out.T.copy(), int(rate)


def read_wav_mono(path, expect_rate=None) -> tuple[np.ndarray, int]:
    """Read a mono WAV; errors if the file has more than one channel."""
    data, rate = read_wav(path)
    if data.shape[0] != 1:
        raise ValidationError(f"{path}: expected mono, got {data.shape[0]} channels")
    if expect_rate is not None and rate != expect_rate:
        raise ValidationError(f"{path}: expected {expect_rate} Hz, got {rate} Hz")
    return data[0], rate


def write_wav(path, samples: np.ndarray, sample_rate: int, bit_depth: str = "int16") -> None:
    """Write a (channels, samples) float buffer as a WAV file; 1-D means mono.

    ``bit_depth`` is "int16" (default, values clipped to [-1, 1]) or "float32".
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValidationError(f"expected (channels, samples) buffer, got shape {arr.shape}")
    if bit_depth == "int16":
        # symmetric with the reader's /32768 so on-grid values round-trip exactly
        out = np.clip(np.round(arr * 32768.0), -32768.0, 32767.0).astype(np.int16)
    elif bit_depth == "float32":
        out = arr.astype(np.float32)
    else:
        raise ValidationError(f"unsupported bit depth {bit_depth!r} (use 'int16' or 'float32')")
    wavfile.write(path, sample_rate, out[0] if out.shape[0] == 1 else out.T)


def wav_duration_s(path) -> float:
    """Duration of a WAV file in seconds without loading the sample data."""
    rate, data = wavfile.read(path, mmap=True)
    return data.shape[0] / rate


def wav_info(path) -> dict:
    """Channel count, sample rate, length, and duration of a WAV file."""
    rate, data = wavfile.read(path, mmap=True)
    channels = 1 if data.ndim == 1 else data.shape[1]
    return {
        "sample_rate": int(rate),
        "channels": channels,
        "num_samples": int(data.shape[0]),
        "duration_s": data.shape[0] / rate,
        "dtype": str(data.dtype),
    }

"""WAV loading and resampling to the encoder's expected 16 kHz mono."""

import math
import wave

import numpy as np
from scipy.signal import resample_poly

from .errors import FormatError

TARGET_SR = 16000

_PCM_DTYPES = {2: np.int16, 4: np.int32}


def load_wav(path):
    """Read a PCM WAV file as (float32 samples in [-1, 1], sample_rate).

    Multi-channel audio is averaged down to mono. 16- and 32-bit integer
    PCM are supported; anything else is a format error.
    """
    try:
        with wave.open(str(path), "rb") as wav:
            n_channels = wav.getnchannels()
            sampwidth = wav.getsampwidth()
            sr = wav.getframerate()
            n_frames = wav.getnframes()
            raw = wav.readframes(n_frames)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: unreadable WAV: {exc}") from exc
    dtype = _PCM_DTYPES.get(sampwidth)
    if dtype is None:
        raise FormatError(f"{path}: unsupported sample width {sampwidth} bytes")
    if n_frames < 1:
        raise FormatError(f"{path}: no audio frames")
    data = np.frombuffer(raw, dtype=dtype)
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    scale = float(np.iinfo(dtype).max)
    return (data / scale).astype(np.float32), sr


def to_target_rate(samples, sr, target_sr: int = TARGET_SR):
    """Resample to ``target_sr`` (no-op when already there)."""
    if sr == target_sr:
        return samples
    g = math.gcd(sr, target_sr)
    out = resample_poly(samples, target_sr // g, sr // g)
    return out.astype(np.float32)


def load_wav_16k(path):
    """Convenience: load, mono-mix, and resample to 16 kHz."""
    samples, sr = load_wav(path)
    return to_target_rate(samples, sr)

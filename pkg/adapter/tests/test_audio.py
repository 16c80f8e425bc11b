import numpy as np
import pytest

from conftest import sine, write_wav
from dsvr_adapter.audio import TARGET_SR, load_wav, load_wav_16k, to_target_rate
from dsvr_adapter.errors import FormatError


def test_load_mono_16k(tmp_path):
    path = tmp_path / "a.wav"
    write_wav(path, sine(0.5))
    samples, sr = load_wav(path)
    assert sr == 16000
    assert samples.dtype == np.float32
    assert len(samples) == 8000
    assert np.abs(samples).max() <= 1.0


def test_stereo_mixes_to_mono(tmp_path):
    path = tmp_path / "st.wav"
    write_wav(path, sine(0.25), channels=2)
    samples, sr = load_wav(path)
    assert samples.ndim == 1
    assert len(samples) == 4000


def test_resample_8k_to_16k(tmp_path):
    path = tmp_path / "low.wav"
    write_wav(path, sine(1.0, sr=8000), sr=8000)
    out = load_wav_16k(path)
    assert len(out) == TARGET_SR
    assert out.dtype == np.float32

    # already at 16 kHz -> untouched
    x = sine(0.1).astype(np.float32)
    assert to_target_rate(x, 16000) is x


def test_corrupt_wav_rejected(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFFxxxxWAVEjunk")
    with pytest.raises(FormatError):
        load_wav(path)
    empty = tmp_path / "empty.wav"
    empty.write_bytes(b"")
    with pytest.raises(FormatError):
        load_wav(empty)

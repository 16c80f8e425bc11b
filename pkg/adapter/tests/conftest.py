import struct
import wave

import numpy as np
import pytest


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory):
    """A small randomly initialized encoder saved to a local directory.

    Uses the same convolutional front-end geometry as the full-size
    model family (20 ms hop over 16 kHz audio) with a 32-dim trunk so
    tests stay fast.
    """
    from transformers import Wav2Vec2Config, Wav2Vec2Model
    import torch

    torch.manual_seed(0)
    config = Wav2Vec2Config(
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        conv_dim=[32] * 7,
    )
    model = Wav2Vec2Model(config)
    path = tmp_path_factory.mktemp("encoder")
    model.save_pretrained(path)
    return str(path)


def write_wav(path, samples, sr=16000, channels=1):
    samples = np.clip(samples, -1.0, 1.0)
    pcm = (samples * 32767).astype("<i2")
    if channels > 1:
        pcm = np.repeat(pcm[:, None], channels, axis=1)
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(channels)
        wav.setsampwidth(2)
        wav.setframerate(sr)
        wav.writeframes(pcm.tobytes())


def sine(duration_s, sr=16000, freq=440.0):
    t = np.arange(int(duration_s * sr)) / sr
    return 0.5 * np.sin(2 * np.pi * freq * t)

"""Synthetic corpora for tests, demos, and pipeline smoke runs.

Utterances are drawn from a small latent inventory of sound classes,
each an isotropic Gaussian in embedding space; segments of 3-8 frames
share a class, the frame labels name the class, and the transcript is
the segment-class character sequence. That gives a corpus where
clustering quality and recognizer behavior have known ground truth
without any real audio.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arabic import Vocabulary, encode, save_vocabulary
from .errors import ValidationError
from .formats import (
    EmbeddingSequence,
    ManifestEntry,
    write_embeddings,
    write_frame_labels,
    write_manifest,
    write_transcripts,
)
from .model import TrainSample

#: Plain consonants used as synthetic class symbols; all of them are
#: fixed points of transcript normalization.
CLASS_CHARS = "بتجدرسصطعفقك"


@dataclass(frozen=True)
class FixturePaths:
    root: str
    train_manifest: str
    dev_manifest: str
    train_refs: str
    dev_refs: str
    vocab: str


def fixture_vocabulary(chars=CLASS_CHARS) -> Vocabulary:
    """Blank + space + the synthetic class characters."""
    return Vocabulary(("<blank>", " ") + tuple(chars))


def _make_utterance(rng, means, noise, min_segs, max_segs, min_len, max_len):
    n_segs = int(rng.integers(min_segs, max_segs + 1))
    classes = rng.integers(0, means.shape[0], size=n_segs)
    frames = []
    labels = []
    for cls in classes:
        seg_len = int(rng.integers(min_len, max_len + 1))
        frames.append(means[cls] + noise * rng.standard_normal((seg_len, means.shape[1])))
        labels.extend([CLASS_CHARS[cls]] * seg_len)
    text = "".join(CLASS_CHARS[cls] for cls in classes)
    return np.concatenate(frames).astype(np.float32), labels, text


def make_synthetic_corpus(
    out_dir,
    n_train: int = 40,
    n_dev: int = 10,
    n_classes: int = 12,
    dim: int = 32,
    noise: float = 0.05,
    seed: int = 0,
    min_segs: int = 4,
    max_segs: int = 10,
    min_seg_len: int = 3,
    max_seg_len: int = 8,
) -> FixturePaths:
    """Generate embeddings, frame labels, manifests, reference
    transcripts, and a vocabulary file under ``out_dir``."""
    if not 1 <= n_classes <= len(CLASS_CHARS):
        raise ValidationError(f"n_classes must be in [1, {len(CLASS_CHARS)}]")
    out_dir = Path(out_dir)
    (out_dir / "emb").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    means = rng.standard_normal((n_classes, dim))

    def build_split(name, count):
        entries = []
        refs = {}
        for i in range(count):
            utt_id = f"{name}_{i:04d}"
            frames, labels, text = _make_utterance(
                rng, means, noise, min_segs, max_segs, min_seg_len, max_seg_len
            )
            seq = EmbeddingSequence(utt_id=utt_id, frames=frames)
            emb_path = out_dir / "emb" / f"{utt_id}.bin"
            write_embeddings(seq, emb_path)
            rows = []
            start = 0
            for j in range(1, len(labels) + 1):
                if j == len(labels) or labels[j] != labels[start]:
                    rows.append((utt_id, start, j, labels[start]))
                    start = j
            label_path = out_dir / "labels" / f"{utt_id}.tsv"
            write_frame_labels(rows, label_path)
            entries.append(
                ManifestEntry(
                    utt_id=utt_id,
                    embedding_path=f"emb/{utt_id}.bin",
                    transcript=text,
                    label_path=f"labels/{utt_id}.tsv",
                )
            )
            refs[utt_id] = text
        manifest_path = out_dir / f"{name}.jsonl"
        write_manifest(entries, manifest_path)
        refs_path = out_dir / f"refs_{name}.tsv"
        write_transcripts(refs, refs_path)
        return manifest_path, refs_path

    train_manifest, train_refs = build_split("train", n_train)
    dev_manifest, dev_refs = build_split("dev", n_dev)

    vocab_path = out_dir / "vocab.txt"
    save_vocabulary(fixture_vocabulary(CLASS_CHARS[:n_classes]), vocab_path)
    return FixturePaths(
        root=str(out_dir),
        train_manifest=str(train_manifest),
        dev_manifest=str(dev_manifest),
        train_refs=str(train_refs),
        dev_refs=str(dev_refs),
        vocab=str(vocab_path),
    )


def make_overfit_samples(n_utts: int = 50, k: int = 16, seed: int = 0,
                         min_frames: int = 40, max_frames: int = 80):
    """Random code sequences with a fixed code-to-character mapping.

    Codes below ``len(CLASS_CHARS)`` emit their character; the remaining
    codes are silent. The target is the run-collapsed character stream,
    merging repeats unless a silent stretch separates them, which keeps
    every target CTC-feasible. Returns (samples, vocabulary, references).
    """
    if k < len(CLASS_CHARS) + 1:
        raise ValidationError(f"k must leave room for silent codes (>= {len(CLASS_CHARS) + 1})")
    vocab = fixture_vocabulary()
    rng = np.random.default_rng(seed)
    char_of = {c: CLASS_CHARS[c] for c in range(len(CLASS_CHARS))}

    samples = []
    refs = {}
    for i in range(n_utts):
        utt_id = f"overfit_{i:04d}"
        length = int(rng.integers(min_frames, max_frames + 1))
        codes = rng.integers(0, k, size=length)
        if all(int(c) not in char_of for c in codes):
            codes[0] = 0
        chars = []
        last = None
        for code in codes:
            ch = char_of.get(int(code))
            if ch is None:
                last = None
                continue
            if ch != last:
                chars.append(ch)
                last = ch
        text = "".join(chars)
        target = tuple(encode(text, vocab))
        samples.append(TrainSample(utt_id, codes.astype(np.int64), None, target))
        refs[utt_id] = text
    return samples, vocab, refs

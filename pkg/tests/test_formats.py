import struct

import numpy as np
import pytest

from dsvr.errors import CorruptionError, FormatError, ValidationError
from dsvr.formats import (
    EMBEDDING_MAGIC,
    UNKNOWN_LABEL,
    EmbeddingSequence,
    FrameLabelSequence,
    ManifestEntry,
    load_manifest,
    read_embeddings,
    read_frame_labels,
    read_transcripts,
    write_embeddings,
    write_frame_labels,
    write_manifest,
    write_transcripts,
)


def test_embedding_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((7, 5)).astype(np.float32)
    seq = EmbeddingSequence(utt_id="utt1", frames=frames, frame_shift_ms=20.0)
    path = tmp_path / "utt1.bin"
    write_embeddings(seq, path)
    back = read_embeddings(path)
    assert back.utt_id == "utt1"  # from the file stem
    assert back.frame_shift_ms == 20.0
    np.testing.assert_array_equal(back.frames, frames)
    assert read_embeddings(path, "other").utt_id == "other"


def test_embedding_rereads_are_byte_identical(tmp_path):
    frames = np.random.default_rng(1).standard_normal((3, 4)).astype(np.float32)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    write_embeddings(EmbeddingSequence("u", frames), a)
    write_embeddings(EmbeddingSequence("u", frames), b)
    assert a.read_bytes() == b.read_bytes()


def test_embedding_validation():
    with pytest.raises(ValidationError):
        EmbeddingSequence("u", np.zeros(5, dtype=np.float32))
    with pytest.raises(ValidationError):
        EmbeddingSequence("u", np.zeros((0, 4), dtype=np.float32))
    with pytest.raises(ValidationError):
        EmbeddingSequence("u", np.zeros((2, 0), dtype=np.float32))
    bad = np.zeros((2, 2), dtype=np.float32)
    bad[0, 0] = np.nan
    with pytest.raises(ValidationError):
        EmbeddingSequence("u", bad)
    with pytest.raises(ValidationError):
        EmbeddingSequence("u", np.zeros((2, 2), dtype=np.float32), frame_shift_ms=0.0)
    with pytest.raises(ValidationError):
        EmbeddingSequence("u", np.zeros((2, 2), dtype=np.int32))


def test_embedding_coerces_to_float32():
    seq = EmbeddingSequence("u", np.zeros((2, 2), dtype=np.float64))
    assert seq.frames.dtype == np.float32


def test_read_embeddings_npy(tmp_path):
    frames = np.random.default_rng(2).standard_normal((4, 3)).astype(np.float32)
    path = tmp_path / "x.npy"
    np.save(path, frames)
    back = read_embeddings(path)
    assert back.utt_id == "x"
    np.testing.assert_array_equal(back.frames, frames)

    np.save(tmp_path / "one_d.npy", frames[0])
    with pytest.raises(FormatError):
        read_embeddings(tmp_path / "one_d.npy")
    np.save(tmp_path / "f64.npy", frames.astype(np.float64))
    with pytest.raises(FormatError):
        read_embeddings(tmp_path / "f64.npy")


def test_read_embeddings_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(FormatError):
        read_embeddings(path)


def test_read_embeddings_bad_version(tmp_path):
    path = tmp_path / "v9.bin"
    header = struct.pack("<4sIIIf", EMBEDDING_MAGIC, 9, 1, 1, 20.0)
    path.write_bytes(header + b"\x00" * 4)
    with pytest.raises(FormatError):
        read_embeddings(path)


def test_read_embeddings_truncated(tmp_path):
    frames = np.ones((3, 2), dtype=np.float32)
    path = tmp_path / "t.bin"
    write_embeddings(EmbeddingSequence("t", frames), path)
    data = path.read_bytes()
    path.write_bytes(data[:-4])
    with pytest.raises(CorruptionError):
        read_embeddings(path)
    path.write_bytes(data + b"\x00" * 4)
    with pytest.raises(CorruptionError):
        read_embeddings(path)


def test_frame_labels_roundtrip(tmp_path):
    path = tmp_path / "u.tsv"
    write_frame_labels([("u", 0, 3, "a"), ("u", 3, 5, "b")], path)
    seq, unknown = read_frame_labels(path, expected_frames=5)
    assert seq.labels == ("a", "a", "a", "b", "b")
    assert unknown == 0


def test_frame_labels_gap_fills_unknown(tmp_path, caplog):
    path = tmp_path / "u.tsv"
    write_frame_labels([("u", 0, 2, "a"), ("u", 4, 5, "b")], path)
    with caplog.at_level("WARNING"):
        seq, unknown = read_frame_labels(path, expected_frames=6)
    assert seq.labels == ("a", "a", UNKNOWN_LABEL, UNKNOWN_LABEL, "b", UNKNOWN_LABEL)
    assert unknown == 3
    # one warning per contiguous gap run: [2,4) and [5,6)
    gap_warnings = [r for r in caplog.records if "uncovered" in r.message]
    assert len(gap_warnings) == 2


def test_frame_labels_rle_write(tmp_path):
    seq = FrameLabelSequence("u", ("a", "a", UNKNOWN_LABEL, "b"))
    path = tmp_path / "u.tsv"
    write_frame_labels(seq, path)
    assert path.read_text(encoding="utf-8") == "u\t0\t2\ta\nu\t3\t4\tb\n"
    back, unknown = read_frame_labels(path, expected_frames=4)
    assert back.labels == seq.labels
    assert unknown == 1


def test_frame_labels_errors(tmp_path):
    path = tmp_path / "u.tsv"

    write_frame_labels([("u", 0, 3, "a"), ("u", 2, 5, "b")], path)
    with pytest.raises(ValidationError, match="overlap"):
        read_frame_labels(path, 5)

    write_frame_labels([("u", 2, 2, "a")], path)
    with pytest.raises(ValidationError, match="bad interval"):
        read_frame_labels(path, 5)

    write_frame_labels([("u", 0, 9, "a")], path)
    with pytest.raises(ValidationError, match="exceeds"):
        read_frame_labels(path, 5)

    write_frame_labels([("u", 0, 2, "a"), ("w", 2, 4, "b")], path)
    with pytest.raises(ValidationError, match="multiple utterance ids"):
        read_frame_labels(path, 5)

    path.write_text("u\t0\ta\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_frame_labels(path, 5)
    path.write_text("u\tzero\t2\ta\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_frame_labels(path, 5)
    path.write_text("", encoding="utf-8")
    with pytest.raises(FormatError):
        read_frame_labels(path, 5)


def _touch_embedding(tmp_path, name):
    frames = np.ones((2, 2), dtype=np.float32)
    write_embeddings(EmbeddingSequence(name, frames), tmp_path / f"{name}.bin")
    return f"{name}.bin"


def test_manifest_roundtrip_and_resolution(tmp_path):
    rel = _touch_embedding(tmp_path, "a")
    entries = [ManifestEntry(utt_id="a", embedding_path=rel, transcript="xyz")]
    path = tmp_path / "m.jsonl"
    write_manifest(entries, path)
    manifest = load_manifest(path)
    assert len(manifest) == 1
    entry = manifest.entries[0]
    assert entry.utt_id == "a"
    # relative paths resolve against the manifest directory
    assert entry.embedding_path == str(tmp_path / "a.bin")
    assert entry.transcript == "xyz"
    assert entry.label_path is None


def test_manifest_duplicate_utt_id(tmp_path):
    rel = _touch_embedding(tmp_path, "a")
    path = tmp_path / "m.jsonl"
    write_manifest(
        [ManifestEntry("a", rel), ManifestEntry("a", rel)], path
    )
    with pytest.raises(ValidationError, match="duplicate"):
        load_manifest(path)


def test_manifest_missing_files_listed(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest([ManifestEntry("a", "missing_a.bin"), ManifestEntry("b", "missing_b.bin")], path)
    with pytest.raises(FileNotFoundError) as exc_info:
        load_manifest(path)
    msg = str(exc_info.value)
    assert "missing_a.bin" in msg and "missing_b.bin" in msg


def test_manifest_requires_fields(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"embedding_path": "x.bin"}\n', encoding="utf-8")
    with pytest.raises(ValidationError, match="utt_id"):
        load_manifest(path)
    path.write_text("not json\n", encoding="utf-8")
    with pytest.raises(FormatError):
        load_manifest(path)


def test_transcripts_roundtrip(tmp_path):
    path = tmp_path / "t.tsv"
    write_transcripts({"u1": "abc", "u2": "def"}, path)
    assert read_transcripts(path) == {"u1": "abc", "u2": "def"}


def test_transcripts_errors(tmp_path):
    path = tmp_path / "t.tsv"
    with pytest.raises(ValidationError):
        write_transcripts({"u1": "a\tb"}, path)
    path.write_text("u1\ta\nu1\tb\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="duplicate"):
        read_transcripts(path)
    path.write_text("u1\n", encoding="utf-8")
    with pytest.raises(FormatError):
        read_transcripts(path)

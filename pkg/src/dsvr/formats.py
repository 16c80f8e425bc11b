"""File formats and container types for the pipeline.

Covers the frame-embedding binary container, frame-level label TSVs,
dataset manifests (JSONL), and transcript TSVs. All multi-byte fields
are little-endian; embedding payloads are float32 row-major.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError, ValidationError

logger = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"DSVR"
EMBEDDING_VERSION = 1
_HEADER = struct.Struct("<4sIIIf")  # magic, version, T, d, frame_shift_ms

NPY_MAGIC = b"\x93NUMPY"

#: Marker used for frames not covered by any label interval. Excluded
#: from subsampling and metric accumulation.
UNKNOWN_LABEL = "?"

DEFAULT_FRAME_SHIFT_MS = 20.0


@dataclass(frozen=True, eq=False)
class EmbeddingSequence:
    """Frame-level embeddings for one utterance: ``frames`` is (T, d) float32."""

    utt_id: str
    frames: np.ndarray
    frame_shift_ms: float = DEFAULT_FRAME_SHIFT_MS

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 2:
            raise ValidationError(
                f"{self.utt_id}: embeddings must be 2-D (T, d), got shape {frames.shape}"
            )
        if frames.shape[0] < 1 or frames.shape[1] < 1:
            raise ValidationError(
                f"{self.utt_id}: embeddings need at least one frame and one dimension, "
                f"got shape {frames.shape}"
            )
        if not np.issubdtype(frames.dtype, np.floating):
            raise ValidationError(f"{self.utt_id}: embeddings must be floating point")
        frames = np.ascontiguousarray(frames, dtype=np.float32)
        if not np.isfinite(frames).all():
            raise ValidationError(f"{self.utt_id}: embeddings contain NaN or Inf")
        if not self.frame_shift_ms > 0:
            raise ValidationError(f"{self.utt_id}: frame_shift_ms must be positive")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def write_embeddings(seq: EmbeddingSequence, path) -> None:
    """Serialize an :class:`EmbeddingSequence` to the binary container."""
    header = _HEADER.pack(
        EMBEDDING_MAGIC,
        EMBEDDING_VERSION,
        seq.num_frames,
        seq.dim,
        seq.frame_shift_ms,
    )
    payload = np.ascontiguousarray(seq.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_embeddings(path, utt_id: str | None = None) -> EmbeddingSequence:
    """Read frame embeddings from the binary container or a 2-D float32 .npy.

    The utterance id is not stored in either format; it defaults to the
    file stem unless given explicitly.
    """
    path = Path(path)
    if utt_id is None:
        utt_id = path.stem
    data = path.read_bytes()

    if data[: len(NPY_MAGIC)] == NPY_MAGIC:
        try:
            arr = np.load(path, allow_pickle=False)
        except Exception as exc:
            raise FormatError(f"{path}: unreadable .npy payload: {exc}") from exc
        if arr.ndim != 2:
            raise FormatError(f"{path}: .npy embeddings must be 2-D, got {arr.ndim}-D")
        if arr.dtype != np.float32:
            raise FormatError(f"{path}: .npy embeddings must be float32, got {arr.dtype}")
        return EmbeddingSequence(utt_id=utt_id, frames=arr)

    if data[:4] != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise CorruptionError(f"{path}: truncated header ({len(data)} bytes)")
    _, version, n_frames, dim, frame_shift_ms = _HEADER.unpack_from(data)
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 4 * n_frames * dim
    if len(data) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(data) - _HEADER.size} bytes, "
            f"expected {expected - _HEADER.size} for {n_frames}x{dim} float32"
        )
    frames = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(n_frames, dim)
    return EmbeddingSequence(
        utt_id=utt_id, frames=frames.copy(), frame_shift_ms=frame_shift_ms
    )


@dataclass(frozen=True)
class FrameLabelSequence:
    """Per-frame sound labels for one utterance (one symbol per frame)."""

    utt_id: str
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 1:
            raise ValidationError(f"{self.utt_id}: empty label sequence")

    @property
    def num_frames(self) -> int:
        return len(self.labels)


def write_frame_labels(seq_or_rows, path) -> None:
    """Write interval rows ``(utt_id, start, end, symbol)`` as a TSV.

    Accepts either an iterable of rows or a :class:`FrameLabelSequence`
    (which is run-length encoded into maximal intervals, with unknown
    frames left uncovered).
    """
    if isinstance(seq_or_rows, FrameLabelSequence):
        rows = []
        start = 0
        labels = seq_or_rows.labels
        for i in range(1, len(labels) + 1):
            if i == len(labels) or labels[i] != labels[start]:
                if labels[start] != UNKNOWN_LABEL:
                    rows.append((seq_or_rows.utt_id, start, i, labels[start]))
                start = i
    else:
        rows = list(seq_or_rows)
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, start, end, symbol in rows:
            fh.write(f"{utt_id}\t{start}\t{end}\t{symbol}\n")


def read_frame_labels(path, expected_frames: int):
    """Expand a label-interval TSV into per-frame symbols.

    Intervals are half-open ``[start, end)`` frame indices. Frames not
    covered by any interval are filled with :data:`UNKNOWN_LABEL` and a
    warning is logged per contiguous gap. Returns the expanded
    :class:`FrameLabelSequence` and the number of unknown frames.
    """
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields")
            utt_id, start_s, end_s, symbol = parts
            try:
                start, end = int(start_s), int(end_s)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer frame index") from exc
            if not symbol:
                raise FormatError(f"{path}:{lineno}: empty symbol")
            rows.append((lineno, utt_id, start, end, symbol))
    if not rows:
        raise FormatError(f"{path}: no label rows")

    utt_ids = {r[1] for r in rows}
    if len(utt_ids) != 1:
        raise ValidationError(f"{path}: multiple utterance ids in one label file: {sorted(utt_ids)}")
    utt_id = rows[0][1]

    for lineno, _, start, end, _ in rows:
        if start < 0 or end <= start:
            raise ValidationError(f"{path}:{lineno}: bad interval [{start}, {end})")
        if end > expected_frames:
            raise ValidationError(
                f"{path}:{lineno}: interval [{start}, {end}) exceeds {expected_frames} frames"
            )

    rows.sort(key=lambda r: (r[2], r[3]))
    prev_end = None
    for lineno, _, start, end, _ in rows:
        if prev_end is not None and start < prev_end:
            raise ValidationError(f"{path}:{lineno}: interval [{start}, {end}) overlaps previous")
        prev_end = end

    labels = [UNKNOWN_LABEL] * expected_frames
    for _, _, start, end, symbol in rows:
        labels[start:end] = [symbol] * (end - start)

    unknown = labels.count(UNKNOWN_LABEL)
    if unknown:
        in_gap = False
        for i, lab in enumerate(labels + [None]):
            if lab == UNKNOWN_LABEL and not in_gap:
                gap_start, in_gap = i, True
            elif lab != UNKNOWN_LABEL and in_gap:
                logger.warning("%s: frames [%d, %d) uncovered, marked unknown", utt_id, gap_start, i)
                in_gap = False
    return FrameLabelSequence(utt_id=utt_id, labels=labels), unknown


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    embedding_path: str
    transcript: str | None = None
    label_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    path: str
    entries: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(path) -> DatasetManifest:
    """Load a JSONL manifest; paths are resolved relative to the manifest file.

    Preserves entry order, rejects duplicate utterance ids, and fails
    with a listing if any referenced file is missing.
    """
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: manifest line must be an object")
            for key in ("utt_id", "embedding_path"):
                if not obj.get(key):
                    raise ValidationError(f"{path}:{lineno}: missing required field {key!r}")
            utt_id = obj["utt_id"]
            if utt_id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            seen.add(utt_id)

            def _resolve(p):
                p = Path(p)
                return str(p if p.is_absolute() else base / p)

            entries.append(
                ManifestEntry(
                    utt_id=utt_id,
                    embedding_path=_resolve(obj["embedding_path"]),
                    transcript=obj.get("transcript"),
                    label_path=_resolve(obj["label_path"]) if obj.get("label_path") else None,
                )
            )
    missing = []
    for entry in entries:
        if not Path(entry.embedding_path).is_file():
            missing.append(entry.embedding_path)
        if entry.label_path and not Path(entry.label_path).is_file():
            missing.append(entry.label_path)
    if missing:
        raise FileNotFoundError(f"{path}: missing referenced files: " + ", ".join(missing))
    return DatasetManifest(path=str(path), entries=entries)


def write_manifest(entries, path) -> None:
    """Write manifest entries as JSONL. Paths are written as given."""
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            obj = {"utt_id": entry.utt_id, "embedding_path": entry.embedding_path}
            if entry.transcript is not None:
                obj["transcript"] = entry.transcript
            if entry.label_path is not None:
                obj["label_path"] = entry.label_path
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def read_transcripts(path) -> dict:
    """Read a transcript TSV (utt_id, text) into an ordered dict."""
    path = Path(path)
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 tab-separated fields")
            utt_id, text = parts
            if utt_id in out:
                raise ValidationError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            out[utt_id] = text
    return out


def write_transcripts(items, path) -> None:
    """Write (utt_id, text) pairs as a transcript TSV."""
    if isinstance(items, dict):
        items = items.items()
    with open(path, "w", encoding="utf-8") as fh:
        for utt_id, text in items:
            if "\t" in text or "\n" in text:
                raise ValidationError(f"{utt_id}: transcript contains tab/newline")
            fh.write(f"{utt_id}\t{text}\n")

"""Writers for the toolkit's on-disk formats.

The adapter talks to the downstream toolkit only through files, so the
formats are reproduced here: the frame-embedding binary container
(magic ``DSVR``, version, T, d, frame-shift header followed by float32
rows), JSONL manifests, and frame-label TSVs.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

EMBEDDING_MAGIC = b"DSVR"
EMBEDDING_VERSION = 1
_HEADER = struct.Struct("<4sIIIf")  # magic, version, T, d, frame_shift_ms


def write_embedding_file(path, frames, frame_shift_ms: float = 20.0) -> None:
    """Write one utterance's (T, d) float32 frames to the binary container."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise ValidationError(f"{path}: frames must be (T, d) with T, d >= 1")
    if not np.isfinite(frames).all():
        raise ValidationError(f"{path}: frames contain NaN or Inf")
    header = _HEADER.pack(
        EMBEDDING_MAGIC, EMBEDDING_VERSION,
        frames.shape[0], frames.shape[1], frame_shift_ms,
    )
    Path(path).write_bytes(header + frames.tobytes())


def write_manifest(entries, path) -> None:
    """Write manifest rows ({"utt_id", "embedding_path", ...}) as JSONL."""
    seen = set()
    lines = []
    for entry in entries:
        if entry["utt_id"] in seen:
            raise ValidationError(f"duplicate utt_id {entry['utt_id']!r} in manifest")
        seen.add(entry["utt_id"])
        lines.append(json.dumps(entry, ensure_ascii=False, sort_keys=True))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def write_frame_labels(rows, path) -> None:
    """Write (utt_id, start_frame, end_frame, label) rows as a TSV."""
    out = []
    for utt_id, start, end, label in rows:
        if "\t" in label or "\n" in label:
            raise ValidationError(f"{utt_id}: label {label!r} contains tab/newline")
        out.append(f"{utt_id}\t{start}\t{end}\t{label}\n")
    Path(path).write_text("".join(out), encoding="utf-8")

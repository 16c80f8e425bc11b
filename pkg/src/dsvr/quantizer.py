"""Frame-embedding quantization: k-means codebooks and code sequences.

Training uses k-means++ seeding and Lloyd iterations on float64, driven
by a single seeded generator so identical inputs and seed give
bit-identical codebooks. Assignment ties always break to the smallest
centroid index.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CorruptionError,
    DegenerateDataError,
    EmptySelectionError,
    FormatError,
    InsufficientDataError,
    ValidationError,
)
from .formats import UNKNOWN_LABEL, read_embeddings, read_frame_labels

logger = logging.getLogger(__name__)

CODEBOOK_MAGIC = b"DSCB"
CODEBOOK_VERSION = 1
# magic, version, k, d, seed, max_iters, tol, training_inertia
_CB_HEADER = struct.Struct("<4sIIIQIdd")

_CHUNK = 16384  # frames per distance block


@dataclass(frozen=True, eq=False)
class Codebook:
    """k centroids in the embedding space plus its training provenance."""

    centroids: np.ndarray
    seed: int
    max_iters: int
    tol: float
    training_inertia: float

    def __post_init__(self):
        c = np.asarray(self.centroids)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ValidationError(f"centroids must be (k, d) with k,d >= 1, got {c.shape}")
        c = np.ascontiguousarray(c, dtype=np.float32)
        if not np.isfinite(c).all():
            raise ValidationError("centroids contain NaN or Inf")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    d = dim


@dataclass(frozen=True, eq=False)
class CodeSequence:
    """Per-frame centroid indices for one utterance."""

    utt_id: str
    codes: np.ndarray
    k: int

    def __post_init__(self):
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 1 or codes.shape[0] < 1:
            raise ValidationError(f"{self.utt_id}: codes must be a non-empty 1-D sequence")
        if self.k < 1:
            raise ValidationError(f"{self.utt_id}: k must be >= 1")
        if codes.min() < 0 or codes.max() >= self.k:
            raise ValidationError(f"{self.utt_id}: codes out of range [0, {self.k})")
        object.__setattr__(self, "codes", codes)

    @property
    def num_frames(self) -> int:
        return self.codes.shape[0]


def _assign(frames, centroids):
    """Nearest-centroid assignment and total inertia, chunked.

    Distances use the expanded form in float64; argmin takes the first
    (smallest-index) minimum, which is the documented tie-break.
    """
    cent_sq = np.einsum("kd,kd->k", centroids, centroids)
    assignment = np.empty(frames.shape[0], dtype=np.int64)
    inertia = 0.0
    for lo in range(0, frames.shape[0], _CHUNK):
        block = frames[lo : lo + _CHUNK]
        d2 = (
            np.einsum("nd,nd->n", block, block)[:, None]
            - 2.0 * (block @ centroids.T)
            + cent_sq[None, :]
        )
        idx = np.argmin(d2, axis=1)
        assignment[lo : lo + block.shape[0]] = idx
        inertia += float(np.maximum(d2[np.arange(block.shape[0]), idx], 0.0).sum())
    return assignment, inertia


def kmeans_plus_plus(frames, k: int, rng) -> np.ndarray:
    """Seeded k-means++ initialization (needs k distinct points)."""
    n = frames.shape[0]
    centroids = np.empty((k, frames.shape[1]), dtype=np.float64)
    centroids[0] = frames[rng.integers(n)]
    dist2 = np.einsum("nd,nd->n", frames - centroids[0], frames - centroids[0])
    for i in range(1, k):
        dist2 = np.maximum(dist2, 0.0)
        total = dist2.sum()
        if total <= 0.0:
            raise DegenerateDataError(
                f"cannot place {k} centroids: data has fewer than {k} distinct points"
            )
        pick = rng.choice(n, p=dist2 / total)
        centroids[i] = frames[pick]
        diff = frames - centroids[i]
        dist2 = np.minimum(dist2, np.einsum("nd,nd->n", diff, diff))
    return centroids


def lloyd(frames, centroids, max_iters: int = 300, tol: float = 1e-6):
    """Lloyd iterations from explicit initial centroids.

    Returns final centroids, their assignment, and the inertia trace
    (one entry per assignment, recorded before each update, which makes
    the trace non-increasing). Stops when the relative inertia
    improvement drops to ``tol`` or after ``max_iters`` updates. Empty
    clusters are reseeded deterministically with the point farthest
    from the mean of the currently largest cluster.
    """
    frames = np.asarray(frames, dtype=np.float64)
    centroids = np.array(centroids, dtype=np.float64)
    k = centroids.shape[0]
    trace = []
    assignment = None
    for _ in range(max_iters):
        assignment, inertia = _assign(frames, centroids)
        trace.append(inertia)
        if len(trace) >= 2 and trace[-2] - trace[-1] <= tol * trace[-2]:
            return centroids, assignment, trace

        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, frames)
        counts = np.bincount(assignment, minlength=k).astype(np.int64)

        empty = np.flatnonzero(counts == 0)
        if empty.size:
            taken = np.zeros(frames.shape[0], dtype=bool)
            for j in empty:
                donor = int(np.argmax(counts))
                members = np.flatnonzero((assignment == donor) & ~taken)
                donor_mean = sums[donor] / counts[donor]
                diff = frames[members] - donor_mean
                far = members[int(np.argmax(np.einsum("nd,nd->n", diff, diff)))]
                centroids[j] = frames[far]
                taken[far] = True
                counts[donor] -= 1
                sums[donor] -= frames[far]
                counts[j] = 1
                sums[j] = frames[far]
                logger.debug("reseeded empty cluster %d from cluster %d", j, donor)
        nonzero = counts > 0
        centroids[nonzero] = sums[nonzero] / counts[nonzero, None]

    assignment, inertia = _assign(frames, centroids)
    trace.append(inertia)
    return centroids, assignment, trace


def train_codebook(
    frames, k: int, seed: int, max_iters: int = 300, tol: float = 1e-6
) -> Codebook:
    """Train a k-means codebook on a frame matrix."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2:
        raise ValidationError(f"training frames must be 2-D, got shape {frames.shape}")
    if not np.isfinite(frames).all():
        raise ValidationError("training frames contain NaN or Inf")
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if seed < 0:
        raise ValidationError("seed must be non-negative")
    if max_iters < 1:
        raise ValidationError("max_iters must be >= 1")
    if tol < 0:
        raise ValidationError("tol must be >= 0")
    if frames.shape[0] < k:
        raise InsufficientDataError(f"need at least k={k} frames, got {frames.shape[0]}")

    rng = np.random.default_rng(seed)
    init = kmeans_plus_plus(frames, k, rng)
    centroids, _, trace = lloyd(frames, init, max_iters=max_iters, tol=tol)
    logger.info(
        "codebook k=%d trained on %d frames: inertia %.6g after %d assignments",
        k, frames.shape[0], trace[-1], len(trace),
    )
    return Codebook(
        centroids=centroids.astype(np.float32),
        seed=seed,
        max_iters=max_iters,
        tol=tol,
        training_inertia=trace[-1],
    )


def quantize(seq, codebook: Codebook) -> CodeSequence:
    """Map each frame of an embedding sequence to its nearest centroid."""
    frames = np.asarray(seq.frames, dtype=np.float64)
    if frames.shape[1] != codebook.dim:
        raise ValidationError(
            f"{seq.utt_id}: embedding dim {frames.shape[1]} != codebook dim {codebook.dim}"
        )
    codes, _ = _assign(frames, codebook.centroids.astype(np.float64))
    return CodeSequence(utt_id=seq.utt_id, codes=codes, k=codebook.k)


def save_codebook(codebook: Codebook, path) -> None:
    header = _CB_HEADER.pack(
        CODEBOOK_MAGIC,
        CODEBOOK_VERSION,
        codebook.k,
        codebook.dim,
        codebook.seed,
        codebook.max_iters,
        codebook.tol,
        codebook.training_inertia,
    )
    payload = np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_codebook(path) -> Codebook:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < _CB_HEADER.size:
        raise CorruptionError(f"{path}: truncated header ({len(data)} bytes)")
    _, version, k, dim, seed, max_iters, tol, inertia = _CB_HEADER.unpack_from(data)
    if version != CODEBOOK_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _CB_HEADER.size + 4 * k * dim
    if len(data) != expected:
        raise CorruptionError(
            f"{path}: payload is {len(data) - _CB_HEADER.size} bytes, "
            f"expected {expected - _CB_HEADER.size} for {k}x{dim} float32"
        )
    centroids = np.frombuffer(data, dtype="<f4", offset=_CB_HEADER.size).reshape(k, dim)
    return Codebook(
        centroids=centroids.copy(),
        seed=seed,
        max_iters=max_iters,
        tol=tol,
        training_inertia=inertia,
    )


def write_codes(sequences, path) -> None:
    """Write code sequences as a TSV: utt_id, space-separated code ids."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(seq.utt_id + "\t" + " ".join(str(int(c)) for c in seq.codes) + "\n")


def read_codes(path, k: int) -> dict:
    """Read a code TSV back into an ordered utt_id -> CodeSequence map."""
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
            utt_id, codes_s = parts
            if utt_id in out:
                raise ValidationError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            try:
                codes = np.array([int(tok) for tok in codes_s.split()], dtype=np.int64)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer code id") from exc
            if codes.size == 0:
                raise FormatError(f"{path}:{lineno}: empty code sequence")
            out[utt_id] = CodeSequence(utt_id=utt_id, codes=codes, k=k)
    return out


@dataclass(frozen=True)
class SubsampleSpec:
    """How to draw the balanced codebook-training subsample."""

    per_label_cap: int = 10000
    label_set: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.per_label_cap < 1:
            raise ValidationError("per_label_cap must be >= 1")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.label_set is not None:
            object.__setattr__(self, "label_set", tuple(self.label_set))


@dataclass(frozen=True)
class SubsampleRecord:
    manifest_index: int
    utt_id: str
    frame_index: int
    label: str


@dataclass(frozen=True, eq=False)
class SubsampleResult:
    frames: np.ndarray
    records: tuple


def balanced_subsample(manifests, spec: SubsampleSpec, weights=None) -> SubsampleResult:
    """Draw up to ``per_label_cap`` frames per sound label across manifests.

    Frames whose label is unknown (uncovered by the label TSV) are
    excluded. When a label has more candidates than the cap, a seeded
    draw without replacement picks the kept frames; optional per-manifest
    ``weights`` bias that draw (e.g. to favor one dialect pool). Labels
    are processed in sorted order and candidates in corpus order, so the
    result is deterministic for a given seed.
    """
    if not isinstance(manifests, (list, tuple)):
        manifests = [manifests]
    if not manifests:
        raise ValidationError("no manifests given")
    if weights is None:
        weights = [1.0] * len(manifests)
    if len(weights) != len(manifests):
        raise ValidationError("need one weight per manifest")
    if any(not w > 0 for w in weights):
        raise ValidationError("manifest weights must be positive")

    wanted = set(spec.label_set) if spec.label_set is not None else None
    buckets = {}
    dim = None
    n_frames_by_utt = {}
    for m_idx, manifest in enumerate(manifests):
        for entry in manifest:
            if entry.label_path is None:
                raise ValidationError(
                    f"{entry.utt_id}: balanced subsample requires label_path on every entry"
                )
            emb = read_embeddings(entry.embedding_path, entry.utt_id)
            if dim is None:
                dim = emb.dim
            elif emb.dim != dim:
                raise ValidationError(
                    f"{entry.utt_id}: embedding dim {emb.dim} != corpus dim {dim}"
                )
            labels, _ = read_frame_labels(entry.label_path, emb.num_frames)
            n_frames_by_utt[(m_idx, entry.utt_id)] = emb.num_frames
            for t, lab in enumerate(labels.labels):
                if lab == UNKNOWN_LABEL:
                    continue
                if wanted is not None and lab not in wanted:
                    continue
                buckets.setdefault(lab, []).append((m_idx, entry.utt_id, t))

    if not buckets:
        raise EmptySelectionError("no labeled frames matched the subsample spec")

    rng = np.random.default_rng(spec.seed)
    records = []
    for lab in sorted(buckets):
        cands = buckets[lab]
        if len(cands) <= spec.per_label_cap:
            chosen = range(len(cands))
        else:
            w = np.array([weights[c[0]] for c in cands], dtype=np.float64)
            idx = rng.choice(len(cands), size=spec.per_label_cap, replace=False, p=w / w.sum())
            chosen = np.sort(idx)
        for i in chosen:
            m_idx, utt_id, t = cands[int(i)]
            records.append(SubsampleRecord(m_idx, utt_id, t, lab))

    # gather the selected frames, loading each utterance once
    by_utt = {}
    for row, rec in enumerate(records):
        by_utt.setdefault((rec.manifest_index, rec.utt_id), []).append(row)
    frames = np.empty((len(records), dim), dtype=np.float32)
    for m_idx, manifest in enumerate(manifests):
        for entry in manifest:
            key = (m_idx, entry.utt_id)
            rows = by_utt.get(key)
            if not rows:
                continue
            emb = read_embeddings(entry.embedding_path, entry.utt_id)
            for row in rows:
                frames[row] = emb.frames[records[row].frame_index]
    return SubsampleResult(frames=frames, records=tuple(records))

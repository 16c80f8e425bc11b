"""Codebook quality metrics.

All discrete metrics run off a joint (sound label x code) count table
accumulated frame by frame; Davies-Bouldin runs off the raw frames and
their assignments. Information-theoretic quantities use natural logs
with the 0*log(0) = 0 convention.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class JointCountTable:
    """Counts of (sound label, code) co-occurrences over frames."""

    k: int
    phones: list
    counts: np.ndarray  # (len(phones), k) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def new_table(k: int) -> JointCountTable:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    return JointCountTable(k=k, phones=[], counts=np.zeros((0, k), dtype=np.int64))


def accumulate_joint(labels, codes, table: JointCountTable) -> JointCountTable:
    """Add one utterance's frames to the table (in place).

    ``labels`` is a FrameLabelSequence and ``codes`` a CodeSequence for
    the same utterance; unknown-label frames are skipped.
    """
    from .formats import UNKNOWN_LABEL

    if labels.utt_id != codes.utt_id:
        raise ValidationError(f"label/code utterance mismatch: {labels.utt_id!r} vs {codes.utt_id!r}")
    if labels.num_frames != codes.num_frames:
        raise ValidationError(
            f"{labels.utt_id}: {labels.num_frames} labels vs {codes.num_frames} codes"
        )
    if codes.k != table.k:
        raise ValidationError(f"{codes.utt_id}: codes drawn from k={codes.k}, table has k={table.k}")

    row_of = {p: i for i, p in enumerate(table.phones)}
    for lab, code in zip(labels.labels, codes.codes):
        if lab == UNKNOWN_LABEL:
            continue
        row = row_of.get(lab)
        if row is None:
            row = len(table.phones)
            row_of[lab] = row
            table.phones.append(lab)
            table.counts = np.vstack([table.counts, np.zeros((1, table.k), dtype=np.int64)])
        table.counts[row, code] += 1
    return table


def merge_tables(a: JointCountTable, b: JointCountTable) -> JointCountTable:
    """Combine two tables; counts add, phone rows union."""
    if a.k != b.k:
        raise ValidationError(f"cannot merge tables with k={a.k} and k={b.k}")
    phones = list(a.phones)
    row_of = {p: i for i, p in enumerate(phones)}
    for p in b.phones:
        if p not in row_of:
            row_of[p] = len(phones)
            phones.append(p)
    counts = np.zeros((len(phones), a.k), dtype=np.int64)
    counts[: len(a.phones)] = a.counts
    for i, p in enumerate(b.phones):
        counts[row_of[p]] += b.counts[i]
    return JointCountTable(k=a.k, phones=phones, counts=counts)


def _require_mass(table: JointCountTable) -> int:
    total = table.total
    if total == 0:
        raise UndefinedMetricError("metric undefined on an empty count table")
    return total


def phone_purity(table: JointCountTable) -> float:
    """Fraction of frames whose code's dominant sound label matches theirs."""
    total = _require_mass(table)
    return float(table.counts.max(axis=0).sum() / total)


def cluster_purity(table: JointCountTable) -> float:
    """Fraction of frames whose sound label's dominant code matches theirs."""
    total = _require_mass(table)
    return float(table.counts.max(axis=1).sum() / total)


def pnmi(table: JointCountTable) -> float:
    """Mutual information between labels and codes, normalized by label entropy."""
    total = _require_mass(table)
    joint = table.counts / total
    p_phone = joint.sum(axis=1)
    p_code = joint.sum(axis=0)
    nz = joint > 0
    outer = np.outer(p_phone, p_code)
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    pp = p_phone[p_phone > 0]
    h_phone = float(-np.sum(pp * np.log(pp)))
    if h_phone == 0.0:
        raise UndefinedMetricError("PNMI undefined: label entropy is zero")
    return mi / h_phone


def davies_bouldin(frames, codes, cb) -> float:
    """Davies-Bouldin index of an assignment (lower is tighter).

    ``cb`` is the Codebook the codes came from (used for its k and
    dimension); cluster centers are recomputed as assignment means, not
    taken from it. Scatter is the mean (not squared) distance to the
    center. Only non-empty clusters participate, and at least two are
    required.
    """
    frames = np.asarray(frames, dtype=np.float64)
    codes = np.asarray(codes, dtype=np.int64)
    k = cb.k
    if frames.ndim != 2 or codes.ndim != 1 or frames.shape[0] != codes.shape[0]:
        raise ValidationError("frames must be (N, d) with one code per frame")
    if frames.shape[1] != cb.dim:
        raise ValidationError(f"frame dim {frames.shape[1]} != codebook dim {cb.dim}")
    if codes.size and (codes.min() < 0 or codes.max() >= k):
        raise ValidationError(f"codes out of range [0, {k})")

    present = np.unique(codes)
    if present.size < 2:
        raise UndefinedMetricError(
            f"Davies-Bouldin needs >= 2 non-empty clusters, got {present.size}"
        )
    means = np.stack([frames[codes == c].mean(axis=0) for c in present])
    scatter = np.array(
        [
            float(np.linalg.norm(frames[codes == c] - means[i], axis=1).mean())
            for i, c in enumerate(present)
        ]
    )
    sep = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    with np.errstate(divide="ignore"):
        ratio = (scatter[:, None] + scatter[None, :]) / sep
    np.fill_diagonal(ratio, -np.inf)
    return float(np.max(ratio, axis=1).mean())


KIND_CLEAN = "Clean"
KIND_MIX = "Mix"


@dataclass(frozen=True)
class ClusterVerdict:
    """Classification of one code: Clean (one dominant sound) or Mix."""

    code_id: int
    kind: str  # KIND_CLEAN | KIND_MIX
    dominant: str
    share: float
    contenders: tuple  # sounds holding at least the contender share


def classify_clusters(
    table: JointCountTable,
    clean_threshold: float = 0.8,
    contender_threshold: float = 0.2,
):
    """Label every non-empty code as clean or mix.

    A code is clean when its dominant sound holds at least
    ``clean_threshold`` of its frames; contenders are all sounds holding
    at least ``contender_threshold``, listed by descending count.
    """
    if not 0 < clean_threshold <= 1 or not 0 < contender_threshold <= 1:
        raise ValidationError("thresholds must be in (0, 1]")
    _require_mass(table)
    verdicts = []
    for code in range(table.k):
        col = table.counts[:, code]
        col_total = int(col.sum())
        if col_total == 0:
            continue
        top = int(np.argmax(col))
        share = int(col[top]) / col_total
        kind = KIND_CLEAN if share >= clean_threshold else KIND_MIX
        order = sorted(range(len(col)), key=lambda i: (-int(col[i]), i))
        contenders = tuple(
            table.phones[i] for i in order if int(col[i]) / col_total >= contender_threshold
        )
        verdicts.append(
            ClusterVerdict(
                code_id=code,
                kind=kind,
                dominant=table.phones[top],
                share=share,
                contenders=contenders,
            )
        )
    return verdicts


def export_mix_samples(verdicts, manifests, codes_by_utt, n_per_cluster: int = 52, seed: int = 0):
    """Draw audit samples (utterance, frame) from every mix cluster.

    Candidates are gathered in manifest order; clusters with more than
    ``n_per_cluster`` occurrences are downsampled with a seeded draw
    (kept in corpus order). Returns rows of
    (code_id, utt_id, frame_index, dominant, contenders).
    """
    if n_per_cluster < 1:
        raise ValidationError("n_per_cluster must be >= 1")
    if not isinstance(manifests, (list, tuple)):
        manifests = [manifests]
    utt_order = []
    for manifest in manifests:
        for entry in manifest:
            if entry.utt_id not in codes_by_utt:
                raise ValidationError(f"{entry.utt_id}: no code sequence for manifest entry")
            utt_order.append(entry.utt_id)

    rng = np.random.default_rng(seed)
    rows = []
    for verdict in sorted(verdicts, key=lambda v: v.code_id):
        if verdict.kind != KIND_MIX:
            continue
        cands = []
        for utt_id in utt_order:
            codes = codes_by_utt[utt_id].codes
            for t in np.flatnonzero(codes == verdict.code_id):
                cands.append((utt_id, int(t)))
        if not cands:
            logger.warning("mix cluster %d has no frames in the given corpus", verdict.code_id)
            continue
        if len(cands) > n_per_cluster:
            idx = np.sort(rng.choice(len(cands), size=n_per_cluster, replace=False))
            cands = [cands[int(i)] for i in idx]
        for utt_id, t in cands:
            rows.append(
                (verdict.code_id, utt_id, t, verdict.dominant, ",".join(verdict.contenders))
            )
    return rows


def write_mix_samples(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for code_id, utt_id, frame_index, dominant, contenders in rows:
            fh.write(f"{code_id}\t{utt_id}\t{frame_index}\t{dominant}\t{contenders}\n")


def metric_report_json(
    k: int,
    db_index: float,
    phone_purity_value: float,
    cluster_purity_value: float,
    pnmi_value: float,
    n_frames: int,
    n_clean: int,
    n_mix: int,
) -> str:
    return json.dumps(
        {
            "k": k,
            "db_index": db_index,
            "phone_purity": phone_purity_value,
            "cluster_purity": cluster_purity_value,
            "pnmi": pnmi_value,
            "n_frames": n_frames,
            "n_clean": n_clean,
            "n_mix": n_mix,
        },
        indent=2,
    )

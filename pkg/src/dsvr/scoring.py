"""Character error rate scoring.

CER is Levenshtein distance over characters (spaces count) divided by
reference length. Batch scores are micro-averaged: total edits over
total reference characters, so long utterances weigh more than short
ones. Comparison is per codepoint, which matches vocabulary symbols
one-for-one (combining diacritics are single codepoints).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .arabic import VerbatimTranscript, strip_diacritics
from .errors import UndefinedMetricError, ValidationError

MODE_WITH_VOWELS = "with-vowels"
MODE_VOWEL_STRIPPED = "vowel-stripped"


def edit_distance(ref, hyp) -> int:
    """Unit-cost Levenshtein distance between two sequences."""
    if len(ref) < len(hyp):
        ref, hyp = hyp, ref
    if not hyp:
        return len(ref)
    prev = list(range(len(hyp) + 1))
    for i, rc in enumerate(ref, 1):
        cur = [i]
        for j, hc in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (rc != hc)))
        prev = cur
    return prev[-1]


def _text(t) -> str:
    return t.text if isinstance(t, VerbatimTranscript) else t


def cer(ref, hyp) -> float:
    """Character error rate of ``hyp`` against ``ref``.

    Undefined (raises) for an empty reference; an empty hypothesis
    against a non-empty reference scores 1.0.
    """
    ref, hyp = _text(ref), _text(hyp)
    if len(ref) == 0:
        raise UndefinedMetricError("CER is undefined for an empty reference")
    return edit_distance(ref, hyp) / len(ref)


@dataclass(frozen=True)
class GroupScore:
    cer: float
    n_utts: int
    n_ref_chars: int
    n_edits: int


@dataclass(frozen=True)
class CerReport:
    """Micro-averaged CER over a set of utterances, optionally by group."""

    overall: float
    mode: str
    n_utts: int
    n_ref_chars: int
    n_edits: int
    per_group: dict = field(default_factory=dict)


def score_manifest(refs, hyps, groups=None, strip_vowels: bool = False) -> CerReport:
    """Score hypothesis transcripts against references by utterance id.

    ``refs`` and ``hyps`` map utt_id to text (plain str or
    :class:`VerbatimTranscript`). Every hypothesis must have a
    reference; extra references are ignored. ``groups`` optionally maps
    utt_id to a group name for per-group breakdowns. With
    ``strip_vowels`` both sides are scored after removing short vowels,
    sukun, and shadda.
    """
    if not hyps:
        raise ValidationError("no hypotheses to score")
    missing = [u for u in hyps if u not in refs]
    if missing:
        raise ValidationError("hypotheses without references: " + ", ".join(sorted(missing)))

    total_edits = 0
    total_chars = 0
    n_utts = 0
    by_group = {}
    for utt_id, hyp in hyps.items():
        ref, hyp = _text(refs[utt_id]), _text(hyp)
        if strip_vowels:
            ref, hyp = strip_diacritics(ref), strip_diacritics(hyp)
        if len(ref) == 0:
            raise UndefinedMetricError(f"{utt_id}: empty reference after preprocessing")
        edits = edit_distance(ref, hyp)
        total_edits += edits
        total_chars += len(ref)
        n_utts += 1
        if groups is not None:
            agg = by_group.setdefault(groups.get(utt_id, ""), [0, 0, 0])
            agg[0] += edits
            agg[1] += len(ref)
            agg[2] += 1

    per_group = {
        g: GroupScore(cer=e / c, n_utts=n, n_ref_chars=c, n_edits=e)
        for g, (e, c, n) in sorted(by_group.items())
    }
    return CerReport(
        overall=total_edits / total_chars,
        mode=MODE_VOWEL_STRIPPED if strip_vowels else MODE_WITH_VOWELS,
        n_utts=n_utts,
        n_ref_chars=total_chars,
        n_edits=total_edits,
        per_group=per_group,
    )


def report_to_json(report: CerReport) -> str:
    obj = {
        "overall": report.overall,
        "mode": report.mode,
        "n_utts": report.n_utts,
        "n_ref_chars": report.n_ref_chars,
        "n_edits": report.n_edits,
    }
    if report.per_group:
        obj["per_group"] = {
            g: {"cer": r.cer, "n_utts": r.n_utts, "n_ref_chars": r.n_ref_chars}
            for g, r in report.per_group.items()
        }
    return json.dumps(obj, ensure_ascii=False, indent=2)


def per_group_csv(report: CerReport) -> str:
    """Per-group table as CSV (group, cer, n_utts, n_ref_chars)."""
    lines = ["group,cer,n_utts,n_ref_chars"]
    for g, r in report.per_group.items():
        lines.append(f"{g},{r.cer:.6f},{r.n_utts},{r.n_ref_chars}")
    return "\n".join(lines) + "\n"

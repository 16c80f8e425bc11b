"""Forced-alignment conversion: CTM / TextGrid timestamps to frame labels.

Intervals arrive in seconds and leave as half-open frame ranges via
floor(start/hop), floor(end/hop). Zero-length frame ranges are dropped
with a warning; negative or backwards timestamps are rejected.
"""

import logging
import re
from pathlib import Path

from .errors import FormatError, ValidationError

logger = logging.getLogger(__name__)

FORMATS = ("ctm", "textgrid")


def parse_ctm(path):
    """Parse a CTM file: ``utt channel start duration symbol [conf]``.

    Returns {utt_id: [(start_s, end_s, label), ...]} in file order.
    """
    intervals = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if len(fields) < 5:
                raise FormatError(f"{path}:{lineno}: expected >= 5 fields, got {len(fields)}")
            utt_id, _channel, start_s, dur_s, label = fields[:5]
            try:
                start = float(start_s)
                dur = float(dur_s)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad timestamp: {exc}") from exc
            intervals.setdefault(utt_id, []).append((start, start + dur, label))
    if not intervals:
        raise FormatError(f"{path}: no alignment rows")
    return intervals


_TG_XMIN = re.compile(r"^\s*xmin\s*=\s*([0-9.eE+-]+)")
_TG_XMAX = re.compile(r"^\s*xmax\s*=\s*([0-9.eE+-]+)")
_TG_TEXT = re.compile(r'^\s*text\s*=\s*"(.*)"\s*$')
_TG_INTERVAL = re.compile(r"^\s*intervals\s*\[\d+\]")
_TG_ITEM = re.compile(r"^\s*item\s*\[\d+\]")


def parse_textgrid(path, utt_id=None):
    """Parse the first interval tier of a long-format TextGrid.

    Empty-text intervals (silence) are skipped. Returns
    {utt_id: [(start_s, end_s, label), ...]}; the utterance id defaults
    to the file stem.
    """
    path = Path(path)
    utt_id = utt_id or path.stem
    lines = path.read_text(encoding="utf-8").splitlines()
    if not any("IntervalTier" in line for line in lines):
        raise FormatError(f"{path}: no IntervalTier found")

    intervals = []
    items_seen = 0
    in_interval = False
    xmin = xmax = None
    for line in lines:
        if _TG_ITEM.match(line):
            items_seen += 1
            if items_seen > 1 and intervals:
                break  # only the first tier with intervals
        if _TG_INTERVAL.match(line):
            in_interval = True
            xmin = xmax = None
            continue
        if not in_interval:
            continue
        m = _TG_XMIN.match(line)
        if m:
            xmin = float(m.group(1))
            continue
        m = _TG_XMAX.match(line)
        if m:
            xmax = float(m.group(1))
            continue
        m = _TG_TEXT.match(line)
        if m:
            if xmin is None or xmax is None:
                raise FormatError(f"{path}: interval text before its xmin/xmax")
            label = m.group(1).replace('""', '"').strip()
            if label:
                intervals.append((xmin, xmax, label))
            in_interval = False
    if not intervals:
        raise FormatError(f"{path}: no labeled intervals")
    return {utt_id: intervals}


def intervals_to_frames(utt_id, intervals, hop_ms: float):
    """Map (start_s, end_s, label) spans to half-open frame rows.

    Frames are floor(start/hop) .. floor(end/hop); spans that collapse
    to zero frames are dropped with a warning.
    """
    if not hop_ms > 0:
        raise ValidationError("hop_ms must be positive")
    hop_s = hop_ms / 1000.0
    rows = []
    prev_end = 0.0
    for start, end, label in intervals:
        if start < 0 or end < 0:
            raise ValidationError(f"{utt_id}: negative timestamp in [{start}, {end})")
        if end < start:
            raise ValidationError(f"{utt_id}: decreasing timestamps [{start}, {end})")
        if start < prev_end:
            raise ValidationError(
                f"{utt_id}: interval [{start}, {end}) starts before previous end {prev_end}"
            )
        prev_end = end
        first = int(start / hop_s)
        last = int(end / hop_s)
        if first == last:
            logger.warning("%s: %r at [%g, %g) covers no full frame; dropped",
                           utt_id, label, start, end)
            continue
        rows.append((utt_id, first, last, label))
    return rows


def reconcile_lengths(rows, n_frames: int, utt_id: str):
    """Clip label rows to a paired embedding's frame count.

    A one-frame overshoot is boundary rounding: truncated and logged.
    Anything larger means the hop or alignment is wrong.
    """
    extent = max(end for _, _, end, _ in rows) if rows else 0
    if extent > n_frames + 1:
        raise ValidationError(
            f"{utt_id}: labels cover {extent} frames but embeddings have {n_frames}"
        )
    if extent > n_frames:
        logger.warning("%s: truncating labels from %d to %d frames",
                       utt_id, extent, n_frames)
        clipped = []
        for utt, start, end, label in rows:
            end = min(end, n_frames)
            if start < end:
                clipped.append((utt, start, end, label))
        return clipped
    if n_frames - extent > 1:
        logger.info("%s: labels cover %d of %d frames; tail left unlabeled",
                    utt_id, extent, n_frames)
    return list(rows)


def convert_alignments(paths, fmt: str, hop_ms: float = 20.0):
    """Parse alignment files and return {utt_id: frame-label rows}.

    ``fmt`` is "ctm" or "textgrid". A CTM file may hold many utterances;
    a TextGrid holds one (named by file stem).
    """
    if fmt not in FORMATS:
        raise ValidationError(f"format must be one of {FORMATS}, got {fmt!r}")
    merged = {}
    for path in paths:
        parsed = parse_ctm(path) if fmt == "ctm" else parse_textgrid(path)
        for utt_id, intervals in parsed.items():
            if utt_id in merged:
                raise ValidationError(f"{utt_id}: appears in more than one alignment file")
            merged[utt_id] = intervals_to_frames(utt_id, intervals, hop_ms)
    return merged

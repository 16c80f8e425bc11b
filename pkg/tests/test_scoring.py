import json

import numpy as np
import pytest

from dsvr.arabic import FATHA, KASRA
from dsvr.errors import UndefinedMetricError, ValidationError
from dsvr.scoring import (
    MODE_VOWEL_STRIPPED,
    MODE_WITH_VOWELS,
    cer,
    edit_distance,
    per_group_csv,
    report_to_json,
    score_manifest,
)


def test_edit_distance_basics():
    assert edit_distance("", "") == 0
    assert edit_distance("abc", "abc") == 0
    assert edit_distance("abc", "") == 3
    assert edit_distance("", "abc") == 3
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance([1, 2, 3], [1, 3]) == 1


def test_edit_distance_symmetric_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = "".join(chr(97 + c) for c in rng.integers(0, 4, size=rng.integers(0, 8)))
        b = "".join(chr(97 + c) for c in rng.integers(0, 4, size=rng.integers(0, 8)))
        d = edit_distance(a, b)
        assert d == edit_distance(b, a)
        assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))


def test_cer_golden_single_substitution():
    assert cer("قلم", "كلم") == pytest.approx(1 / 3)


def test_cer_identity_and_empty_hyp():
    assert cer("قلم", "قلم") == 0.0
    assert cer("قلم", "") == 1.0


def test_cer_empty_reference_undefined():
    with pytest.raises(UndefinedMetricError):
        cer("", "قلم")


def test_score_manifest_micro_average():
    refs = {"a": "قلم", "b": "كتاب"}
    hyps = {"a": "كلم", "b": "كتاب"}
    report = score_manifest(refs, hyps)
    # 1 edit over 3+4 reference characters
    assert report.overall == pytest.approx(1 / 7)
    assert report.n_utts == 2
    assert report.n_ref_chars == 7
    assert report.n_edits == 1
    assert report.mode == MODE_WITH_VOWELS


def test_score_manifest_micro_consistency_random():
    rng = np.random.default_rng(3)
    letters = "بتجد"
    refs, hyps = {}, {}
    for i in range(30):
        n = int(rng.integers(1, 12))
        m = int(rng.integers(0, 12))
        refs[f"u{i}"] = "".join(letters[c] for c in rng.integers(0, 4, size=n))
        hyps[f"u{i}"] = "".join(letters[c] for c in rng.integers(0, 4, size=m))
    report = score_manifest(refs, hyps)
    total_edits = sum(edit_distance(refs[u], hyps[u]) for u in hyps)
    total_chars = sum(len(refs[u]) for u in hyps)
    assert report.overall == pytest.approx(total_edits / total_chars)
    assert report.n_edits == total_edits


def test_score_manifest_errors():
    with pytest.raises(ValidationError):
        score_manifest({"a": "x"}, {})
    with pytest.raises(ValidationError, match="b"):
        score_manifest({"a": "قلم"}, {"a": "قلم", "b": "قلم"})


def test_score_manifest_strip_vowels():
    refs = {"a": "كَتَب"}
    hyps = {"a": "كتب"}
    assert score_manifest(refs, hyps).overall > 0
    report = score_manifest(refs, hyps, strip_vowels=True)
    assert report.overall == 0.0
    assert report.mode == MODE_VOWEL_STRIPPED


def test_score_manifest_strip_vowels_empty_ref():
    refs = {"a": FATHA + KASRA}
    hyps = {"a": ""}
    with pytest.raises(UndefinedMetricError):
        score_manifest(refs, hyps, strip_vowels=True)


def test_score_manifest_groups():
    refs = {"a": "قلم", "b": "كتاب", "c": "قلم"}
    hyps = {"a": "كلم", "b": "كتاب", "c": "قلم"}
    groups = {"a": "eg", "b": "ma", "c": "eg"}
    report = score_manifest(refs, hyps, groups=groups)
    assert set(report.per_group) == {"eg", "ma"}
    assert report.per_group["eg"].n_utts == 2
    assert report.per_group["eg"].cer == pytest.approx(1 / 6)
    assert report.per_group["ma"].cer == 0.0


def test_report_json_schema():
    refs = {"a": "قلم"}
    hyps = {"a": "قلم"}
    report = score_manifest(refs, hyps, groups={"a": "eg"})
    obj = json.loads(report_to_json(report))
    assert set(obj) == {"overall", "mode", "n_utts", "n_ref_chars", "n_edits", "per_group"}
    assert set(obj["per_group"]["eg"]) == {"cer", "n_utts", "n_ref_chars"}
    csv = per_group_csv(report)
    assert csv.splitlines()[0] == "group,cer,n_utts,n_ref_chars"
    assert csv.splitlines()[1].startswith("eg,")

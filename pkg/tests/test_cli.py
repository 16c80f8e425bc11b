import json

import numpy as np
import pytest

from dsvr.cli import main
from dsvr.quantizer import load_codebook, read_codes


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    """A small synthetic corpus with a trained codebook and code files."""
    root = tmp_path_factory.mktemp("corpus")
    fx = root / "fx"
    assert run(
        "make-fixture", "--out", str(fx),
        "--n-train", "6", "--n-dev", "3", "--n-classes", "4",
        "--dim", "8", "--noise", "0.05", "--seed", "0",
    ) == 0
    cb = root / "cb.bin"
    assert run(
        "train-codebook", "--manifest", str(fx / "train.jsonl"),
        "--k", "4", "--seed", "0", "--out", str(cb),
    ) == 0
    train_codes = root / "train.codes"
    dev_codes = root / "dev.codes"
    assert run("quantize", "--manifest", str(fx / "train.jsonl"),
               "--codebook", str(cb), "--out", str(train_codes)) == 0
    assert run("quantize", "--manifest", str(fx / "dev.jsonl"),
               "--codebook", str(cb), "--out", str(dev_codes)) == 0
    return {
        "root": root,
        "fx": fx,
        "codebook": cb,
        "train_codes": train_codes,
        "dev_codes": dev_codes,
    }


def test_no_command_is_a_usage_error(capsys):
    assert run() == 2
    assert "usage" in capsys.readouterr().err


def test_make_fixture_reports_paths(tmp_path, capsys):
    import os

    out = tmp_path / "fx"
    assert run("make-fixture", "--out", str(out), "--n-train", "2",
               "--n-dev", "1", "--n-classes", "3", "--dim", "4") == 0
    paths = json.loads(capsys.readouterr().out)
    for key in ("root", "train_manifest", "dev_manifest",
                "train_refs", "dev_refs", "vocab"):
        assert os.path.exists(paths[key]), key


def test_train_codebook_rerun_byte_identical(corpus, tmp_path):
    fx = corpus["fx"]
    a = tmp_path / "a.bin"
    b = tmp_path / "b.bin"
    for out in (a, b):
        assert run("train-codebook", "--manifest", str(fx / "train.jsonl"),
                   "--k", "4", "--seed", "0", "--out", str(out)) == 0
    assert a.read_bytes() == b.read_bytes()
    assert load_codebook(a).k == 4


def test_train_codebook_k1_rejected(corpus, tmp_path, capsys):
    fx = corpus["fx"]
    rc = run("train-codebook", "--manifest", str(fx / "train.jsonl"),
             "--k", "1", "--out", str(tmp_path / "cb.bin"))
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_quantize_rerun_byte_identical(corpus, tmp_path):
    fx = corpus["fx"]
    out = tmp_path / "codes.tsv"
    assert run("quantize", "--manifest", str(fx / "dev.jsonl"),
               "--codebook", str(corpus["codebook"]), "--out", str(out)) == 0
    assert out.read_bytes() == corpus["dev_codes"].read_bytes()


def test_eval_codebook_report(corpus, tmp_path, capsys):
    fx = corpus["fx"]
    out = tmp_path / "report.json"
    assert run("eval-codebook", "--manifest", str(fx / "train.jsonl"),
               "--codebook", str(corpus["codebook"]),
               "--codes", str(corpus["train_codes"]), "--out", str(out)) == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert list(report) == ["k", "db_index", "phone_purity", "cluster_purity",
                            "pnmi", "n_frames", "n_clean", "n_mix"]
    assert report["k"] == 4
    assert 0.0 < report["phone_purity"] <= 1.0

    # quantizing in memory (no --codes) must agree with the codes file
    assert run("eval-codebook", "--manifest", str(fx / "train.jsonl"),
               "--codebook", str(corpus["codebook"])) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == report


def test_eval_codebook_mix_samples(corpus, tmp_path):
    fx = corpus["fx"]
    # k=2 over four latent classes forces every cluster to mix classes
    cb2 = tmp_path / "cb2.bin"
    assert run("train-codebook", "--manifest", str(fx / "train.jsonl"),
               "--k", "2", "--seed", "0", "--out", str(cb2)) == 0
    mix = tmp_path / "mix.tsv"
    assert run("eval-codebook", "--manifest", str(fx / "train.jsonl"),
               "--codebook", str(cb2),
               "--out", str(tmp_path / "r.json"),
               "--mix-samples", str(mix), "--mix-n", "5") == 0
    lines = mix.read_text(encoding="utf-8").splitlines()
    assert lines, "a 2-code book over 4 classes must produce mix clusters"
    assert all(len(line.split("\t")) == 5 for line in lines)
    # --mix-n caps rows per cluster
    assert len(lines) <= 2 * 5


def test_normalize_goldens_end_to_end(tmp_path):
    raw = tmp_path / "raw.tsv"
    raw.write_text("u1\tكتب الكتاب\nu2\tالمعلم\nu3\tالرحمان\n", encoding="utf-8")
    out = tmp_path / "norm.tsv"
    assert run("normalize", "--in", str(raw), "--out", str(out)) == 0
    assert out.read_text(encoding="utf-8") == (
        "u1\tكتب لكتاب\nu2\tءَلمعلم\nu3\tارحمان\n"
    )
    # normalized text is a fixed point
    again = tmp_path / "norm2.tsv"
    assert run("normalize", "--in", str(out), "--out", str(again)) == 0
    assert again.read_bytes() == out.read_bytes()


def test_normalize_unmapped_char_exit_2(tmp_path, capsys):
    raw = tmp_path / "raw.tsv"
    raw.write_text("u1\thello\n", encoding="utf-8")
    assert run("normalize", "--in", str(raw), "--out", str(tmp_path / "o.tsv")) == 2
    assert "unmapped" in capsys.readouterr().err


TRAIN_ARGS = (
    "--variant", "discrete", "--epochs", "2", "--lr", "1e-3",
    "--batch-size", "4", "--d-ff", "8", "--n-layers", "1",
    "--n-heads", "2", "--dropout", "0.0", "--seed", "0",
)


def _train(corpus, out, history=None):
    fx = corpus["fx"]
    argv = [
        "train-dvr", *TRAIN_ARGS,
        "--train-manifest", str(fx / "train.jsonl"),
        "--dev-manifest", str(fx / "dev.jsonl"),
        "--codes", str(corpus["train_codes"]),
        "--dev-codes", str(corpus["dev_codes"]),
        "--codebook", str(corpus["codebook"]),
        "--vocab", str(fx / "vocab.txt"),
        "--out", str(out),
    ]
    if history:
        argv += ["--history", str(history)]
    return main(argv)


def test_train_decode_score_chain(corpus, tmp_path):
    fx = corpus["fx"]
    model = tmp_path / "model.bin"
    history = tmp_path / "history.csv"
    assert _train(corpus, model, history) == 0
    assert model.exists()
    lines = history.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "epoch,train_loss,dev_loss,dev_cer"
    assert len(lines) == 3  # header + 2 epochs

    hyps = tmp_path / "hyps.tsv"
    assert run("decode", "--model", str(model),
               "--manifest", str(fx / "dev.jsonl"),
               "--codes", str(corpus["dev_codes"]),
               "--vocab", str(fx / "vocab.txt"), "--out", str(hyps)) == 0

    report_path = tmp_path / "cer.json"
    csv_path = tmp_path / "cer.csv"
    assert run("score", "--refs", str(fx / "refs_dev.tsv"),
               "--hyps", str(hyps), "--out", str(report_path),
               "--per-group-csv", str(csv_path)) == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["overall"] >= 0.0  # insertions can push CER past 1.0
    assert report["n_utts"] == 3
    assert csv_path.read_text(encoding="utf-8").startswith("group,cer,")

    beam_hyps = tmp_path / "beam.tsv"
    assert run("decode", "--model", str(model),
               "--manifest", str(fx / "dev.jsonl"),
               "--codes", str(corpus["dev_codes"]),
               "--vocab", str(fx / "vocab.txt"),
               "--decoder", "beam", "--beam", "4",
               "--out", str(beam_hyps)) == 0


def test_train_dvr_rerun_byte_identical(corpus, tmp_path):
    a = tmp_path / "a.bin"
    b = tmp_path / "b.bin"
    assert _train(corpus, a) == 0
    assert _train(corpus, b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_train_dvr_k_conflict(corpus, tmp_path, capsys):
    fx = corpus["fx"]
    rc = main([
        "train-dvr", *TRAIN_ARGS,
        "--train-manifest", str(fx / "train.jsonl"),
        "--dev-manifest", str(fx / "dev.jsonl"),
        "--codes", str(corpus["train_codes"]),
        "--dev-codes", str(corpus["dev_codes"]),
        "--codebook", str(corpus["codebook"]), "--k", "9",
        "--vocab", str(fx / "vocab.txt"),
        "--out", str(tmp_path / "m.bin"),
    ])
    assert rc == 2
    assert "contradicts" in capsys.readouterr().err


def test_score_identity_zero(corpus, tmp_path, capsys):
    fx = corpus["fx"]
    refs = fx / "refs_dev.tsv"
    assert run("score", "--refs", str(refs), "--hyps", str(refs)) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["overall"] == 0.0
    assert report["mode"] == "with-vowels"


def test_score_strip_vowels(tmp_path, capsys):
    from dsvr.arabic import FATHA

    refs = tmp_path / "refs.tsv"
    hyps = tmp_path / "hyps.tsv"
    refs.write_text(f"u1\tك{FATHA}تب\n", encoding="utf-8")
    hyps.write_text("u1\tكتب\n", encoding="utf-8")
    assert run("score", "--refs", str(refs), "--hyps", str(hyps),
               "--strip-vowels") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["overall"] == 0.0
    assert report["mode"] == "vowel-stripped"


def test_missing_file_exit_3(tmp_path, capsys):
    rc = run("train-codebook", "--manifest", str(tmp_path / "nope.jsonl"),
             "--k", "2", "--out", str(tmp_path / "cb.bin"))
    assert rc == 3
    assert "error:" in capsys.readouterr().err


def test_corrupt_codebook_exit_3(corpus, tmp_path, capsys):
    fx = corpus["fx"]
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"not a codebook at all")
    rc = run("quantize", "--manifest", str(fx / "dev.jsonl"),
             "--codebook", str(bad), "--out", str(tmp_path / "c.tsv"))
    assert rc == 3


def test_single_class_metrics_exit_4(tmp_path, capsys):
    fx = tmp_path / "fx1"
    assert run("make-fixture", "--out", str(fx), "--n-train", "4",
               "--n-dev", "1", "--n-classes", "1", "--dim", "4") == 0
    cb = tmp_path / "cb.bin"
    assert run("train-codebook", "--manifest", str(fx / "train.jsonl"),
               "--k", "2", "--out", str(cb)) == 0
    rc = run("eval-codebook", "--manifest", str(fx / "train.jsonl"),
             "--codebook", str(cb))
    assert rc == 4
    assert "entropy" in capsys.readouterr().err


def test_missing_required_flag_exit_2(capsys):
    assert run("train-codebook", "--k", "4") == 2
    err = capsys.readouterr().err
    assert "--manifest" in err and "--out" in err


def test_config_file_defaults_and_cli_override(corpus, tmp_path):
    fx = corpus["fx"]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "manifest": str(fx / "train.jsonl"),
        "k": 3,
        "out": str(tmp_path / "from_config.bin"),
    }), encoding="utf-8")

    # config alone supplies required flags, including the append-style one
    assert run("train-codebook", "--config", str(cfg)) == 0
    assert load_codebook(tmp_path / "from_config.bin").k == 3

    # explicit CLI flags beat config values
    assert run("train-codebook", "--config", str(cfg), "--k", "2",
               "--out", str(tmp_path / "cli_wins.bin")) == 0
    assert load_codebook(tmp_path / "cli_wins.bin").k == 2


def test_config_unknown_key_exit_2(corpus, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
    rc = run("train-codebook", "--config", str(cfg),
             "--manifest", str(corpus["fx"] / "train.jsonl"),
             "--k", "2", "--out", str(tmp_path / "cb.bin"))
    assert rc == 2
    assert "bogus" in capsys.readouterr().err


def test_threads_validated_everywhere(corpus, capsys):
    fx = corpus["fx"]
    refs = fx / "refs_dev.tsv"
    assert run("score", "--threads", "0", "--refs", str(refs),
               "--hyps", str(refs)) == 2
    assert "--threads" in capsys.readouterr().err
    assert run("score", "--threads", "2", "--refs", str(refs),
               "--hyps", str(refs)) == 0


def test_codes_out_of_range_for_codebook(corpus, tmp_path):
    rc = run("eval-codebook", "--manifest", str(corpus["fx"] / "train.jsonl"),
             "--codebook", str(corpus["codebook"]),
             "--codes", str(tmp_path / "missing.codes"))
    assert rc == 3

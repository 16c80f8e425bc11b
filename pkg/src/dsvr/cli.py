"""Command-line pipeline driver.

Subcommands cover the full flow: train-codebook, quantize,
eval-codebook, normalize, train-dvr, decode, score, plus make-fixture
for generating a synthetic demo corpus. Every command is deterministic
given its inputs and --seed: rerunning writes byte-identical outputs.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric or
undefined-metric error. Reports go to stdout unless --out is given;
logs always go to stderr.

A --config JSON file may supply any option (keys match the long flag
names, hyphens or underscores); explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .arabic import load_vocabulary, normalize_verbatim
from .errors import FormatError, NumericError, ValidationError
from .formats import (
    load_manifest,
    read_embeddings,
    read_frame_labels,
    read_transcripts,
    write_transcripts,
)

logger = logging.getLogger(__name__)

#: dests that use action="append"; config values for these are applied
#: only when the command line left them unset (argparse would otherwise
#: extend a list default instead of overriding it).
_APPEND_DESTS = {
    "train-codebook": {"manifest", "manifest_weight"},
}

#: dests that must be set (by flag or config) before a command runs.
_REQUIRED = {
    "train-codebook": ["manifest", "k", "out"],
    "quantize": ["manifest", "codebook", "out"],
    "eval-codebook": ["manifest", "codebook"],
    "normalize": ["in_path", "out"],
    "train-dvr": ["variant", "train_manifest", "dev_manifest", "vocab", "out"],
    "decode": ["model", "manifest", "vocab", "out"],
    "score": ["refs", "hyps"],
    "make-fixture": ["out"],
}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file supplying any option; flags override")
    parser.add_argument("--threads", type=int, default=None,
                        help="upper bound on internal parallelism (results do not depend on it)")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress logs, -vv for debug")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dsvr",
        description="Discrete speech-unit pipeline: codebooks, cluster metrics, "
                    "verbatim normalization, CTC recognition, and CER scoring.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    registry = {}

    def sub(name, func, help_text):
        p = subparsers.add_parser(name, help=help_text, description=help_text)
        _common(p)
        p.set_defaults(func=func)
        registry[name] = p
        return p

    p = sub("train-codebook", cmd_train_codebook,
            "Train a k-means codebook on a label-balanced frame subsample.")
    p.add_argument("--manifest", action="append",
                   help="dataset manifest (repeatable; entries need label_path)")
    p.add_argument("--manifest-weight", action="append", type=float, dest="manifest_weight",
                   help="sampling weight per manifest (repeatable, parallel to --manifest)")
    p.add_argument("--k", type=int, help="codebook size (>= 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=300, dest="max_iters")
    p.add_argument("--tol", type=float, default=1e-6, help="relative inertia improvement cutoff")
    p.add_argument("--per-label-cap", type=int, default=10000, dest="per_label_cap",
                   help="max frames drawn per label")
    p.add_argument("--out", help="output codebook file")

    p = sub("quantize", cmd_quantize,
            "Assign every frame in a manifest to its nearest codebook centroid.")
    p.add_argument("--manifest")
    p.add_argument("--codebook")
    p.add_argument("--out", help="output codes TSV")

    p = sub("eval-codebook", cmd_eval_codebook,
            "Score codebook quality: DB index, purities, PNMI, Clean/Mix counts.")
    p.add_argument("--manifest", help="manifest with label_path entries")
    p.add_argument("--codebook")
    p.add_argument("--codes", help="precomputed codes TSV (default: quantize in memory)")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--mix-samples", dest="mix_samples", help="write mix-cluster audit TSV here")
    p.add_argument("--mix-n", type=int, default=52, dest="mix_n",
                   help="audit frames per mix cluster")
    p.add_argument("--clean-threshold", type=float, default=0.8, dest="clean_threshold")
    p.add_argument("--contender-threshold", type=float, default=0.2, dest="contender_threshold")
    p.add_argument("--seed", type=int, default=0)

    p = sub("normalize", cmd_normalize,
            "Apply the verbatim normalization cascade to a transcript TSV.")
    p.add_argument("--in", dest="in_path", help="input transcript TSV")
    p.add_argument("--out", help="output transcript TSV")

    p = sub("train-dvr", cmd_train_dvr,
            "Train a CTC recognizer (baseline, discrete, or joint variant).")
    p.add_argument("--variant", choices=["baseline", "discrete", "joint"])
    p.add_argument("--train-manifest", dest="train_manifest")
    p.add_argument("--dev-manifest", dest="dev_manifest")
    p.add_argument("--codes", help="train codes TSV (discrete/joint)")
    p.add_argument("--dev-codes", dest="dev_codes", help="dev codes TSV (discrete/joint)")
    p.add_argument("--codebook", help="codebook file supplying k (discrete/joint)")
    p.add_argument("--k", type=int, help="codebook size if --codebook is not given")
    p.add_argument("--vocab", help="vocabulary file (line 1 = blank)")
    p.add_argument("--out", help="output model checkpoint")
    p.add_argument("--history", help="optional per-epoch loss CSV")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16, dest="batch_size")
    p.add_argument("--patience", type=int, default=5, help="early-stop patience, epochs")
    p.add_argument("--grad-clip", type=float, default=None, dest="grad_clip")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--d-ff", type=int, default=512, dest="d_ff")
    p.add_argument("--n-layers", type=int, default=2, dest="n_layers")
    p.add_argument("--n-heads", type=int, default=8, dest="n_heads")
    p.add_argument("--seed", type=int, default=0)

    p = sub("decode", cmd_decode,
            "Decode a manifest with a trained model into a hypothesis TSV.")
    p.add_argument("--model")
    p.add_argument("--manifest")
    p.add_argument("--codes", help="codes TSV (discrete/joint models)")
    p.add_argument("--vocab")
    p.add_argument("--decoder", choices=["greedy", "beam"], default="greedy")
    p.add_argument("--beam", type=int, default=16, help="beam width for --decoder beam")
    p.add_argument("--out", help="output hypothesis TSV")

    p = sub("score", cmd_score,
            "Micro-averaged character error rate of hypotheses against references.")
    p.add_argument("--refs", help="reference transcript TSV")
    p.add_argument("--hyps", help="hypothesis transcript TSV")
    p.add_argument("--groups", help="optional utt_id-to-group TSV for per-group CER")
    p.add_argument("--strip-vowels", action="store_true", default=None, dest="strip_vowels",
                   help="remove diacritics from both sides before scoring")
    p.add_argument("--out", help="report JSON path (default: stdout)")
    p.add_argument("--per-group-csv", dest="per_group_csv", help="write per-group CSV here")

    p = sub("make-fixture", cmd_make_fixture,
            "Generate a synthetic corpus with known latent sound classes.")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n-train", type=int, default=40, dest="n_train")
    p.add_argument("--n-dev", type=int, default=10, dest="n_dev")
    p.add_argument("--n-classes", type=int, default=12, dest="n_classes")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    return parser, registry


def _load_config_overrides(path, command, subparser):
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: config is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    overrides = {str(key).replace("-", "_"): value for key, value in obj.items()}
    valid = {action.dest for action in subparser._actions if action.dest != "help"}
    unknown = sorted(set(overrides) - valid)
    if unknown:
        raise ValidationError(f"{path}: unknown config keys for {command}: {', '.join(unknown)}")
    return overrides


def _check_required(args, command):
    missing = [dest for dest in _REQUIRED[command] if getattr(args, dest) is None]
    if missing:
        flags = ", ".join("--" + ("in" if d == "in_path" else d.replace("_", "-"))
                          for d in missing)
        raise ValidationError(f"{command}: missing required option(s): {flags}")


def _bound_threads(args) -> None:
    """Honor --threads as an upper bound. Torch work is pinned to one
    thread regardless so reruns stay bit-identical."""
    if args.threads is not None and args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    import torch

    torch.set_num_threads(1)


def _emit_report(text: str, out_path) -> None:
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_train_codebook(args) -> int:
    from .quantizer import SubsampleSpec, balanced_subsample, save_codebook, train_codebook

    manifests = [load_manifest(p) for p in args.manifest]
    weights = args.manifest_weight
    if weights is not None and len(weights) != len(manifests):
        raise ValidationError(
            f"{len(weights)} --manifest-weight values for {len(manifests)} manifests"
        )
    spec = SubsampleSpec(per_label_cap=args.per_label_cap, seed=args.seed)
    sample = balanced_subsample(manifests, spec, weights=weights)
    logger.info("subsampled %d frames for codebook training", sample.frames.shape[0])
    codebook = train_codebook(
        sample.frames, args.k, args.seed, max_iters=args.max_iters, tol=args.tol
    )
    save_codebook(codebook, args.out)
    logger.info("wrote %s (k=%d, inertia=%.6g)", args.out, codebook.k,
                codebook.training_inertia)
    return 0


def cmd_quantize(args) -> int:
    from .quantizer import load_codebook, quantize, write_codes

    manifest = load_manifest(args.manifest)
    codebook = load_codebook(args.codebook)
    sequences = []
    for entry in manifest:
        emb = read_embeddings(entry.embedding_path, entry.utt_id)
        sequences.append(quantize(emb, codebook))
    write_codes(sequences, args.out)
    logger.info("quantized %d utterances to %s", len(sequences), args.out)
    return 0


def cmd_eval_codebook(args) -> int:
    from .metrics import (
        KIND_CLEAN,
        KIND_MIX,
        accumulate_joint,
        classify_clusters,
        cluster_purity,
        davies_bouldin,
        export_mix_samples,
        metric_report_json,
        new_table,
        phone_purity,
        pnmi,
        write_mix_samples,
    )
    from .quantizer import load_codebook, quantize, read_codes

    manifest = load_manifest(args.manifest)
    codebook = load_codebook(args.codebook)
    codes_by_utt = read_codes(args.codes, codebook.k) if args.codes else {}

    table = new_table(codebook.k)
    frame_blocks = []
    code_blocks = []
    for entry in manifest:
        if entry.label_path is None:
            raise ValidationError(f"{entry.utt_id}: manifest entry has no label_path")
        emb = read_embeddings(entry.embedding_path, entry.utt_id)
        if args.codes:
            if entry.utt_id not in codes_by_utt:
                raise ValidationError(f"{entry.utt_id}: not present in {args.codes}")
            seq = codes_by_utt[entry.utt_id]
            if seq.codes.shape[0] != emb.num_frames:
                raise ValidationError(
                    f"{entry.utt_id}: {seq.codes.shape[0]} codes vs "
                    f"{emb.num_frames} embedding frames"
                )
        else:
            seq = quantize(emb, codebook)
            codes_by_utt[entry.utt_id] = seq
        labels, _unknown = read_frame_labels(entry.label_path, emb.num_frames)
        accumulate_joint(labels, seq, table)
        frame_blocks.append(emb.frames)
        code_blocks.append(seq.codes)

    frames = np.concatenate(frame_blocks)
    codes = np.concatenate(code_blocks)
    verdicts = classify_clusters(
        table, clean_threshold=args.clean_threshold,
        contender_threshold=args.contender_threshold,
    )
    report = metric_report_json(
        k=codebook.k,
        db_index=davies_bouldin(frames, codes, codebook),
        phone_purity_value=phone_purity(table),
        cluster_purity_value=cluster_purity(table),
        pnmi_value=pnmi(table),
        n_frames=int(frames.shape[0]),
        n_clean=sum(1 for v in verdicts if v.kind == KIND_CLEAN),
        n_mix=sum(1 for v in verdicts if v.kind == KIND_MIX),
    )
    _emit_report(report, args.out)
    if args.mix_samples:
        rows = export_mix_samples(
            verdicts, manifest, codes_by_utt, n_per_cluster=args.mix_n, seed=args.seed
        )
        write_mix_samples(rows, args.mix_samples)
        logger.info("wrote %d mix audit rows to %s", len(rows), args.mix_samples)
    return 0


def cmd_normalize(args) -> int:
    raw = read_transcripts(args.in_path)
    normalized = {
        utt_id: normalize_verbatim(text, utt_id=utt_id).text
        for utt_id, text in raw.items()
    }
    write_transcripts(normalized, args.out)
    logger.info("normalized %d transcripts to %s", len(normalized), args.out)
    return 0


def _resolve_k(args) -> int:
    from .quantizer import load_codebook

    if args.codebook:
        k = load_codebook(args.codebook).k
        if args.k is not None and args.k != k:
            raise ValidationError(f"--k {args.k} contradicts codebook k={k}")
        return k
    if args.k is None:
        raise ValidationError("discrete/joint variants need --codebook or --k")
    return args.k


def cmd_train_dvr(args) -> int:
    _bound_threads(args)
    from .model import (
        DvrModel,
        ModelConfig,
        TrainConfig,
        build_samples,
        count_parameters,
        save_model,
        train,
        write_history,
    )
    from .quantizer import read_codes

    vocab = load_vocabulary(args.vocab)
    train_manifest = load_manifest(args.train_manifest)
    dev_manifest = load_manifest(args.dev_manifest)

    uses_codes = args.variant in ("discrete", "joint")
    uses_embeddings = args.variant in ("baseline", "joint")

    k = _resolve_k(args) if uses_codes else 256
    train_codes = dev_codes = None
    if uses_codes:
        if not args.codes or not args.dev_codes:
            raise ValidationError(f"{args.variant} variant needs --codes and --dev-codes")
        train_codes = read_codes(args.codes, k)
        dev_codes = read_codes(args.dev_codes, k)

    d_in = 1024
    if uses_embeddings:
        if not len(train_manifest):
            raise ValidationError("train manifest is empty")
        first = train_manifest.entries[0]
        d_in = read_embeddings(first.embedding_path, first.utt_id).dim

    config = ModelConfig(
        variant=args.variant,
        k=k,
        d_in=d_in,
        d_ff=args.d_ff,
        n_layers=args.n_layers,
        n_heads=args.n_heads,
        vocab_size=len(vocab),
        dropout=args.dropout,
    )
    train_set = build_samples(train_manifest, vocab, config, codes_by_utt=train_codes)
    dev_set = build_samples(dev_manifest, vocab, config, codes_by_utt=dev_codes)

    import torch

    torch.manual_seed(args.seed)  # weight init must be reproducible too
    model = DvrModel(config)
    logger.info("%s model: %d trainable parameters", config.variant,
                count_parameters(model))
    tc = TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        early_stop_patience=args.patience,
        seed=args.seed,
        grad_clip=args.grad_clip,
    )
    model, history = train(model, train_set, dev_set, tc)
    save_model(model, args.out)
    if args.history:
        write_history(history, args.history)
    final = history[-1]
    logger.info("wrote %s (best dev loss %.4f, final dev CER %.4f)",
                args.out, min(h.dev_loss for h in history), final.dev_cer)
    return 0


def cmd_decode(args) -> int:
    _bound_threads(args)
    from .model import load_model, predict
    from .quantizer import read_codes

    model = load_model(args.model)
    vocab = load_vocabulary(args.vocab)
    manifest = load_manifest(args.manifest)
    cfg = model.config

    codes_by_utt = {}
    if cfg.uses_codes:
        if not args.codes:
            raise ValidationError(f"{cfg.variant} model needs --codes")
        codes_by_utt = read_codes(args.codes, cfg.k)

    hyps = {}
    for entry in manifest:
        codes = None
        embeddings = None
        if cfg.uses_codes:
            if entry.utt_id not in codes_by_utt:
                raise ValidationError(f"{entry.utt_id}: not present in {args.codes}")
            codes = codes_by_utt[entry.utt_id]
        if cfg.uses_embeddings:
            embeddings = read_embeddings(entry.embedding_path, entry.utt_id)
        hyp = predict(model, vocab, codes=codes, embeddings=embeddings,
                      decoder=args.decoder, beam_width=args.beam)
        hyps[entry.utt_id] = hyp.text
    write_transcripts(hyps, args.out)
    logger.info("decoded %d utterances to %s", len(hyps), args.out)
    return 0


def cmd_score(args) -> int:
    from .scoring import per_group_csv, report_to_json, score_manifest

    refs = read_transcripts(args.refs)
    hyps = read_transcripts(args.hyps)
    groups = read_transcripts(args.groups) if args.groups else None
    report = score_manifest(refs, hyps, groups=groups,
                            strip_vowels=bool(args.strip_vowels))
    _emit_report(report_to_json(report), args.out)
    if args.per_group_csv:
        Path(args.per_group_csv).write_text(per_group_csv(report), encoding="utf-8")
    return 0


def cmd_make_fixture(args) -> int:
    from .fixtures import make_synthetic_corpus

    paths = make_synthetic_corpus(
        args.out,
        n_train=args.n_train,
        n_dev=args.n_dev,
        n_classes=args.n_classes,
        dim=args.dim,
        noise=args.noise,
        seed=args.seed,
    )
    print(json.dumps(dataclasses.asdict(paths), indent=2))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, registry = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2

    try:
        if args.config:
            overrides = _load_config_overrides(args.config, args.command,
                                               registry[args.command])
            append_dests = _APPEND_DESTS.get(args.command, set())
            plain = {k: v for k, v in overrides.items() if k not in append_dests}
            registry[args.command].set_defaults(**plain)
            args = parser.parse_args(argv)
            for dest in append_dests & set(overrides):
                if getattr(args, dest) is None:
                    value = overrides[dest]
                    setattr(args, dest, value if isinstance(value, list) else [value])

        logging.basicConfig(
            stream=sys.stderr,
            level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.threads is not None and args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        _check_required(args, args.command)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (FormatError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry points for extraction and alignment conversion."""

import argparse
import logging
import sys
from pathlib import Path

from .alignments import FORMATS, convert_alignments
from .errors import FormatError, ValidationError
from .extract import ExtractionJob, extract_embeddings
from .io import write_frame_labels

logger = logging.getLogger(__name__)

_ALIGN_SUFFIXES = {"ctm": ".ctm", "textgrid": ".TextGrid"}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dsvr-adapter",
        description="Bridge pretrained-encoder features and aligner output "
                    "into the dsvr toolkit's file formats.",
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("extract", help="export frame embeddings from audio")
    p.add_argument("--audio-dir", required=True, help="directory of .wav files")
    p.add_argument("--model", required=True, help="encoder identifier or local path")
    p.add_argument("--layer", type=int, default=None,
                   help="hidden-state layer to export (default: final)")
    p.add_argument("--hop-ms", type=float, default=20.0,
                   help="expected frame hop, for sanity checks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("align-convert", help="convert alignments to frame labels")
    p.add_argument("--in", dest="in_path", required=True,
                   help="alignment file or directory of them")
    p.add_argument("--format", required=True, choices=FORMATS)
    p.add_argument("--hop-ms", type=float, default=20.0)
    p.add_argument("--out", required=True, help="output directory for label TSVs")
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_align_convert)
    return parser


def cmd_extract(args) -> int:
    audio_dir = Path(args.audio_dir)
    wavs = sorted(audio_dir.glob("*.wav"))
    if not wavs:
        raise ValidationError(f"no .wav files in {audio_dir}")
    job = ExtractionJob(
        audio=tuple((p.stem, str(p)) for p in wavs),
        model_id=args.model,
        out_dir=args.out,
        layer=args.layer,
        hop_ms=args.hop_ms,
    )
    result = extract_embeddings(job)
    logger.info("wrote %d embedding files to %s", len(result.written), args.out)
    if not result.written:
        print("error: every file failed to extract", file=sys.stderr)
        return 3
    return 0


def cmd_align_convert(args) -> int:
    in_path = Path(args.in_path)
    if in_path.is_dir():
        suffix = _ALIGN_SUFFIXES[args.format]
        paths = sorted(p for p in in_path.iterdir()
                       if p.suffix.lower() == suffix.lower())
        if not paths:
            raise ValidationError(f"no {suffix} files in {in_path}")
    else:
        paths = [in_path]
    rows_by_utt = convert_alignments(paths, args.format, hop_ms=args.hop_ms)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for utt_id, rows in rows_by_utt.items():
        write_frame_labels(rows, out_dir / f"{utt_id}.tsv")
    logger.info("wrote labels for %d utterances to %s", len(rows_by_utt), out_dir)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    logging.basicConfig(
        stream=sys.stderr,
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

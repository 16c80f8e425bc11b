"""Bridge between a pretrained speech encoder / forced aligners and the
dsvr toolkit's file formats."""

from .alignments import (
    convert_alignments,
    intervals_to_frames,
    parse_ctm,
    parse_textgrid,
    reconcile_lengths,
)
from .audio import load_wav, load_wav_16k, to_target_rate
from .errors import AdapterError, FormatError, ValidationError
from .extract import ExtractionJob, ExtractionResult, extract_embeddings
from .io import write_embedding_file, write_frame_labels, write_manifest

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "ExtractionJob",
    "ExtractionResult",
    "FormatError",
    "ValidationError",
    "convert_alignments",
    "extract_embeddings",
    "intervals_to_frames",
    "load_wav",
    "load_wav_16k",
    "parse_ctm",
    "parse_textgrid",
    "reconcile_lengths",
    "to_target_rate",
    "write_embedding_file",
    "write_frame_labels",
    "write_manifest",
]

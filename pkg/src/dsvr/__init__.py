"""Discrete speech-unit pipeline: codebook training, cluster quality
metrics, Arabic verbatim normalization, and a CTC recognizer."""

__version__ = "0.1.0"

from .arabic import (
    Vocabulary,
    VerbatimTranscript,
    decode,
    default_vocabulary,
    encode,
    normalize_verbatim,
    strip_diacritics,
)
from .ctc import LogProbLattice, collapse, ctc_beam_decode, ctc_greedy_decode, ctc_loss
from .errors import (
    CorruptionError,
    DegenerateDataError,
    DsvrError,
    EncodingError,
    FormatError,
    NumericError,
    UndefinedMetricError,
    UnmappedCharacterError,
    ValidationError,
)
from .formats import (
    EmbeddingSequence,
    FrameLabelSequence,
    load_manifest,
    read_embeddings,
    write_embeddings,
)
from .metrics import (
    classify_clusters,
    cluster_purity,
    davies_bouldin,
    phone_purity,
    pnmi,
)
from .model import DvrModel, ModelConfig, TrainConfig, load_model, save_model, train
from .quantizer import Codebook, load_codebook, quantize, save_codebook, train_codebook
from .scoring import CerReport, cer, edit_distance, score_manifest

__all__ = [
    "__version__",
    "Vocabulary", "VerbatimTranscript", "decode", "default_vocabulary",
    "encode", "normalize_verbatim", "strip_diacritics",
    "LogProbLattice", "collapse", "ctc_beam_decode", "ctc_greedy_decode", "ctc_loss",
    "DsvrError", "ValidationError", "EncodingError", "UnmappedCharacterError",
    "FormatError", "CorruptionError", "NumericError", "UndefinedMetricError",
    "DegenerateDataError",
    "EmbeddingSequence", "FrameLabelSequence", "load_manifest",
    "read_embeddings", "write_embeddings",
    "classify_clusters", "cluster_purity", "davies_bouldin", "phone_purity", "pnmi",
    "DvrModel", "ModelConfig", "TrainConfig", "load_model", "save_model", "train",
    "Codebook", "load_codebook", "quantize", "save_codebook", "train_codebook",
    "CerReport", "cer", "edit_distance", "score_manifest",
]

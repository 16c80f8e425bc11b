"""Frame-embedding extraction from a pretrained speech encoder."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio import TARGET_SR, load_wav_16k
from .errors import AdapterError, FormatError, ValidationError
from .io import write_embedding_file, write_manifest

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExtractionJob:
    """One batch of audio files to push through the encoder.

    ``audio`` is a sequence of (utt_id, wav_path) pairs. ``layer`` picks
    which hidden-state layer to export (0 = the convolutional front-end's
    projection, 1..depth = encoder layers); None means the final layer.
    ``hop_ms`` is only used to sanity-check emitted frame counts — the
    true hop is fixed by the encoder's convolutional stack.
    """

    audio: tuple
    model_id: str
    out_dir: str
    layer: int | None = None
    hop_ms: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "audio", tuple((str(u), str(p)) for u, p in self.audio))
        if not self.audio:
            raise ValidationError("extraction job has no audio files")
        seen = set()
        for utt_id, _ in self.audio:
            if utt_id in seen:
                raise ValidationError(f"duplicate utt_id {utt_id!r} in job")
            seen.add(utt_id)
        if not self.hop_ms > 0:
            raise ValidationError("hop_ms must be positive")


@dataclass
class ExtractionResult:
    manifest_path: str
    written: dict = field(default_factory=dict)   # utt_id -> embedding path
    failures: dict = field(default_factory=dict)  # utt_id -> error message


def _load_encoder(model_id: str):
    from transformers import AutoModel

    model = AutoModel.from_pretrained(model_id)
    model.eval()
    return model


def extract_embeddings(job: ExtractionJob) -> ExtractionResult:
    """Run every utterance through the encoder and emit toolkit files.

    Writes one embedding file per utterance plus ``manifest.jsonl`` (and
    ``failures.jsonl`` when anything went wrong). A file that cannot be
    read or decoded is recorded as a failure and the job continues;
    model or layer problems abort the whole job.
    """
    model = _load_encoder(job.model_id)
    depth = int(model.config.num_hidden_layers)
    layer = depth if job.layer is None else int(job.layer)
    if not 0 <= layer <= depth:
        raise ValidationError(f"layer {layer} outside model depth 0..{depth}")

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)  # keep reruns byte-identical

    result = ExtractionResult(manifest_path=str(out_dir / "manifest.jsonl"))
    entries = []
    for utt_id, wav_path in job.audio:
        try:
            samples = load_wav_16k(wav_path)
        except (FormatError, OSError) as exc:
            logger.warning("%s: %s", utt_id, exc)
            result.failures[utt_id] = str(exc)
            continue
        normalized = (samples - samples.mean()) / np.sqrt(samples.var() + 1e-7)
        waveform = torch.from_numpy(normalized).unsqueeze(0)
        with torch.no_grad():
            out = model(waveform, output_hidden_states=True)
        frames = out.hidden_states[layer][0].numpy().astype(np.float32)

        expected = len(samples) / TARGET_SR * 1000.0 / job.hop_ms
        if abs(frames.shape[0] - expected) > 2:
            logger.warning(
                "%s: %d frames but ~%.1f expected at %.0f ms hop",
                utt_id, frames.shape[0], expected, job.hop_ms,
            )
        emb_path = out_dir / f"{utt_id}.bin"
        write_embedding_file(emb_path, frames, frame_shift_ms=job.hop_ms)
        result.written[utt_id] = str(emb_path)
        entries.append({"utt_id": utt_id, "embedding_path": f"{utt_id}.bin"})
        logger.info("%s: wrote %dx%d frames", utt_id, *frames.shape)

    write_manifest(entries, result.manifest_path)
    if result.failures:
        failures_path = out_dir / "failures.jsonl"
        import json

        failures_path.write_text(
            "".join(
                json.dumps({"utt_id": u, "error": e}) + "\n"
                for u, e in sorted(result.failures.items())
            ),
            encoding="utf-8",
        )
        logger.warning("%d/%d files failed; see %s",
                       len(result.failures), len(job.audio), failures_path)
    return result

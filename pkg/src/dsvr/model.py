"""Sequence recognizer over discrete codes and/or continuous embeddings.

Three variants share one transformer encoder body: ``baseline`` reads
projected continuous frames, ``discrete`` reads learned code
embeddings, and ``joint`` concatenates both (doubling the model width).
The head emits per-frame log-probabilities over the output vocabulary,
trained with the CTC objective from :mod:`.ctc` through a custom
autograd bridge so training and decoding share one loss implementation.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .arabic import Vocabulary, decode, encode
from .ctc import LogProbLattice, ctc_beam_decode, ctc_greedy_decode, ctc_loss, min_frames_needed
from .errors import (
    CorruptionError,
    EmptyTrainingError,
    EncodingError,
    FormatError,
    ValidationError,
)
from .formats import read_embeddings

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "discrete", "joint")

#: Encoder internals not configurable from the outside; recorded in
#: every checkpoint header for reproducibility.
ARCH_DEFAULTS = {
    "positional_encoding": "sinusoidal",
    "norm": "pre",
    "activation": "gelu",
    "ff_mult": 4,
}

MODEL_MAGIC = b"DSVM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    k: int = 256
    d_in: int = 1024
    d_ff: int = 512
    n_layers: int = 2
    n_heads: int = 8
    vocab_size: int = 39
    dropout: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "variant", str(self.variant).lower())
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.vocab_size < 2:
            raise ValidationError("vocab_size must be >= 2")
        if self.d_ff < 1 or self.n_layers < 1 or self.n_heads < 1:
            raise ValidationError("d_ff, n_layers, n_heads must be >= 1")
        if self.uses_codes and self.k < 2:
            raise ValidationError(f"{self.variant} variant needs k >= 2")
        if self.uses_embeddings and self.d_in < 1:
            raise ValidationError(f"{self.variant} variant needs d_in >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError("dropout must be in [0, 1)")
        if self.model_dim % self.n_heads != 0:
            raise ValidationError(
                f"model dim {self.model_dim} not divisible by n_heads {self.n_heads}"
            )

    @property
    def uses_codes(self) -> bool:
        return self.variant in ("discrete", "joint")

    @property
    def uses_embeddings(self) -> bool:
        return self.variant in ("baseline", "joint")

    @property
    def model_dim(self) -> int:
        # the joint variant concatenates code and continuous features
        return 2 * self.d_ff if self.variant == "joint" else self.d_ff


def sinusoidal_positions(n_frames: int, dim: int, dtype, device) -> torch.Tensor:
    """Classic fixed sin/cos position table, (n_frames, dim)."""
    position = torch.arange(n_frames, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(
        torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim)
    )
    table = torch.zeros(n_frames, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div[: dim // 2])
    return table.to(dtype=dtype, device=device)


class DvrModel(nn.Module):
    """Transformer encoder + CTC head over frame sequences."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dim = config.model_dim
        if config.uses_codes:
            self.code_embedding = nn.Embedding(config.k, config.d_ff)
        if config.uses_embeddings:
            self.input_projection = nn.Linear(config.d_in, config.d_ff)
        self.input_dropout = nn.Dropout(config.dropout)
        layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=config.n_heads,
            dim_feedforward=ARCH_DEFAULTS["ff_mult"] * dim,
            dropout=config.dropout,
            activation=ARCH_DEFAULTS["activation"],
            batch_first=True,
            norm_first=True,
        )
        self.encoder = nn.TransformerEncoder(
            layer, num_layers=config.n_layers, norm=nn.LayerNorm(dim),
            enable_nested_tensor=False,
        )
        self.head = nn.Linear(dim, config.vocab_size)

    def forward(self, codes=None, embeddings=None, pad_mask=None) -> torch.Tensor:
        """Batched forward: (B, T) codes and/or (B, T, d_in) embeddings
        to (B, T, V) log-probabilities. ``pad_mask`` is True at padding."""
        cfg = self.config
        parts = []
        if cfg.uses_codes:
            parts.append(self.code_embedding(codes))
        if cfg.uses_embeddings:
            parts.append(self.input_projection(embeddings))
        x = torch.cat(parts, dim=-1) if len(parts) > 1 else parts[0]
        pos = sinusoidal_positions(x.shape[1], x.shape[2], x.dtype, x.device)
        x = self.input_dropout(x + pos.unsqueeze(0))
        x = self.encoder(x, src_key_padding_mask=pad_mask)
        return torch.log_softmax(self.head(x), dim=-1)


def _check_variant_inputs(config: ModelConfig, codes, embeddings):
    if config.uses_codes and codes is None:
        raise ValidationError(f"{config.variant} variant requires a code sequence")
    if not config.uses_codes and codes is not None:
        raise ValidationError(f"{config.variant} variant takes no code sequence")
    if config.uses_embeddings and embeddings is None:
        raise ValidationError(f"{config.variant} variant requires continuous embeddings")
    if not config.uses_embeddings and embeddings is not None:
        raise ValidationError(f"{config.variant} variant takes no continuous embeddings")
    if codes is not None and codes.k != config.k:
        raise ValidationError(f"codes drawn from k={codes.k}, model expects k={config.k}")
    if embeddings is not None and embeddings.dim != config.d_in:
        raise ValidationError(
            f"embedding dim {embeddings.dim} != model input dim {config.d_in}"
        )
    if codes is not None and embeddings is not None:
        if codes.num_frames != embeddings.num_frames:
            raise ValidationError(
                f"{codes.utt_id}: {codes.num_frames} codes vs "
                f"{embeddings.num_frames} embedding frames"
            )


def forward_lattice(model: DvrModel, codes=None, embeddings=None) -> LogProbLattice:
    """Run one utterance through the model in eval mode."""
    _check_variant_inputs(model.config, codes, embeddings)
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            dtype = next(model.parameters()).dtype
            code_t = None
            emb_t = None
            if codes is not None:
                code_t = torch.from_numpy(np.asarray(codes.codes, dtype=np.int64)).unsqueeze(0)
            if embeddings is not None:
                emb_t = torch.from_numpy(np.asarray(embeddings.frames)).to(dtype).unsqueeze(0)
            out = model(codes=code_t, embeddings=emb_t)
    finally:
        model.train(was_training)
    # re-normalize in double: float32 log-softmax rows carry ~1e-7 slack
    lp = out[0].double()
    lp = lp - lp.logsumexp(dim=-1, keepdim=True)
    return LogProbLattice(lp.numpy(), blank_id=0)


class _CtcBatchLoss(torch.autograd.Function):
    """Bridge from torch log-probs to the numpy CTC loss, per utterance."""

    @staticmethod
    def forward(ctx, log_probs, lengths, targets):
        lp = log_probs.detach().cpu().numpy().astype(np.float64)
        # re-normalize rows in double; the correction is O(1e-7) and its
        # gradient contribution is ignored as below all training noise
        lp -= np.logaddexp.reduce(lp, axis=2, keepdims=True)
        losses = np.empty(lp.shape[0], dtype=np.float64)
        grads = np.zeros_like(lp)
        for i, (n_frames, target) in enumerate(zip(lengths, targets)):
            lattice = LogProbLattice(lp[i, :n_frames], blank_id=0)
            result = ctc_loss(lattice, target)
            losses[i] = result.loss
            grads[i, :n_frames] = result.grad
        ctx.saved_grads = torch.from_numpy(grads).to(log_probs.dtype)
        return torch.from_numpy(losses).to(log_probs.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output[:, None, None] * ctx.saved_grads, None, None


@dataclass(frozen=True)
class TrainSample:
    """One utterance prepared for training: inputs plus encoded target."""

    utt_id: str
    codes: np.ndarray | None
    embeddings: np.ndarray | None
    target: tuple

    @property
    def num_frames(self) -> int:
        source = self.codes if self.codes is not None else self.embeddings
        return source.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 16
    max_epochs: int = 50
    early_stop_patience: int = 5
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if not self.lr >= 0:
            raise ValidationError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValidationError("grad_clip must be > 0 when set")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_cer: float


def build_samples(manifest, vocab: Vocabulary, config: ModelConfig,
                  codes_by_utt=None, transcripts=None):
    """Assemble TrainSamples from a manifest for the given variant.

    Targets come from ``transcripts`` (utt_id -> text) when given, else
    from the manifest's transcript field, and must already be in
    normalized form so they encode cleanly.
    """
    samples = []
    for entry in manifest:
        text = None
        if transcripts is not None:
            text = transcripts.get(entry.utt_id)
        if text is None:
            text = entry.transcript
        if text is None:
            raise ValidationError(f"{entry.utt_id}: no transcript available")
        try:
            target = tuple(encode(text, vocab))
        except EncodingError as exc:
            raise EncodingError(
                f"{entry.utt_id}: transcript not encodable ({exc}); normalize it first",
                position=exc.position,
                symbol=exc.symbol,
            ) from exc

        codes = None
        if config.uses_codes:
            if codes_by_utt is None or entry.utt_id not in codes_by_utt:
                raise ValidationError(f"{entry.utt_id}: no code sequence provided")
            seq = codes_by_utt[entry.utt_id]
            if seq.k != config.k:
                raise ValidationError(
                    f"{entry.utt_id}: codes drawn from k={seq.k}, model expects k={config.k}"
                )
            codes = seq.codes
        embeddings = None
        if config.uses_embeddings:
            emb = read_embeddings(entry.embedding_path, entry.utt_id)
            if emb.dim != config.d_in:
                raise ValidationError(
                    f"{entry.utt_id}: embedding dim {emb.dim} != model d_in {config.d_in}"
                )
            embeddings = emb.frames
        if codes is not None and embeddings is not None and len(codes) != len(embeddings):
            raise ValidationError(
                f"{entry.utt_id}: {len(codes)} codes vs {len(embeddings)} embedding frames"
            )
        samples.append(TrainSample(entry.utt_id, codes, embeddings, target))
    return samples


def _filter_feasible(samples, name):
    kept = []
    skipped = 0
    for sample in samples:
        if min_frames_needed(sample.target) > sample.num_frames:
            logger.warning(
                "%s: target needs %d frames but only %d available; skipping",
                sample.utt_id, min_frames_needed(sample.target), sample.num_frames,
            )
            skipped += 1
        else:
            kept.append(sample)
    if not kept:
        raise EmptyTrainingError(f"every {name} utterance was skipped as infeasible")
    if skipped:
        logger.warning("skipped %d/%d %s utterances", skipped, len(samples), name)
    return kept


def _collate(samples, dtype):
    """Pad a list of samples into batch tensors."""
    lengths = [s.num_frames for s in samples]
    t_max = max(lengths)
    batch = len(samples)
    codes = None
    embeddings = None
    if samples[0].codes is not None:
        codes = torch.zeros(batch, t_max, dtype=torch.int64)
        for i, s in enumerate(samples):
            codes[i, : lengths[i]] = torch.from_numpy(np.asarray(s.codes, dtype=np.int64))
    if samples[0].embeddings is not None:
        d_in = samples[0].embeddings.shape[1]
        embeddings = torch.zeros(batch, t_max, d_in, dtype=dtype)
        for i, s in enumerate(samples):
            embeddings[i, : lengths[i]] = torch.from_numpy(np.asarray(s.embeddings)).to(dtype)
    pad_mask = torch.ones(batch, t_max, dtype=torch.bool)
    for i, n in enumerate(lengths):
        pad_mask[i, :n] = False
    return codes, embeddings, pad_mask, lengths


def batch_ctc_loss(model: DvrModel, samples) -> torch.Tensor:
    """Per-utterance CTC losses for a batch (differentiable)."""
    dtype = next(model.parameters()).dtype
    codes, embeddings, pad_mask, lengths = _collate(samples, dtype)
    log_probs = model(codes=codes, embeddings=embeddings, pad_mask=pad_mask)
    targets = [s.target for s in samples]
    return _CtcBatchLoss.apply(log_probs, lengths, targets)


def _evaluate(model: DvrModel, samples, batch_size: int):
    """Dev loss (mean per utterance) and micro-averaged dev CER on ids."""
    from .scoring import edit_distance

    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    total_loss = 0.0
    edits = 0
    ref_len = 0
    try:
        with torch.no_grad():
            for lo in range(0, len(samples), batch_size):
                chunk = samples[lo : lo + batch_size]
                codes, embeddings, pad_mask, lengths = _collate(chunk, dtype)
                out = model(codes=codes, embeddings=embeddings, pad_mask=pad_mask)
                losses = _CtcBatchLoss.apply(out, lengths, [s.target for s in chunk])
                total_loss += float(losses.sum())
                for i, sample in enumerate(chunk):
                    lattice = LogProbLattice(
                        out[i, : lengths[i]].double().numpy(), blank_id=0
                    )
                    hyp = ctc_greedy_decode(lattice)
                    edits += edit_distance(list(sample.target), hyp)
                    ref_len += len(sample.target)
    finally:
        model.train(was_training)
    dev_cer = edits / ref_len if ref_len else 0.0
    return total_loss / len(samples), dev_cer


def train(model: DvrModel, train_set, dev_set, tc: TrainConfig):
    """Adam/CTC training with early stopping on dev loss.

    Returns the model restored to its best-dev checkpoint plus the
    per-epoch loss history. Utterances too short for their target are
    skipped with a warning; if nothing survives, training fails.
    """
    train_samples = _filter_feasible(train_set, "train")
    dev_samples = _filter_feasible(dev_set, "dev")

    torch.manual_seed(tc.seed)
    shuffler = torch.Generator()
    shuffler.manual_seed(tc.seed)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=tc.lr, betas=(0.9, 0.999), eps=1e-8
    )

    best_loss = math.inf
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    history = []
    for epoch in range(1, tc.max_epochs + 1):
        model.train()
        order = torch.randperm(len(train_samples), generator=shuffler).tolist()
        epoch_loss = 0.0
        for lo in range(0, len(order), tc.batch_size):
            batch = [train_samples[i] for i in order[lo : lo + tc.batch_size]]
            optimizer.zero_grad()
            losses = batch_ctc_loss(model, batch)
            loss = losses.mean()
            loss.backward()
            if tc.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), tc.grad_clip)
            optimizer.step()
            epoch_loss += float(losses.detach().sum())
        train_loss = epoch_loss / len(train_samples)
        dev_loss, dev_cer = _evaluate(model, dev_samples, tc.batch_size)
        history.append(EpochStats(epoch, train_loss, dev_loss, dev_cer))
        logger.info(
            "epoch %d: train %.4f dev %.4f dev-cer %.4f", epoch, train_loss, dev_loss, dev_cer
        )
        if dev_loss < best_loss:
            best_loss = dev_loss
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= tc.early_stop_patience:
                logger.info("early stop after epoch %d", epoch)
                break
    model.load_state_dict(best_state)
    return model, history


def predict(model: DvrModel, vocab: Vocabulary, codes=None, embeddings=None,
            decoder: str = "greedy", beam_width: int = 16):
    """Decode one utterance to a transcript."""
    if len(vocab) != model.config.vocab_size:
        raise ValidationError(
            f"vocabulary size {len(vocab)} != model vocab_size {model.config.vocab_size}"
        )
    lattice = forward_lattice(model, codes=codes, embeddings=embeddings)
    if decoder == "greedy":
        ids = ctc_greedy_decode(lattice, vocab)
    elif decoder == "beam":
        ids = ctc_beam_decode(lattice, vocab, beam_width=beam_width)
    else:
        raise ValidationError(f"decoder must be greedy or beam, got {decoder!r}")
    source = codes if codes is not None else embeddings
    return decode(ids, vocab, utt_id=source.utt_id)


def count_parameters(model: DvrModel) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def write_history(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,dev_loss,dev_cer\n")
        for row in history:
            fh.write(f"{row.epoch},{row.train_loss:.10g},{row.dev_loss:.10g},{row.dev_cer:.10g}\n")


def save_model(model: DvrModel, path) -> None:
    """Serialize config + named f32 tensors behind the model magic."""
    cfg = model.config
    header_obj = {
        "config": {
            "variant": cfg.variant,
            "k": cfg.k,
            "d_in": cfg.d_in,
            "d_ff": cfg.d_ff,
            "n_layers": cfg.n_layers,
            "n_heads": cfg.n_heads,
            "vocab_size": cfg.vocab_size,
            "dropout": cfg.dropout,
        },
        "arch": dict(ARCH_DEFAULTS),
    }
    blob = json.dumps(header_obj, sort_keys=True).encode("utf-8")
    out = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, len(blob)), blob]
    state = model.state_dict()
    out.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        data = tensor.detach().cpu().to(torch.float32).numpy()
        name_b = name.encode("utf-8")
        out.append(struct.pack("<I", len(name_b)))
        out.append(name_b)
        out.append(struct.pack("<I", data.ndim))
        out.append(struct.pack(f"<{data.ndim}I", *data.shape))
        out.append(np.ascontiguousarray(data, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_model(path) -> DvrModel:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    try:
        version, blob_len = struct.unpack_from("<II", data, 4)
        if version != MODEL_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        offset = 12
        header_obj = json.loads(data[offset : offset + blob_len].decode("utf-8"))
        offset += blob_len
        (n_tensors,) = struct.unpack_from("<I", data, offset)
        offset += 4
        state = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<I", data, offset)
            offset += 4
            shape = struct.unpack_from(f"<{ndim}I", data, offset)
            offset += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            state[name] = torch.from_numpy(arr.copy().reshape(shape))
    except (struct.error, ValueError, IndexError) as exc:
        raise CorruptionError(f"{path}: truncated or malformed checkpoint: {exc}") from exc
    if offset != len(data):
        raise CorruptionError(f"{path}: {len(data) - offset} trailing bytes")

    config = ModelConfig(**header_obj["config"])
    model = DvrModel(config)
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CorruptionError(f"{path}: checkpoint does not match its config: {exc}") from exc
    model.eval()
    return model

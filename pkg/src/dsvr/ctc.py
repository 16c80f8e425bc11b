"""CTC loss, gradient, and decoding over per-frame log-probability lattices.

Everything runs in log space on float64. The loss is the negative log
total probability of all frame paths that collapse (remove repeats,
then blanks) to the target; its gradient with respect to the lattice is
the negative state posterior, computed by forward-backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_ROW_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class LogProbLattice:
    """(T, V) log probabilities, one normalized row per frame."""

    log_probs: np.ndarray
    blank_id: int = 0

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 2:
            raise ValidationError(f"lattice must be 2-D (T, V), got shape {lp.shape}")
        if lp.shape[0] < 1 or lp.shape[1] < 2:
            raise ValidationError(f"lattice needs T >= 1 and V >= 2, got {lp.shape}")
        if not 0 <= self.blank_id < lp.shape[1]:
            raise ValidationError(f"blank_id {self.blank_id} out of range for V={lp.shape[1]}")
        if np.isnan(lp).any() or (lp == np.inf).any():
            raise ValidationError("lattice contains NaN or +Inf")
        with np.errstate(divide="ignore"):
            row_mass = np.logaddexp.reduce(lp, axis=1)
        if not np.all(np.abs(row_mass) <= _ROW_NORM_TOL):
            worst = float(np.max(np.abs(row_mass)))
            raise ValidationError(f"lattice rows are not log-normalized (max |logsum| = {worst:.3g})")
        object.__setattr__(self, "log_probs", lp)

    @property
    def values(self) -> np.ndarray:
        return self.log_probs

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.log_probs.shape[1]


@dataclass(frozen=True, eq=False)
class CtcResult:
    """Loss value plus gradient w.r.t. the lattice log-probabilities.

    For an infeasible target (too few frames) the loss is +inf and the
    gradient is all zeros.
    """

    loss: float
    grad: np.ndarray


def _check_target(target, lattice: LogProbLattice):
    target = [int(v) for v in target]
    for pos, v in enumerate(target):
        if v == lattice.blank_id:
            raise ValidationError(f"target contains blank id at position {pos}")
        if not 0 <= v < lattice.num_symbols:
            raise ValidationError(f"target id {v} at position {pos} out of range")
    return target


def min_frames_needed(target) -> int:
    """Shortest lattice that can emit ``target``: one frame per label
    plus a separating blank between equal neighbors."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def ctc_loss(lattice: LogProbLattice, target) -> CtcResult:
    """Forward-backward CTC loss and gradient for one utterance."""
    target = _check_target(target, lattice)
    lp = lattice.log_probs
    n_frames, n_symbols = lp.shape
    blank = lattice.blank_id

    if min_frames_needed(target) > n_frames:
        return CtcResult(loss=np.inf, grad=np.zeros_like(lp))

    # extended state sequence: blank, t1, blank, t2, ..., tL, blank
    n_states = 2 * len(target) + 1
    labels = np.full(n_states, blank, dtype=np.int64)
    labels[1::2] = target
    # a state may arrive from two back when it is a non-blank different
    # from the non-blank two states earlier
    can_skip = np.zeros(n_states, dtype=bool)
    can_skip[2:] = (labels[2:] != blank) & (labels[2:] != labels[:-2])

    neg = -np.inf
    alpha = np.full((n_frames, n_states), neg)
    alpha[0, 0] = lp[0, blank]
    if n_states > 1:
        alpha[0, 1] = lp[0, labels[1]]
    with np.errstate(invalid="ignore"):
        for t in range(1, n_frames):
            prev = alpha[t - 1]
            acc = prev.copy()
            acc[1:] = np.logaddexp(acc[1:], prev[:-1])
            skip = np.where(can_skip[2:], prev[:-2], neg)
            acc[2:] = np.logaddexp(acc[2:], skip)
            alpha[t] = acc + lp[t, labels]

        if n_states > 1:
            log_total = np.logaddexp(alpha[-1, -1], alpha[-1, -2])
        else:
            log_total = alpha[-1, -1]
        if not np.isfinite(log_total):
            return CtcResult(loss=np.inf, grad=np.zeros_like(lp))

        beta = np.full((n_frames, n_states), neg)
        beta[-1, -1] = 0.0
        if n_states > 1:
            beta[-1, -2] = 0.0
        for t in range(n_frames - 2, -1, -1):
            nxt = beta[t + 1] + lp[t + 1, labels]
            acc = nxt.copy()
            acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
            skip = np.where(can_skip[2:], nxt[2:], neg)
            acc[:-2] = np.logaddexp(acc[:-2], skip)
            beta[t] = acc

        # posterior over states, folded onto symbols
        gamma = alpha + beta - log_total
        posterior = np.zeros_like(lp)
        for s in range(n_states):
            posterior[:, labels[s]] += np.exp(gamma[:, s])

    return CtcResult(loss=float(-log_total), grad=-posterior)


def collapse(ids, blank_id: int = 0):
    """Collapse a frame-level id path: merge repeats, then drop blanks."""
    out = []
    prev = None
    for v in ids:
        v = int(v)
        if v != prev and v != blank_id:
            out.append(v)
        prev = v
    return out


def _check_vocab(lattice: LogProbLattice, vocab):
    if vocab is None:
        return
    if len(vocab) != lattice.num_symbols:
        raise ValidationError(
            f"vocabulary size {len(vocab)} != lattice symbol count {lattice.num_symbols}"
        )
    if vocab.blank_id != lattice.blank_id:
        raise ValidationError(
            f"vocabulary blank id {vocab.blank_id} != lattice blank id {lattice.blank_id}"
        )


def ctc_greedy_decode(lattice: LogProbLattice, vocab=None):
    """Best symbol per frame, collapsed. Ties go to the smallest id."""
    _check_vocab(lattice, vocab)
    path = np.argmax(lattice.log_probs, axis=1)
    return collapse(path, lattice.blank_id)


def ctc_beam_decode(lattice: LogProbLattice, vocab=None, beam_width: int = 16):
    """Prefix beam search over collapsed output strings.

    Keeps per-prefix probabilities split into blank-ending and
    non-blank-ending mass so repeats merge correctly. With a beam wide
    enough to hold every live prefix the result is the exact most
    probable collapsed string.
    """
    _check_vocab(lattice, vocab)
    if beam_width < 1:
        raise ValidationError(f"beam width must be >= 1, got {beam_width}")
    lp = lattice.log_probs
    blank = lattice.blank_id
    neg = -np.inf

    def rank(item):
        prefix, (p_b, p_nb) = item
        return (-np.logaddexp(p_b, p_nb), len(prefix), prefix)

    beams = {(): (0.0, neg)}
    for t in range(lp.shape[0]):
        row = lp[t]
        new = {}

        def bump(prefix, d_b=neg, d_nb=neg):
            p_b, p_nb = new.get(prefix, (neg, neg))
            new[prefix] = (np.logaddexp(p_b, d_b), np.logaddexp(p_nb, d_nb))

        for prefix, (p_b, p_nb) in beams.items():
            total = np.logaddexp(p_b, p_nb)
            bump(prefix, d_b=total + row[blank])
            if prefix:
                # same symbol again without a blank extends the last run
                bump(prefix, d_nb=p_nb + row[prefix[-1]])
            for v in range(lp.shape[1]):
                if v == blank:
                    continue
                if prefix and v == prefix[-1]:
                    bump(prefix + (v,), d_nb=p_b + row[v])
                else:
                    bump(prefix + (v,), d_nb=total + row[v])
        beams = dict(sorted(new.items(), key=rank)[:beam_width])

    best = min(beams.items(), key=rank)
    return list(best[0])

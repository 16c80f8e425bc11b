"""Shared test utilities, including independent oracles."""

import itertools

import numpy as np

from dsvr.ctc import collapse


def brute_force_ctc_prob(probs, target, blank_id=0) -> float:
    """Total probability of the target by enumerating every path.

    Independent of the lattice recursion: walks all V^T frame-label
    paths, collapses each, and sums the product of per-frame
    probabilities for the ones that match.
    """
    T, V = probs.shape
    target = list(target)
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if collapse(path, blank_id) == target:
            p = 1.0
            for t, v in enumerate(path):
                p *= probs[t, v]
            total += p
    return total


def random_lattice_probs(rng, max_t=6, max_v=4):
    """Random row-stochastic probability matrix (linear domain)."""
    T = int(rng.integers(1, max_t + 1))
    V = int(rng.integers(2, max_v + 1))
    return rng.dirichlet(np.ones(V), size=T)


def exhaustive_best_collapsed(probs, blank_id=0):
    """Argmax over collapsed label sequences by full path enumeration."""
    T, V = probs.shape
    scores = {}
    for path in itertools.product(range(V), repeat=T):
        p = 1.0
        for t, v in enumerate(path):
            p *= probs[t, v]
        key = tuple(collapse(path, blank_id))
        scores[key] = scores.get(key, 0.0) + p
    return max(scores.items(), key=lambda kv: (kv[1], kv[0]))

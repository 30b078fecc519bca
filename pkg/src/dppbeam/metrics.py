"""Reference-free diversity metrics and benchmark summary statistics."""

from __future__ import annotations

from collections import Counter

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError
from .kernel import EmbeddingSet


def _ngrams(seq, n: int) -> list[tuple]:
    return [tuple(seq[i : i + n]) for i in range(len(seq) - n + 1)]


def _check_lengths(sequences, n: int) -> None:
    if not sequences:
        raise InvalidInputError("sequence set must be non-empty")
    for i, seq in enumerate(sequences):
        if len(seq) < n:
            raise InvalidInputError(f"sequence {i} has length {len(seq)} < n={n}")


def distinct_n(sequences, n: int) -> float:
    """Unique n-grams across the whole set divided by total n-gram count."""
    _check_lengths(sequences, n)
    seen: set[tuple] = set()
    total = 0
    for seq in sequences:
        grams = _ngrams(seq, n)
        total += len(grams)
        seen.update(grams)
    return len(seen) / total


def ead(sequences, n: int, vocab_size: int) -> float:
    """Expectation-adjusted distinct: unique n-gram count over its expectation
    under uniform random generation, V^n * (1 - ((V^n - 1)/V^n)^C)."""
    if vocab_size < 1:
        raise InvalidInputError("vocab_size must be positive")
    _check_lengths(sequences, n)
    seen: set[tuple] = set()
    total = 0
    for seq in sequences:
        grams = _ngrams(seq, n)
        total += len(grams)
        seen.update(grams)
    v_n = float(vocab_size) ** n
    expected = -v_n * np.expm1(total * np.log1p(-1.0 / v_n))
    return len(seen) / expected


def _bleu_against(hyp, references, max_n: int) -> float:
    # Multi-reference BLEU with uniform weights over orders 1..max_n,
    # add-one smoothing when an order has zero matches, and a brevity
    # penalty against the closest reference length (ties toward shorter).
    log_p_sum = 0.0
    for n in range(1, max_n + 1):
        counts = Counter(_ngrams(hyp, n))
        clip: Counter = Counter()
        for ref in references:
            ref_counts = Counter(_ngrams(ref, n))
            for gram, c in ref_counts.items():
                if c > clip[gram]:
                    clip[gram] = c
        matched = sum(min(c, clip[gram]) for gram, c in counts.items())
        total = sum(counts.values())
        if matched == 0:
            p = (matched + 1.0) / (total + 1.0)
        else:
            p = matched / total
        log_p_sum += np.log(p)
    c_len = len(hyp)
    r_len = min((len(r) for r in references), key=lambda rl: (abs(rl - c_len), rl))
    bp = 1.0 if c_len >= r_len else np.exp(1.0 - r_len / c_len)
    return float(bp * np.exp(log_p_sum / max_n))


def self_bleu(sequences, max_n: int) -> float:
    """Average BLEU of each sequence against the rest, on a 0-100 scale.

    High values mean the set is internally repetitive; perfectly identical
    sequences score 100.
    """
    if len(sequences) < 2:
        raise InvalidInputError("self-BLEU needs at least 2 sequences")
    _check_lengths(sequences, max_n)
    scores = []
    for i, hyp in enumerate(sequences):
        refs = [sequences[j] for j in range(len(sequences)) if j != i]
        scores.append(_bleu_against(hyp, refs, max_n))
    return 100.0 * float(np.mean(scores))


def avg_pairwise_cosine(embeddings: EmbeddingSet) -> float:
    """Mean cosine similarity over all unordered distinct row pairs."""
    unit = embeddings.normalize()
    n = unit.count
    if n < 2:
        raise InvalidInputError("need at least 2 embeddings")
    gram = unit.rows @ unit.rows.T
    iu = np.triu_indices(n, k=1)
    return float(np.mean(gram[iu]))


def spearman(x, y) -> float:
    """Rank correlation with average ranks on ties."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape or xv.ndim != 1 or xv.size < 3:
        raise InvalidInputError("spearman needs two equal-length vectors of size >= 3")
    rx = rankdata(xv)
    ry = rankdata(yv)
    sx = rx.std()
    sy = ry.std()
    if sx < 1e-12 or sy < 1e-12:
        raise InvalidInputError("correlation undefined for constant input")
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def benchmark_stats(values) -> tuple[np.ndarray, np.ndarray]:
    """Per-method normalized value and average rank over trials.

    ``values`` is a (methods, trials) matrix of objective values (higher is
    better). Each trial column is z-scored across methods with the
    population standard deviation (all zeros when the column is constant);
    ranks use 1 = best with ties averaged. Returns (mean z-score per
    method, mean rank per method).
    """
    mat = np.asarray(values, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 2 or mat.shape[1] < 1:
        raise InvalidInputError("values must be a (methods >= 2, trials >= 1) matrix")
    mean = mat.mean(axis=0, keepdims=True)
    std = mat.std(axis=0, keepdims=True)
    z = np.where(std < 1e-12, 0.0, (mat - mean) / np.where(std < 1e-12, 1.0, std))
    ranks = np.apply_along_axis(lambda col: rankdata(-col), 0, mat)
    return z.mean(axis=1), ranks.mean(axis=1)

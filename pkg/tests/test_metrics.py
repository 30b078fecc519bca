import numpy as np
import pytest

from dppbeam import (
    EmbeddingSet,
    InvalidInputError,
    avg_pairwise_cosine,
    benchmark_stats,
    distinct_n,
    ead,
    self_bleu,
    spearman,
)


def test_distinct_n_duplication_halves():
    seqs = [(1, 2, 3, 4), (1, 2, 3, 4)]
    assert distinct_n(seqs, 2) == pytest.approx(0.5)


def test_distinct_n_all_unique():
    seqs = [(1, 2, 3), (4, 5, 6)]
    assert distinct_n(seqs, 2) == 1.0


def test_distinct_n_hand_case():
    seqs = [(1, 2, 3), (1, 2, 4)]
    assert distinct_n(seqs, 2) == pytest.approx(0.75)


def test_distinct_n_short_sequence_error():
    with pytest.raises(InvalidInputError):
        distinct_n([(1,), (1, 2)], 2)
    with pytest.raises(InvalidInputError):
        distinct_n([], 1)


def test_distinct_n_permutation_invariant():
    a = [(1, 2, 3), (4, 5, 6), (1, 2, 4)]
    b = [a[2], a[0], a[1]]
    assert distinct_n(a, 2) == distinct_n(b, 2)
    assert ead(a, 2, 8) == ead(b, 2, 8)


def test_ead_single_ngram():
    assert ead([(5,)], 1, 10) == pytest.approx(1.0)


def test_ead_all_identical_closed_form():
    # 100 identical unigrams over V=2: expectation 2*(1 - 0.5^100) ~ 2
    seqs = [tuple([1] * 100)]
    assert ead(seqs, 1, 2) == pytest.approx(0.5, rel=1e-6)


def test_ead_uniform_random_calibration():
    rng = np.random.default_rng(8)
    vals = []
    for _ in range(100):
        tokens = rng.integers(0, 4, size=100_000)
        vals.append(ead([tuple(tokens)], 1, 4))
    assert 0.95 <= float(np.mean(vals)) <= 1.05


def test_self_bleu_identical_is_100():
    seqs = [(1, 2, 3, 4, 5)] * 3
    assert self_bleu(seqs, 2) == pytest.approx(100.0)


def test_self_bleu_disjoint_vocab_near_zero():
    a = tuple(range(0, 25))
    b = tuple(range(100, 125))
    assert self_bleu([a, b], 1) < 5.0


def test_self_bleu_hand_case():
    # unigram precision 2/4, bigram precision 1/3, no brevity penalty
    seqs = [(1, 2, 3, 4), (1, 2, 5, 6)]
    want = 100.0 * np.exp(0.5 * (np.log(0.5) + np.log(1.0 / 3.0)))
    assert self_bleu(seqs, 2) == pytest.approx(want, rel=1e-9)


def test_self_bleu_needs_two_sequences():
    with pytest.raises(InvalidInputError):
        self_bleu([(1, 2, 3)], 2)


def test_self_bleu_relabel_invariant():
    seqs = [(1, 2, 3, 1), (2, 3, 1, 1), (3, 3, 2, 1)]
    relabeled = [tuple({1: 7, 2: 5, 3: 9}[t] for t in s) for s in seqs]
    assert self_bleu(seqs, 2) == pytest.approx(self_bleu(relabeled, 2), rel=1e-12)


def test_avg_pairwise_cosine_cases():
    assert avg_pairwise_cosine(EmbeddingSet(np.array([[1.0, 2.0]] * 3))) == pytest.approx(1.0)
    assert avg_pairwise_cosine(EmbeddingSet(np.eye(2))) == pytest.approx(0.0)
    # three unit vectors with pairwise 60 degree angles via Cholesky of the Gram
    gram = 0.5 * np.ones((3, 3)) + 0.5 * np.eye(3)
    rows = np.linalg.cholesky(gram)
    assert avg_pairwise_cosine(EmbeddingSet(rows)) == pytest.approx(0.5, rel=1e-12)


def test_avg_pairwise_cosine_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        e = EmbeddingSet(rng.standard_normal((5, 4)))
        val = avg_pairwise_cosine(e)
        assert -1.0 <= val <= 1.0
    with pytest.raises(InvalidInputError):
        avg_pairwise_cosine(EmbeddingSet(np.ones((1, 3))))


def test_spearman_cases():
    x = [1.0, 2.0, 3.0, 4.0]
    assert spearman(x, x) == pytest.approx(1.0)
    assert spearman(x, [-v for v in x]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(InvalidInputError):
        spearman([1, 2], [1, 2])


def test_spearman_monotone_transform_invariant():
    rng = np.random.default_rng(4)
    x = rng.normal(size=50)
    y = np.exp(x) + 5.0
    assert spearman(x, y) == pytest.approx(1.0)


def test_benchmark_stats_tie():
    values = np.array([[2.0, 3.0], [2.0, 3.0]])
    norm, rank = benchmark_stats(values)
    assert np.allclose(norm, 0.0)
    assert np.allclose(rank, [1.5, 1.5])


def test_benchmark_stats_consistent_order():
    values = np.array([[3.0, 5.0], [1.0, 2.0]])
    norm, rank = benchmark_stats(values)
    assert np.allclose(rank, [1.0, 2.0])
    assert norm[0] > 0 > norm[1]


def test_benchmark_stats_single_trial_zscores():
    norm, rank = benchmark_stats(np.array([[1.0], [2.0], [3.0]]))
    want = np.array([-1.0, 0.0, 1.0]) / np.std([1.0, 2.0, 3.0]) * np.std([1.0, 2.0, 3.0])
    assert np.allclose(norm, [-1.22474487, 0.0, 1.22474487])
    assert np.allclose(rank, [3.0, 2.0, 1.0])


def test_benchmark_stats_zscores_sum_zero():
    rng = np.random.default_rng(5)
    values = rng.normal(size=(4, 30))
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    z = (values - mean) / std
    assert np.max(np.abs(z.sum(axis=0))) <= 1e-10
    norm, _ = benchmark_stats(values)
    assert norm.sum() == pytest.approx(0.0, abs=1e-10)


def test_benchmark_stats_validation():
    with pytest.raises(InvalidInputError):
        benchmark_stats(np.ones((1, 5)))

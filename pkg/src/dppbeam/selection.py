"""Subset selectors over an L-ensemble.

The workhorse is a greedy log-determinant maximizer with an incremental
Cholesky-style orthogonalization: after selecting item j, every remaining
candidate i is updated with

    e_i = (L_ji - <c_j, c_i>) / sqrt(d_j^2),   c_i <- [c_i, e_i],
    d_i^2 <- d_i^2 - e_i^2,

so d_i^2 is always the marginal determinant gain of adding i. Under the
transversal constraint, candidates from already-used groups are excluded
from the argmax. The multi-init variant runs one forced-start trajectory
per initializer and keeps the trajectory with the largest accumulated
log-determinant.

Also here: an exhaustive oracle, transversal MMR (diverse beam search
baseline), per-group argmax, uniform random transversals, and exact k-DPP
sampling by eigendecomposition.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, RankDeficiencyError, SearchSpaceError
from .kernel import LEnsemble, Partition
from .matrix_core import SymMatrix

# Candidates whose marginal gain falls at or below this are skipped.
MARGINAL_FLOOR = 1e-12

# Exhaustive search refuses spaces larger than this many subsets.
BRUTE_FORCE_CAP = 10_000_000


@dataclass
class SelectionResult:
    """Outcome of one selector call."""

    indices: list[int]
    log_det: float
    marginal_gains: list[float]
    elapsed: float
    method: str

    def sorted_indices(self) -> list[int]:
        return sorted(self.indices)


def _kernel_matrix(ensemble) -> np.ndarray:
    if isinstance(ensemble, LEnsemble):
        return ensemble.matrix
    if isinstance(ensemble, SymMatrix):
        return ensemble.entries
    return np.asarray(ensemble, dtype=np.float64)


class GreedyState:
    """Orthogonalization state of a single greedy trajectory.

    Exposed so the marginal-gain bookkeeping (d^2 monotonicity, group
    elimination) can be driven and inspected step by step.
    """

    def __init__(self, ensemble: LEnsemble, k: int, constrained: bool = True):
        self.matrix = ensemble.matrix
        self.partition = ensemble.partition
        self.constrained = constrained
        n = self.matrix.shape[0]
        if constrained:
            if k > self.partition.num_groups:
                raise InvalidInputError(
                    f"k={k} exceeds the {self.partition.num_groups} available groups"
                )
        elif k > n:
            raise InvalidInputError(f"k={k} exceeds the {n} available candidates")
        self.k = k
        self.d2 = np.maximum(self.matrix.diagonal().copy(), 0.0)
        self.history = np.zeros((max(k - 1, 0), n))
        self.selected: list[int] = []
        self.gains: list[float] = []
        self.eliminated_groups: set[int] = set()
        self._group_of = self.partition.group_index()

    def valid_mask(self) -> np.ndarray:
        """Candidates still selectable (group free / unselected, gain above floor)."""
        mask = self.d2 > MARGINAL_FLOOR
        if self.constrained:
            for g in self.eliminated_groups:
                mask[self.partition.group_members(g)] = False
        else:
            mask[self.selected] = False
        return mask

    def best_candidate(self) -> int:
        mask = self.valid_mask()
        if not mask.any():
            raise RankDeficiencyError(selected=len(self.selected), requested=self.k)
        cand = np.where(mask, self.d2, -np.inf)
        return int(np.argmax(cand))

    def select(self, j: int) -> None:
        """Record item j; its marginal gain must still be above the floor."""
        if self.d2[j] <= MARGINAL_FLOOR:
            raise RankDeficiencyError(selected=len(self.selected), requested=self.k)
        self.selected.append(int(j))
        self.gains.append(float(np.log(self.d2[j])))
        if self.constrained:
            self.eliminated_groups.add(int(self._group_of[j]))

    def orthogonalize(self) -> None:
        """Update every candidate's history and marginal against the last pick."""
        j = self.selected[-1]
        r = len(self.selected) - 1
        dot = self.history[:r, j] @ self.history[:r, :] if r else 0.0
        e = (self.matrix[j, :] - dot) / math.sqrt(self.d2[j])
        self.history[r, :] = e
        self.d2 = np.maximum(self.d2 - e * e, 0.0)


def _greedy_batch(matrix, partition, k, starts, constrained):
    """Run one greedy trajectory per start (vectorized across trajectories).

    ``starts=None`` runs a single unforced trajectory. Returns
    (chosen, gains, alive): trajectories that ran out of usable candidates
    are reported dead rather than raising, unless every trajectory dies.
    """
    n = matrix.shape[0]
    group_of = partition.group_index()
    diag = np.maximum(matrix.diagonal(), 0.0)

    if starts is None:
        batch = 1
        start_arr = None
    else:
        start_arr = np.asarray(starts, dtype=np.intp)
        batch = start_arr.shape[0]
    rows = np.arange(batch)

    d2 = np.tile(diag, (batch, 1))
    hist = np.zeros((batch, max(k - 1, 0), n))
    chosen = np.zeros((batch, k), dtype=np.intp)
    gains = np.zeros((batch, k))
    alive = np.ones(batch, dtype=bool)
    used_groups = np.zeros((batch, partition.num_groups), dtype=bool)
    used_items = np.zeros((batch, n), dtype=bool)

    if start_arr is None:
        cand = np.where(d2 > MARGINAL_FLOOR, d2, -np.inf)
        j = np.argmax(cand, axis=1)
        alive &= np.isfinite(cand[rows, j])
    else:
        j = start_arr.copy()
        alive &= d2[rows, j] > MARGINAL_FLOOR
    if not alive.any():
        raise RankDeficiencyError(selected=0, requested=k)
    chosen[:, 0] = j
    gains[alive, 0] = np.log(d2[alive, j[alive]])
    used_items[rows, j] = True
    used_groups[rows, group_of[j]] = True

    for step in range(1, k):
        r = step - 1
        dj = np.where(alive & (d2[rows, j] > 0), d2[rows, j], 1.0)
        if r:
            cj = hist[rows[:, None], np.arange(r)[None, :], j[:, None]]
            dot = np.einsum("br,brn->bn", cj, hist[:, :r, :])
        else:
            dot = 0.0
        e = (matrix[j, :] - dot) / np.sqrt(dj)[:, None]
        hist[:, r, :] = e
        d2 = np.maximum(d2 - e * e, 0.0)

        cand = np.where(d2 > MARGINAL_FLOOR, d2, -np.inf)
        if constrained:
            cand[used_groups[:, group_of]] = -np.inf
        else:
            cand[used_items] = -np.inf
        j_new = np.argmax(cand, axis=1)
        alive &= np.isfinite(cand[rows, j_new])
        if not alive.any():
            raise RankDeficiencyError(selected=step, requested=k)
        j = np.where(alive, j_new, j)
        chosen[alive, step] = j[alive]
        gains[alive, step] = np.log(d2[alive, j[alive]])
        used_items[rows, j] = True
        used_groups[rows, group_of[j]] = True

    return chosen, gains, alive


def greedy_map(
    ensemble: LEnsemble,
    k: int,
    constrained: bool = True,
    init: int | None = None,
) -> SelectionResult:
    """Greedy log-det maximization, optionally under the transversal constraint.

    ``init`` forces the first selected item. Ties always break toward the
    smallest index. Raises :class:`RankDeficiencyError` when fewer than k
    candidates carry positive marginal gain.
    """
    matrix = ensemble.matrix
    n = matrix.shape[0]
    limit = ensemble.partition.num_groups if constrained else n
    if not 1 <= k <= limit:
        raise InvalidInputError(
            f"k={k} infeasible ({'groups' if constrained else 'candidates'} available: {limit})"
        )
    if init is not None and not 0 <= init < n:
        raise InvalidInputError(f"init index {init} outside 0..{n - 1}")
    t0 = time.perf_counter()
    starts = None if init is None else [init]
    chosen, gains, _ = _greedy_batch(matrix, ensemble.partition, k, starts, constrained)
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=chosen[0].tolist(),
        log_det=float(np.sum(gains[0])),
        marginal_gains=gains[0].tolist(),
        elapsed=elapsed,
        method="greedy_map",
    )


def greedy_map_multi_init(ensemble: LEnsemble, starts: str = "group_argmax") -> SelectionResult:
    """Constrained greedy from many forced starts; best trajectory wins.

    ``starts`` picks the initializer set: "group_argmax" (default) runs one
    trajectory from the best-diagonal item of each group, which keeps total
    work at O(k^3 n) for the full k-group transversal; "all" runs one
    trajectory from every candidate. The winning trajectory's accumulated
    log-determinant is always >= the unforced single-run greedy's, since the
    unforced first pick is among the starts.
    """
    partition = ensemble.partition
    k = partition.num_groups
    matrix = ensemble.matrix
    t0 = time.perf_counter()
    if starts == "all":
        start_arr = np.arange(ensemble.n)
    elif starts == "group_argmax":
        diag = matrix.diagonal().reshape(k, partition.group_size)
        start_arr = np.argmax(diag, axis=1) + np.arange(k) * partition.group_size
    else:
        raise InvalidInputError(f"starts must be 'group_argmax' or 'all', got {starts!r}")
    chosen, gains, alive = _greedy_batch(matrix, partition, k, start_arr, True)
    totals = np.where(alive, gains.sum(axis=1), -np.inf)
    best = int(np.argmax(totals))
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=chosen[best].tolist(),
        log_det=float(totals[best]),
        marginal_gains=gains[best].tolist(),
        elapsed=elapsed,
        method="greedy_map_multi",
    )


def evaluate_log_det(ensemble, indices) -> float:
    """log det of the principal submatrix indexed by ``indices``.

    The empty set gives 0.0 (determinant of the empty matrix is 1); a
    singular submatrix returns -inf rather than raising.
    """
    matrix = _kernel_matrix(ensemble)
    s = np.asarray(list(indices), dtype=np.intp)
    if s.size == 0:
        return 0.0
    if len(set(s.tolist())) != s.size:
        raise InvalidInputError("indices must be distinct")
    if s.min() < 0 or s.max() >= matrix.shape[0]:
        raise InvalidInputError("index out of range")
    sub = matrix[np.ix_(s, s)]
    sub = (sub + sub.T) / 2.0
    try:
        factor = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        return -np.inf
    piv = factor.diagonal() ** 2
    if np.any(piv <= MARGINAL_FLOOR):
        return -np.inf
    return float(2.0 * np.sum(np.log(factor.diagonal())))


def _transversals(partition: Partition):
    offsets = [g * partition.group_size for g in range(partition.num_groups)]
    for picks in itertools.product(range(partition.group_size), repeat=partition.num_groups):
        yield [offsets[g] + p for g, p in enumerate(picks)]


def brute_force_map(ensemble: LEnsemble, k: int, constrained: bool = True) -> SelectionResult:
    """Exact MAP by exhaustive enumeration; ties break lexicographically.

    Refuses search spaces above BRUTE_FORCE_CAP subsets.
    """
    partition = ensemble.partition
    n = ensemble.n
    if constrained:
        if k != partition.num_groups:
            raise InvalidInputError(
                "constrained brute force enumerates full transversals; "
                f"k={k} != num_groups={partition.num_groups}"
            )
        count = partition.group_size**partition.num_groups
    else:
        if not 1 <= k <= n:
            raise InvalidInputError(f"k={k} infeasible for n={n}")
        count = math.comb(n, k)
    if count > BRUTE_FORCE_CAP:
        raise SearchSpaceError(count=count, cap=BRUTE_FORCE_CAP)

    t0 = time.perf_counter()
    subsets = _transversals(partition) if constrained else itertools.combinations(range(n), k)
    best_val = -np.inf
    best_subset: list[int] | None = None
    for subset in subsets:
        val = evaluate_log_det(ensemble, subset)
        if val > best_val:
            best_val = val
            best_subset = list(subset)
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=best_subset,
        log_det=float(best_val),
        marginal_gains=[],
        elapsed=elapsed,
        method="brute_force",
    )


def topk_per_group(quality, partition: Partition, ensemble: LEnsemble | None = None) -> SelectionResult:
    """Group-wise argmax of the quality score (standard beam search)."""
    q = np.asarray(quality, dtype=np.float64)
    if q.shape != (partition.size,):
        raise InvalidInputError(f"quality has shape {q.shape}, expected ({partition.size},)")
    t0 = time.perf_counter()
    per_group = q.reshape(partition.num_groups, partition.group_size)
    picks = np.argmax(per_group, axis=1) + np.arange(partition.num_groups) * partition.group_size
    indices = picks.tolist()
    ld = evaluate_log_det(ensemble, indices) if ensemble is not None else float("nan")
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=indices,
        log_det=ld,
        marginal_gains=q[picks].tolist(),
        elapsed=elapsed,
        method="topk",
    )


def random_transversal(
    partition: Partition, rng_seed, ensemble: LEnsemble | None = None
) -> SelectionResult:
    """One uniformly random index per group; deterministic per seed."""
    rng = np.random.default_rng(rng_seed)
    t0 = time.perf_counter()
    picks = rng.integers(0, partition.group_size, size=partition.num_groups)
    indices = (picks + np.arange(partition.num_groups) * partition.group_size).tolist()
    ld = evaluate_log_det(ensemble, indices) if ensemble is not None else float("nan")
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=indices,
        log_det=ld,
        marginal_gains=[],
        elapsed=elapsed,
        method="random",
    )


def mmr_select(
    quality,
    similarity: SymMatrix,
    partition: Partition,
    alpha_div: float,
    multi_init: bool = True,
    ensemble: LEnsemble | None = None,
) -> SelectionResult:
    """Transversal maximal-marginal-relevance selection (diverse beam search).

    Each step picks, among candidates from unused groups, the argmax of
    Q_i - alpha_div * max_{j in Y} K_ij. With ``multi_init`` one trajectory
    is run per candidate start and the highest cumulative score wins.
    ``marginal_gains`` holds the per-step MMR scores; ``log_det`` is
    evaluated under ``ensemble`` when given (NaN otherwise) so results stay
    comparable with the determinant-based selectors.
    """
    q = np.asarray(quality, dtype=np.float64)
    n = partition.size
    if q.shape != (n,) or similarity.dim != n:
        raise InvalidInputError(
            f"dimension mismatch: |Q|={q.shape}, K dim={similarity.dim}, partition size={n}"
        )
    if alpha_div < 0:
        raise InvalidInputError("alpha_div must be nonnegative")
    sim = similarity.entries
    group_of = partition.group_index()
    k = partition.num_groups

    t0 = time.perf_counter()
    if multi_init:
        j = np.arange(n)
    else:
        j = np.array([int(np.argmax(q))])
    batch = j.shape[0]
    rows = np.arange(batch)
    w = partition.group_size
    member_cols = np.arange(w)[None, :]
    chosen = np.zeros((batch, k), dtype=np.intp)
    scores = np.zeros((batch, k))
    chosen[:, 0] = j
    scores[:, 0] = q[j]
    # blocked[b, i] = -inf once i's group is used in trajectory b
    blocked = np.zeros((batch, n))
    blocked[rows[:, None], group_of[j][:, None] * w + member_cols] = -np.inf
    maxsim = sim[j, :].copy()
    cand = np.empty((batch, n))
    gathered = np.empty((batch, n))

    for step in range(1, k):
        np.multiply(maxsim, -alpha_div, out=cand)
        cand += q[None, :]
        cand += blocked
        j = np.argmax(cand, axis=1)
        chosen[:, step] = j
        scores[:, step] = cand[rows, j]
        blocked[rows[:, None], group_of[j][:, None] * w + member_cols] = -np.inf
        np.take(sim, j, axis=0, out=gathered)
        np.maximum(maxsim, gathered, out=maxsim)

    totals = scores.sum(axis=1)
    best = int(np.argmax(totals))
    indices = chosen[best].tolist()
    ld = evaluate_log_det(ensemble, indices) if ensemble is not None else float("nan")
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=indices,
        log_det=ld,
        marginal_gains=scores[best].tolist(),
        elapsed=elapsed,
        method="mmr",
    )


class KdppSampler:
    """Exact fixed-size DPP sampler over a PSD kernel.

    Eigendecomposes once; each draw selects k eigenvectors through the
    elementary-symmetric-polynomial recursion, then samples points from the
    induced projection DPP by sequential conditioning. Batched draws reuse
    the decomposition and vectorize both stages.
    """

    def __init__(self, ensemble, k: int, psd_tol: float = 1e-8):
        matrix = _kernel_matrix(ensemble)
        n = matrix.shape[0]
        if not 1 <= k <= n:
            raise InvalidInputError(f"k={k} infeasible for n={n}")
        values, vectors = np.linalg.eigh((matrix + matrix.T) / 2.0)
        scale = max(float(values[-1]), 0.0)
        if values[0] < -psd_tol * max(scale, 1.0):
            raise InvalidInputError(f"kernel is not PSD: min eigenvalue {values[0]:.3e}")
        values = np.maximum(values, 0.0)
        rank_tol = scale * n * np.finfo(np.float64).eps
        rank = int(np.count_nonzero(values > rank_tol))
        if k > rank:
            raise InvalidInputError(f"k={k} exceeds numerical rank {rank}")
        self.n = n
        self.k = k
        self.values = values
        self.vectors = vectors
        # esp[l, m] = elementary symmetric polynomial e_l over the first m eigenvalues
        esp = np.zeros((k + 1, n + 1))
        esp[0, :] = 1.0
        for l in range(1, k + 1):
            for m in range(1, n + 1):
                esp[l, m] = esp[l, m - 1] + values[m - 1] * esp[l - 1, m - 1]
        self.esp = esp

    def _select_eigenvectors(self, count: int, rng) -> np.ndarray:
        """Draw eigenvector index sets for ``count`` samples, vectorized."""
        sel = np.zeros((count, self.k), dtype=np.intp)
        remaining = np.full(count, self.k)
        for m in range(self.n, 0, -1):
            active = remaining > 0
            if not active.any():
                break
            p = np.zeros(count)
            rem = remaining[active]
            denom = self.esp[rem, m]
            num = self.values[m - 1] * self.esp[rem - 1, m - 1]
            p[active] = np.where(denom > 0, num / np.maximum(denom, 1e-300), (num > 0) * 1.0)
            take = (rng.random(count) < p) & active
            remaining[take] -= 1
            sel[take, remaining[take]] = m - 1
        if (remaining > 0).any():  # pragma: no cover - guarded by rank check
            raise RankDeficiencyError(selected=self.k - int(remaining.max()), requested=self.k)
        return sel

    def _sample_projection(self, basis: np.ndarray, row_ids: np.ndarray, rng, out: np.ndarray, col: int):
        """Sample points of the projection DPP with orthonormal ``basis``.

        Fills column ``col`` of ``out`` for the draws in ``row_ids``, then
        recurses per distinct pick so the conditioned bases are shared.
        """
        r = basis.shape[1]
        if r == 0 or row_ids.size == 0:
            return
        p = np.maximum(np.sum(basis * basis, axis=1), 0.0)
        p /= p.sum()
        picks = rng.choice(self.n, size=row_ids.size, p=p)
        out[row_ids, col] = picks
        if r == 1:
            return
        for i in np.unique(picks):
            sub_rows = row_ids[picks == i]
            c = int(np.argmax(np.abs(basis[i, :])))
            keep = np.delete(np.arange(r), c)
            reduced = basis[:, keep] - np.outer(basis[:, c] / basis[i, c], basis[i, keep])
            reduced[i, :] = 0.0
            q, _ = np.linalg.qr(reduced)
            self._sample_projection(q, sub_rows, rng, out, col + 1)

    def sample_many(self, count: int, rng) -> np.ndarray:
        """Draw ``count`` subsets; rows are index sets of size k."""
        sel = self._select_eigenvectors(count, rng)
        out = np.zeros((count, self.k), dtype=np.intp)
        unique, inverse = np.unique(sel, axis=0, return_inverse=True)
        for u in range(unique.shape[0]):
            rows = np.nonzero(inverse == u)[0]
            basis = self.vectors[:, unique[u]]
            self._sample_projection(basis, rows, rng, out, 0)
        return out

    def sample(self, rng) -> list[int]:
        return self.sample_many(1, rng)[0].tolist()


def kdpp_sample(ensemble: LEnsemble, k: int, rng_seed) -> SelectionResult:
    """One exact k-DPP draw: P(S) proportional to det(L_S) over |S| = k.

    Ignores the partition (exact transversal-constrained sampling is not
    available); diversity enters only through the kernel.
    """
    sampler = KdppSampler(ensemble, k)
    rng = np.random.default_rng(rng_seed)
    t0 = time.perf_counter()
    indices = sampler.sample(rng)
    ld = evaluate_log_det(ensemble, indices)
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        indices=indices,
        log_det=ld,
        marginal_gains=[],
        elapsed=elapsed,
        method="kdpp",
    )

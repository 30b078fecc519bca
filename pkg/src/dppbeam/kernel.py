"""Quality vectors, similarity matrices, and L-ensemble kernel construction.

A kernel couples a per-candidate quality score Q with a pairwise similarity
matrix K, either additively,

    L = diag(Q) + beta * K          (requires Q >= 0)

or multiplicatively,

    L_ij = exp(Q_i / beta) * K_ij * exp(Q_j / beta).

``beta`` trades quality against diversity: beta -> 0 recovers pure
quality argmax selection, large beta is dominated by repulsion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError
from .matrix_core import SymMatrix

# Quality scores are lifted to this floor after the nonnegativity shift.
QUALITY_SHIFT_EPS = 1e-6


@dataclass(frozen=True)
class Partition:
    """k contiguous groups of w candidates; group(i) = i // w."""

    num_groups: int
    group_size: int

    def __post_init__(self):
        if self.num_groups < 1 or self.group_size < 1:
            raise InvalidInputError("partition needs num_groups >= 1 and group_size >= 1")

    @property
    def size(self) -> int:
        return self.num_groups * self.group_size

    def group_of(self, index: int) -> int:
        if not 0 <= index < self.size:
            raise InvalidInputError(f"index {index} outside 0..{self.size - 1}")
        return index // self.group_size

    def group_members(self, group: int) -> range:
        if not 0 <= group < self.num_groups:
            raise InvalidInputError(f"group {group} outside 0..{self.num_groups - 1}")
        return range(group * self.group_size, (group + 1) * self.group_size)

    def group_index(self) -> np.ndarray:
        """Vector mapping candidate index -> group id."""
        return np.arange(self.size) // self.group_size


@dataclass(frozen=True)
class EmbeddingSet:
    """n stacked d-dimensional candidate embeddings.

    ``normalized`` asserts unit Euclidean row norms (checked to 1e-9).
    """

    rows: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise InvalidInputError(f"embeddings must be 2-D, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvalidInputError("embeddings must be finite")
        object.__setattr__(self, "rows", rows)
        if self.normalized:
            norms = np.linalg.norm(rows, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                bad = int(np.argmax(np.abs(norms - 1.0)))
                raise InvalidInputError(
                    f"row {bad} has norm {norms[bad]:.12f}, expected 1 within 1e-9"
                )

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    def normalize(self) -> "EmbeddingSet":
        """Row-normalized copy; raises naming the first zero row."""
        if self.normalized:
            return self
        norms = np.linalg.norm(self.rows, axis=1)
        zero = np.nonzero(norms <= 0.0)[0]
        if zero.size:
            raise InvalidInputError(f"embedding row {int(zero[0])} has zero norm")
        return EmbeddingSet(self.rows / norms[:, None], normalized=True)


@dataclass(frozen=True)
class LEnsemble:
    """PSD kernel with the partition structure every selector consumes."""

    kernel: SymMatrix
    partition: Partition
    variant: str
    beta: float

    def __post_init__(self):
        if self.variant not in ("additive", "multiplicative"):
            raise InvalidInputError(f"unknown kernel variant {self.variant!r}")
        if self.beta < 0:
            raise InvalidInputError("beta must be nonnegative")
        if self.kernel.dim != self.partition.size:
            raise InvalidInputError(
                f"kernel dim {self.kernel.dim} != partition size {self.partition.size}"
            )

    @property
    def n(self) -> int:
        return self.kernel.dim

    @property
    def matrix(self) -> np.ndarray:
        return self.kernel.entries

    def scaled(self, c: float) -> "LEnsemble":
        """Kernel multiplied by a positive scalar (same partition/tags)."""
        if c <= 0:
            raise InvalidInputError("scale must be positive")
        return LEnsemble(SymMatrix(self.matrix * c), self.partition, self.variant, self.beta)


def cosine_similarity(embeddings: EmbeddingSet) -> SymMatrix:
    """Gram matrix of row-normalized embeddings: unit diagonal, PSD."""
    unit = embeddings.normalize()
    gram = unit.rows @ unit.rows.T
    sym = gram + gram.T  # exact symmetry regardless of BLAS blocking
    sym *= 0.5
    return SymMatrix.trusted(sym)


def rbf_similarity(embeddings: EmbeddingSet, gamma: float) -> SymMatrix:
    """K_ij = exp(-gamma * ||e_i - e_j||^2); unit diagonal, entries in (0, 1]."""
    if not gamma > 0:
        raise InvalidInputError(f"gamma must be positive, got {gamma}")
    rows = embeddings.rows
    sq = np.sum(rows * rows, axis=1)
    gram = rows @ rows.T
    d2 = sq[:, None] + sq[None, :] - (gram + gram.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return SymMatrix.trusted(np.exp(-gamma * d2))


def median_heuristic_gamma(embeddings: EmbeddingSet) -> float:
    """1 / median squared pairwise distance; a common default for RBF width."""
    rows = embeddings.rows
    sq = np.sum(rows * rows, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (rows @ rows.T)
    iu = np.triu_indices(rows.shape[0], k=1)
    med = float(np.median(np.maximum(d2[iu], 0.0)))
    if med <= 0:
        raise InvalidInputError("median pairwise distance is zero; cannot set gamma")
    return 1.0 / med


def _check_dims(quality: np.ndarray, similarity: SymMatrix, partition: Partition) -> np.ndarray:
    q = np.asarray(quality, dtype=np.float64)
    if q.ndim != 1:
        raise InvalidInputError("quality must be a 1-D vector")
    if not np.all(np.isfinite(q)):
        raise InvalidInputError("quality scores must be finite")
    if q.shape[0] != partition.size or similarity.dim != partition.size:
        raise InvalidInputError(
            f"dimension mismatch: |Q|={q.shape[0]}, K dim={similarity.dim}, "
            f"partition size={partition.size}"
        )
    return q


def additive_kernel(
    quality, similarity: SymMatrix, beta: float, partition: Partition
) -> LEnsemble:
    """L = diag(Q) + beta * K. Q must be nonnegative (shift it first if not)."""
    q = _check_dims(quality, similarity, partition)
    if beta < 0:
        raise InvalidInputError("beta must be nonnegative")
    if np.any(q < 0):
        bad = int(np.argmin(q))
        raise InvalidInputError(
            f"additive kernel requires nonnegative quality; entry {bad} is {q[bad]:.3e}"
        )
    mat = beta * similarity.entries
    mat[np.diag_indices_from(mat)] += q
    return LEnsemble(SymMatrix.trusted(mat), partition, "additive", float(beta))


def multiplicative_kernel(
    quality, similarity: SymMatrix, beta: float, partition: Partition
) -> LEnsemble:
    """L_ij = exp(Q_i/beta) K_ij exp(Q_j/beta); PSD by diagonal congruence."""
    q = _check_dims(quality, similarity, partition)
    if not beta > 0:
        raise InvalidInputError("multiplicative kernel requires beta > 0")
    expo = q / beta
    if np.any(expo > 700.0):
        raise InvalidInputError(
            "quality / beta exceeds 700 and would overflow exp(); rescale the scores"
        )
    g = np.exp(expo)
    return LEnsemble(
        SymMatrix.trusted(similarity.entries * np.outer(g, g)),
        partition,
        "multiplicative",
        float(beta),
    )


def shift_nonnegative(quality) -> np.ndarray:
    """Shift scores so min(Q) becomes QUALITY_SHIFT_EPS; preserves ranking."""
    q = np.asarray(quality, dtype=np.float64)
    return q - np.min(q) + QUALITY_SHIFT_EPS


_SYNTHETIC_FIELDS = (
    "k",
    "w",
    "embed_dim",
    "beta",
    "quality_mean",
    "quality_std",
    "embed_mean",
    "embed_scale",
    "seed",
    "variant",
)


@dataclass(frozen=True)
class SyntheticKernelConfig:
    """Parameters for the Gaussian synthetic benchmark kernel generator."""

    k: int
    w: int
    embed_dim: int = 64
    beta: float = 1.0
    quality_mean: float = 0.0
    quality_std: float = 1.0
    embed_mean: float | list[float] = 0.0
    embed_scale: float = 1.0
    seed: int = 0
    variant: str = "additive"

    def __post_init__(self):
        if self.k < 1 or self.w < 1 or self.k * self.w < 2:
            raise ConfigError("need k, w >= 1 and k*w >= 2")
        if self.embed_dim < 1:
            raise ConfigError("embed_dim must be positive")
        if self.quality_std < 0 or self.embed_scale < 0:
            raise ConfigError("stddevs must be nonnegative")
        if self.variant not in ("additive", "multiplicative"):
            raise ConfigError(f"variant must be additive|multiplicative, got {self.variant!r}")
        if self.variant == "multiplicative" and self.beta <= 0:
            raise ConfigError("multiplicative variant needs beta > 0")
        mean = self.embed_mean
        if isinstance(mean, (list, tuple)):
            if len(mean) != self.embed_dim:
                raise ConfigError(
                    f"embed_mean has length {len(mean)}, expected embed_dim={self.embed_dim}"
                )

    @classmethod
    def from_json(cls, text: str) -> "SyntheticKernelConfig":
        """Strict JSON loader; unknown fields are an error."""
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - set(_SYNTHETIC_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = {"k", "w"} - set(doc)
        if missing:
            raise ConfigError(f"missing required config fields: {sorted(missing)}")
        return cls(**doc)


def generate_synthetic(cfg: SyntheticKernelConfig):
    """Draw (quality, embeddings, kernel) for one benchmark instance.

    Quality ~ N(mean, std^2) then shifted nonnegative; embeddings
    ~ mean + scale * N(0, I_d) then row-normalized; the kernel is built
    from cosine similarity per the configured variant. Deterministic for
    a fixed seed.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.k * cfg.w
    quality = shift_nonnegative(
        rng.normal(cfg.quality_mean, cfg.quality_std, size=n)
    )
    mean = np.asarray(cfg.embed_mean, dtype=np.float64)
    raw = mean + cfg.embed_scale * rng.standard_normal((n, cfg.embed_dim))
    embeddings = EmbeddingSet(raw).normalize()
    similarity = cosine_similarity(embeddings)
    partition = Partition(cfg.k, cfg.w)
    if cfg.variant == "additive":
        ensemble = additive_kernel(quality, similarity, cfg.beta, partition)
    else:
        ensemble = multiplicative_kernel(quality, similarity, cfg.beta, partition)
    return quality, embeddings, ensemble

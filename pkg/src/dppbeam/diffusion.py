"""Desk-scale masked discrete diffusion decoding.

A first-order Markov chain with exact forward-backward posteriors stands in
for the denoising network: given a partially masked sequence it returns the
exact marginal distribution of every hidden token. On top of that sit the
two re-masking projection operators (budgeted re-masking and independent
carry-over), the entropy / self-certainty sequence scorers, and the
branch-score-select beam decode loop that the kernel and selection modules
plug into.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError
from .kernel import (
    EmbeddingSet,
    Partition,
    additive_kernel,
    cosine_similarity,
    multiplicative_kernel,
    rbf_similarity,
    shift_nonnegative,
)
from .selection import (
    evaluate_log_det,
    greedy_map_multi_init,
    mmr_select,
    random_transversal,
    topk_per_group,
)

PROJECTORS = ("llada_uniform", "llada_low_confidence", "mdlm")
SCORERS = ("entropy", "self_certainty")
SELECTORS = ("d5p4", "topk", "mmr", "random")


@dataclass(frozen=True)
class Vocab:
    """Token ids 0..size-1 plus the reserved mask id ``size``."""

    size: int

    def __post_init__(self):
        if self.size < 2:
            raise InvalidInputError("vocabulary needs at least 2 regular tokens")

    @property
    def mask_id(self) -> int:
        return self.size


@dataclass(frozen=True)
class LatentState:
    """Partially masked token sequence at diffusion time t."""

    tokens: np.ndarray
    t: float

    def __post_init__(self):
        tokens = np.asarray(self.tokens, dtype=np.int64)
        object.__setattr__(self, "tokens", tokens)
        if not 0.0 <= self.t <= 1.0:
            raise InvalidInputError(f"time {self.t} outside [0, 1]")

    def masked(self, vocab: Vocab) -> np.ndarray:
        return self.tokens == vocab.mask_id

    def mask_count(self, vocab: Vocab) -> int:
        return int(np.sum(self.masked(vocab)))


@dataclass(frozen=True)
class Schedule:
    """Strictly decreasing timestep grid from 1 to 0."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        if grid.ndim != 1 or grid.size < 2:
            raise InvalidInputError("schedule needs at least two grid points")
        if grid[0] != 1.0 or grid[-1] != 0.0:
            raise InvalidInputError("schedule must start at exactly 1 and end at exactly 0")
        if np.any(np.diff(grid) >= 0):
            raise InvalidInputError("schedule must be strictly decreasing")

    @property
    def num_steps(self) -> int:
        return self.grid.size - 1

    @classmethod
    def uniform(cls, num_steps: int) -> "Schedule":
        if num_steps < 1:
            raise InvalidInputError("num_steps must be >= 1")
        return cls(np.linspace(1.0, 0.0, num_steps + 1))


@dataclass(frozen=True)
class OracleDenoiser:
    """First-order Markov chain over the vocabulary; the exact stand-in model.

    ``initial`` is the distribution of the first token, ``transition`` the
    row-stochastic token-to-token matrix.
    """

    vocab: Vocab
    length: int
    initial: np.ndarray
    transition: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.initial, dtype=np.float64)
        a = np.asarray(self.transition, dtype=np.float64)
        object.__setattr__(self, "initial", pi)
        object.__setattr__(self, "transition", a)
        v = self.vocab.size
        if self.length < 1:
            raise InvalidInputError("sequence length must be >= 1")
        if pi.shape != (v,) or a.shape != (v, v):
            raise InvalidInputError("initial/transition shapes do not match the vocabulary")
        if np.any(pi < 0) or np.any(a < 0):
            raise InvalidInputError("chain probabilities must be nonnegative")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise InvalidInputError("initial distribution must sum to 1 within 1e-12")
        rows = a.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-12):
            bad = int(np.argmax(np.abs(rows - 1.0)))
            raise InvalidInputError(f"transition row {bad} sums to {rows[bad]!r}, expected 1")

    @classmethod
    def uniform(cls, vocab_size: int, length: int) -> "OracleDenoiser":
        v = vocab_size
        return cls(Vocab(v), length, np.full(v, 1.0 / v), np.full((v, v), 1.0 / v))

    @classmethod
    def peaked(cls, vocab_size: int, length: int, self_prob: float = 0.8) -> "OracleDenoiser":
        """Sticky chain: stay with ``self_prob``, move uniformly otherwise."""
        v = vocab_size
        if not 0.0 < self_prob < 1.0:
            raise InvalidInputError("self_prob must lie strictly between 0 and 1")
        a = np.full((v, v), (1.0 - self_prob) / (v - 1))
        np.fill_diagonal(a, self_prob)
        return cls(Vocab(v), length, np.full(v, 1.0 / v), a)

    @classmethod
    def random_chain(
        cls, vocab_size: int, length: int, seed, concentration: float = 0.5
    ) -> "OracleDenoiser":
        """Dirichlet-distributed rows; small concentration gives peaky rows."""
        rng = np.random.default_rng(seed)
        v = vocab_size
        pi = rng.dirichlet(np.full(v, concentration))
        a = rng.dirichlet(np.full(v, concentration), size=v)
        return cls(Vocab(v), length, pi, a)

    def mask_state(self, frozen_tokens=None) -> LatentState:
        """Fully masked state at t=1, optionally with a frozen prompt prefix."""
        tokens = np.full(self.length, self.vocab.mask_id, dtype=np.int64)
        if frozen_tokens is not None:
            prompt = np.asarray(frozen_tokens, dtype=np.int64)
            if prompt.size >= self.length:
                raise InvalidInputError("prompt must be shorter than the sequence")
            if np.any(prompt < 0) or np.any(prompt >= self.vocab.size):
                raise InvalidInputError("prompt tokens outside the vocabulary")
            tokens[: prompt.size] = prompt
        return LatentState(tokens, 1.0)


@dataclass(frozen=True)
class DenoiserOutput:
    """Per-position exact posteriors over clean tokens."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        sums = probs.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise InvalidInputError("posterior rows must sum to 1 within 1e-9")

    @property
    def embedding(self) -> np.ndarray:
        """Flattened posterior vector used as the candidate embedding."""
        return self.probs.reshape(-1)


def denoise(model: OracleDenoiser, z: LatentState) -> DenoiserOutput:
    """Exact marginals P(x_i = v | unmasked tokens) by forward-backward.

    Unmasked positions come back exactly one-hot on the observed token.
    """
    tokens = z.tokens
    if tokens.shape != (model.length,):
        raise InvalidInputError(f"state length {tokens.shape} != model length {model.length}")
    v = model.vocab.size
    mask_id = model.vocab.mask_id
    if np.any((tokens < 0) | (tokens > mask_id)):
        raise InvalidInputError("state contains out-of-range token ids")
    n = model.length
    observed = tokens != mask_id

    ind = np.ones((n, v))
    ind[observed] = 0.0
    ind[np.nonzero(observed)[0], tokens[observed]] = 1.0

    a = model.transition
    fwd = np.empty((n, v))
    msg = model.initial * ind[0]
    total = msg.sum()
    if total <= 0.0:
        raise InvalidInputError("observed tokens have probability zero under the chain")
    fwd[0] = msg / total
    for i in range(1, n):
        msg = (fwd[i - 1] @ a) * ind[i]
        total = msg.sum()
        if total <= 0.0:
            raise InvalidInputError("observed tokens have probability zero under the chain")
        fwd[i] = msg / total

    bwd = np.empty((n, v))
    bwd[n - 1] = 1.0
    for i in range(n - 2, -1, -1):
        msg = a @ (bwd[i + 1] * ind[i + 1])
        bwd[i] = msg / msg.sum()

    post = fwd * bwd
    post /= post.sum(axis=1, keepdims=True)
    obs_rows = np.nonzero(observed)[0]
    post[obs_rows] = 0.0
    post[obs_rows, tokens[obs_rows]] = 1.0
    return DenoiserOutput(post)


def _sample_rows(probs: np.ndarray, rng) -> np.ndarray:
    """One categorical draw per row."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((probs.shape[0], 1)) * cdf[:, -1:]
    return np.argmax(cdf > u, axis=1).astype(np.int64)


def _check_step(z: LatentState, s: float) -> None:
    if not 0.0 <= s < z.t:
        raise InvalidInputError(f"target time s={s} must satisfy 0 <= s < t={z.t}")


def project_llada(
    out: DenoiserOutput,
    z: LatentState,
    s: float,
    mode: str,
    rng,
    frozen: int = 0,
) -> LatentState:
    """Sample all masked positions, then re-mask exactly floor(L*s/t) of them.

    ``mode`` picks the re-mask positions: "uniform" draws them uniformly
    among the newly generated positions, "low_confidence" re-masks the ones
    whose sampled token had the smallest posterior probability (ties toward
    the smaller index). Positions already unmasked at time t, and the first
    ``frozen`` prompt positions (excluded from the budget), are never
    re-masked.
    """
    if mode not in ("uniform", "low_confidence"):
        raise InvalidInputError(f"mode must be uniform|low_confidence, got {mode!r}")
    _check_step(z, s)
    mask_id = out.probs.shape[1]
    gen_len = z.tokens.shape[0] - frozen
    masked_idx = np.nonzero(z.tokens == mask_id)[0]
    new_tokens = z.tokens.copy()
    sampled = _sample_rows(out.probs[masked_idx], rng)
    new_tokens[masked_idx] = sampled

    budget = int(np.floor(gen_len * s / z.t))
    if budget > masked_idx.size:
        raise InvalidInputError(
            f"re-mask budget {budget} exceeds the {masked_idx.size} newly generated positions"
        )
    if budget > 0:
        if mode == "uniform":
            remask = rng.choice(masked_idx, size=budget, replace=False)
        else:
            conf = out.probs[masked_idx, sampled]
            order = np.lexsort((masked_idx, conf))
            remask = masked_idx[order[:budget]]
        new_tokens[remask] = mask_id
    return LatentState(new_tokens, s)


def project_mdlm(
    out: DenoiserOutput,
    z: LatentState,
    s: float,
    rng,
    frozen: int = 0,
) -> LatentState:
    """Carry-over projector: each masked position independently stays masked
    with probability s/t, otherwise samples its posterior. Unmasked tokens
    are absorbing and never change."""
    _check_step(z, s)
    mask_id = out.probs.shape[1]
    masked_idx = np.nonzero(z.tokens == mask_id)[0]
    new_tokens = z.tokens.copy()
    keep = rng.random(masked_idx.size) < (s / z.t)
    fill = masked_idx[~keep]
    if fill.size:
        new_tokens[fill] = _sample_rows(out.probs[fill], rng)
    return LatentState(new_tokens, s)


def _masked_entropies(out: DenoiserOutput, z: LatentState) -> np.ndarray:
    rows = out.probs[z.tokens == out.probs.shape[1]]
    plogp = np.where(rows > 0.0, rows * np.log(np.where(rows > 0.0, rows, 1.0)), 0.0)
    return -np.sum(plogp, axis=1)


def entropy_score(out: DenoiserOutput, z: LatentState) -> float:
    """Negative mean Shannon entropy (nats) over masked positions.

    Higher is better; a state with no masked positions scores 0 by
    convention (it is already fully decided).
    """
    ent = _masked_entropies(out, z)
    if ent.size == 0:
        return 0.0
    return float(-np.mean(ent))


def self_certainty_score(out: DenoiserOutput, z: LatentState) -> float:
    """Mean KL(posterior || uniform) over masked positions: log|V| - H."""
    ent = _masked_entropies(out, z)
    if ent.size == 0:
        return 0.0
    return float(np.log(out.probs.shape[1]) - np.mean(ent))


def true_log_likelihood(model: OracleDenoiser, seq) -> float:
    """Exact chain log-likelihood of a fully unmasked sequence."""
    tokens = np.asarray(seq, dtype=np.int64)
    if tokens.shape != (model.length,):
        raise InvalidInputError(f"sequence length {tokens.shape} != model length {model.length}")
    if np.any((tokens < 0) | (tokens >= model.vocab.size)):
        raise InvalidInputError("sequence contains mask or out-of-range tokens")
    with np.errstate(divide="ignore"):
        ll = np.log(model.initial[tokens[0]])
        ll += np.sum(np.log(model.transition[tokens[:-1], tokens[1:]]))
    return float(ll)


_DECODE_FIELDS = (
    "k",
    "w",
    "seq_len",
    "num_steps",
    "beta",
    "kernel",
    "similarity",
    "gamma",
    "projector",
    "scorer",
    "selector",
    "seed",
    "alpha_div",
    "prompt",
)


@dataclass(frozen=True)
class DecodeConfig:
    """Everything the beam decode loop needs besides the model itself."""

    k: int = 4
    w: int = 4
    seq_len: int = 16
    num_steps: int = 8
    beta: float = 1.0
    kernel: str = "additive"
    similarity: str = "cosine"
    gamma: float | None = None
    projector: str = "llada_low_confidence"
    scorer: str = "entropy"
    selector: str = "d5p4"
    seed: int = 0
    alpha_div: float = 1.0
    prompt: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.k < 1 or self.w < 1:
            raise ConfigError("k and w must be >= 1")
        if self.seq_len < 1 or self.num_steps < 1:
            raise ConfigError("seq_len and num_steps must be >= 1")
        if self.kernel not in ("additive", "multiplicative"):
            raise ConfigError(f"kernel must be additive|multiplicative, got {self.kernel!r}")
        if self.similarity not in ("cosine", "rbf"):
            raise ConfigError(f"similarity must be cosine|rbf, got {self.similarity!r}")
        if self.projector not in PROJECTORS:
            raise ConfigError(f"projector must be one of {PROJECTORS}, got {self.projector!r}")
        if self.scorer not in SCORERS:
            raise ConfigError(f"scorer must be one of {SCORERS}, got {self.scorer!r}")
        if self.selector not in SELECTORS:
            raise ConfigError(f"selector must be one of {SELECTORS}, got {self.selector!r}")
        if self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        if self.alpha_div < 0:
            raise ConfigError("alpha_div must be nonnegative")
        if self.gamma is not None and self.gamma <= 0:
            raise ConfigError("gamma must be positive when given")
        if self.prompt is not None:
            object.__setattr__(self, "prompt", tuple(int(x) for x in self.prompt))
            if len(self.prompt) >= self.seq_len:
                raise ConfigError("prompt must be shorter than seq_len")

    @classmethod
    def from_json(cls, text: str) -> "DecodeConfig":
        """Strict JSON loader; unknown fields are an error."""
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - set(_DECODE_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class DecodeTrace:
    """Per-step record of the decode loop, exportable as JSON."""

    steps: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"steps": self.steps}, indent=2)


def _apply_projector(cfg: DecodeConfig, out, state, s, rng, frozen):
    if cfg.projector == "mdlm":
        return project_mdlm(out, state, s, rng, frozen)
    mode = "uniform" if cfg.projector == "llada_uniform" else "low_confidence"
    return project_llada(out, state, s, mode, rng, frozen)


def _select(cfg: DecodeConfig, scores, similarity, ensemble, partition, step_rng):
    if cfg.selector == "d5p4":
        return greedy_map_multi_init(ensemble)
    if cfg.selector == "topk":
        return topk_per_group(scores, partition, ensemble)
    if cfg.selector == "mmr":
        return mmr_select(scores, similarity, partition, cfg.alpha_div, True, ensemble)
    return random_transversal(partition, int(step_rng.integers(2**63)), ensemble)


def decode(model: OracleDenoiser, cfg: DecodeConfig, record_states: bool = False):
    """Beam-style parallel decode: branch w ways per beam, score, select k.

    Every step denoises each of the k beams once, applies the projector w
    times with independent randomness (candidate pool n = k*w, grouped by
    parent), re-denoises each candidate to obtain its score and flattened
    posterior embedding, builds the configured kernel, and keeps one
    candidate per group via the configured selector. Returns the final
    (k, L) token array and the per-step trace. Bitwise reproducible for a
    fixed seed.
    """
    if cfg.seq_len != model.length:
        raise ConfigError(f"cfg.seq_len={cfg.seq_len} does not match model length {model.length}")
    vocab = model.vocab
    schedule = Schedule.uniform(cfg.num_steps)
    partition = Partition(cfg.k, cfg.w)
    scorer = entropy_score if cfg.scorer == "entropy" else self_certainty_score
    frozen = len(cfg.prompt) if cfg.prompt else 0

    beams = [model.mask_state(cfg.prompt) for _ in range(cfg.k)]
    trace = DecodeTrace()
    step_rng = np.random.default_rng((cfg.seed, 0xD5))

    for step, (t, s) in enumerate(zip(schedule.grid[:-1], schedule.grid[1:])):
        candidates = []
        for g, beam in enumerate(beams):
            parent_out = denoise(model, beam)
            for b in range(cfg.w):
                rng = np.random.default_rng((cfg.seed, step, g * cfg.w + b))
                candidates.append(_apply_projector(cfg, parent_out, beam, s, rng, frozen))

        outs = [denoise(model, c) for c in candidates]
        scores = np.array([scorer(o, c) for o, c in zip(outs, candidates)])
        embeds = EmbeddingSet(np.stack([o.embedding for o in outs])).normalize()
        if cfg.similarity == "cosine":
            similarity = cosine_similarity(embeds)
        else:
            gamma = cfg.gamma if cfg.gamma is not None else 1.0 / embeds.rows.shape[1]
            similarity = rbf_similarity(embeds, gamma)
        if cfg.kernel == "additive":
            ensemble = additive_kernel(shift_nonnegative(scores), similarity, cfg.beta, partition)
        else:
            ensemble = multiplicative_kernel(scores, similarity, cfg.beta, partition)

        result = _select(cfg, scores, similarity, ensemble, partition, step_rng)
        picked = sorted(result.indices)
        log_det = evaluate_log_det(ensemble, picked)
        record = {
            "step": step,
            "t": float(t),
            "s": float(s),
            "scores": scores.tolist(),
            "selected": picked,
            "log_det": log_det,
        }
        if record_states:
            record["beam_tokens"] = [beams[g].tokens.tolist() for g in range(cfg.k)]
            record["candidate_tokens"] = [c.tokens.tolist() for c in candidates]
        trace.steps.append(record)
        beams = [candidates[i] for i in picked]

    sequences = np.stack([b.tokens for b in beams])
    if np.any(sequences == vocab.mask_id):  # pragma: no cover - loop guarantees this
        raise InvalidInputError("decode finished with mask tokens present")
    return sequences, trace


def write_sequences(sequences: np.ndarray) -> str:
    """Plain-text export: one sequence per line, integer tokens space-separated."""
    return "\n".join(" ".join(str(int(tok)) for tok in row) for row in sequences) + "\n"


def sequences_onehot(sequences: np.ndarray, vocab_size: int) -> EmbeddingSet:
    """Flattened one-hot embeddings of finished sequences.

    Cosine similarity between two rows equals the fraction of positions on
    which the sequences agree.
    """
    seqs = np.asarray(sequences, dtype=np.int64)
    k, length = seqs.shape
    flat = np.zeros((k, length * vocab_size))
    cols = np.arange(length) * vocab_size
    for r in range(k):
        flat[r, cols + seqs[r]] = 1.0
    return EmbeddingSet(flat)

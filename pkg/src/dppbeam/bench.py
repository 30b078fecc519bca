"""Synthetic-kernel benchmark harness for the subset selectors.

For every (group count, group size, beta, trial) cell one synthetic kernel
is generated from a seed derived by hashing the cell coordinates, so adding
or removing a method never changes any other method's instances. Every
requested method runs on the same kernel; only the selection call itself is
timed. Objective values are z-scored across methods per trial and ranked
(1 = best, ties averaged).
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, SearchSpaceError
from .kernel import SyntheticKernelConfig, cosine_similarity, generate_synthetic
from .metrics import avg_pairwise_cosine, benchmark_stats, spearman
from .selection import (
    BRUTE_FORCE_CAP,
    brute_force_map,
    greedy_map,
    greedy_map_multi_init,
    kdpp_sample,
    mmr_select,
    random_transversal,
    topk_per_group,
)

KNOWN_METHODS = (
    "greedy_map",
    "greedy_map_multi",
    "divbs",
    "random",
    "kdpp",
    "brute_force",
    "topk",
)

CSV_COLUMNS = ("method", "k", "w", "beta", "trial", "log_det", "elapsed", "normalized", "rank")

_BENCH_FIELDS = (
    "group_counts",
    "group_sizes",
    "trials",
    "betas",
    "methods",
    "seed",
    "output",
    "format",
    "alpha_div",
    "include_kdpp_ranks",
)


@dataclass(frozen=True)
class BenchConfig:
    group_counts: tuple[int, ...] = (32,)
    group_sizes: tuple[int, ...] = (32,)
    trials: int = 500
    betas: tuple[float, ...] = (1.0,)
    methods: tuple[str, ...] = ("greedy_map_multi", "divbs", "random")
    seed: int = 0
    output: str | None = None
    format: str = "csv"
    alpha_div: float = 1.0
    include_kdpp_ranks: bool = False

    def __post_init__(self):
        for name in ("group_counts", "group_sizes", "betas", "methods"):
            val = tuple(getattr(self, name))
            if not val:
                raise ConfigError(f"{name} must be non-empty")
            object.__setattr__(self, name, val)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = set(self.methods) - set(KNOWN_METHODS)
        if unknown:
            raise ConfigError(f"unknown methods: {sorted(unknown)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be distinct")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv|json, got {self.format!r}")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if "brute_force" in self.methods:
            for k in self.group_counts:
                for w in self.group_sizes:
                    if w**k > BRUTE_FORCE_CAP:
                        raise SearchSpaceError(count=w**k, cap=BRUTE_FORCE_CAP)

    @classmethod
    def from_json(cls, text: str) -> "BenchConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(doc) - set(_BENCH_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class BenchRecord:
    method: str
    k: int
    w: int
    beta: float
    trial: int
    log_det: float
    elapsed: float
    normalized: float = float("nan")
    rank: float = float("nan")


def derive_seed(seed: int, k: int, w: int, beta: float, trial: int) -> int:
    """Stable per-cell seed: XOR of the base seed with a 64-bit hash."""
    key = f"{k}|{w}|{beta!r}|{trial}".encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return (seed ^ int.from_bytes(digest, "big")) & (2**64 - 1)


def _run_methods(cfg: BenchConfig, k: int, w: int, beta: float, trial: int, clock):
    """Run every configured method on the trial's kernel; returns raw rows."""
    cell_seed = derive_seed(cfg.seed, k, w, beta, trial)
    quality, embeddings, ensemble = generate_synthetic(
        SyntheticKernelConfig(k=k, w=w, beta=beta, seed=cell_seed)
    )
    partition = ensemble.partition
    similarity = cosine_similarity(embeddings) if "divbs" in cfg.methods else None

    rows = []
    for method in cfg.methods:
        t0 = clock()
        if method == "greedy_map":
            res = greedy_map(ensemble, k, constrained=True)
        elif method == "greedy_map_multi":
            res = greedy_map_multi_init(ensemble)
        elif method == "divbs":
            res = mmr_select(quality, similarity, partition, cfg.alpha_div, True, ensemble)
        elif method == "random":
            res = random_transversal(partition, (cell_seed, 1), ensemble)
        elif method == "kdpp":
            res = kdpp_sample(ensemble, k, (cell_seed, 2))
        elif method == "brute_force":
            res = brute_force_map(ensemble, k, constrained=True)
        else:
            res = topk_per_group(quality, partition, ensemble)
        elapsed = clock() - t0
        rows.append((method, float(res.log_det), float(elapsed)))
    return rows


def _trial_worker(args):
    cfg_kwargs, k, w, beta, trial = args
    cfg = BenchConfig(**cfg_kwargs)
    return k, w, beta, trial, _run_methods(cfg, k, w, beta, trial, time.perf_counter)


def run_bench(cfg: BenchConfig, clock=time.perf_counter, threads: int = 1):
    """Execute the sweep; returns (records, summaries).

    ``summaries`` holds one entry per (k, w, beta) configuration with
    per-method mean normalized value, mean rank, and mean time. Ranks are
    computed without the unconstrained k-DPP sampler unless
    ``cfg.include_kdpp_ranks`` is set. ``clock`` is injectable so tests can
    verify output determinism.
    """
    cells = [
        (k, w, beta)
        for k in cfg.group_counts
        for w in cfg.group_sizes
        for beta in cfg.betas
    ]

    # One untimed warm-up per method at the largest configuration.
    k_big = max(cfg.group_counts)
    w_big = max(cfg.group_sizes)
    _run_methods(cfg, k_big, w_big, cfg.betas[0], 0, clock)

    raw: dict[tuple, list] = {}
    if threads > 1:
        cfg_kwargs = {name: getattr(cfg, name) for name in _BENCH_FIELDS}
        jobs = [
            (cfg_kwargs, k, w, beta, trial)
            for (k, w, beta) in cells
            for trial in range(cfg.trials)
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for k, w, beta, trial, rows in pool.map(_trial_worker, jobs, chunksize=8):
                raw[(k, w, beta, trial)] = rows
    else:
        for k, w, beta in cells:
            for trial in range(cfg.trials):
                raw[(k, w, beta, trial)] = _run_methods(cfg, k, w, beta, trial, clock)

    records: list[BenchRecord] = []
    summaries: list[dict] = []
    rank_methods = [
        m for m in cfg.methods if m != "kdpp" or cfg.include_kdpp_ranks
    ]
    for k, w, beta in cells:
        cell_records = []
        values = np.empty((len(cfg.methods), cfg.trials))
        for trial in range(cfg.trials):
            rows = raw[(k, w, beta, trial)]
            for mi, (method, log_det, elapsed) in enumerate(rows):
                values[mi, trial] = log_det
                cell_records.append(
                    BenchRecord(method, k, w, beta, trial, log_det, elapsed)
                )
        if len(cfg.methods) >= 2:
            z_mean_all, _ = benchmark_stats(values)
            # Per-trial z-scores for the record stream.
            mean = values.mean(axis=0, keepdims=True)
            std = values.std(axis=0, keepdims=True)
            z = np.where(std < 1e-12, 0.0, (values - mean) / np.where(std < 1e-12, 1.0, std))
        else:
            z = np.zeros_like(values)
            z_mean_all = z.mean(axis=1)
        rank_idx = [cfg.methods.index(m) for m in rank_methods]
        ranks = np.full_like(values, np.nan)
        if len(rank_idx) >= 2:
            sub = values[rank_idx, :]
            ranks[rank_idx, :] = np.apply_along_axis(lambda col: rankdata(-col), 0, sub)
        elif len(rank_idx) == 1:
            ranks[rank_idx[0], :] = 1.0

        for rec in cell_records:
            mi = cfg.methods.index(rec.method)
            rec.normalized = float(z[mi, rec.trial])
            rec.rank = float(ranks[mi, rec.trial])
        records.extend(cell_records)

        per_method = []
        for mi, method in enumerate(cfg.methods):
            times = [r.elapsed for r in cell_records if r.method == method]
            per_method.append(
                {
                    "method": method,
                    "mean_normalized": float(z_mean_all[mi]) if len(cfg.methods) >= 2 else 0.0,
                    "mean_rank": float(np.nanmean(ranks[mi, :])) if mi in rank_idx else None,
                    "mean_time": float(np.mean(times)),
                }
            )
        summaries.append({"k": k, "w": w, "beta": beta, "methods": per_method})
    return records, summaries


def _csv_cell(value) -> str:
    if isinstance(value, float):
        if np.isnan(value):
            return ""
        return repr(value)
    return str(value)


def records_to_csv(records) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        lines.append(
            ",".join(
                _csv_cell(getattr(rec, col)) for col in CSV_COLUMNS
            )
        )
    return "\n".join(lines) + "\n"


def _json_safe(value):
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def records_to_json(records, summaries) -> str:
    doc = {
        "records": [
            {col: _json_safe(getattr(rec, col)) for col in CSV_COLUMNS} for rec in records
        ],
        "summary": summaries,
    }
    return json.dumps(doc, indent=2, allow_nan=False)


def summary_table(summaries) -> str:
    """Fixed-width text rendering of the per-configuration summaries."""
    lines = []
    for cell in summaries:
        lines.append(f"k={cell['k']} w={cell['w']} beta={cell['beta']}")
        lines.append(f"  {'method':<18} {'mean value':>12} {'mean rank':>10} {'mean time':>12}")
        for row in cell["methods"]:
            rank = "-" if row["mean_rank"] is None else f"{row['mean_rank']:.3f}"
            lines.append(
                f"  {row['method']:<18} {row['mean_normalized']:>12.4f} {rank:>10} "
                f"{row['mean_time']:>12.6f}"
            )
    return "\n".join(lines)


def run_beta_sweep(model, base_cfg, betas, num_seeds: int):
    """Decode with each beta over ``num_seeds`` seeds; returns sweep stats.

    For each beta the mean in-batch cosine similarity of the final beams is
    averaged over seeds; the returned dict includes the rank correlation of
    log(beta) against those means (negative means stronger repulsion at
    larger beta).
    """
    from .diffusion import decode, sequences_onehot  # local import to avoid a cycle

    if len(betas) < 3:
        raise ConfigError("beta sweep needs at least 3 beta values")
    mean_cos = []
    per_beta = []
    for bi, beta in enumerate(betas):
        cos_vals = []
        for si in range(num_seeds):
            seed = derive_seed(base_cfg.seed, bi, 0, float(beta), si)
            cfg = replace(base_cfg, beta=float(beta), seed=seed)
            sequences, _ = decode(model, cfg)
            embeds = sequences_onehot(sequences, model.vocab.size)
            cos_vals.append(avg_pairwise_cosine(embeds))
        mean_cos.append(float(np.mean(cos_vals)))
        per_beta.append({"beta": float(beta), "mean_cosine": mean_cos[-1], "runs": num_seeds})
    rho = spearman(np.log(np.asarray(betas, dtype=float)), mean_cos)
    return {"per_beta": per_beta, "spearman_log_beta_vs_cosine": float(rho)}

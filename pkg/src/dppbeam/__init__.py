"""Partition-DPP subset selection for parallel diffusion beam decoding."""

from .errors import (
    ConfigError,
    ConvergenceError,
    InvalidInputError,
    NotPositiveDefiniteError,
    RankDeficiencyError,
    SearchSpaceError,
)
from .matrix_core import (
    EigenDecomposition,
    SymMatrix,
    is_psd,
    log_det,
    psd_project,
    sym_eigendecompose,
)
from .kernel import (
    EmbeddingSet,
    LEnsemble,
    Partition,
    SyntheticKernelConfig,
    additive_kernel,
    cosine_similarity,
    generate_synthetic,
    median_heuristic_gamma,
    multiplicative_kernel,
    rbf_similarity,
    shift_nonnegative,
)
from .selection import (
    GreedyState,
    KdppSampler,
    SelectionResult,
    brute_force_map,
    evaluate_log_det,
    greedy_map,
    greedy_map_multi_init,
    kdpp_sample,
    mmr_select,
    random_transversal,
    topk_per_group,
)
from .diffusion import (
    DecodeConfig,
    DecodeTrace,
    DenoiserOutput,
    LatentState,
    OracleDenoiser,
    Schedule,
    Vocab,
    decode,
    denoise,
    entropy_score,
    project_llada,
    project_mdlm,
    self_certainty_score,
    sequences_onehot,
    true_log_likelihood,
    write_sequences,
)
from .metrics import (
    avg_pairwise_cosine,
    benchmark_stats,
    distinct_n,
    ead,
    self_bleu,
    spearman,
)
from .bench import BenchConfig, BenchRecord, derive_seed, run_bench, run_beta_sweep
from .verify import run_verify

__version__ = "0.1.0"

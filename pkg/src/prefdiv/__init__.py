"""Diversity-first curation of model-generated preference data.

The package turns pools of sampled solutions into quality-filtered,
diversity-maximized preference pairs (answer judging, hashed n-gram
embeddings, isolation-forest outlier removal, greedy diversity selection)
and ships the measurement stack (distinct-N, embedding diversity, @1/@k
accuracy, difficulty levels) plus a small deterministic simulator that
reproduces diversity collapse under naive iterative self-improvement and
its recovery under diversified curation.
"""

from .corpus import (
    CorpusError,
    GoldItem,
    PoolSet,
    QuestionPools,
    ResponseRecord,
    canonicalize_answer,
    extract_equation_chain,
    extract_final_answer,
    judge,
    load_gold,
    load_responses,
    merge_global,
    partition,
    write_responses,
)
from .embed import (
    EmbeddingError,
    EmbeddingStore,
    HashedNgramProvider,
    hashed_ngram_embed,
    load_embeddings,
    mean_pairwise_similarity,
    text_hash,
    write_embeddings,
)
from .forest import (
    ForestConfig,
    IsolationForest,
    anomaly_score,
    build_forest,
    expected_path_norm,
    filter_pool,
    score_from_mean_path,
)
from .metrics import (
    AccuracyReport,
    DifficultyLevel,
    MetricsError,
    PoolAggregate,
    accuracy_at,
    aggregate_pool_metric,
    difficulty_level,
    distinct_answers,
    distinct_equation_chains,
    distinct_n,
    embed_diversity,
)
from .select import (
    PreferencePair,
    SelectionConfig,
    SelectionError,
    build_pairs,
    curate_question,
    greedy_select,
    vanilla_select,
)
from .sim import (
    IndexPair,
    PrefLossConfig,
    SimTrace,
    SimulationError,
    SyntheticTask,
    ToyPolicy,
    UniverseItem,
    compare_csv_lines,
    dpo_loss,
    make_task,
    nll_loss,
    policy_logprob,
    pref_loss,
    pref_loss_grad,
    run_compare,
    run_isi,
    sample_indices,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # corpus
    "CorpusError",
    "GoldItem",
    "ResponseRecord",
    "QuestionPools",
    "PoolSet",
    "canonicalize_answer",
    "extract_final_answer",
    "extract_equation_chain",
    "load_gold",
    "load_responses",
    "write_responses",
    "judge",
    "partition",
    "merge_global",
    # embed
    "EmbeddingError",
    "EmbeddingStore",
    "HashedNgramProvider",
    "hashed_ngram_embed",
    "text_hash",
    "mean_pairwise_similarity",
    "load_embeddings",
    "write_embeddings",
    # forest
    "ForestConfig",
    "IsolationForest",
    "build_forest",
    "expected_path_norm",
    "score_from_mean_path",
    "anomaly_score",
    "filter_pool",
    # metrics
    "MetricsError",
    "AccuracyReport",
    "DifficultyLevel",
    "PoolAggregate",
    "distinct_n",
    "embed_diversity",
    "distinct_equation_chains",
    "distinct_answers",
    "accuracy_at",
    "difficulty_level",
    "aggregate_pool_metric",
    # select
    "SelectionError",
    "SelectionConfig",
    "PreferencePair",
    "greedy_select",
    "vanilla_select",
    "curate_question",
    "build_pairs",
    # sim
    "SimulationError",
    "UniverseItem",
    "SyntheticTask",
    "ToyPolicy",
    "PrefLossConfig",
    "IndexPair",
    "SimTrace",
    "make_task",
    "policy_logprob",
    "sample_indices",
    "dpo_loss",
    "nll_loss",
    "pref_loss",
    "pref_loss_grad",
    "run_isi",
    "run_compare",
    "compare_csv_lines",
]

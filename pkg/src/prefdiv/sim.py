"""Desk-scale iterative self-improvement simulator.

A categorical softmax policy over small enumerated response universes
stands in for the language model. Each iteration samples responses per
question (temperature + nucleus truncation), builds preference pairs from
the pools (either the baseline uniform pick over the current iteration, or
the accumulated-pool outlier-filter + greedy-diversity route), and trains
the policy with the combined DPO + length-normalized NLL objective against
a frozen per-iteration reference. The trace records accuracy and diversity
of the sampled sets per iteration, which is enough to watch diversity
collapse under the baseline and survive under diversified curation.

Everything is deterministic given the run seed. Sampling uses one fixed
uniform array per question (common random numbers), so iteration-to-
iteration metric changes reflect policy movement, not resampling noise,
and a zero-learning-rate run produces identical rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import PoolSet, ResponseRecord, merge_global, partition
from .embed import EmbeddingStore, text_hash
from .forest import ForestConfig
from .metrics import accuracy_at, aggregate_pool_metric, distinct_n, embed_diversity
from .seeding import derive_int, derive_rng
from .select import SelectionConfig, build_pairs, curate_question, vanilla_select

__all__ = [
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
    "TRACE_METRICS",
    "MODES",
]

MODES = ("vanilla", "dive")

TRACE_METRICS = (
    "at_1",
    "at_k",
    "distinct_responses",
    "distinct_n_pos",
    "distinct_n_neg",
    "embed_diversity_pos",
    "embed_diversity_neg",
    "n_pairs",
    "pair_source_iterations",
)

# Each universe item carries a base logit from a descending plausibility
# ladder; the initial policy adds Gaussian jitter of this scale on top.
# Correct solutions take the top ranks on a shallow ladder of their own,
# a handful of plausible-looking wrong solutions sit below a clear gap,
# and the rest of the universe drops off a cliff. The sampling nucleus
# then opens on all correct items plus the near-miss negatives, so the
# dynamics of interest are how training reweights the correct items
# against each other and how fast the thin negative mass drains away.
INIT_LOGIT_SCALE = 0.15
BASE_LOGIT_TOP = 1.4
POS_LOGIT_STEP = 0.15
NEG_LOGIT_GAP = 0.38
NEG_LOGIT_STEP = 0.22
NEAR_NEG_COUNT = 3
TAIL_LOGIT_CLIFF = 1.2

# Embedding geometry: correct solutions spread evenly around the question
# center, so positive-pool diversity tracks how evenly the sampler covers
# them; incorrect solutions scatter widely.
POS_SPREAD = 0.55
NEG_SPREAD = 1.3

class SimulationError(RuntimeError):
    """Invalid simulator input or a run that lost numerical footing."""


@dataclass(frozen=True, eq=False)
class UniverseItem:
    """One enumerable response: its text, gold-correctness flag, embedding
    vector, the final answer embedded in the text, and the base logit the
    initial policy assigns it (how plausible the solution looks before any
    training)."""

    text: str
    correct: bool
    vector: np.ndarray
    answer: str
    base_logit: float


@dataclass
class SyntheticTask:
    """Enumerated response universes for a set of synthetic questions."""

    question_ids: list[str]
    universes: dict[str, list[UniverseItem]]
    dim: int
    seed: int
    _text_index: dict[str, dict[str, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self._text_index = {}
        for qid in self.question_ids:
            items = self.universes[qid]
            flags = [it.correct for it in items]
            if not (any(flags) and not all(flags)):
                raise SimulationError(
                    f"question {qid} needs at least one correct and one incorrect item"
                )
            index = {it.text: i for i, it in enumerate(items)}
            if len(index) != len(items):
                raise SimulationError(f"question {qid} has duplicate universe texts")
            self._text_index[qid] = index

    def universe(self, question_id: str) -> list[UniverseItem]:
        return self.universes[question_id]

    def item(self, question_id: str, index: int) -> UniverseItem:
        return self.universes[question_id][index]

    def size(self, question_id: str) -> int:
        return len(self.universes[question_id])

    def text_index(self, question_id: str, text: str) -> int:
        return self._text_index[question_id][text]


def _base_logit(rank: int, n_correct: int) -> float:
    """Plausibility-ladder base logit for the item at the given rank.

    Ranks below ``n_correct`` are the correct items, descending by a
    shallow step. The next ``NEAR_NEG_COUNT`` ranks are plausible wrong
    solutions sitting below a clear gap; every deeper rank additionally
    drops off a cliff.
    """
    if rank < n_correct:
        return BASE_LOGIT_TOP - POS_LOGIT_STEP * rank
    floor = BASE_LOGIT_TOP - POS_LOGIT_STEP * (n_correct - 1) - NEG_LOGIT_GAP
    base = floor - NEG_LOGIT_STEP * (rank - n_correct)
    if rank >= n_correct + NEAR_NEG_COUNT:
        base -= TAIL_LOGIT_CLIFF
    return base


def make_task(
    n_questions: int = 40,
    universe: int = 12,
    n_correct: int = 4,
    dim: int = 16,
    seed: int = 7,
) -> SyntheticTask:
    """Build the default synthetic task.

    Each question gets ``universe`` short distinct solution texts carrying
    an equation annotation and the final answer; ``n_correct`` of them
    share the gold answer, the rest get distinct wrong answers. Correct
    items are embedded evenly around the question's center, incorrect
    items in a wider spread around the same center. Base logits follow
    the plausibility ladder described at ``_base_logit``.
    """
    if n_questions < 1:
        raise SimulationError("n_questions must be >= 1")
    if universe < 2:
        raise SimulationError("universe must be >= 2")
    if not 1 <= n_correct <= universe - 1:
        raise SimulationError("n_correct must leave at least one incorrect item")
    if dim < 2:
        raise SimulationError("dim must be >= 2")
    question_ids = [f"q{i:03d}" for i in range(n_questions)]
    universes: dict[str, list[UniverseItem]] = {}
    for qid in question_ids:
        rng = derive_rng(seed, "task", qid)
        gold = int(rng.integers(12, 98))
        center = rng.normal(0.0, 1.0, size=dim)
        items = []
        for j in range(universe):
            correct = j < n_correct
            answer = gold if correct else gold + (j - n_correct + 1)
            a = 2 + j
            spread = POS_SPREAD if correct else NEG_SPREAD
            vector = center + spread * rng.normal(0.0, 1.0, size=dim)
            text = f"<<{a}+{answer - a}={answer}>>"
            base = _base_logit(j, n_correct)
            items.append(
                UniverseItem(
                    text=text,
                    correct=correct,
                    vector=vector,
                    answer=str(answer),
                    base_logit=base,
                )
            )
        universes[qid] = items
    return SyntheticTask(question_ids=question_ids, universes=universes, dim=dim, seed=seed)


@dataclass
class ToyPolicy:
    """Per-question logits with temperature + nucleus sampling.

    Scoring (log-probabilities for the losses) always uses the untempered
    softmax of the logits; temperature and top_p apply to sampling only.
    """

    logits: dict[str, np.ndarray]
    temperature: float = 0.7
    top_p: float = 0.95

    def __post_init__(self):
        if self.temperature <= 0:
            raise SimulationError("temperature must be > 0")
        if not 0.0 < self.top_p <= 1.0:
            raise SimulationError("top_p must be in (0, 1]")
        self.logits = {q: np.asarray(v, dtype=np.float64) for q, v in self.logits.items()}
        for qid, theta in self.logits.items():
            if not np.all(np.isfinite(theta)):
                raise SimulationError(f"non-finite logits for question {qid}")

    @classmethod
    def initial(
        cls,
        task: SyntheticTask,
        seed: int,
        scale: float = INIT_LOGIT_SCALE,
        temperature: float = 0.7,
        top_p: float = 0.95,
    ) -> "ToyPolicy":
        """Base logits from the task's plausibility ladder plus seeded
        Gaussian jitter of the given scale."""
        logits = {}
        for qid in task.question_ids:
            base = np.array([item.base_logit for item in task.universe(qid)])
            jitter = derive_rng(seed, "logits", qid).normal(0.0, scale, size=base.size)
            logits[qid] = base + jitter
        return cls(logits=logits, temperature=temperature, top_p=top_p)

    def snapshot(self) -> "ToyPolicy":
        """Frozen copy for use as the reference model."""
        return ToyPolicy(
            logits={q: v.copy() for q, v in self.logits.items()},
            temperature=self.temperature,
            top_p=self.top_p,
        )

    def logprobs(self, question_id: str) -> np.ndarray:
        theta = self.logits[question_id]
        return theta - np.logaddexp.reduce(theta)

    def sampling_probs(self, question_id: str) -> np.ndarray:
        """Full-length probability vector after temperature scaling and
        nucleus truncation; excluded items carry exactly zero mass."""
        theta = self.logits[question_id] / self.temperature
        p = np.exp(theta - np.logaddexp.reduce(theta))
        order = np.lexsort((np.arange(p.size), -p))
        cum = np.cumsum(p[order])
        n_keep = min(int(np.searchsorted(cum, self.top_p, side="left")) + 1, p.size)
        out = np.zeros_like(p)
        keep = order[:n_keep]
        out[keep] = p[keep]
        return out / out.sum()


def policy_logprob(policy: ToyPolicy, question_id: str, response_index: int) -> float:
    """Log-probability of one universe item under the untempered softmax."""
    if question_id not in policy.logits:
        raise SimulationError(f"unknown question {question_id}")
    theta = policy.logits[question_id]
    if not 0 <= response_index < theta.size:
        raise SimulationError(
            f"response index {response_index} out of range for {question_id}"
        )
    return float(policy.logprobs(question_id)[response_index])


def sample_indices(policy: ToyPolicy, question_id: str, uniforms: np.ndarray) -> np.ndarray:
    """Map uniform draws to universe indices by inverse CDF over the
    nucleus-truncated sampling distribution."""
    p = policy.sampling_probs(question_id)
    cum = np.cumsum(p)
    idx = np.searchsorted(cum, uniforms, side="right")
    return np.minimum(idx, p.size - 1).astype(np.int64)


@dataclass(frozen=True)
class PrefLossConfig:
    alpha: float = 0.5
    beta: float = 0.4
    lr: float = 0.05
    epochs: int = 1

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise SimulationError("alpha must be in [0, 1]")
        if self.beta <= 0:
            raise SimulationError("beta must be > 0")
        if self.lr < 0:
            raise SimulationError("lr must be >= 0")
        if self.epochs < 1:
            raise SimulationError("epochs must be >= 1")


@dataclass(frozen=True)
class IndexPair:
    """A preference pair expressed as universe indices."""

    question_id: str
    chosen: int
    rejected: int


def _margin(policy: ToyPolicy, reference: ToyPolicy, pair: IndexPair, beta: float) -> float:
    lp_pol = policy.logprobs(pair.question_id)
    lp_ref = reference.logprobs(pair.question_id)
    return beta * (
        (lp_pol[pair.chosen] - lp_ref[pair.chosen])
        - (lp_pol[pair.rejected] - lp_ref[pair.rejected])
    )


def dpo_loss(policy: ToyPolicy, reference: ToyPolicy, pair: IndexPair, beta: float) -> float:
    """-log sigmoid of the scaled policy/reference log-ratio margin,
    computed as softplus(-margin)."""
    r = _margin(policy, reference, pair, beta)
    return float(np.logaddexp(0.0, -r))


def _token_length(task: SyntheticTask, question_id: str, index: int) -> int:
    return len(task.item(question_id, index).text.split())


def nll_loss(task: SyntheticTask, policy: ToyPolicy, question_id: str, chosen_index: int) -> float:
    """Negative log-likelihood of the chosen response, normalized by its
    whitespace token count."""
    lp = policy_logprob(policy, question_id, chosen_index)
    return -lp / _token_length(task, question_id, chosen_index)


def pref_loss(
    task: SyntheticTask,
    policy: ToyPolicy,
    reference: ToyPolicy,
    pair: IndexPair,
    config: PrefLossConfig,
) -> float:
    """alpha-weighted combination of the DPO and NLL terms."""
    d = dpo_loss(policy, reference, pair, config.beta)
    n = nll_loss(task, policy, pair.question_id, pair.chosen)
    return config.alpha * d + (1.0 - config.alpha) * n


def pref_loss_grad(
    task: SyntheticTask,
    policy: ToyPolicy,
    reference: ToyPolicy,
    pair: IndexPair,
    config: PrefLossConfig,
) -> np.ndarray:
    """Exact gradient of pref_loss in the question's logits.

    For a shared categorical softmax the -pi terms of d log pi / d theta
    cancel between chosen and rejected inside the DPO margin, leaving
    beta * (e_chosen - e_rejected); the NLL term keeps its full
    (e_chosen - pi) / len shape. Verified against central finite
    differences in the test suite.
    """
    theta = policy.logits[pair.question_id]
    lp = theta - np.logaddexp.reduce(theta)
    pi = np.exp(lp)
    r = _margin(policy, reference, pair, config.beta)
    sig_neg_r = float(np.exp(-np.logaddexp(0.0, r)))
    grad = np.zeros_like(theta)
    grad[pair.chosen] -= config.alpha * sig_neg_r * config.beta
    grad[pair.rejected] += config.alpha * sig_neg_r * config.beta
    length = _token_length(task, pair.question_id, pair.chosen)
    nll = pi.copy()
    nll[pair.chosen] -= 1.0
    grad += (1.0 - config.alpha) * nll / length
    return grad


@dataclass
class SimTrace:
    """Per-iteration metric rows; row t describes the K samples drawn from
    the policy after t training iterations."""

    mode: str
    k: int
    p: int
    iterations: int
    seed: int
    rows: list[dict[str, float]]

    def value(self, t: int, metric: str) -> float:
        return self.rows[t][metric]

    def csv_lines(self) -> list[str]:
        lines = ["iteration,metric,value"]
        for t, row in enumerate(self.rows):
            for metric in TRACE_METRICS:
                lines.append(f"{t},{metric},{_fmt(row[metric])}")
        return lines


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def _measure(task: SyntheticTask, samples: dict[str, list[ResponseRecord]], k: int) -> dict:
    report = accuracy_at(samples, k)
    distinct_counts = [len({r.text for r in recs}) for recs in samples.values()]
    side_values: dict[str, dict[str, float | None]] = {
        "distinct_n_pos": {},
        "distinct_n_neg": {},
        "embed_diversity_pos": {},
        "embed_diversity_neg": {},
    }
    for qid, recs in samples.items():
        for side, flag in (("pos", True), ("neg", False)):
            texts = [r.text for r in recs if r.correct is flag]
            if texts:
                vectors = [task.item(qid, task.text_index(qid, t)).vector for t in texts]
                side_values[f"distinct_n_{side}"][qid] = distinct_n(texts)
                side_values[f"embed_diversity_{side}"][qid] = embed_diversity(vectors)
            else:
                side_values[f"distinct_n_{side}"][qid] = None
                side_values[f"embed_diversity_{side}"][qid] = None
    row: dict[str, float] = {
        "at_1": report.at_1,
        "at_k": report.at_k,
        "distinct_responses": float(np.mean(distinct_counts)),
    }
    for name, per_question in side_values.items():
        agg = aggregate_pool_metric(per_question)
        row[name] = float("nan") if agg.mean is None else agg.mean
    return row


def _build_iteration_pairs(
    task: SyntheticTask,
    mode: str,
    pools: PoolSet,
    store: EmbeddingStore,
    t: int,
    p: int,
    seed: int,
    forest_config: ForestConfig,
    selection_config: SelectionConfig,
):
    pairs = []
    for qid in task.question_ids:
        qpools = pools.questions.get(qid)
        if qpools is None:
            continue
        if mode == "vanilla":
            if not qpools.positives or not qpools.negatives:
                continue
            sel_pos = vanilla_select(
                [(rec, None) for rec in qpools.positives],
                p,
                seed=derive_int(seed, "vanilla", t, qid, "pos"),
            )
            sel_neg = vanilla_select(
                [(rec, None) for rec in qpools.negatives],
                p,
                seed=derive_int(seed, "vanilla", t, qid, "neg"),
            )
        else:
            fc = ForestConfig(
                n_trees=forest_config.n_trees,
                subsample=forest_config.subsample,
                contamination=forest_config.contamination,
                seed=derive_int(seed, "forest", t),
            )
            sc = SelectionConfig(
                pairs_per_question=p,
                objective=selection_config.objective,
                seed=derive_int(seed, "select", t),
                dedup=selection_config.dedup,
            )
            sel_pos, sel_neg = curate_question(qid, qpools, store, fc, sc)
        pairs.extend(build_pairs(sel_pos, sel_neg, p, iteration_built=t + 1))
    return pairs


def run_isi(
    task: SyntheticTask,
    mode: str,
    k: int = 10,
    p: int = 5,
    iterations: int = 6,
    seed: int = 7,
    loss_config: PrefLossConfig | None = None,
    forest_config: ForestConfig | None = None,
    selection_config: SelectionConfig | None = None,
    global_pools: bool = True,
    init_scale: float = INIT_LOGIT_SCALE,
    temperature: float = 0.7,
    top_p: float = 0.95,
) -> SimTrace:
    """Run one iterative self-improvement loop and return its trace.

    Trace row t measures K samples per question drawn from the policy
    after t training iterations; for t < iterations those same samples
    (tagged iteration t+1) feed the next round of pair construction and
    training. Mode "vanilla" selects uniformly from the current
    iteration's pools; mode "dive" merges all pools so far (unless
    ``global_pools`` is off), outlier-filters each side, and greedy-selects
    for diversity. Each iteration trains one epoch over every pair
    constructed so far (the training set accumulates across iterations),
    with the reference model re-snapshotted before the gradient steps.
    """
    if mode not in MODES:
        raise SimulationError(f"mode must be one of {MODES}")
    if iterations < 1:
        raise SimulationError("iterations must be >= 1")
    if k < 1 or p < 1:
        raise SimulationError("k and p must be >= 1")
    loss_config = loss_config if loss_config is not None else PrefLossConfig()
    forest_config = forest_config if forest_config is not None else ForestConfig()
    selection_config = (
        selection_config
        if selection_config is not None
        else SelectionConfig(pairs_per_question=p)
    )
    policy = ToyPolicy.initial(
        task, seed, scale=init_scale, temperature=temperature, top_p=top_p
    )
    store = EmbeddingStore(dim=task.dim)
    for qid in task.question_ids:
        for item in task.universe(qid):
            store.put(qid, text_hash(item.text), item.vector)
    uniforms = {
        qid: derive_rng(seed, "sample", qid).random(k) for qid in task.question_ids
    }
    pool_history: list[PoolSet] = []
    training_pairs: list[IndexPair] = []
    rows: list[dict[str, float]] = []
    for t in range(iterations + 1):
        samples: dict[str, list[ResponseRecord]] = {}
        for qid in task.question_ids:
            picks = sample_indices(policy, qid, uniforms[qid])
            samples[qid] = [
                ResponseRecord(
                    question_id=qid,
                    iteration=t + 1,
                    sample_index=j,
                    text=task.item(qid, int(u)).text,
                    final_answer=task.item(qid, int(u)).answer,
                    correct=task.item(qid, int(u)).correct,
                )
                for j, u in enumerate(picks)
            ]
        row = _measure(task, samples, k)
        if t == iterations:
            row["n_pairs"] = float("nan")
            row["pair_source_iterations"] = float("nan")
            rows.append(row)
            break
        current = partition([rec for recs in samples.values() for rec in recs])
        if mode == "dive" and global_pools:
            pool_history.append(current)
            pools = merge_global(pool_history) if len(pool_history) > 1 else current
        else:
            pools = current
        pairs = _build_iteration_pairs(
            task, mode, pools, store, t, p, seed, forest_config, selection_config
        )
        row["n_pairs"] = float(len(pairs))
        tags = set()
        for pair in pairs:
            tags.add(pair.chosen.iteration)
            tags.add(pair.rejected.iteration)
        row["pair_source_iterations"] = float(len(tags))
        rows.append(row)
        training_pairs.extend(
            IndexPair(
                question_id=pair.question_id,
                chosen=task.text_index(pair.question_id, pair.chosen.text),
                rejected=task.text_index(pair.question_id, pair.rejected.text),
            )
            for pair in pairs
        )
        reference = policy.snapshot()
        for epoch in range(loss_config.epochs):
            order = derive_rng(seed, "shuffle", t, epoch).permutation(
                len(training_pairs)
            )
            for pi in order:
                pair = training_pairs[int(pi)]
                grad = pref_loss_grad(task, policy, reference, pair, loss_config)
                policy.logits[pair.question_id] = (
                    policy.logits[pair.question_id] - loss_config.lr * grad
                )
        for qid in task.question_ids:
            if not np.all(np.isfinite(policy.logits[qid])):
                raise SimulationError(
                    f"non-finite logits for question {qid} after iteration {t + 1}"
                )
    return SimTrace(mode=mode, k=k, p=p, iterations=iterations, seed=seed, rows=rows)


def run_compare(task: SyntheticTask, **kwargs) -> tuple[SimTrace, SimTrace]:
    """Run both modes on the identical task and seeds."""
    vanilla = run_isi(task, "vanilla", **kwargs)
    dive = run_isi(task, "dive", **kwargs)
    return vanilla, dive


def compare_csv_lines(vanilla: SimTrace, dive: SimTrace) -> list[str]:
    """Side-by-side long-format CSV of two traces over the same grid."""
    if len(vanilla.rows) != len(dive.rows):
        raise SimulationError("traces cover different iteration counts")
    lines = ["iteration,metric,vanilla,dive"]
    for t in range(len(vanilla.rows)):
        for metric in TRACE_METRICS:
            lines.append(
                f"{t},{metric},{_fmt(vanilla.rows[t][metric])},{_fmt(dive.rows[t][metric])}"
            )
    return lines

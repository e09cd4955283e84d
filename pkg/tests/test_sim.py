"""Toy policy, preference losses, gradients, and the self-improvement loop."""

import math

import numpy as np
import pytest

from prefdiv.sim import (
    TRACE_METRICS,
    IndexPair,
    PrefLossConfig,
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

MEASURED = (
    "at_1",
    "at_k",
    "distinct_responses",
    "distinct_n_pos",
    "distinct_n_neg",
    "embed_diversity_pos",
    "embed_diversity_neg",
)


def handmade_task():
    """Two-item universe with known token counts (3 and 4)."""
    items = [
        UniverseItem(
            text="a b c",
            correct=True,
            vector=np.array([1.0, 0.0]),
            answer="1",
            base_logit=0.0,
        ),
        UniverseItem(
            text="d e f g",
            correct=False,
            vector=np.array([0.0, 1.0]),
            answer="2",
            base_logit=0.0,
        ),
    ]
    return SyntheticTask(question_ids=["q1"], universes={"q1": items}, dim=2, seed=0)


def five_item_task():
    """Five-item universe with mixed token counts for gradient checks."""
    texts = ["w1", "w1 w2", "w1 w2 w3", "a b", "c"]
    items = [
        UniverseItem(
            text=texts[j],
            correct=j < 2,
            vector=np.eye(5)[j],
            answer=str(j),
            base_logit=0.0,
        )
        for j in range(5)
    ]
    return SyntheticTask(question_ids=["q1"], universes={"q1": items}, dim=5, seed=0)


def policy_from(theta, **kwargs):
    return ToyPolicy(logits={"q1": np.asarray(theta, dtype=np.float64)}, **kwargs)


class TestMakeTask:
    def test_shapes_and_flags(self):
        task = make_task(n_questions=6, universe=12, n_correct=4, dim=16, seed=7)
        assert len(task.question_ids) == 6
        for qid in task.question_ids:
            items = task.universe(qid)
            assert len(items) == 12
            assert sum(it.correct for it in items) == 4
            assert len({it.text for it in items}) == 12
            assert all(it.vector.shape == (16,) for it in items)

    def test_correct_items_share_the_answer(self):
        task = make_task(n_questions=3, universe=8, n_correct=3, dim=4, seed=1)
        for qid in task.question_ids:
            items = task.universe(qid)
            golds = {it.answer for it in items if it.correct}
            wrongs = {it.answer for it in items if not it.correct}
            assert len(golds) == 1
            assert len(wrongs) == 5
            assert not golds & wrongs

    def test_texts_carry_their_answer(self):
        task = make_task(n_questions=2, universe=6, n_correct=2, dim=4, seed=2)
        for qid in task.question_ids:
            for item in task.universe(qid):
                assert item.text.endswith(f"={item.answer}>>")

    def test_correct_items_rank_above_plausible_wrong_ones(self):
        task = make_task(n_questions=2, universe=12, n_correct=4, dim=4, seed=3)
        for qid in task.question_ids:
            items = task.universe(qid)
            worst_correct = min(it.base_logit for it in items if it.correct)
            best_wrong = max(it.base_logit for it in items if not it.correct)
            assert worst_correct > best_wrong

    def test_deterministic(self):
        a = make_task(n_questions=2, universe=6, n_correct=2, dim=4, seed=9)
        b = make_task(n_questions=2, universe=6, n_correct=2, dim=4, seed=9)
        for qid in a.question_ids:
            for ia, ib in zip(a.universe(qid), b.universe(qid)):
                assert ia.text == ib.text
                assert np.array_equal(ia.vector, ib.vector)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n_questions": 0},
            {"universe": 1},
            {"n_correct": 0},
            {"n_correct": 12},
            {"dim": 1},
        ],
    )
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(SimulationError):
            make_task(**{"n_questions": 2, "universe": 12, "n_correct": 4, "dim": 4, **kwargs})


class TestToyPolicy:
    def test_uniform_logprobs(self):
        policy = policy_from(np.zeros(4))
        assert policy_logprob(policy, "q1", 2) == pytest.approx(
            -1.3862943611198906, abs=1e-9
        )

    def test_peaked_logprob(self):
        policy = policy_from([1.0, 0.0, 0.0])
        want = 1.0 - math.log(math.e + 2.0)
        assert policy_logprob(policy, "q1", 0) == pytest.approx(want, abs=1e-12)
        assert policy_logprob(policy, "q1", 0) == pytest.approx(-0.5514, abs=1e-4)

    def test_logprobs_normalize(self):
        policy = policy_from([3.0, -1.0, 0.5, 2.0])
        assert np.exp(policy.logprobs("q1")).sum() == pytest.approx(1.0, abs=1e-12)

    def test_unknown_question_is_an_error(self):
        with pytest.raises(SimulationError, match="unknown question"):
            policy_logprob(policy_from([0.0, 0.0]), "q9", 0)

    def test_out_of_range_index_is_an_error(self):
        with pytest.raises(SimulationError, match="out of range"):
            policy_logprob(policy_from([0.0, 0.0]), "q1", 5)

    def test_non_finite_logits_are_rejected(self):
        with pytest.raises(SimulationError, match="non-finite"):
            policy_from([0.0, float("nan")])

    @pytest.mark.parametrize("kwargs", [{"temperature": 0.0}, {"top_p": 0.0}, {"top_p": 1.2}])
    def test_invalid_sampling_parameters(self, kwargs):
        with pytest.raises(SimulationError):
            policy_from([0.0, 0.0], **kwargs)

    def test_snapshot_is_frozen(self):
        policy = policy_from([1.0, 2.0])
        ref = policy.snapshot()
        policy.logits["q1"][0] = 50.0
        assert ref.logits["q1"][0] == 1.0


class TestSamplingProbs:
    def test_sums_to_one_and_truncates_the_tail(self):
        policy = policy_from([5.0, 0.0, -1.0, -2.0], temperature=0.7, top_p=0.95)
        p = policy.sampling_probs("q1")
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert p[0] == 1.0
        assert np.all(p[1:] == 0.0)

    def test_full_support_when_top_p_is_one(self):
        policy = policy_from([1.0, 0.0, -1.0], temperature=1.0, top_p=1.0)
        p = policy.sampling_probs("q1")
        assert np.all(p > 0.0)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_nucleus_keeps_lowest_indices_on_ties(self):
        policy = policy_from(np.zeros(4), temperature=1.0, top_p=0.5)
        p = policy.sampling_probs("q1")
        assert np.allclose(p, [0.5, 0.5, 0.0, 0.0])

    def test_sums_to_one_for_random_logits(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            policy = policy_from(rng.normal(0.0, 2.0, size=8), temperature=0.7, top_p=0.95)
            p = policy.sampling_probs("q1")
            assert p.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(p >= 0.0)

    def test_temperature_sharpens_the_distribution(self):
        hot = policy_from([1.0, 0.0], temperature=2.0, top_p=1.0).sampling_probs("q1")
        cold = policy_from([1.0, 0.0], temperature=0.25, top_p=1.0).sampling_probs("q1")
        assert cold[0] > hot[0]


class TestSampleIndices:
    def test_inverse_cdf_on_known_probabilities(self):
        policy = policy_from(np.log([0.2, 0.3, 0.5]), temperature=1.0, top_p=1.0)
        uniforms = np.array([0.05, 0.15, 0.25, 0.45, 0.55, 0.95])
        got = sample_indices(policy, "q1", uniforms)
        assert got.tolist() == [0, 0, 1, 1, 2, 2]

    def test_draw_at_one_is_clamped_into_range(self):
        policy = policy_from(np.log([0.5, 0.5]), temperature=1.0, top_p=1.0)
        got = sample_indices(policy, "q1", np.array([1.0 - 1e-12, 1.0]))
        assert got.tolist() == [1, 1]


class TestLosses:
    def test_dpo_at_the_reference_point_is_ln2(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            policy = policy_from(rng.normal(0.0, 2.0, size=6))
            pair = IndexPair(question_id="q1", chosen=0, rejected=3)
            got = dpo_loss(policy, policy.snapshot(), pair, beta=0.4)
            assert got == pytest.approx(math.log(2.0), abs=1e-9)

    def test_dpo_with_known_probability_ratios(self):
        reference = policy_from([0.0, 0.0, 0.0, 0.0])
        policy = policy_from([math.log(2.0), -math.log(2.0), 0.0, 0.0])
        pair = IndexPair(question_id="q1", chosen=0, rejected=1)
        want = float(np.logaddexp(0.0, -0.4 * math.log(4.0)))
        got = dpo_loss(policy, reference, pair, beta=0.4)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.4539, abs=1e-3)

    def test_dpo_vanishes_for_a_huge_margin(self):
        reference = policy_from([0.0, 0.0])
        policy = policy_from([50.0, -50.0])
        pair = IndexPair(question_id="q1", chosen=0, rejected=1)
        assert dpo_loss(policy, reference, pair, beta=0.4) < 1e-8

    def test_dpo_grows_for_a_reversed_margin(self):
        reference = policy_from([0.0, 0.0])
        policy = policy_from([-5.0, 5.0])
        pair = IndexPair(question_id="q1", chosen=0, rejected=1)
        assert dpo_loss(policy, reference, pair, beta=0.4) > math.log(2.0)

    def test_nll_divides_by_token_count(self):
        task = handmade_task()
        p0 = math.exp(-3.0)
        policy = policy_from([math.log(p0), math.log(1.0 - p0)])
        assert nll_loss(task, policy, "q1", 0) == pytest.approx(1.0, abs=1e-9)

    def test_nll_of_a_certain_response_is_zero(self):
        task = handmade_task()
        policy = policy_from([0.0, -800.0])
        assert nll_loss(task, policy, "q1", 0) == pytest.approx(0.0, abs=1e-12)

    def test_nll_with_four_tokens(self):
        task = handmade_task()
        p1 = math.exp(-2.0)
        policy = policy_from([math.log(1.0 - p1), math.log(p1)])
        assert nll_loss(task, policy, "q1", 1) == pytest.approx(0.5, abs=1e-9)

    def test_pref_loss_interpolates(self):
        task = handmade_task()
        p0 = math.exp(-3.0)
        policy = policy_from([math.log(p0), math.log(1.0 - p0)])
        reference = policy.snapshot()
        pair = IndexPair(question_id="q1", chosen=0, rejected=1)
        nll_only = pref_loss(task, policy, reference, pair, PrefLossConfig(alpha=0.0))
        dpo_only = pref_loss(task, policy, reference, pair, PrefLossConfig(alpha=1.0))
        assert nll_only == pytest.approx(1.0, abs=1e-9)
        assert dpo_only == pytest.approx(math.log(2.0), abs=1e-9)
        mixed = pref_loss(task, policy, reference, pair, PrefLossConfig(alpha=0.5))
        assert mixed == pytest.approx(0.8466, abs=1e-4)
        assert mixed == pytest.approx(0.5 * dpo_only + 0.5 * nll_only, abs=1e-12)

    @pytest.mark.parametrize(
        "kwargs",
        [{"alpha": -0.1}, {"alpha": 1.1}, {"beta": 0.0}, {"lr": -0.01}, {"epochs": 0}],
    )
    def test_invalid_loss_config(self, kwargs):
        with pytest.raises(SimulationError):
            PrefLossConfig(**kwargs)


class TestPrefLossGrad:
    def finite_difference(self, task, theta, reference, pair, config, h=1e-5):
        fd = np.zeros_like(theta)
        for i in range(theta.size):
            plus = theta.copy()
            plus[i] += h
            minus = theta.copy()
            minus[i] -= h
            loss_plus = pref_loss(task, policy_from(plus), reference, pair, config)
            loss_minus = pref_loss(task, policy_from(minus), reference, pair, config)
            fd[i] = (loss_plus - loss_minus) / (2.0 * h)
        return fd

    def test_matches_central_finite_differences(self):
        task = five_item_task()
        rng = np.random.default_rng(12)
        for _ in range(25):
            theta = rng.normal(0.0, 1.5, size=5)
            reference = policy_from(rng.normal(0.0, 1.5, size=5))
            pair = IndexPair(
                question_id="q1",
                chosen=int(rng.integers(0, 2)),
                rejected=int(rng.integers(2, 5)),
            )
            config = PrefLossConfig(alpha=float(rng.uniform(0.0, 1.0)), beta=0.4)
            grad = pref_loss_grad(task, policy_from(theta), reference, pair, config)
            fd = self.finite_difference(task, theta, reference, pair, config)
            assert np.allclose(grad, fd, rtol=1e-4, atol=1e-6)

    def test_components_sum_to_zero(self):
        task = five_item_task()
        rng = np.random.default_rng(13)
        for _ in range(10):
            policy = policy_from(rng.normal(0.0, 1.5, size=5))
            reference = policy_from(rng.normal(0.0, 1.5, size=5))
            pair = IndexPair(question_id="q1", chosen=0, rejected=4)
            grad = pref_loss_grad(task, policy, reference, pair, PrefLossConfig())
            assert grad.sum() == pytest.approx(0.0, abs=1e-12)

    def test_one_gradient_step_reduces_the_pair_loss(self):
        task = five_item_task()
        rng = np.random.default_rng(14)
        for _ in range(20):
            theta = rng.normal(0.0, 1.5, size=5)
            reference = policy_from(rng.normal(0.0, 1.5, size=5))
            pair = IndexPair(
                question_id="q1",
                chosen=int(rng.integers(0, 2)),
                rejected=int(rng.integers(2, 5)),
            )
            config = PrefLossConfig(alpha=0.5, beta=0.4)
            policy = policy_from(theta)
            before = pref_loss(task, policy, reference, pair, config)
            grad = pref_loss_grad(task, policy, reference, pair, config)
            stepped = policy_from(theta - 1e-3 * grad)
            after = pref_loss(task, stepped, reference, pair, config)
            assert after < before

    def test_chosen_probability_rises_under_training(self):
        task = five_item_task()
        theta = np.zeros(5)
        reference = policy_from(theta.copy())
        pair = IndexPair(question_id="q1", chosen=0, rejected=2)
        policy = policy_from(theta.copy())
        config = PrefLossConfig(alpha=0.5, beta=0.4, lr=0.1)
        for _ in range(50):
            grad = pref_loss_grad(task, policy, reference, pair, config)
            policy.logits["q1"] = policy.logits["q1"] - config.lr * grad
        pi = np.exp(policy.logprobs("q1"))
        assert pi[0] > 0.2
        assert pi[2] < 0.2


class TestRunIsi:
    def test_frozen_policy_repeats_its_measurements(self):
        task = make_task(n_questions=6, universe=8, n_correct=3, dim=4, seed=11)
        trace = run_isi(task, "vanilla", k=6, p=3, iterations=1, seed=11,
                        loss_config=PrefLossConfig(lr=0.0))
        assert len(trace.rows) == 2
        for metric in MEASURED:
            assert trace.rows[0][metric] == trace.rows[1][metric]

    def test_trace_is_reproducible(self):
        task = make_task(n_questions=5, universe=8, n_correct=3, dim=4, seed=3)
        a = run_isi(task, "dive", k=5, p=3, iterations=2, seed=3)
        b = run_isi(task, "dive", k=5, p=3, iterations=2, seed=3)
        assert a.csv_lines() == b.csv_lines()

    def test_row_count_and_final_row_has_no_pair_metrics(self):
        task = make_task(n_questions=4, universe=8, n_correct=3, dim=4, seed=5)
        trace = run_isi(task, "vanilla", k=4, p=2, iterations=2, seed=5)
        assert len(trace.rows) == 3
        for t in range(2):
            assert math.isfinite(trace.rows[t]["n_pairs"])
        assert math.isnan(trace.rows[2]["n_pairs"])
        assert math.isnan(trace.rows[2]["pair_source_iterations"])

    def test_csv_shape_and_header(self):
        task = make_task(n_questions=4, universe=8, n_correct=3, dim=4, seed=5)
        trace = run_isi(task, "vanilla", k=4, p=2, iterations=2, seed=5)
        lines = trace.csv_lines()
        assert lines[0] == "iteration,metric,value"
        assert len(lines) == 1 + 3 * len(TRACE_METRICS)
        first = lines[1].split(",")
        assert first[0] == "0"
        assert first[1] == "at_1"

    def test_modes_share_the_iteration_zero_row(self):
        task = make_task(n_questions=6, universe=8, n_correct=3, dim=4, seed=9)
        vanilla, dive = run_compare(task, k=5, p=3, iterations=1, seed=9)
        for metric in MEASURED:
            assert vanilla.rows[0][metric] == dive.rows[0][metric]

    def test_compare_csv_pairs_both_modes(self):
        task = make_task(n_questions=4, universe=8, n_correct=3, dim=4, seed=9)
        vanilla, dive = run_compare(task, k=4, p=2, iterations=1, seed=9)
        lines = compare_csv_lines(vanilla, dive)
        assert lines[0] == "iteration,metric,vanilla,dive"
        assert len(lines) == 1 + 2 * len(TRACE_METRICS)

    def test_compare_rejects_mismatched_traces(self):
        task = make_task(n_questions=4, universe=8, n_correct=3, dim=4, seed=9)
        one = run_isi(task, "vanilla", k=4, p=2, iterations=1, seed=9)
        two = run_isi(task, "dive", k=4, p=2, iterations=2, seed=9)
        with pytest.raises(SimulationError):
            compare_csv_lines(one, two)

    def test_dive_pairs_span_earlier_iterations(self):
        # A small universe with many draws per round resamples texts seen
        # in round one, and dedup collapses those onto their earliest tag,
        # so the span only grows once later rounds surface new texts. The
        # default task has enough headroom for that by round two.
        task = make_task()
        trace = run_isi(task, "dive", iterations=2, seed=7)
        spans = [trace.rows[t]["pair_source_iterations"] for t in range(2)]
        assert spans[0] == 1.0
        assert spans[1] == 2.0

    def test_local_pools_keep_single_iteration_sources(self):
        task = make_task(n_questions=8, universe=8, n_correct=3, dim=4, seed=13)
        trace = run_isi(task, "dive", k=6, p=3, iterations=3, seed=13, global_pools=False)
        for t in range(3):
            assert trace.rows[t]["pair_source_iterations"] == 1.0

    def test_vanilla_pairs_always_come_from_the_current_round(self):
        task = make_task(n_questions=6, universe=8, n_correct=3, dim=4, seed=13)
        trace = run_isi(task, "vanilla", k=6, p=3, iterations=3, seed=13)
        for t in range(3):
            assert trace.rows[t]["pair_source_iterations"] == 1.0

    @pytest.mark.parametrize(
        "kwargs",
        [{"mode": "greedy"}, {"iterations": 0}, {"k": 0}, {"p": 0}],
    )
    def test_invalid_run_parameters(self, kwargs):
        task = make_task(n_questions=2, universe=6, n_correct=2, dim=4, seed=1)
        args = {"mode": "vanilla", "k": 3, "p": 2, "iterations": 1, "seed": 1}
        args.update(kwargs)
        with pytest.raises(SimulationError):
            run_isi(task, **args)

    def test_metrics_are_finite_and_bounded(self):
        task = make_task(n_questions=6, universe=8, n_correct=3, dim=4, seed=21)
        trace = run_isi(task, "dive", k=5, p=3, iterations=2, seed=21)
        for row in trace.rows:
            assert 0.0 <= row["at_1"] <= 1.0
            assert row["at_1"] <= row["at_k"] <= 1.0
            assert 1.0 <= row["distinct_responses"] <= 8.0

"""Command-line interface wiring the curation pipeline and the simulator.

One executable with subcommands for each pipeline stage (judge, embed,
filter, select, pairs), the end-to-end curate flow, measurement (metrics,
difficulty), the iterative-self-improvement simulator, and report
rendering. A JSON config file can preload any subcommand's flags;
explicit command-line flags win. All outputs are byte-stable given
identical inputs and flags.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import sim
from .corpus import (
    PoolSet,
    load_gold,
    load_responses,
    judge,
    merge_global,
    partition,
    write_responses,
)
from .embed import (
    EmbeddingStore,
    hashed_ngram_embed,
    load_embeddings,
    text_hash,
    write_embeddings,
)
from .forest import ForestConfig, filter_pool
from .metrics import (
    accuracy_at,
    aggregate_pool_metric,
    difficulty_level,
    distinct_answers,
    distinct_equation_chains,
    distinct_n,
    embed_diversity,
)
from .seeding import derive_int
from .select import SelectionConfig, build_pairs, greedy_select
from .sim import PrefLossConfig, SimulationError, compare_csv_lines, make_task, run_isi

_OBJECTIVE_ALIASES = {
    "embed": "embed_diversity",
    "embed_diversity": "embed_diversity",
    "distinct_n": "distinct_n",
    "distinct-n": "distinct_n",
}

_SIDE_METRICS = ("distinct_n", "embed_diversity", "equation_chains", "distinct_answers")


def _fmt(value: float) -> str:
    return format(float(value), ".12g")


def _write_lines(path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_pool_file(path) -> list:
    p = Path(path)
    if p.is_dir():
        p = p / "responses.jsonl"
    return load_responses(p)


def _require_vectors(store: EmbeddingStore, records) -> None:
    """Error out early when any response lacks an embedding, listing up to
    10 missing (question_id, text_hash) keys."""
    missing = sorted(
        {(r.question_id, text_hash(r.text)) for r in records if not store.has(r.question_id, r.text)}
    )
    if missing:
        shown = ", ".join(f"({q}, {h[:12]}…)" for q, h in missing[:10])
        extra = f" and {len(missing) - 10} more" if len(missing) > 10 else ""
        raise ValueError(f"missing embeddings for {len(missing)} response keys: {shown}{extra}")


def _derived_forest_config(args, qid: str, side: str) -> ForestConfig:
    return ForestConfig(
        n_trees=args.trees,
        subsample=args.subsample,
        contamination=args.contamination,
        seed=derive_int(args.seed, "filter", qid, side),
    )


def _pair_to_dict(pair) -> dict:
    return {
        "question_id": pair.question_id,
        "chosen": pair.chosen.to_dict(),
        "rejected": pair.rejected.to_dict(),
        "iteration_built": pair.iteration_built,
    }


# ---------------------------------------------------------------------------
# subcommands


def cmd_judge(args) -> int:
    gold = load_gold(args.gold)
    records = load_responses(args.responses)
    judged = judge(records, gold)
    write_responses(args.out, judged)
    n_true = sum(1 for r in judged if r.correct is True)
    n_false = sum(1 for r in judged if r.correct is False)
    n_und = len(judged) - n_true - n_false
    print(f"judged {len(judged)} records: {n_true} correct, {n_false} incorrect, {n_und} undetermined")
    return 0


def cmd_embed(args) -> int:
    records = load_responses(args.responses)
    seen: set[tuple[str, str]] = set()
    rows = []
    for rec in records:
        key = (rec.question_id, text_hash(rec.text))
        if key in seen:
            continue
        seen.add(key)
        rows.append((rec.question_id, key[1], hashed_ngram_embed(rec.text, args.dim)))
    write_embeddings(args.out, rows)
    print(f"wrote {len(rows)} embeddings (dim {args.dim}) to {args.out}")
    return 0


def cmd_filter(args) -> int:
    records = load_responses(args.responses)
    store = load_embeddings(args.embeddings)
    pools = partition(records)
    _require_vectors(store, [r for qp in pools.questions.values() for r in qp.positives + qp.negatives])
    kept, removed = [], []
    for qid in sorted(pools.questions):
        qp = pools.questions[qid]
        for side, recs in (("pos", qp.positives), ("neg", qp.negatives)):
            if not recs:
                continue
            pool = [(r, store.vector_for(qid, r.text)) for r in recs]
            k, r = filter_pool(pool, _derived_forest_config(args, qid, side))
            kept.extend(rec for rec, _ in k)
            removed.extend(rec for rec, _ in r)
        kept.extend(qp.undetermined)
    write_responses(args.kept, kept)
    write_responses(args.removed, removed)
    print(f"kept {len(kept)}, removed {len(removed)} (contamination {args.contamination})")
    return 0


def _selection_rows(pools: PoolSet, store, args) -> list[dict]:
    """Greedy-select each side of each question; rows keep pick order."""
    objective = _OBJECTIVE_ALIASES[args.objective]
    rows = []
    for qid in sorted(pools.questions):
        qp = pools.questions[qid]
        for side, recs in (("pos", qp.positives), ("neg", qp.negatives)):
            if not recs:
                continue
            pool = [(r, store.vector_for(qid, r.text)) for r in recs]
            picked = greedy_select(
                pool,
                args.pairs_per_question,
                objective=objective,
                seed=derive_int(args.seed, "select", qid, side),
                dedup=args.dedup,
            )
            for i, rec in enumerate(picked):
                rows.append(
                    {"question_id": qid, "side": side, "pick_index": i, "record": rec.to_dict()}
                )
    return rows


def cmd_select(args) -> int:
    poolsets = [partition(_load_pool_file(p)) for p in args.pools]
    merged = merge_global(poolsets) if len(poolsets) > 1 else poolsets[0]
    store = load_embeddings(args.embeddings)
    _require_vectors(
        store, [r for qp in merged.questions.values() for r in qp.positives + qp.negatives]
    )
    rows = _selection_rows(merged, store, args)
    _write_lines(args.out, [json.dumps(row, ensure_ascii=False) for row in rows])
    print(f"selected {len(rows)} responses over {len(merged.questions)} questions")
    return 0


def cmd_pairs(args) -> int:
    from .corpus import ResponseRecord

    by_question: dict[str, dict[str, list]] = {}
    max_iteration = 1
    with open(args.selected, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rec = ResponseRecord.from_dict(row["record"])
                side = row["side"]
                pick = int(row["pick_index"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{args.selected}: malformed selection line {lineno}: {exc}")
            by_question.setdefault(rec.question_id, {"pos": [], "neg": []})[side].append((pick, rec))
            max_iteration = max(max_iteration, rec.iteration)
    iteration_built = args.iteration if args.iteration is not None else max_iteration
    lines = []
    total = 0
    for qid in sorted(by_question):
        sides = by_question[qid]
        pos = [rec for _, rec in sorted(sides["pos"], key=lambda pr: pr[0])]
        neg = [rec for _, rec in sorted(sides["neg"], key=lambda pr: pr[0])]
        pairs = build_pairs(pos, neg, args.pairs_per_question, iteration_built=iteration_built)
        total += len(pairs)
        lines.extend(json.dumps(_pair_to_dict(p), ensure_ascii=False) for p in pairs)
    _write_lines(args.out, lines)
    print(f"built {total} pairs over {len(by_question)} questions")
    return 0


def cmd_curate(args) -> int:
    if len(args.responses) > 1 and not args.global_pools:
        raise ValueError("multiple response files require --global")
    gold = load_gold(args.gold)
    poolsets = []
    for path in args.responses:
        judged = judge(_load_pool_file(path), gold)
        poolsets.append(partition(judged))
    merged = merge_global(poolsets) if len(poolsets) > 1 else poolsets[0]
    store = load_embeddings(args.embeddings)
    all_records = [r for qp in merged.questions.values() for r in qp.all_records()]
    _require_vectors(store, [r for r in all_records if r.correct is not None])
    os.makedirs(args.outdir, exist_ok=True)
    iteration_built = max(merged.iterations) if merged.iterations else 1
    objective = _OBJECTIVE_ALIASES[args.objective]

    kept_all, removed_all, selected_rows, pair_lines, summary = [], [], [], [], []
    total_pairs = 0
    for qid in sorted(merged.questions):
        qp = merged.questions[qid]
        selected = {"pos": [], "neg": []}
        for side, recs in (("pos", qp.positives), ("neg", qp.negatives)):
            if not recs:
                continue
            pool = [(r, store.vector_for(qid, r.text)) for r in recs]
            kept, removed = filter_pool(pool, _derived_forest_config(args, qid, side))
            kept_all.extend(rec for rec, _ in kept)
            removed_all.extend(rec for rec, _ in removed)
            if kept:
                selected[side] = greedy_select(
                    kept,
                    args.pairs_per_question,
                    objective=objective,
                    seed=derive_int(args.seed, "select", qid, side),
                    dedup=args.dedup,
                )
        kept_all.extend(qp.undetermined)
        for side in ("pos", "neg"):
            for i, rec in enumerate(selected[side]):
                selected_rows.append(
                    {"question_id": qid, "side": side, "pick_index": i, "record": rec.to_dict()}
                )
        if not selected["pos"]:
            summary.append(f"{qid}: skipped (no correct responses)")
            continue
        if not selected["neg"]:
            summary.append(f"{qid}: skipped (no incorrect responses)")
            continue
        pairs = build_pairs(
            selected["pos"], selected["neg"], args.pairs_per_question, iteration_built=iteration_built
        )
        total_pairs += len(pairs)
        summary.append(f"{qid}: {len(pairs)} pairs")
        pair_lines.extend(json.dumps(_pair_to_dict(p), ensure_ascii=False) for p in pairs)

    outdir = Path(args.outdir)
    write_responses(outdir / "kept.jsonl", kept_all)
    write_responses(outdir / "removed.jsonl", removed_all)
    _write_lines(outdir / "selected.jsonl", [json.dumps(r, ensure_ascii=False) for r in selected_rows])
    _write_lines(outdir / "pairs.jsonl", pair_lines)
    summary.append(
        f"total: {total_pairs} pairs, {len(merged.questions)} questions, "
        f"{len(removed_all)} filtered out"
    )
    _write_lines(outdir / "summary.txt", summary)
    print("\n".join(summary))
    return 0


def _metric_value_per_question(recs, vectors_for, metric: str) -> float | None:
    texts = [r.text for r in recs]
    if not texts:
        return None
    if metric == "distinct_n":
        return distinct_n(texts)
    if metric == "embed_diversity":
        return embed_diversity(vectors_for(recs))
    if metric == "equation_chains":
        return float(distinct_equation_chains(texts))
    return float(distinct_answers([r.final_answer for r in recs]))


def cmd_metrics(args) -> int:
    records = load_responses(args.pool)
    if not records:
        raise ValueError(f"{args.pool}: empty pool")
    store = load_embeddings(args.embeddings)
    _require_vectors(store, [r for r in records if r.correct is not None])
    rows: list[tuple[int, str, str, float]] = []
    table: dict[int, dict[str, float]] = {}
    for iteration in sorted({r.iteration for r in records}):
        recs_it = [r for r in records if r.iteration == iteration]
        by_q: dict[str, list] = {}
        for r in recs_it:
            by_q.setdefault(r.question_id, []).append(r)
        table_row: dict[str, float] = {}
        for side, flag in (("pos", True), ("neg", False)):
            side_by_q = {
                qid: [r for r in recs if r.correct is flag] for qid, recs in by_q.items()
            }
            vectors_for = lambda recs: [store.vector_for(r.question_id, r.text) for r in recs]
            for metric in _SIDE_METRICS:
                if args.aggregate == "corpus":
                    pooled = [r for recs in side_by_q.values() for r in recs]
                    value = _metric_value_per_question(pooled, vectors_for, metric)
                    value = float("nan") if value is None else value
                else:
                    per_q = {
                        qid: _metric_value_per_question(recs, vectors_for, metric)
                        for qid, recs in side_by_q.items()
                    }
                    agg = aggregate_pool_metric(per_q)
                    value = float("nan") if agg.mean is None else agg.mean
                rows.append((iteration, side, metric, value))
                table_row[f"{metric}_{side}"] = value
        report = accuracy_at(by_q, args.k)
        rows.append((iteration, "all", "at_1", report.at_1))
        rows.append((iteration, "all", f"at_{args.k}", report.at_k))
        table_row["at_1"] = report.at_1
        table_row["at_k"] = report.at_k
        table[iteration] = table_row
    csv_lines = ["iteration,pool,metric,value"]
    csv_lines += [f"{it},{pool},{metric},{_fmt(v)}" for it, pool, metric, v in rows]
    _write_lines(args.out, csv_lines)
    header = (
        f"| Iteration | Dis-N Pos | Dis-N Neg | Embed Pos | Embed Neg | @1 | @{args.k} |"
    )
    md = [header, "|" + "---|" * 7]
    for it in sorted(table):
        row = table[it]
        md.append(
            "| {it} | {dnp:.4f} | {dnn:.4f} | {edp:.4f} | {edn:.4f} | {a1:.4f} | {ak:.4f} |".format(
                it=it,
                dnp=row["distinct_n_pos"],
                dnn=row["distinct_n_neg"],
                edp=row["embed_diversity_pos"],
                edn=row["embed_diversity_neg"],
                a1=row["at_1"],
                ak=row["at_k"],
            )
        )
    print("\n".join(md))
    return 0


def cmd_difficulty(args) -> int:
    records = load_responses(args.pool)
    if not records:
        raise ValueError(f"{args.pool}: empty pool")
    by_q: dict[str, list] = {}
    for r in records:
        by_q.setdefault(r.question_id, []).append(r)
    lines = ["question_id,n_samples,correct_ratio,level"]
    level_counts = {level: 0 for level in range(1, 6)}
    for qid in sorted(by_q):
        recs = by_q[qid]
        ratio = sum(1 for r in recs if r.correct is True) / len(recs)
        level = difficulty_level(ratio)
        level_counts[level.level] += 1
        lines.append(f"{qid},{len(recs)},{_fmt(ratio)},{level.level}")
    _write_lines(args.out, lines)
    print(
        " ".join(f"level{level}={level_counts[level]}" for level in range(1, 6))
    )
    return 0


def cmd_simulate(args) -> int:
    task = make_task(
        n_questions=args.questions,
        universe=args.universe,
        n_correct=args.correct,
        dim=args.dim,
        seed=args.seed,
    )
    loss = PrefLossConfig(alpha=args.alpha, beta=args.beta, lr=args.lr, epochs=args.epochs)
    forest = ForestConfig(
        n_trees=args.trees, subsample=args.subsample, contamination=args.contamination
    )
    kwargs = dict(
        k=args.K,
        p=args.P,
        iterations=args.T,
        seed=args.seed,
        loss_config=loss,
        forest_config=forest,
        global_pools=args.global_pools,
        init_scale=args.init_scale,
        temperature=args.temperature,
        top_p=args.top_p,
    )
    if args.compare:
        vanilla, dive = (run_isi(task, m, **kwargs) for m in ("vanilla", "dive"))
        _write_lines(args.out, compare_csv_lines(vanilla, dive))
        summary = (
            f"final embed_diversity_pos: vanilla {vanilla.value(args.T, 'embed_diversity_pos'):.4f}, "
            f"dive {dive.value(args.T, 'embed_diversity_pos'):.4f}"
        )
    else:
        trace = run_isi(task, args.mode, **kwargs)
        _write_lines(args.out, trace.csv_lines())
        summary = (
            f"{args.mode}: embed_diversity_pos {trace.value(0, 'embed_diversity_pos'):.4f} -> "
            f"{trace.value(args.T, 'embed_diversity_pos'):.4f}, "
            f"at_1 {trace.value(args.T, 'at_1'):.4f}"
        )
    print(f"wrote {args.out}")
    print(summary)
    return 0


def _read_trace_csv(path) -> tuple[list[str], dict[tuple[int, str], float]]:
    """Read a long-format CSV; returns metric names in first-seen order and
    (iteration, metric) -> value. Accepts trace files (iteration,metric,
    value) and metric reports (iteration,pool,metric,value)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty input")
    header = lines[0].split(",")
    if header == ["iteration", "metric", "value"]:
        folded = False
    elif header == ["iteration", "pool", "metric", "value"]:
        folded = True
    else:
        raise ValueError(f"{path}: unrecognized header {lines[0]!r}")
    metrics_order: list[str] = []
    values: dict[tuple[int, str], float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise ValueError(f"{path}: malformed row at line {lineno}")
        if folded:
            it, pool, metric, value = parts
            name = f"{metric}_{pool}" if pool != "all" else metric
        else:
            it, metric, value = parts
            name = metric
        if name not in metrics_order:
            metrics_order.append(name)
        values[(int(it), name)] = float(value)
    return metrics_order, values


def cmd_report(args) -> int:
    labels = []
    for path in args.inputs:
        stem = Path(path).stem
        label = stem
        n = 2
        while label in labels:
            label = f"{stem}-{n}"
            n += 1
        labels.append(label)
    parsed = [_read_trace_csv(path) for path in args.inputs]
    base_metrics = set(parsed[0][0])
    for label, (order, _) in zip(labels[1:], parsed[1:]):
        if set(order) != base_metrics:
            only_first = sorted(base_metrics - set(order))
            only_this = sorted(set(order) - base_metrics)
            raise ValueError(
                f"metric sets differ: only in {labels[0]}: {only_first}; "
                f"only in {label}: {only_this}"
            )
    metric_order = parsed[0][0]
    iteration_sets = [sorted({it for it, _ in values}) for _, values in parsed]
    all_iterations = sorted({it for its in iteration_sets for it in its})
    csv_lines = ["iteration,metric," + ",".join(labels)]
    for it in all_iterations:
        for metric in metric_order:
            vals = [values.get((it, metric), float("nan")) for _, values in parsed]
            csv_lines.append(f"{it},{metric}," + ",".join(_fmt(v) for v in vals))
    if args.out:
        _write_lines(args.out, csv_lines)
    common = set(iteration_sets[0])
    for its in iteration_sets[1:]:
        common &= set(its)
    if not common:
        raise ValueError("inputs share no iteration")
    t_final = max(common)
    md = [
        "| run | " + " | ".join(metric_order) + " |",
        "|" + "---|" * (len(metric_order) + 1),
    ]
    columns = {
        metric: [values.get((t_final, metric), float("nan")) for _, values in parsed]
        for metric in metric_order
    }
    for i, label in enumerate(labels):
        cells = []
        for metric in metric_order:
            col = columns[metric]
            value = col[i]
            cell = f"{value:.4g}"
            if len(labels) > 1 and not math.isnan(value):
                finite = [(v, j) for j, v in enumerate(col) if not math.isnan(v)]
                ranked = sorted(finite, key=lambda vj: (-vj[0], vj[1]))
                if ranked and ranked[0][1] == i:
                    cell = f"*{cell}*"
                elif len(ranked) > 1 and ranked[1][1] == i:
                    cell = f"_{cell}_"
            cells.append(cell)
        md.append(f"| {label} | " + " | ".join(cells) + " |")
    md.append(f"(iteration {t_final}; * = column best, _ = second best)")
    print("\n".join(md))
    return 0


# ---------------------------------------------------------------------------
# parser plumbing


def _add_config_flag(sub) -> None:
    sub.add_argument("--config", default=None, help="JSON file preloading this subcommand's flags")


def _add_forest_flags(sub) -> None:
    sub.add_argument("--contamination", type=float, default=0.05)
    sub.add_argument("--trees", type=int, default=100)
    sub.add_argument("--subsample", type=int, default=256)


def _add_selection_flags(sub) -> None:
    sub.add_argument("--P", dest="pairs_per_question", type=int, default=5)
    sub.add_argument("--objective", choices=sorted(_OBJECTIVE_ALIASES), default="embed_diversity")
    sub.add_argument("--dedup", action=argparse.BooleanOptionalAction, default=True)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="prefdiv",
        description="Diversity-first curation of preference pairs, with a desk-scale "
        "iterative self-improvement simulator.",
    )
    subs = parser.add_subparsers(dest="cmd", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def register(name: str, func, help_text: str):
        sub = subs.add_parser(name, help=help_text)
        sub.set_defaults(func=func)
        _add_config_flag(sub)
        registry[name] = sub
        return sub

    sub = register("judge", cmd_judge, "attach extracted answers and correctness to responses")
    sub.add_argument("--gold", required=True)
    sub.add_argument("--responses", required=True)
    sub.add_argument("--out", required=True)

    sub = register("embed", cmd_embed, "compute hashed n-gram embeddings for responses")
    sub.add_argument("--responses", required=True)
    sub.add_argument("--dim", type=int, default=256)
    sub.add_argument("--out", required=True)

    sub = register("filter", cmd_filter, "remove outlier responses per question pool")
    sub.add_argument("--responses", required=True)
    sub.add_argument("--embeddings", required=True)
    _add_forest_flags(sub)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--kept", required=True)
    sub.add_argument("--removed", required=True)

    sub = register("select", cmd_select, "greedy diversity selection over pools")
    sub.add_argument("pools", nargs="+", help="responses files or directories (several merge globally)")
    sub.add_argument("--embeddings", required=True)
    _add_selection_flags(sub)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--global", dest="global_pools", action=argparse.BooleanOptionalAction, default=False)
    sub.add_argument("--out", required=True)

    sub = register("pairs", cmd_pairs, "pair selected responses into preference pairs")
    sub.add_argument("--selected", required=True)
    sub.add_argument("--P", dest="pairs_per_question", type=int, default=5)
    sub.add_argument("--iteration", type=int, default=None)
    sub.add_argument("--out", required=True)

    sub = register("curate", cmd_curate, "end-to-end judge, filter, select, and pair")
    sub.add_argument("--gold", required=True)
    sub.add_argument("--responses", nargs="+", required=True)
    sub.add_argument("--embeddings", required=True)
    _add_forest_flags(sub)
    _add_selection_flags(sub)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--global", dest="global_pools", action=argparse.BooleanOptionalAction, default=False)
    sub.add_argument("--outdir", required=True)

    sub = register("metrics", cmd_metrics, "diversity and accuracy metrics per iteration")
    sub.add_argument("--pool", required=True)
    sub.add_argument("--embeddings", required=True)
    sub.add_argument("--k", type=int, default=50)
    sub.add_argument("--aggregate", choices=("per-question", "corpus"), default="per-question")
    sub.add_argument("--out", required=True)

    sub = register("difficulty", cmd_difficulty, "bucket questions by correct ratio")
    sub.add_argument("--pool", required=True)
    sub.add_argument("--out", required=True)

    sub = register("simulate", cmd_simulate, "run the iterative self-improvement simulator")
    sub.add_argument("--mode", choices=sim.MODES, default="vanilla")
    sub.add_argument("--questions", type=int, default=40)
    sub.add_argument("--universe", type=int, default=12)
    sub.add_argument("--correct", type=int, default=4)
    sub.add_argument("--dim", type=int, default=16)
    sub.add_argument("--K", type=int, default=10)
    sub.add_argument("--P", type=int, default=5)
    sub.add_argument("--T", type=int, default=6)
    sub.add_argument("--alpha", type=float, default=0.5)
    sub.add_argument("--beta", type=float, default=0.4)
    sub.add_argument("--lr", type=float, default=0.05)
    sub.add_argument("--epochs", type=int, default=1)
    sub.add_argument("--temperature", type=float, default=0.7)
    sub.add_argument("--top-p", dest="top_p", type=float, default=0.95)
    sub.add_argument("--init-scale", dest="init_scale", type=float, default=sim.INIT_LOGIT_SCALE)
    _add_forest_flags(sub)
    sub.add_argument("--seed", type=int, default=7)
    sub.add_argument("--global", dest="global_pools", action=argparse.BooleanOptionalAction, default=True)
    sub.add_argument("--compare", action="store_true")
    sub.add_argument("--out", required=True)

    sub = register("report", cmd_report, "align traces/metric CSVs into a marked table")
    sub.add_argument("inputs", nargs="+")
    sub.add_argument("--out", default=None)

    return parser, registry


def _apply_config(args, argv: list[str], parser, registry) -> argparse.Namespace:
    """Reparse with the JSON config as subcommand defaults; explicit flags win."""
    with open(args.config, encoding="utf-8") as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{args.config}: invalid JSON: {exc}")
    if not isinstance(config, dict):
        raise ValueError(f"{args.config}: config must be a JSON object")
    sub = registry[args.cmd]
    known = {action.dest for action in sub._actions}
    unknown = sorted(set(config) - known)
    if unknown:
        raise ValueError(f"{args.config}: unknown config keys {unknown}")
    sub.set_defaults(**config)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args = _apply_config(args, argv, parser, registry)
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

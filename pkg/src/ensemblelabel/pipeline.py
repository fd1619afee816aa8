"""End-to-end orchestration: filter, annotate, vote, evaluate, enqueue.

The expensive stage (invoking backends) is decoupled from everything after
it: per-agent CSVs are the durable intermediate, and the vote stage is a pure
function of them, so thresholds can be re-explored by replaying votes without
touching a backend. With simulated backends and fixed seeds the whole run is
deterministic end to end.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .agent import run_agent
from .backends import build_backend
from .config import EnsembleConfig, RunManifest
from .corpus import read_agent_table, read_corpus, read_truth, write_corpus, write_truth
from .metrics import build_confusion, metrics, threshold_curve, write_threshold_curve
from .prefilter import RELEVANT, compile_af_filter, partition_corpus
from .prompting import load_prompt_asset
from .review import (FINAL_TABLE_FIELDS, SOURCE_DEFAULT, SOURCE_ENSEMBLE,
                     ReviewStore)
from .schema import PARSE_INVALID, AgentVote, TaskSchema
from .simulate import SyntheticCase, generate_corpus
from .voting import EnsembleDecision, sweep

logger = logging.getLogger(__name__)

DECISION_BASE_FIELDS = ("case_id", "outcome", "min_votes", "winning_votes",
                        "n_valid", "invalid_count")


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineResult:
    run_dir: Path
    final_table_path: Path
    decision_paths: dict[int, Path]
    review_store_path: Path
    summary_text: str
    metrics_rows: list[dict] | None
    manifest: RunManifest | None = None


def uncertain_labels(schema: TaskSchema) -> tuple[str, ...]:
    """Valid labels that mean "a human should look at this" for the task."""
    return tuple(
        label for label in schema.valid_set
        if label not in (schema.positive_class, schema.default_label)
    )


# -- agent table aggregation -------------------------------------------------

def aggregate_agent_tables(
    agents_dir: str | Path,
    agent_ids: Sequence[str],
    case_ids: Sequence[str],
) -> dict[str, list[AgentVote]]:
    """Key every agent table by case id and materialize missing votes.

    Every configured agent contributes exactly one vote per case: a missing
    (agent, case) row becomes an invalid vote with a recorded reason, so the
    committee size is constant downstream. Unknown agents or cases in the
    tables are hard errors.
    """
    agents_dir = Path(agents_dir)
    known_cases = set(case_ids)
    expected = list(agent_ids)
    stray = sorted(
        p.stem for p in agents_dir.glob("*.csv") if p.stem not in set(expected)
    )
    if stray:
        raise PipelineError(f"agent tables for unknown agent_id(s) {stray} in {agents_dir}")

    votes_by_case: dict[str, list[AgentVote]] = {cid: [] for cid in case_ids}
    for agent_id in expected:
        table_path = agents_dir / f"{agent_id}.csv"
        rows: dict[str, AgentVote] = {}
        if table_path.exists():
            for vote in read_agent_table(table_path):
                if vote.agent_id != agent_id:
                    raise PipelineError(
                        f"{table_path}: row carries unknown agent_id {vote.agent_id!r}"
                    )
                if vote.case_id not in known_cases:
                    raise PipelineError(
                        f"{table_path}: row for case {vote.case_id!r} not in the corpus"
                    )
                rows[vote.case_id] = vote
        for cid in case_ids:
            vote = rows.get(cid)
            if vote is None:
                vote = AgentVote(case_id=cid, agent_id=agent_id, raw=None,
                                 explanation="missing row", parse_status=PARSE_INVALID)
            votes_by_case[cid].append(vote)
    return votes_by_case


# -- persisted tables ----------------------------------------------------------

def write_decision_table(path: Path, decisions: Sequence[EnsembleDecision],
                         schema: TaskSchema):
    fields = DECISION_BASE_FIELDS + tuple(f"count_{label}" for label in schema.valid_set)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for d in decisions:
            writer.writerow([
                d.case_id, d.outcome, d.min_votes, d.winning_votes,
                d.tally.n_valid, d.tally.invalid_count,
                *[d.tally.counts[label] for label in schema.valid_set],
            ])


def read_decision_outcomes(path: str | Path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["case_id"]: row["outcome"] for row in csv.DictReader(fh)}


def write_final_table(
    path: Path,
    corpus_order: Sequence[str],
    relevance: Mapping[str, str],
    decisions: Mapping[str, EnsembleDecision],
    schema: TaskSchema,
):
    """Merge ensemble decisions with default-labeled irrelevant cases."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FINAL_TABLE_FIELDS)
        for cid in corpus_order:
            if relevance[cid] == RELEVANT:
                d = decisions[cid]
                writer.writerow([cid, d.outcome, SOURCE_ENSEMBLE, d.min_votes, d.winning_votes])
            else:
                writer.writerow([cid, schema.default_label, SOURCE_DEFAULT, "", ""])


def read_final_table(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- distribution summary ------------------------------------------------------

def render_distribution_summary(
    schema: TaskSchema,
    n_irrelevant: int,
    ensemble_counts: Mapping[str, int],
    *,
    n_relevant: int | None = None,
    n_total: int | None = None,
) -> str:
    """Final label distribution table over the whole corpus.

    n_relevant/n_total default to sums over the ensemble counts; they can be
    supplied explicitly when rendering externally reported figures.
    """
    pos = schema.positive_class or "positive"
    default = schema.default_label or schema.valid_set[-1]
    review = schema.review_label
    if n_relevant is None:
        n_relevant = sum(ensemble_counts.values())
    if n_total is None:
        n_total = n_irrelevant + n_relevant
    rows: list[tuple[str, int]] = [
        (f"{pos}-irrelevant cases", n_irrelevant),
        (f"{default} (by default)", n_irrelevant),
        (f"{pos}-relevant cases (labeled by LLM agents)", n_relevant),
        (f"{default} (by LLMs)", ensemble_counts.get(default, 0)),
    ]
    for label in schema.valid_set:
        if label != default:
            rows.append((label, ensemble_counts.get(label, 0)))
    rows.append(("Need Review", ensemble_counts.get(review, 0)))
    rows.append(("Total number of cases", n_total))

    width = max(len(name) for name, _ in rows + [("Labels", 0)]) + 2
    lines = [f"{'Labels':<{width}}{'Numbers':>8}  {'Percentage':>10}"]
    for name, number in rows:
        pct = 100.0 * number / n_total if n_total else 0.0
        lines.append(f"{name:<{width}}{number:>8}  {pct:>9.2f}%")
    return "\n".join(lines) + "\n"


# -- pipeline stages -----------------------------------------------------------

def _load_cases(config: EnsembleConfig, run_dir: Path, seed: int | None):
    """Corpus + truth resolution; synthetic corpora are generated and exported."""
    corpus_copy = run_dir / "corpus.csv"
    truth: dict[str, str] | None = None
    if config.input_path is not None:
        cases = list(read_corpus(config.input_path))
        if config.input_path.resolve() != corpus_copy.resolve():
            write_corpus(corpus_copy, cases)  # normalized copy, replayable
        if config.truth_path is not None:
            truth = read_truth(config.truth_path)
    else:
        spec = config.simulation
        synth = generate_corpus(
            spec.n_cases, spec.mix, seed if seed is not None else spec.seed,
            config.task, irrelevant_default_fraction=spec.irrelevant_default_fraction,
        )
        cases = [(c.case_id, c.report_text) for c in synth]
        truth = {c.case_id: c.truth for c in synth}
        write_corpus(corpus_copy, cases)
        write_truth(run_dir / "truth.csv", [(c.case_id, c.truth) for c in synth])
    return cases, truth


def _sim_cases(cases: Sequence[tuple[str, str]], truth: Mapping[str, str] | None):
    if truth is None:
        return None
    return {
        cid: SyntheticCase(case_id=cid, report_text=text, truth=truth[cid])
        for cid, text in cases
        if cid in truth
    }


def run_agents_stage(
    config: EnsembleConfig,
    relevant_cases: Sequence[tuple[str, str]],
    run_dir: Path,
    *,
    sim_cases=None,
    transcripts: bool = False,
) -> list[dict]:
    """Run every agent over the relevant corpus side, concurrently.

    Agents are fully independent (no communication while labeling), so they
    run in parallel; each one owns its table file.
    """
    template = load_prompt_asset(config.prompt_path)
    agents_dir = run_dir / "agents"
    agents_dir.mkdir(parents=True, exist_ok=True)

    needs_sim = [a.agent_id for a in config.agents if a.backend_kind == "simulated"]
    if needs_sim and sim_cases is None:
        raise PipelineError(
            f"agents {needs_sim} are simulated but no truth is available; "
            "add a simulation block or a truth_path"
        )

    def one(agent_cfg):
        backend = build_backend(agent_cfg, sim_cases=sim_cases, schema=config.task)
        summary = run_agent(
            agent_cfg.agent_id, backend, relevant_cases, template, config.task,
            agents_dir, concurrency=config.concurrency.per_agent_requests,
            transcripts=transcripts,
        )
        return summary.to_dict()

    workers = min(config.concurrency.max_parallel_agents, max(1, len(config.agents)))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        summaries = list(pool.map(one, config.agents))

    for summary in summaries:
        missing = summary["n_cases"] - summary["n_written"] - summary["n_skipped"]
        if missing > 0:
            logger.warning("agent %s covered %d/%d cases; missing rows become invalid votes",
                           summary["agent_id"], summary["n_cases"] - missing, summary["n_cases"])
    return summaries


def vote_stage(
    config: EnsembleConfig,
    run_dir: Path,
    cases: Sequence[tuple[str, str]],
    relevance: Mapping[str, str],
    truth: Mapping[str, str] | None,
) -> PipelineResult:
    """Aggregate tables, decide at every threshold, export all artifacts.

    Pure with respect to the per-agent CSVs: replaying this stage on the same
    run directory reproduces the same outputs byte for byte.
    """
    relevant_ids = [cid for cid, _ in cases if relevance[cid] == RELEVANT]
    votes_by_case = aggregate_agent_tables(
        run_dir / "agents", [a.agent_id for a in config.agents], relevant_ids
    )

    ks = sorted(set(config.k_thresholds))
    tables = sweep(
        [(cid, votes_by_case[cid]) for cid in relevant_ids],
        ks, config.task, denominator=config.denominator,
    )

    decisions_dir = run_dir / "decisions"
    decisions_dir.mkdir(parents=True, exist_ok=True)
    decision_paths: dict[int, Path] = {}
    for k in ks:
        decision_paths[k] = decisions_dir / f"k_{k}.csv"
        write_decision_table(decision_paths[k], tables[k], config.task)

    primary = {d.case_id: d for d in tables[config.primary_k]}
    final_path = run_dir / "final_table.csv"
    write_final_table(final_path, [cid for cid, _ in cases], relevance, primary, config.task)

    store = ReviewStore(config.resolved_review_store(), config.task)
    report_texts = dict(cases)
    enqueued = store.enqueue_flagged(
        tables[config.primary_k], report_texts, votes_by_case,
        uncertain_labels=uncertain_labels(config.task),
    )
    logger.info("review queue: %d newly enqueued, %d total", enqueued, store.stats()["total"])

    ensemble_counts = {label: 0 for label in (*config.task.valid_set, config.task.review_label)}
    for d in tables[config.primary_k]:
        ensemble_counts[d.outcome] += 1
    summary_text = render_distribution_summary(
        config.task, len(cases) - len(relevant_ids), ensemble_counts
    )
    (run_dir / "distribution_summary.txt").write_text(summary_text, encoding="utf-8")

    metrics_rows = None
    if truth is not None:
        relevant_truth = {cid: truth[cid] for cid in relevant_ids if cid in truth}
        missing_truth = [cid for cid in relevant_ids if cid not in truth]
        if missing_truth:
            raise PipelineError(f"truth file lacks labels for cases {missing_truth[:10]}")
        metrics_dir = run_dir / "metrics"
        metrics_dir.mkdir(parents=True, exist_ok=True)
        metrics_rows = threshold_curve(tables, relevant_truth, config.task)
        write_threshold_curve(metrics_rows, metrics_dir / "threshold_curve.csv",
                              metrics_dir / "threshold_curve.json")
        cm = build_confusion(relevant_truth, tables[config.primary_k], config.task)
        report = metrics(cm, config.task.positive_class)
        (metrics_dir / f"metrics_k{config.primary_k}.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8"
        )

    return PipelineResult(
        run_dir=run_dir,
        final_table_path=final_path,
        decision_paths=decision_paths,
        review_store_path=config.resolved_review_store(),
        summary_text=summary_text,
        metrics_rows=metrics_rows,
        manifest=None,  # filled by run_pipeline
    )


def _partition(config: EnsembleConfig, cases: Sequence[tuple[str, str]]):
    if config.prefilter_enabled:
        _, verdicts = partition_corpus(cases, compile_af_filter())
        return dict(verdicts)
    return {cid: RELEVANT for cid, _ in cases}


def run_pipeline(
    config: EnsembleConfig,
    *,
    seed: int | None = None,
    transcripts: bool = False,
) -> PipelineResult:
    """Full pipeline: partition, agent runs, voting, evaluation, review queue."""
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.new(config, seed=seed)

    t0 = time.monotonic()
    cases, truth = _load_cases(config, run_dir, seed)
    relevance = _partition(config, cases)
    relevant_cases = [(cid, text) for cid, text in cases if relevance[cid] == RELEVANT]
    manifest.partition = {
        "relevant": len(relevant_cases),
        "irrelevant": len(cases) - len(relevant_cases),
    }
    manifest.timings["prefilter_s"] = time.monotonic() - t0

    t1 = time.monotonic()
    manifest.agent_summaries = run_agents_stage(
        config, relevant_cases, run_dir,
        sim_cases=_sim_cases(cases, truth), transcripts=transcripts,
    )
    manifest.timings["agents_s"] = time.monotonic() - t1

    t2 = time.monotonic()
    result = vote_stage(config, run_dir, cases, relevance, truth)
    manifest.timings["vote_s"] = time.monotonic() - t2
    manifest.finished_at = time.time()
    manifest.save(run_dir)
    result.manifest = manifest
    return result


def replay_votes(config: EnsembleConfig, *, run_dir: Path | None = None) -> PipelineResult:
    """Re-run the vote stage from persisted per-agent CSVs, no backends."""
    run_dir = run_dir or config.run_dir
    corpus_path = run_dir / "corpus.csv"
    if not corpus_path.exists():
        raise PipelineError(f"no corpus.csv in {run_dir}; run the pipeline first")
    cases = list(read_corpus(corpus_path))
    truth_path = run_dir / "truth.csv"
    truth = None
    if truth_path.exists():
        truth = read_truth(truth_path)
    elif config.truth_path is not None:
        truth = read_truth(config.truth_path)
    relevance = _partition(config, cases)
    return vote_stage(config, run_dir, cases, relevance, truth)

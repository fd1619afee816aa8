"""Command line interface for the annotation engine."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from pathlib import Path

import click

from .config import ConfigError, load_config
from .corpus import read_corpus, read_truth, write_corpus
from .metrics import build_confusion, metrics
from .pipeline import read_decision_outcomes, replay_votes, run_pipeline
from .prefilter import (RELEVANT, alternative_filters, compile_af_filter,
                        filter_audit, partition_corpus)
from .review import ReviewStore
from .server import create_app
from .voting import EnsembleDecision, VoteTally


def _load(config_path: str, run_dir: str | None):
    config = load_config(config_path)
    if run_dir:
        config = dataclasses.replace(config, run_dir=Path(run_dir))
    return config


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging.")
def main(verbose: bool):
    """Ensemble annotation of free-text reports by an agent committee."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", default=None, type=click.Path(), help="Override the config run_dir.")
@click.option("--seed", default=None, type=int, help="Override the simulation seed.")
@click.option("--transcripts", is_flag=True, help="Write per-agent request/response logs.")
def run(config_path, run_dir, seed, transcripts):
    """Full pipeline: filter, agents, vote, evaluate, review enqueue."""
    try:
        config = _load(config_path, run_dir)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    result = run_pipeline(config, seed=seed, transcripts=transcripts)
    click.echo(result.summary_text)
    click.echo(f"final table: {result.final_table_path}")
    click.echo(f"review store: {result.review_store_path}")
    if result.metrics_rows:
        click.echo("threshold curve:")
        for row in result.metrics_rows:
            click.echo(f"  k={row['min_votes']}: accuracy={row['accuracy']}, "
                       f"n_review={row['n_review']}")


@main.command("filter")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--input", "input_path", default=None, type=click.Path(exists=True),
              help="Corpus file, if no config is given.")
@click.option("--out-dir", default=".", type=click.Path())
def filter_cmd(config_path, input_path, out_dir):
    """Prefilter only: partition the corpus and emit default-label records."""
    if config_path:
        config = load_config(config_path)
        if config.input_path is None:
            raise click.ClickException("config has no input_path; pass --input")
        input_path = config.input_path
        default_label = config.task.default_label
    else:
        if input_path is None:
            raise click.ClickException("pass --config or --input")
        default_label = "Non-AF"
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cases = list(read_corpus(input_path))
    partition, verdicts = partition_corpus(cases, compile_af_filter())
    relevance = dict(verdicts)
    write_corpus(out / "relevant_corpus.csv",
                 [(cid, text) for cid, text in cases if relevance[cid] == RELEVANT])
    with open(out / "default_labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "final_label", "source"])
        for cid in partition.irrelevant_ids:
            writer.writerow([cid, default_label, "default_filter"])
    click.echo(f"relevant: {partition.n_relevant}  irrelevant: {partition.n_irrelevant} "
               f"({out / 'relevant_corpus.csv'}, {out / 'default_labels.csv'})")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", default=None, type=click.Path())
def vote(config_path, run_dir):
    """Replay the vote stage from persisted per-agent CSVs."""
    config = _load(config_path, run_dir)
    result = replay_votes(config)
    click.echo(result.summary_text)
    click.echo(f"final table: {result.final_table_path}")


@main.command("eval")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", default=None, type=click.Path())
@click.option("--k", default=None, type=int, help="Threshold whose decisions to score.")
@click.option("--truth", "truth_path", default=None, type=click.Path(exists=True))
def eval_cmd(config_path, run_dir, k, truth_path):
    """Metrics for one decision table against a truth file."""
    config = _load(config_path, run_dir)
    k = config.primary_k if k is None else k
    decisions_path = config.run_dir / "decisions" / f"k_{k}.csv"
    if not decisions_path.exists():
        raise click.ClickException(f"no decision table {decisions_path}; run or vote first")
    if truth_path is None:
        candidate = config.run_dir / "truth.csv"
        truth_path = candidate if candidate.exists() else config.truth_path
        if truth_path is None:
            raise click.ClickException("no truth file; pass --truth")
    truth = read_truth(truth_path)
    outcomes = read_decision_outcomes(decisions_path)
    schema = config.task
    decisions = {
        cid: EnsembleDecision(
            case_id=cid, outcome=outcome,
            tally=VoteTally(counts={l: 0 for l in schema.valid_set},
                            invalid_count=config.n_agents, n_agents=config.n_agents),
            winner_set_size=0, winning_votes=0, min_votes=k,
        )
        for cid, outcome in outcomes.items()
    }
    cm = build_confusion(truth, decisions, schema)
    report = metrics(cm, schema.positive_class)
    click.echo(json.dumps(report.to_dict(), indent=2))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", default=None, type=click.Path())
@click.option("--k", "k_list", default=None,
              help="Comma-separated thresholds, e.g. 0,3,4,7; default 0..n_agents.")
def sweep(config_path, run_dir, k_list):
    """Threshold sweep over persisted agent tables, with metrics if truth exists."""
    config = _load(config_path, run_dir)
    if k_list:
        ks = sorted({int(x) for x in k_list.split(",")})
    else:
        ks = list(range(config.n_agents + 1))
    config = dataclasses.replace(config, k_thresholds=(config.primary_k, *ks))
    result = replay_votes(config)
    if result.metrics_rows:
        click.echo(json.dumps(result.metrics_rows, indent=2))
    else:
        click.echo(f"decision tables written for k in {ks} (no truth file, no metrics)")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", default=None, type=click.Path())
def audit(input_path, output_path):
    """Relevance disagreements between the production and verification filters."""
    filters = [compile_af_filter(), *alternative_filters()]
    records = list(filter_audit(read_corpus(input_path), filters))
    lines = [json.dumps(r, ensure_ascii=False) for r in records]
    if output_path:
        Path(output_path).write_text("\n".join(lines) + ("\n" if lines else ""),
                                     encoding="utf-8")
    else:
        for line in lines:
            click.echo(line)
    click.echo(f"{len(records)} disagreement(s) across {len(filters)} filters", err=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", default=None, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8800, type=int)
@click.option("--token", default=None, help="Require this X-Review-Token header on /api/*.")
@click.option("--static-dir", default=None, type=click.Path(),
              help="Console bundle to serve at /; defaults to frontend/dist if present.")
def serve(config_path, run_dir, host, port, token, static_dir):
    """Serve the review API (and the console, when built)."""
    import uvicorn

    config = _load(config_path, run_dir)
    store = ReviewStore(config.resolved_review_store(), config.task)
    if static_dir is None:
        config_dir = Path(config_path).resolve().parent
        for candidate in (config_dir / "frontend" / "dist",
                          config_dir.parent / "frontend" / "dist"):
            if candidate.is_dir():
                static_dir = candidate
                break
    app = create_app(
        store,
        machine_table_path=config.run_dir / "final_table.csv",
        token=token,
        static_dir=static_dir,
    )
    click.echo(f"review queue: {store.stats()}", err=True)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()

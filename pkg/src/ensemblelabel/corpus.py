"""Corpus and table IO: case streams, truth files, per-agent CSV tables."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Iterator

from .schema import AgentVote, PARSE_INVALID, TaskSchema

AGENT_TABLE_FIELDS = (
    "case_id", "agent_id", "raw_category", "final_label",
    "af_pr", "parse_status", "explanation",
)


class CorpusFormatError(ValueError):
    pass


def read_corpus(path: str | Path) -> Iterator[tuple[str, str]]:
    """Yield (case_id, report_text) from a CSV or JSON-lines corpus file."""
    path = Path(path)
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        yield from _read_jsonl(path)
    else:
        yield from _read_csv(path)


def _read_csv(path: Path) -> Iterator[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "case_id" not in reader.fieldnames \
                or "report_text" not in reader.fieldnames:
            raise CorpusFormatError(
                f"{path}: corpus CSV must have a case_id,report_text header, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            yield row["case_id"], row["report_text"]


def _read_jsonl(path: Path) -> Iterator[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad JSON line: {exc}") from exc
            if "case_id" not in record or "report_text" not in record:
                raise CorpusFormatError(f"{path}:{lineno}: need case_id and report_text fields")
            yield str(record["case_id"]), str(record["report_text"])


def write_corpus(path: str | Path, cases: Iterable[tuple[str, str]]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "report_text"])
        for case_id, text in cases:
            writer.writerow([case_id, text])


def read_truth(path: str | Path) -> dict[str, str]:
    """Truth file: CSV with case_id,label header."""
    truth: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "case_id" not in reader.fieldnames \
                or "label" not in reader.fieldnames:
            raise CorpusFormatError(f"{path}: truth CSV must have a case_id,label header")
        for row in reader:
            truth[row["case_id"]] = row["label"]
    return truth


def write_truth(path: str | Path, truth: Iterable[tuple[str, str]]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "label"])
        for case_id, label in truth:
            writer.writerow([case_id, label])


def vote_to_row(vote: AgentVote, schema: TaskSchema) -> dict[str, str]:
    final = vote.final_label(schema)
    return {
        "case_id": vote.case_id,
        "agent_id": vote.agent_id,
        "raw_category": vote.raw or "",
        "final_label": final or "",
        "af_pr": "" if vote.af_pr is None else repr(vote.af_pr),
        "parse_status": vote.parse_status,
        "explanation": vote.explanation,
    }


def row_to_vote(row: dict[str, str]) -> AgentVote:
    raw = row.get("raw_category") or None
    status = row.get("parse_status") or PARSE_INVALID
    if raw is None:
        status = PARSE_INVALID
    af_pr = row.get("af_pr") or None
    return AgentVote(
        case_id=row["case_id"],
        agent_id=row["agent_id"],
        raw=raw,
        af_pr=None if af_pr is None else float(af_pr),
        explanation=row.get("explanation", ""),
        parse_status=status,
    )


def read_agent_table(path: str | Path) -> list[AgentVote]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [row_to_vote(row) for row in reader]

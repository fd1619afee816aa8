"""Per-agent annotation runs: prompt, invoke, repair, persist.

One agent produces exactly one CSV row per corpus case, whatever happens:
backend failures and unparseable output become invalid-vote rows rather than
missing rows. Runs are resumable; case ids already present in the table are
skipped on restart, so an interrupted run converges to the same table.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .backends import Backend, BackendRequest, TransportError, invoke_backend
from .corpus import AGENT_TABLE_FIELDS, vote_to_row
from .jsonrepair import repair_and_extract
from .prompting import EmptyReportError, PromptTemplate, render_prompt
from .schema import PARSE_INVALID, AgentVote, TaskSchema

logger = logging.getLogger(__name__)


@dataclass
class AgentRunSummary:
    agent_id: str
    n_cases: int = 0
    n_written: int = 0
    n_skipped: int = 0
    n_transport_failures: int = 0
    parse_status_counts: dict[str, int] = field(default_factory=dict)
    total_attempts: int = 0
    total_latency_ms: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _existing_case_ids(table_path: Path) -> set[str]:
    if not table_path.exists():
        return set()
    with open(table_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return set()
        return {row["case_id"] for row in reader}


@dataclass
class _CaseResult:
    vote: AgentVote
    request: BackendRequest | None
    raw_response: str | None
    attempts: int
    latency_ms: float
    error: str | None = None


def _process_case(
    agent_id: str,
    backend: Backend,
    template: PromptTemplate,
    schema: TaskSchema,
    case_id: str,
    report_text: str,
) -> _CaseResult:
    try:
        system, user = render_prompt(template, report_text)
    except EmptyReportError:
        vote = AgentVote(case_id=case_id, agent_id=agent_id, raw=None,
                         explanation="empty input", parse_status=PARSE_INVALID)
        return _CaseResult(vote, None, None, attempts=0, latency_ms=0.0, error="empty input")
    request = BackendRequest(case_id=case_id, system=system, user=user)
    try:
        result = invoke_backend(backend, request)
    except TransportError as exc:
        vote = AgentVote(case_id=case_id, agent_id=agent_id, raw=None,
                         explanation=f"transport error: {exc}", parse_status=PARSE_INVALID)
        return _CaseResult(vote, request, None, attempts=0, latency_ms=0.0, error=str(exc))
    outcome = repair_and_extract(result.text, schema, case_id=case_id, agent_id=agent_id)
    return _CaseResult(outcome.annotation, request, result.text,
                       attempts=result.attempts, latency_ms=result.latency_ms)


def run_agent(
    agent_id: str,
    backend: Backend,
    corpus: Sequence[tuple[str, str]],
    template: PromptTemplate,
    schema: TaskSchema,
    output_dir: str | Path,
    *,
    concurrency: int = 1,
    transcripts: bool = False,
) -> AgentRunSummary:
    """Annotate the corpus with one agent, appending to its CSV table.

    Rows are written in corpus order regardless of request concurrency, so a
    completed table is byte-stable for deterministic backends.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    table_path = output_dir / f"{agent_id}.csv"
    done = _existing_case_ids(table_path)
    summary = AgentRunSummary(agent_id=agent_id, n_cases=len(corpus), n_skipped=len(done))

    pending = [(cid, text) for cid, text in corpus if cid not in done]
    if not pending:
        return summary

    new_table = not table_path.exists() or table_path.stat().st_size == 0
    transcript_fh = None
    if transcripts:
        transcript_path = output_dir / f"{agent_id}.transcript.jsonl"
        transcript_fh = open(transcript_path, "a", encoding="utf-8")

    def work(item: tuple[str, str]) -> _CaseResult:
        return _process_case(agent_id, backend, template, schema, item[0], item[1])

    try:
        with open(table_path, "a", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=AGENT_TABLE_FIELDS)
            if new_table:
                writer.writeheader()
            if concurrency > 1:
                executor = ThreadPoolExecutor(max_workers=concurrency)
                results = executor.map(work, pending)
            else:
                executor = None
                results = map(work, pending)
            try:
                for result in results:
                    writer.writerow(vote_to_row(result.vote, schema))
                    fh.flush()
                    summary.n_written += 1
                    status = result.vote.parse_status
                    summary.parse_status_counts[status] = \
                        summary.parse_status_counts.get(status, 0) + 1
                    summary.total_attempts += result.attempts
                    summary.total_latency_ms += result.latency_ms
                    if result.error is not None:
                        summary.n_transport_failures += 1
                    if transcript_fh is not None:
                        transcript_fh.write(json.dumps({
                            "case_id": result.vote.case_id,
                            "request": None if result.request is None else {
                                "system": result.request.system,
                                "user": result.request.user,
                            },
                            "raw_response": result.raw_response,
                            "latency_ms": result.latency_ms,
                            "attempts": result.attempts,
                            "error": result.error,
                        }, ensure_ascii=False) + "\n")
                        transcript_fh.flush()
            finally:
                if executor is not None:
                    executor.shutdown(wait=False, cancel_futures=True)
    finally:
        if transcript_fh is not None:
            transcript_fh.close()

    logger.info("agent %s: wrote %d rows (%d skipped as already done)",
                agent_id, summary.n_written, summary.n_skipped)
    return summary

"""Human review queue: persistence, adjudication, and the final export.

The store is a single append-only JSON-lines event log with an in-memory
index. Every state transition (enqueue, adjudicate, reopen) is one event, so
the log doubles as the audit trail; the current queue state is a pure fold
over it. Human labels supersede machine labels in the export.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .schema import AgentVote, TaskSchema
from .voting import EnsembleDecision

STATUS_PENDING = "pending"
STATUS_ADJUDICATED = "adjudicated"

SOURCE_DEFAULT = "default_filter"
SOURCE_ENSEMBLE = "ensemble"
SOURCE_HUMAN = "human_review"

FINAL_TABLE_FIELDS = ("case_id", "final_label", "source", "min_votes", "winning_votes")
EXPORT_FIELDS = FINAL_TABLE_FIELDS + ("pending",)


class UnknownCaseError(KeyError):
    pass


class AdjudicationConflictError(RuntimeError):
    """The item is not in the state the operation requires."""


class LabelValidationError(ValueError):
    pass


@dataclass
class ReviewItem:
    case_id: str
    report_text: str
    machine_outcome: str
    tally_counts: dict[str, int] = field(default_factory=dict)
    invalid_count: int = 0
    agent_votes: list[dict] = field(default_factory=list)
    status: str = STATUS_PENDING
    human_label: str | None = None
    reviewer: str | None = None
    adjudicated_at: str | None = None
    enqueued_at: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ReviewItem":
        return cls(**data)


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ReviewStore:
    """Append-only review queue over one JSONL file."""

    def __init__(self, path: str | Path, schema: TaskSchema):
        self.path = Path(path)
        self.schema = schema
        self._items: dict[str, ReviewItem] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        if self.path.exists():
            self._replay()

    def _replay(self):
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{self.path}:{lineno}: corrupt event: {exc}") from exc
                self._apply(event)

    def _apply(self, event: dict):
        kind = event["event"]
        if kind == "enqueue":
            item = ReviewItem.from_dict(event["item"])
            if item.case_id not in self._items:
                self._items[item.case_id] = item
                self._order.append(item.case_id)
        elif kind == "adjudicate":
            item = self._items[event["case_id"]]
            item.status = STATUS_ADJUDICATED
            item.human_label = event["label"]
            item.reviewer = event["reviewer"]
            item.adjudicated_at = event["at"]
        elif kind == "reopen":
            item = self._items[event["case_id"]]
            item.status = STATUS_PENDING
            item.human_label = None
            item.reviewer = None
            item.adjudicated_at = None
        else:
            raise ValueError(f"unknown review event {kind!r}")

    def _append(self, event: dict):
        event = {**event, "ts": time.time()}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")
            fh.flush()
        self._apply(event)

    # -- queue building ----------------------------------------------------

    def enqueue(self, item: ReviewItem) -> bool:
        """Add one pending item; a case already in the store is a no-op."""
        with self._lock:
            if item.case_id in self._items:
                return False
            item.enqueued_at = _now_iso()
            self._append({"event": "enqueue", "item": item.to_dict()})
            return True

    def enqueue_flagged(
        self,
        decisions: Sequence[EnsembleDecision],
        report_texts: Mapping[str, str],
        votes_by_case: Mapping[str, Sequence[AgentVote]],
        *,
        uncertain_labels: Iterable[str] = ("Uncertain",),
    ) -> int:
        """Queue every review-label or uncertain outcome with full provenance."""
        flag = set(uncertain_labels) | {self.schema.review_label}
        added = 0
        for decision in decisions:
            if decision.outcome not in flag:
                continue
            votes = votes_by_case.get(decision.case_id, ())
            item = ReviewItem(
                case_id=decision.case_id,
                report_text=report_texts.get(decision.case_id, ""),
                machine_outcome=decision.outcome,
                tally_counts=dict(decision.tally.counts),
                invalid_count=decision.tally.invalid_count,
                agent_votes=[{
                    "agent_id": v.agent_id,
                    "raw_category": v.raw,
                    "final_label": v.final_label(self.schema),
                    "parse_status": v.parse_status,
                    "af_pr": v.af_pr,
                    "explanation": v.explanation,
                } for v in votes],
            )
            if self.enqueue(item):
                added += 1
        return added

    # -- adjudication ------------------------------------------------------

    def get(self, case_id: str) -> ReviewItem:
        try:
            return self._items[case_id]
        except KeyError:
            raise UnknownCaseError(case_id) from None

    def adjudicate(self, case_id: str, label: str, reviewer: str) -> ReviewItem:
        if label not in self.schema.valid_set:
            raise LabelValidationError(
                f"label {label!r} not in the valid set {self.schema.valid_set}"
            )
        if not reviewer:
            raise LabelValidationError("reviewer must be non-empty")
        with self._lock:
            item = self.get(case_id)
            if item.status == STATUS_ADJUDICATED:
                raise AdjudicationConflictError(
                    f"case {case_id} already adjudicated by {item.reviewer}; reopen first"
                )
            self._append({
                "event": "adjudicate",
                "case_id": case_id,
                "label": label,
                "reviewer": reviewer,
                "at": _now_iso(),
                "prior": item.to_dict(),
            })
            return self.get(case_id)

    def reopen(self, case_id: str) -> ReviewItem:
        with self._lock:
            item = self.get(case_id)
            if item.status != STATUS_ADJUDICATED:
                raise AdjudicationConflictError(f"case {case_id} is not adjudicated")
            self._append({
                "event": "reopen",
                "case_id": case_id,
                "at": _now_iso(),
                "prior": item.to_dict(),
            })
            return self.get(case_id)

    # -- reads ---------------------------------------------------------------

    def list_items(
        self,
        status: str | None = None,
        machine_outcome: str | None = None,
        page: int = 1,
        page_size: int = 50,
    ) -> tuple[list[ReviewItem], int]:
        items = [self._items[cid] for cid in self._order]
        if status is not None:
            items = [i for i in items if i.status == status]
        if machine_outcome is not None:
            items = [i for i in items if i.machine_outcome == machine_outcome]
        total = len(items)
        start = (page - 1) * page_size
        return items[start:start + page_size], total

    def stats(self) -> dict:
        pending = sum(1 for i in self._items.values() if i.status == STATUS_PENDING)
        adjudicated = len(self._items) - pending
        by_outcome: dict[str, int] = {}
        for item in self._items.values():
            by_outcome[item.machine_outcome] = by_outcome.get(item.machine_outcome, 0) + 1
        return {
            "total": len(self._items),
            "pending": pending,
            "adjudicated": adjudicated,
            "by_machine_outcome": by_outcome,
        }

    # -- export --------------------------------------------------------------

    def write_snapshot(self) -> Path:
        """Compact current queue state into a sidecar snapshot.

        The event log itself is never rewritten (it is the audit trail); the
        snapshot is a convenience for tools that want state without a replay.
        """
        snapshot_path = self.path.with_suffix(".snapshot.json")
        payload = {cid: self._items[cid].to_dict() for cid in self._order}
        snapshot_path.write_text(
            json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        return snapshot_path

    def export_final(self, machine_rows: Sequence[Mapping[str, str]]) -> list[dict]:
        """Final dataset: human labels supersede machine labels.

        machine_rows are the pipeline final-table rows; adjudicated cases get
        source=human_review, still-pending flagged cases keep the machine
        outcome and carry pending=true.
        """
        out = []
        for row in machine_rows:
            record = {key: row.get(key, "") for key in FINAL_TABLE_FIELDS}
            record["pending"] = ""
            item = self._items.get(record["case_id"])
            if item is not None:
                if item.status == STATUS_ADJUDICATED:
                    record["final_label"] = item.human_label
                    record["source"] = SOURCE_HUMAN
                else:
                    record["pending"] = "true"
            out.append(record)
        return out

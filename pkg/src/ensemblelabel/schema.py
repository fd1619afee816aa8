"""Label vocabulary, raw-to-final postprocessing, and declarative task schemas.

A labeling task is fully described by a TaskSchema: the raw verdict strings an
agent may emit, the valid vote set the ensemble counts over, the total map
between the two, and the distinguished review label that only the ensemble
rule may produce. Schemas are plain data so the same engine serves different
annotation tasks from configuration alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

PARSE_OK = "ok"
PARSE_REPAIRED = "repaired"
PARSE_INVALID = "invalid"

PARSE_STATUSES = (PARSE_OK, PARSE_REPAIRED, PARSE_INVALID)


class SchemaError(ValueError):
    """A task schema violates one of its structural invariants."""


def canonical(text: str) -> str:
    """Trim, case-fold, and collapse internal whitespace."""
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class TaskSchema:
    """Declarative definition of one labeling task.

    raw_set holds the verdict strings agents are instructed to emit;
    valid_set is the vote vocabulary the ensemble counts over; raw_to_final
    maps every raw verdict onto exactly one valid label. review_label is
    reserved for the ensemble rule and must stay outside valid_set.
    """

    task_id: str
    raw_set: tuple[str, ...]
    valid_set: tuple[str, ...]
    raw_to_final: Mapping[str, str]
    review_label: str = "Review"
    default_label: str | None = None
    positive_class: str | None = None
    prompt_asset: str | None = None
    category_key: str = "Diagnosis"
    probability_key: str = "AF_pr"
    explanation_key: str = "Explanation"

    def __post_init__(self):
        if not self.raw_set:
            raise SchemaError(f"task {self.task_id!r}: raw_set is empty")
        if not self.valid_set:
            raise SchemaError(f"task {self.task_id!r}: valid_set is empty")
        canon = [canonical(r) for r in self.raw_set]
        if len(set(canon)) != len(canon):
            raise SchemaError(f"task {self.task_id!r}: raw_set has duplicate categories")
        if len(set(self.valid_set)) != len(self.valid_set):
            raise SchemaError(f"task {self.task_id!r}: valid_set has duplicate labels")
        missing = [r for r in self.raw_set if r not in self.raw_to_final]
        if missing:
            raise SchemaError(f"task {self.task_id!r}: raw_to_final not total, missing {missing}")
        extra = [r for r in self.raw_to_final if r not in self.raw_set]
        if extra:
            raise SchemaError(f"task {self.task_id!r}: raw_to_final maps unknown categories {extra}")
        bad_image = sorted({v for v in self.raw_to_final.values() if v not in self.valid_set})
        if bad_image:
            raise SchemaError(f"task {self.task_id!r}: raw_to_final image outside valid_set: {bad_image}")
        if self.review_label in self.valid_set:
            raise SchemaError(f"task {self.task_id!r}: review label {self.review_label!r} must not be a valid vote")
        if self.default_label is not None and self.default_label not in self.valid_set:
            raise SchemaError(f"task {self.task_id!r}: default label {self.default_label!r} not in valid_set")
        if self.positive_class is not None and self.positive_class not in self.valid_set:
            raise SchemaError(f"task {self.task_id!r}: positive class {self.positive_class!r} not in valid_set")

    def parse_raw_category(self, text) -> str | None:
        """Match arbitrary text against the raw set; None means Invalid.

        Matching is by canonical form (trim + case-fold + whitespace
        collapse), so quoted JSON strings with stray spacing or casing still
        resolve. Never raises on arbitrary input.
        """
        if not isinstance(text, str):
            return None
        return self._canonical_index.get(canonical(text))

    def postprocess(self, raw: str) -> str:
        """Map a raw category onto its final label in valid_set."""
        try:
            return self.raw_to_final[raw]
        except KeyError:
            raise ValueError(f"not a raw category of task {self.task_id!r}: {raw!r}") from None

    @property
    def _canonical_index(self) -> dict[str, str]:
        idx = self.__dict__.get("_canon_idx")
        if idx is None:
            idx = {canonical(r): r for r in self.raw_set}
            object.__setattr__(self, "_canon_idx", idx)
        return idx

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "raw_set": list(self.raw_set),
            "valid_set": list(self.valid_set),
            "raw_to_final": dict(self.raw_to_final),
            "review_label": self.review_label,
            "default_label": self.default_label,
            "positive_class": self.positive_class,
            "prompt_asset": self.prompt_asset,
            "category_key": self.category_key,
            "probability_key": self.probability_key,
            "explanation_key": self.explanation_key,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TaskSchema":
        return cls(
            task_id=data["task_id"],
            raw_set=tuple(data["raw_set"]),
            valid_set=tuple(data["valid_set"]),
            raw_to_final=dict(data["raw_to_final"]),
            review_label=data.get("review_label", "Review"),
            default_label=data.get("default_label"),
            positive_class=data.get("positive_class"),
            prompt_asset=data.get("prompt_asset"),
            category_key=data.get("category_key", "Diagnosis"),
            probability_key=data.get("probability_key", "AF_pr"),
            explanation_key=data.get("explanation_key", "Explanation"),
        )


@dataclass(frozen=True)
class AgentVote:
    """One agent's parsed verdict on one case.

    raw is None exactly when parse_status is "invalid". af_pr is stored for
    audit only and never enters vote counting.
    """

    case_id: str
    agent_id: str
    raw: str | None
    af_pr: float | None = None
    explanation: str = ""
    parse_status: str = PARSE_OK

    def __post_init__(self):
        if self.parse_status not in PARSE_STATUSES:
            raise ValueError(f"unknown parse_status {self.parse_status!r}")
        if (self.raw is None) != (self.parse_status == PARSE_INVALID):
            raise ValueError(
                f"vote ({self.case_id}, {self.agent_id}): raw={self.raw!r} "
                f"inconsistent with parse_status={self.parse_status!r}"
            )
        if self.af_pr is not None and not (0.0 <= self.af_pr <= 1.0):
            raise ValueError(f"af_pr out of [0,1]: {self.af_pr}")

    @property
    def is_valid(self) -> bool:
        return self.parse_status != PARSE_INVALID

    def final_label(self, schema: TaskSchema) -> str | None:
        """Postprocessed label in valid_set, or None for invalid votes."""
        if self.raw is None or self.raw not in schema.raw_to_final:
            return None
        return schema.raw_to_final[self.raw]


def ecg_af_schema(prompt_asset: str | None = None) -> TaskSchema:
    """The shipped ECG atrial fibrillation/flutter task."""
    return TaskSchema(
        task_id="ecg_af",
        raw_set=("AF", "Probable AF", "Possible AF", "Not AF", "Not Specified"),
        valid_set=("AF", "Non-AF", "Uncertain"),
        raw_to_final={
            "AF": "AF",
            "Probable AF": "AF",
            "Possible AF": "Uncertain",
            "Not Specified": "Uncertain",
            "Not AF": "Non-AF",
        },
        review_label="Review",
        default_label="Non-AF",
        positive_class="AF",
        prompt_asset=prompt_asset,
    )


def sdoh_schema(variable: str, prompt_asset: str | None = None) -> TaskSchema:
    """Editable example schema for a social-determinants variable.

    The adverse/non-adverse vocabulary is a config-author choice; these
    defaults exist so the generalized pipeline has a second runnable task.
    """
    return TaskSchema(
        task_id=f"sdoh_{variable}",
        raw_set=("Adverse", "Probable Adverse", "Possible Adverse", "Non-adverse", "Not Specified"),
        valid_set=("Adverse", "Non-adverse", "Uncertain"),
        raw_to_final={
            "Adverse": "Adverse",
            "Probable Adverse": "Adverse",
            "Possible Adverse": "Uncertain",
            "Not Specified": "Uncertain",
            "Non-adverse": "Non-adverse",
        },
        review_label="Review",
        default_label="Non-adverse",
        positive_class="Adverse",
        prompt_asset=prompt_asset,
        category_key="Status",
        probability_key="Adverse_pr",
        explanation_key="Explanation",
    )


BUILTIN_SCHEMAS = {
    "ecg_af": ecg_af_schema,
    "sdoh_employment": lambda prompt_asset=None: sdoh_schema("employment", prompt_asset),
    "sdoh_housing": lambda prompt_asset=None: sdoh_schema("housing", prompt_asset),
}

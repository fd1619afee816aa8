"""Deterministic simulated agents and synthetic corpora.

Simulation makes the ensemble's error-reduction claims testable at desk
scale: each simulated agent draws its verdict from a per-truth-class emission
distribution, occasionally injects one of four hallucination types (each of
which forces a wrong vote and tags the explanation through a side channel
voting never reads), and occasionally corrupts its JSON with one of the
repair pipeline's known fault shapes. Every draw is keyed on
(seed, agent_id, case_id), so any parallel schedule produces identical
output.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .schema import TaskSchema, ecg_af_schema

HALLUCINATION_TYPES = (
    "fabricated_fact",
    "uncertainty_confusion",
    "misunderstanding",
    "self_contradiction",
)

HALLUCINATION_TAG_RE = re.compile(r"<<hallucination:([a-z_]+)>>")

MALFORMED_SHAPES = (
    "prose_wrap",
    "code_fence",
    "single_quotes",
    "trailing_comma",
    "smart_quotes",
    "inner_quotes",
)

_ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class SyntheticCase:
    case_id: str
    report_text: str
    truth: str


@dataclass(frozen=True)
class SimAgentProfile:
    """Emission behavior of one simulated agent.

    emission maps each truth label to a row-stochastic distribution over the
    task's raw categories. Hallucination rates are independent per-case
    injection probabilities for each of the four types; an injected event
    always produces a wrong vote, which keeps the outvote probability exactly
    computable for symmetric committees.
    """

    agent_id: str
    emission: Mapping[str, Mapping[str, float]]
    hallucination_rates: Mapping[str, float] = field(default_factory=dict)
    malformed_json_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for truth, row in self.emission.items():
            total = sum(row.values())
            if abs(total - 1.0) > _ROW_SUM_TOL:
                raise ValueError(
                    f"profile {self.agent_id!r}: emission row for {truth!r} sums to {total}"
                )
            if any(p < 0 or p > 1 for p in row.values()):
                raise ValueError(f"profile {self.agent_id!r}: emission probability outside [0,1]")
        for h_type, p in self.hallucination_rates.items():
            if h_type not in HALLUCINATION_TYPES:
                raise ValueError(f"profile {self.agent_id!r}: unknown hallucination type {h_type!r}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"profile {self.agent_id!r}: hallucination rate outside [0,1]")
        if sum(self.hallucination_rates.values()) > 1.0 + _ROW_SUM_TOL:
            raise ValueError(f"profile {self.agent_id!r}: hallucination rates sum past 1")
        if not 0.0 <= self.malformed_json_rate <= 1.0:
            raise ValueError(f"profile {self.agent_id!r}: malformed_json_rate outside [0,1]")

    @property
    def total_hallucination_rate(self) -> float:
        return sum(self.hallucination_rates.values())

    def vote_accuracy(self, truth: str, schema: TaskSchema) -> float:
        """Probability this agent's final vote equals truth on such a case."""
        row = self.emission[truth]
        correct = sum(p for raw, p in row.items() if schema.raw_to_final.get(raw) == truth)
        return (1.0 - self.total_hallucination_rate) * correct

    @classmethod
    def from_config(cls, agent_id: str, block: Mapping) -> "SimAgentProfile":
        """Build a profile from a YAML `simulated:` block.

        Either a full `emission` table or an `accuracy` shorthand (uniform
        per-class accuracy, errors split evenly over the other labels).
        """
        block = dict(block)
        seed = int(block["seed"])
        schema_like = block.get("schema")
        rates = dict(block.get("hallucination_rates", {}))
        malformed = float(block.get("malformed_json_rate", 0.0))
        if "emission" in block:
            emission = {t: dict(row) for t, row in block["emission"].items()}
        elif "accuracy" in block:
            schema = schema_like if isinstance(schema_like, TaskSchema) else ecg_af_schema()
            emission = accuracy_emission(float(block["accuracy"]), schema)
        else:
            raise ValueError(f"agent {agent_id!r}: simulated block needs emission or accuracy")
        return cls(
            agent_id=agent_id,
            emission=emission,
            hallucination_rates=rates,
            malformed_json_rate=malformed,
            seed=seed,
        )


def accuracy_emission(accuracy: float, schema: TaskSchema) -> dict[str, dict[str, float]]:
    """Uniform per-class emission rows hitting the given final-label accuracy.

    Correct mass is split evenly over the raw categories mapping to the truth
    label; the error mass is split evenly over the other final labels and
    then over their raw categories.
    """
    if not 0.0 <= accuracy <= 1.0:
        raise ValueError(f"accuracy outside [0,1]: {accuracy}")
    preimage = {
        label: [raw for raw in schema.raw_set if schema.raw_to_final[raw] == label]
        for label in schema.valid_set
    }
    emission: dict[str, dict[str, float]] = {}
    for truth in schema.valid_set:
        row = {raw: 0.0 for raw in schema.raw_set}
        own = preimage[truth]
        for raw in own:
            row[raw] += accuracy / len(own)
        others = [label for label in schema.valid_set if label != truth]
        for label in others:
            share = (1.0 - accuracy) / len(others)
            for raw in preimage[label]:
                row[raw] += share / len(preimage[label])
        emission[truth] = row
    return emission


# Report phrasing bank for the shipped ECG task. Every entry for a truth
# class that should reach the agents contains fibrillation/flutter
# terminology so it survives the relevance filter.
ECG_TEMPLATES: dict[str, tuple[str, ...]] = {
    "AF": (
        "Atrial fibrillation with a rapid ventricular response.",
        "Atrial fibrillation with controlled ventricular response. Nonspecific ST-T wave changes.",
        "Atrial flutter with 4:1 atrioventricular conduction.",
        "Ventricular paced rhythm. Underlying atrial fibrillation/flutter.",
        "Probable atrial fibrillation with premature ventricular contractions.",
        "Atrial fibrillation. Compared to the previous tracing the ventricular rate is increased.",
    ),
    "Uncertain": (
        "Possible atrial fibrillation versus atrial tachycardia with variable block.",
        "Irregular rhythm, possible atrial flutter; baseline artifact makes interpretation difficult.",
        "Clinical indication: atrial fibrillation. Final interpretation deferred to the scanned report.",
        "Possible atrial fibrillation; cannot exclude multifocal atrial tachycardia.",
    ),
    "Non-AF": (
        "Sinus rhythm. No atrial fibrillation identified.",
        "Normal sinus rhythm. Previously noted atrial fibrillation has resolved.",
        "Sinus tachycardia. Prior tracing showed atrial flutter; none in the current tracing.",
        "Ectopic atrial rhythm has replaced atrial fibrillation. The Q-T interval is prolonged.",
    ),
}

ECG_IRRELEVANT_TEMPLATES: tuple[str, ...] = (
    "Sinus bradycardia. Otherwise normal ECG.",
    "Normal sinus rhythm. Normal ECG.",
    "Sinus rhythm with first degree A-V block.",
    "Ventricular premature complexes. Nonspecific ST-T wave abnormalities.",
)

SDOH_TEMPLATES: dict[str, tuple[str, ...]] = {
    "Adverse": (
        "Patient is currently unemployed and looking for work.",
        "Recently laid off from a construction job.",
        "Unable to work due to chronic back pain.",
        "Patient reports staying in a shelter downtown.",
    ),
    "Non-adverse": (
        "Works full time as a teacher.",
        "Retired engineer, lives at home with spouse.",
        "Employed in retail; stable housing with family.",
    ),
    "Uncertain": (
        "Possible job loss mentioned during intake; details unclear.",
        "Housing probably unstable per case manager note, not confirmed.",
    ),
}


def _bank_for(schema: TaskSchema) -> dict[str, tuple[str, ...]]:
    if set(schema.valid_set) == set(ECG_TEMPLATES):
        return ECG_TEMPLATES
    if set(schema.valid_set) == set(SDOH_TEMPLATES):
        return SDOH_TEMPLATES
    raise ValueError(
        f"no built-in report templates for labels {schema.valid_set}; pass a bank"
    )


def largest_remainder_counts(n: int, proportions: Sequence[float]) -> list[int]:
    """Apportion n into integer counts proportional to the given shares."""
    quotas = [n * p for p in proportions]
    counts = [math.floor(q) for q in quotas]
    short = n - sum(counts)
    remainders = sorted(range(len(quotas)), key=lambda i: (quotas[i] - counts[i], -i), reverse=True)
    for i in remainders[:short]:
        counts[i] += 1
    return counts


def generate_corpus(
    n: int,
    mix: Mapping[str, float] | Sequence[float],
    seed: int,
    schema: TaskSchema | None = None,
    *,
    bank: Mapping[str, Sequence[str]] | None = None,
    irrelevant_default_fraction: float = 0.0,
) -> list[SyntheticCase]:
    """Deterministic synthetic corpus with the requested class proportions.

    Class counts come from largest-remainder rounding, so they are
    proportion-faithful and reproducible. irrelevant_default_fraction moves
    that share of the default-label cases onto filter-clean phrasings, which
    exercises the prefilter's default-label path in pipeline runs.
    """
    schema = schema or ecg_af_schema()
    if not isinstance(mix, Mapping):
        mix = dict(zip(schema.valid_set, mix))
    unknown = [label for label in mix if label not in schema.valid_set]
    if unknown:
        raise ValueError(f"mix labels not in valid set: {unknown}")
    proportions = [mix.get(label, 0.0) for label in schema.valid_set]
    total = sum(proportions)
    # Published class percentages round to 100.1%, so accept a small slack
    # and renormalize instead of rejecting the canonical mixes.
    if abs(total - 1.0) > 0.01:
        raise ValueError(f"class proportions sum to {total}, not 1")
    proportions = [p / total for p in proportions]
    if n == 0:
        return []
    bank = dict(bank) if bank is not None else _bank_for(schema)
    counts = largest_remainder_counts(n, proportions)
    labels = [label for label, c in zip(schema.valid_set, counts) for _ in range(c)]
    rng = random.Random(seed)
    rng.shuffle(labels)
    cases = []
    for i, label in enumerate(labels, start=1):
        templates = bank[label]
        if (
            irrelevant_default_fraction > 0.0
            and label == schema.default_label
            and set(schema.valid_set) == set(ECG_TEMPLATES)
            and rng.random() < irrelevant_default_fraction
        ):
            templates = ECG_IRRELEVANT_TEMPLATES
        text = rng.choice(list(templates))
        cases.append(SyntheticCase(case_id=f"case-{i:06d}", report_text=text, truth=label))
    return cases


def _case_rng(profile: SimAgentProfile, case_id: str) -> random.Random:
    key = f"{profile.seed}|{profile.agent_id}|{case_id}".encode()
    return random.Random(int.from_bytes(hashlib.sha256(key).digest()[:8], "big"))


def _roles(schema: TaskSchema) -> tuple[str, str, str] | None:
    """(positive, negative, uncertain) roles for three-label tasks."""
    if len(schema.valid_set) != 3 or schema.positive_class is None or schema.default_label is None:
        return None
    if schema.positive_class == schema.default_label:
        return None
    rest = [l for l in schema.valid_set
            if l not in (schema.positive_class, schema.default_label)]
    return schema.positive_class, schema.default_label, rest[0]


def _raw_for(schema: TaskSchema, final: str, prefer_word: str | None = None) -> str:
    candidates = [raw for raw in schema.raw_set if schema.raw_to_final[raw] == final]
    if prefer_word:
        for raw in candidates:
            if prefer_word in raw.casefold():
                return raw
    return candidates[0]


def _hallucinated_raw(h_type: str, case: SyntheticCase, schema: TaskSchema) -> str:
    """Pick the wrong raw category a hallucination of this type lands on."""
    roles = _roles(schema)
    truth = case.truth
    if roles is None:
        wrong = next(l for l in schema.valid_set if l != truth)
        return _raw_for(schema, wrong)
    pos, neg, unc = roles
    if h_type == "uncertainty_confusion":
        text = case.report_text.casefold()
        if "probable" in text:
            return _raw_for(schema, unc, prefer_word="possible")
        if "possible" in text:
            return _raw_for(schema, pos, prefer_word="probable")
        if truth == pos:
            return _raw_for(schema, unc, prefer_word="possible")
        return _raw_for(schema, pos, prefer_word="probable")
    if h_type == "fabricated_fact":
        target = {pos: neg, neg: unc, unc: pos}[truth]
        return _raw_for(schema, target, prefer_word="possible" if target == unc else None)
    if h_type == "misunderstanding":
        target = {pos: neg, neg: pos, unc: neg}[truth]
        return _raw_for(schema, target)
    # self_contradiction
    target = {pos: neg, neg: pos, unc: pos}[truth]
    return _raw_for(schema, target)


_HALLUCINATION_EXPLANATIONS = {
    "fabricated_fact": (
        "The report states 'possible atrial fibrillation/flutter' and "
        "'could be atrial fibrillation', which supports this classification. "
        "<<hallucination:fabricated_fact>>"
    ),
    "uncertainty_confusion": (
        "The certainty modifier in the report is read as the other level of "
        "confidence than the one stated. <<hallucination:uncertainty_confusion>>"
    ),
    "misunderstanding": (
        "The stated rhythm term is interpreted as a different concept, which "
        "changes the classification. <<hallucination:misunderstanding>>"
    ),
    "self_contradiction": (
        "The evidence summarized here points to the opposite label from the "
        "one assigned. <<hallucination:self_contradiction>>"
    ),
}


def _af_pr_for(raw: str, schema: TaskSchema) -> float:
    final = schema.raw_to_final[raw]
    lowered = raw.casefold()
    if final == schema.positive_class:
        return 0.9 if "probable" in lowered else 1.0
    if final == schema.default_label:
        return 0.0
    return 0.5


def _render_single_quoted(payload: dict) -> str:
    parts = []
    for key, value in payload.items():
        if isinstance(value, str):
            rendered = "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"
        else:
            rendered = json.dumps(value)
        parts.append(f"'{key}': {rendered}")
    return "{" + ", ".join(parts) + "}"


def _corrupt(text: str, payload: dict, shape: str, schema: TaskSchema) -> str:
    if shape == "prose_wrap":
        return f"Sure! Here is the JSON you asked for: {text} Let me know if you need anything else."
    if shape == "code_fence":
        return f"```json\n{text}\n```"
    if shape == "single_quotes":
        return _render_single_quoted(payload)
    if shape == "trailing_comma":
        return text[: text.rfind("}")] + ",}"
    if shape == "smart_quotes":
        return text.replace('"', "“", 1).replace('"', "”")
    if shape == "inner_quotes":
        broken = dict(payload)
        key = schema.explanation_key
        broken[key] = 'the report says "' + payload[key] + '" verbatim'
        body = ", ".join(
            f'"{k}": ' + (f'"{v}"' if isinstance(v, str) else json.dumps(v))
            for k, v in broken.items()
        )
        return "{" + body + "}"
    raise ValueError(f"unknown malformed shape {shape!r}")


def simulate_response(profile: SimAgentProfile, case: SyntheticCase,
                      schema: TaskSchema | None = None) -> str:
    """One agent's raw completion text for one case, fully deterministic."""
    schema = schema or ecg_af_schema()
    rng = _case_rng(profile, case.case_id)

    u = rng.random()
    h_type = None
    acc = 0.0
    for candidate in HALLUCINATION_TYPES:
        acc += profile.hallucination_rates.get(candidate, 0.0)
        if u < acc:
            h_type = candidate
            break

    if h_type is not None:
        raw = _hallucinated_raw(h_type, case, schema)
        explanation = _HALLUCINATION_EXPLANATIONS[h_type]
    else:
        row = profile.emission[case.truth]
        pick = rng.random()
        cum = 0.0
        raw = schema.raw_set[-1]
        for candidate in schema.raw_set:
            cum += row.get(candidate, 0.0)
            if pick < cum:
                raw = candidate
                break
        explanation = (
            f"The current tracing is read as {raw} based on the stated "
            "rhythm description."
        )

    payload = {
        schema.category_key: raw,
        schema.probability_key: _af_pr_for(raw, schema),
        schema.explanation_key: explanation,
    }
    text = json.dumps(payload)
    if rng.random() < profile.malformed_json_rate:
        shape = MALFORMED_SHAPES[rng.randrange(len(MALFORMED_SHAPES))]
        text = _corrupt(text, payload, shape, schema)
    return text


@dataclass
class HallucinationAudit:
    """Per-type accounting of injected events and their ensemble fate."""

    injected: dict[str, int]
    wrong_vote: dict[str, int]
    outvoted: dict[str, int]

    @property
    def total_injected(self) -> int:
        return sum(self.injected.values())

    @property
    def total_outvoted(self) -> int:
        return sum(self.outvoted.values())

    @property
    def outvoted_fraction(self) -> float | None:
        total = self.total_injected
        return None if total == 0 else self.total_outvoted / total

    def to_dict(self) -> dict:
        return {
            "injected": dict(self.injected),
            "wrong_vote": dict(self.wrong_vote),
            "outvoted": dict(self.outvoted),
            "total_injected": self.total_injected,
            "total_outvoted": self.total_outvoted,
            "outvoted_fraction": self.outvoted_fraction,
        }


def hallucination_audit(votes, decisions, truth: Mapping[str, str],
                        schema: TaskSchema) -> HallucinationAudit:
    """Count injected hallucination events and how the ensemble resolved them.

    votes is any iterable of AgentVote (typically every per-agent table
    concatenated); the injected events are recovered from the explanation
    tags. An event is outvoted when its case was still finally labeled with
    the truth.
    """
    if not isinstance(decisions, Mapping):
        decisions = {d.case_id: d for d in decisions}
    injected = {t: 0 for t in HALLUCINATION_TYPES}
    wrong = {t: 0 for t in HALLUCINATION_TYPES}
    outvoted = {t: 0 for t in HALLUCINATION_TYPES}
    for vote in votes:
        m = HALLUCINATION_TAG_RE.search(vote.explanation or "")
        if not m:
            continue
        h_type = m.group(1)
        if h_type not in injected:
            raise ValueError(f"unknown hallucination tag {h_type!r} on case {vote.case_id}")
        injected[h_type] += 1
        case_truth = truth[vote.case_id]
        if vote.final_label(schema) != case_truth:
            wrong[h_type] += 1
        decision = decisions.get(vote.case_id)
        if decision is not None and decision.outcome == case_truth:
            outvoted[h_type] += 1
    return HallucinationAudit(injected=injected, wrong_vote=wrong, outvoted=outvoted)


# Published per-model figures used to calibrate the demo committee: overall
# individual accuracy on the 600-case test set, and hallucination-type
# counts observed on a 200-case set (per-type rate = count / 200).
DEMO_COMMITTEE_CALIBRATION: dict[str, dict] = {
    "beluga70b": {"accuracy": 0.973, "hallucinations": (5, 1, 0, 0)},
    "gemma7b": {"accuracy": 0.925, "hallucinations": (7, 6, 0, 0)},
    "llama3-70b-inst": {"accuracy": 0.968, "hallucinations": (0, 1, 1, 1)},
    "mistral-openorca": {"accuracy": 0.957, "hallucinations": (1, 4, 4, 0)},
    "openhermes": {"accuracy": 0.933, "hallucinations": (2, 2, 2, 2)},
    "qwen72b": {"accuracy": 0.938, "hallucinations": (0, 2, 2, 1)},
    "qwen2-72b": {"accuracy": 0.978, "hallucinations": (1, 1, 1, 0)},
}

_CALIBRATION_CASES = 200


def calibrated_committee(
    schema: TaskSchema | None = None,
    *,
    seed_base: int = 1000,
    hallucinations: bool = True,
    malformed_json_rate: float = 0.02,
) -> list[SimAgentProfile]:
    """The 7-agent demo committee with published accuracy calibration."""
    schema = schema or ecg_af_schema()
    profiles = []
    for offset, (agent_id, cal) in enumerate(DEMO_COMMITTEE_CALIBRATION.items()):
        rates = {}
        if hallucinations:
            rates = {
                h_type: count / _CALIBRATION_CASES
                for h_type, count in zip(HALLUCINATION_TYPES, cal["hallucinations"])
                if count
            }
        profiles.append(SimAgentProfile(
            agent_id=agent_id,
            emission=accuracy_emission(cal["accuracy"], schema),
            hallucination_rates=rates,
            malformed_json_rate=malformed_json_rate,
            seed=seed_base + offset,
        ))
    return profiles


def binary_majority_accuracy(p: float, n: int) -> float:
    """Exact accuracy of a majority vote of n iid agents on a binary task."""
    if n % 2 == 0:
        raise ValueError("use an odd committee size for a strict majority")
    need = n // 2 + 1
    return sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(need, n + 1))


def symmetric_outvote_probability(vote_accuracy: float, n_agents: int, min_votes: int) -> float:
    """Exact P(case still decided correctly) given one forced-wrong vote.

    For a symmetric committee where every other agent votes the truth
    independently with probability vote_accuracy, and a majority-or-stricter
    threshold (2k > n), the case is decided correctly iff at least k of the
    remaining n-1 agents vote the truth.
    """
    if 2 * min_votes <= n_agents:
        raise ValueError("exact form requires a majority threshold (2k > n)")
    m = n_agents - 1
    q = vote_accuracy
    return sum(math.comb(m, j) * q**j * (1 - q) ** (m - j) for j in range(min_votes, m + 1))

"""Vote tallying and the highest-vote-with-winning-threshold rule.

Each case collects one vote per agent. Valid votes are the ones that parsed
and postprocess into the task's valid label set; everything else counts only
toward invalid_count and never toward any label. The decision rule picks the
unique plurality winner when it reaches the minimum vote count, and emits the
review label otherwise (ties, thin consensus, or no valid signal at all).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .schema import AgentVote, TaskSchema

DENOMINATOR_COMMITTEE = "committee"
DENOMINATOR_VALID = "valid"


@dataclass(frozen=True)
class VoteTally:
    """Per-case vote counts over the valid label set."""

    counts: Mapping[str, int]
    invalid_count: int
    n_agents: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()) or self.invalid_count < 0:
            raise ValueError("negative vote counts")
        if sum(self.counts.values()) + self.invalid_count != self.n_agents:
            raise ValueError(
                f"tally does not conserve votes: {dict(self.counts)} + "
                f"{self.invalid_count} invalid != {self.n_agents} agents"
            )

    @property
    def n_valid(self) -> int:
        return self.n_agents - self.invalid_count


@dataclass(frozen=True)
class EnsembleDecision:
    """Outcome of the threshold rule for one case."""

    case_id: str
    outcome: str
    tally: VoteTally
    winner_set_size: int
    winning_votes: int
    min_votes: int


def tally(votes: Sequence[AgentVote], schema: TaskSchema) -> VoteTally:
    """Count valid votes per label; invalid or out-of-set votes count as invalid.

    Raises on mixed case_ids or a duplicated agent_id (double voting).
    """
    case_ids = {v.case_id for v in votes}
    if len(case_ids) > 1:
        raise ValueError(f"votes span multiple cases: {sorted(case_ids)}")
    agent_ids = [v.agent_id for v in votes]
    if len(set(agent_ids)) != len(agent_ids):
        dupes = sorted({a for a in agent_ids if agent_ids.count(a) > 1})
        raise ValueError(f"double voting by agent(s) {dupes} on case {next(iter(case_ids), '?')!r}")
    counts = {label: 0 for label in schema.valid_set}
    invalid = 0
    for vote in votes:
        final = vote.final_label(schema)
        if final is None:
            invalid += 1
        else:
            counts[final] += 1
    return VoteTally(counts=counts, invalid_count=invalid, n_agents=len(votes))


def winners(t: VoteTally) -> set[str]:
    """The argmax label set; empty when no valid vote was cast."""
    if not t.counts:
        return set()
    top = max(t.counts.values())
    if top == 0:
        return set()
    return {label for label, c in t.counts.items() if c == top}


def threshold_in_effect(min_votes: int, t: VoteTally, denominator: str) -> int:
    """Integer vote count a winner must reach under the chosen denominator.

    Committee mode compares against the configured committee size, so the
    threshold is min_votes itself. Valid mode rescales the same fraction onto
    the valid votes actually cast: counts[y]/n_valid >= k/n, i.e.
    ceil(k * n_valid / n).
    """
    if denominator == DENOMINATOR_COMMITTEE:
        return min_votes
    if denominator == DENOMINATOR_VALID:
        if t.n_agents == 0:
            return min_votes
        return math.ceil(min_votes * t.n_valid / t.n_agents)
    raise ValueError(f"unknown denominator mode {denominator!r}")


def decide(
    t: VoteTally,
    min_votes: int,
    schema: TaskSchema,
    *,
    case_id: str = "",
    denominator: str = DENOMINATOR_COMMITTEE,
) -> EnsembleDecision:
    """Apply the highest-vote-with-winning-threshold rule to one tally.

    min_votes is the integer threshold k of n: the unique plurality winner is
    auto-labeled iff it collected at least k votes, so k = 0 is the pure
    highest-vote rule and k = n demands unanimity. Everything else, including
    ties and all-invalid tallies, decides the review label.
    """
    if t.n_agents < 1:
        raise ValueError("decide requires at least one agent vote")
    if not 0 <= min_votes <= t.n_agents:
        raise ValueError(f"min_votes {min_votes} outside [0, {t.n_agents}]")
    win_set = winners(t)
    winning_votes = max(t.counts.values(), default=0)
    k_eff = threshold_in_effect(min_votes, t, denominator)
    if len(win_set) == 1 and winning_votes >= k_eff:
        outcome = next(iter(win_set))
    else:
        outcome = schema.review_label
    return EnsembleDecision(
        case_id=case_id,
        outcome=outcome,
        tally=t,
        winner_set_size=len(win_set),
        winning_votes=winning_votes,
        min_votes=k_eff,
    )


def theta_to_min_votes(theta: float, n_agents: int) -> int:
    """Convert a winning-ratio threshold into the integer vote count.

    theta in [0,1): the winner must exceed the ratio, so k = floor(theta*n)+1;
    theta = 1 means unanimity is sufficient, k = n.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta outside [0,1]: {theta}")
    if theta == 1.0:
        return n_agents
    return min(n_agents, math.floor(theta * n_agents) + 1)


def sweep(
    all_votes: Mapping[str, Sequence[AgentVote]] | Iterable[tuple[str, Sequence[AgentVote]]],
    k_values: Sequence[int],
    schema: TaskSchema,
    *,
    denominator: str = DENOMINATOR_COMMITTEE,
) -> dict[int, list[EnsembleDecision]]:
    """Decide every case at every threshold, tallying each case only once."""
    if list(k_values) != sorted(k_values):
        raise ValueError("k_values must be sorted ascending")
    items = all_votes.items() if isinstance(all_votes, Mapping) else all_votes
    tallies = [(case_id, tally(votes, schema)) for case_id, votes in items]
    tables: dict[int, list[EnsembleDecision]] = {}
    for k in k_values:
        tables[k] = [
            decide(t, k, schema, case_id=case_id, denominator=denominator)
            for case_id, t in tallies
        ]
    return tables

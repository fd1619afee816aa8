import itertools

import pytest
from hypothesis import given, strategies as st

from ensemblelabel.schema import AgentVote, ecg_af_schema
from ensemblelabel.voting import (VoteTally, decide, sweep, tally,
                                  theta_to_min_votes, winners)
from oracles import oracle_decide

SCHEMA = ecg_af_schema()
V = SCHEMA.valid_set
RAW_FOR = {"AF": "AF", "Non-AF": "Not AF", "Uncertain": "Possible AF"}


def votes_from_labels(labels, case_id="c1"):
    """Build one AgentVote per final label; None means an invalid vote."""
    votes = []
    for i, label in enumerate(labels):
        if label is None:
            votes.append(AgentVote(case_id, f"a{i}", raw=None, parse_status="invalid"))
        else:
            votes.append(AgentVote(case_id, f"a{i}", raw=RAW_FOR[label]))
    return votes


def tally_of(labels):
    return tally(votes_from_labels(labels), SCHEMA)


class TestTally:
    def test_direct_count(self):
        t = tally_of(["AF", "AF", "Non-AF"])
        assert t.counts == {"AF": 2, "Non-AF": 1, "Uncertain": 0}
        assert t.invalid_count == 0 and t.n_agents == 3

    def test_invalid_votes_count_zero_everywhere(self):
        t = tally_of(["AF", None, "AF"])
        assert t.counts["AF"] == 2 and t.invalid_count == 1

    def test_empty_vote_list_rejected_downstream(self):
        t = tally_of([])
        assert t.n_agents == 0
        with pytest.raises(ValueError):
            decide(t, 0, SCHEMA)

    def test_double_voting_is_a_hard_error(self):
        votes = votes_from_labels(["AF", "AF"])
        votes[1] = AgentVote("c1", "a0", raw="AF")
        with pytest.raises(ValueError, match="a0"):
            tally(votes, SCHEMA)

    def test_votes_must_share_a_case(self):
        votes = [AgentVote("c1", "a0", raw="AF"), AgentVote("c2", "a1", raw="AF")]
        with pytest.raises(ValueError, match="multiple cases"):
            tally(votes, SCHEMA)

    def test_conservation_enforced_on_construction(self):
        with pytest.raises(ValueError):
            VoteTally(counts={"AF": 2}, invalid_count=0, n_agents=3)


class TestWinners:
    def test_tie(self):
        t = tally_of(["AF"] * 3 + ["Non-AF"] * 3 + ["Uncertain"])
        assert winners(t) == {"AF", "Non-AF"}

    def test_unique(self):
        t = tally_of(["AF"] * 5 + ["Non-AF", "Uncertain"])
        assert winners(t) == {"AF"}

    def test_all_zero_is_empty(self):
        t = tally_of([None, None, None])
        assert winners(t) == set()


class TestDecide:
    def test_worked_example_highest_vote_vs_majority(self):
        t = tally_of(["AF"] * 3 + ["Uncertain"] * 2 + ["Non-AF"] * 2)
        assert decide(t, 0, SCHEMA).outcome == "AF"
        assert decide(t, 4, SCHEMA).outcome == "Review"

    def test_unanimity_meets_full_threshold(self):
        t = tally_of(["AF"] * 7)
        assert decide(t, 7, SCHEMA).outcome == "AF"

    def test_tie_is_review_at_any_threshold(self):
        t = tally_of(["AF"] * 3 + ["Non-AF"] * 3 + ["Uncertain"])
        for k in range(8):
            assert decide(t, k, SCHEMA).outcome == "Review"

    def test_all_invalid_is_review(self):
        t = tally_of([None] * 7)
        assert decide(t, 0, SCHEMA).outcome == "Review"

    def test_threshold_beyond_committee_is_config_error(self):
        t = tally_of(["AF"] * 7)
        with pytest.raises(ValueError):
            decide(t, 8, SCHEMA)

    def test_decision_invariant_fields(self):
        t = tally_of(["AF"] * 5 + ["Non-AF"] * 2)
        d = decide(t, 4, SCHEMA, case_id="c1")
        assert d.outcome == "AF"
        assert d.winner_set_size == 1
        assert d.winning_votes == 5 >= d.min_votes == 4

    def test_valid_denominator_rescales_threshold(self):
        # 3-of-5 valid with 2 invalid: fails 4-of-7 against the committee,
        # passes the same fraction against valid votes (3/5 >= 4/7).
        t = tally_of(["AF"] * 3 + ["Non-AF"] * 2 + [None, None])
        assert decide(t, 4, SCHEMA).outcome == "Review"
        d = decide(t, 4, SCHEMA, denominator="valid")
        assert d.outcome == "AF"
        assert d.winning_votes >= d.min_votes  # min_votes is the effective threshold


class TestThetaConversion:
    def test_majority_over_half(self):
        assert theta_to_min_votes(0.5, 7) == 4

    def test_full_consensus_attainable(self):
        assert theta_to_min_votes(1.0, 7) == 7

    def test_zero_is_highest_vote(self):
        assert theta_to_min_votes(0.0, 7) == 1

    def test_range_check(self):
        with pytest.raises(ValueError):
            theta_to_min_votes(1.2, 7)


class TestSweep:
    def test_one_table_per_threshold(self):
        cases = {f"c{i}": votes_from_labels(["AF"] * 7, case_id=f"c{i}") for i in range(3)}
        tables = sweep(cases, [0, 3, 4, 7], SCHEMA)
        assert sorted(tables) == [0, 3, 4, 7]
        assert all(len(t) == 3 for t in tables.values())

    def test_k_values_must_be_sorted(self):
        with pytest.raises(ValueError):
            sweep({}, [4, 0], SCHEMA)

    def test_auto_labels_stable_and_review_monotone_over_all_committees(self):
        # brute force: every possible 7-vote committee at every threshold
        combos = list(itertools.product(V, repeat=7))
        cases = {f"c{i}": votes_from_labels(list(combo), case_id=f"c{i}")
                 for i, combo in enumerate(combos)}
        tables = sweep(cases, list(range(8)), SCHEMA)
        review_sets = {
            k: {d.case_id for d in tables[k] if d.outcome == "Review"} for k in tables
        }
        for k in range(7):
            assert review_sets[k] <= review_sets[k + 1]
            low = {d.case_id: d.outcome for d in tables[k]}
            for d in tables[k + 1]:
                if d.outcome != "Review":
                    assert low[d.case_id] == d.outcome


label_or_invalid = st.sampled_from(["AF", "Non-AF", "Uncertain", None])
committee = st.lists(label_or_invalid, min_size=1, max_size=9)
threshold = st.integers(min_value=0, max_value=9)


class TestProperties:
    @given(committee, threshold)
    def test_matches_reference_implementation(self, labels, k):
        if k > len(labels):
            return
        d = decide(tally_of(labels), k, SCHEMA)
        assert d.outcome == oracle_decide(labels, V, k, "Review")

    @given(committee, threshold, st.randoms())
    def test_anonymity(self, labels, k, rng):
        if k > len(labels):
            return
        shuffled = list(labels)
        rng.shuffle(shuffled)
        assert decide(tally_of(labels), k, SCHEMA).outcome == \
            decide(tally_of(shuffled), k, SCHEMA).outcome

    @given(committee, threshold)
    def test_winner_reinforcement(self, labels, k):
        if k > len(labels):
            return
        d = decide(tally_of(labels), k, SCHEMA)
        if d.outcome == "Review":
            return
        reinforced = labels + [d.outcome]
        assert decide(tally_of(reinforced), k, SCHEMA).outcome == d.outcome

    @given(committee, st.integers(min_value=0, max_value=8))
    def test_invalid_vote_neutrality(self, labels, position):
        if position >= len(labels):
            return
        before = tally_of(labels)
        weakened = list(labels)
        weakened[position] = None
        after = tally_of(weakened)
        assert all(after.counts[x] <= before.counts[x] for x in V)

    @given(committee, threshold, threshold)
    def test_threshold_stability(self, labels, k1, k2):
        k1, k2 = sorted((k1, k2))
        if k2 > len(labels):
            return
        high = decide(tally_of(labels), k2, SCHEMA)
        if high.outcome != "Review":
            assert decide(tally_of(labels), k1, SCHEMA).outcome == high.outcome

import random

import pytest

from ensemblelabel.prefilter import (ALT_BROAD_PATTERN, ALT_SIMPLE_PATTERN,
                                     FIBRILLATION_PATTERN, FLUTTER_PATTERN,
                                     IRRELEVANT, RELEVANT, CompiledFilter,
                                     DuplicateCaseError, alternative_filters,
                                     classify_relevance, compile_af_filter,
                                     filter_audit, partition_corpus)
from oracles import OracleFilter

MISSPELLING_TOKENS = ["fibrillacion", "fabrillation", "fibrilation", "fibri.", "AFib", "AF"]


@pytest.fixture(scope="module")
def main_filter():
    return compile_af_filter()


@pytest.fixture(scope="module")
def oracle_main():
    return OracleFilter(FIBRILLATION_PATTERN, FLUTTER_PATTERN)


class TestCompiledPatterns:
    @pytest.mark.parametrize("token", MISSPELLING_TOKENS)
    def test_published_variants_match(self, main_filter, token):
        assert main_filter.is_relevant(f"Rhythm note: {token} observed.")

    def test_accented_variant_needs_unicode_matching(self, main_filter):
        assert main_filter.is_relevant("Impresión: fibrilación auricular.")

    @pytest.mark.parametrize("text", [
        "Status post defibrillator placement.",
        "Defibrillation threshold testing performed.",
        "Crafty flutters of the eyelid.",
        "written as the AFLX token.",
        "half of the tracing is artifact",
    ])
    def test_near_misses_do_not_match(self, main_filter, oracle_main, text):
        assert not main_filter.is_relevant(text)
        assert not oracle_main.is_relevant(text)

    def test_flutter_side(self, main_filter):
        assert main_filter.is_relevant("Atrial flutter with variable block.")
        assert main_filter.is_relevant("Known AFL.")


class TestClassifyRelevance:
    def test_af_report(self, main_filter):
        text = "Atrial fibrillation with a rapid ventricular response."
        assert classify_relevance(text, main_filter) == RELEVANT

    def test_clean_sinus_report(self, main_filter):
        assert classify_relevance("Sinus bradycardia. Otherwise normal ECG.",
                                  main_filter) == IRRELEVANT

    def test_fibrillation_flutter_compound(self, main_filter):
        assert classify_relevance("Underlying atrial fibrillation/flutter.",
                                  main_filter) == RELEVANT


def _random_report(rng: random.Random) -> str:
    vocab = [
        "fibrillation", "fibrilation", "fibrillacion", "fabrillation", "fibri.",
        "fibri", "AFib", "AF", "AFL", "flutter", "flutters", "defibrillator",
        "defibrillation", "aF", "af", "Afib", "sinus", "rhythm", "normal",
        "tracing", "atrial", "ventricular", "a-fib", "A.F.", "FLUTTER",
        "fibrillatory", "Fibrillation,", "(AF)", "[flutter]",
    ]
    n = rng.randint(0, 12)
    parts = [rng.choice(vocab) for _ in range(n)]
    glue = rng.choice([" ", "  ", ". ", ", ", "/", "-"])
    return glue.join(parts)


class TestAgainstReferenceEngine:
    def test_agreement_on_randomized_strings(self, main_filter, oracle_main):
        rng = random.Random(20240831)
        disagreements = [
            text for text in (_random_report(rng) for _ in range(10_000))
            if main_filter.is_relevant(text) != oracle_main.is_relevant(text)
        ]
        assert disagreements == []


class TestPartition:
    def test_empty_corpus(self, main_filter):
        partition, verdicts = partition_corpus([], main_filter)
        assert partition.n_total == 0 and verdicts == []

    def test_disjoint_cover(self, main_filter):
        corpus = [
            ("a", "Atrial fibrillation."),
            ("b", "Sinus bradycardia."),
            ("c", "Atrial flutter."),
        ]
        partition, verdicts = partition_corpus(corpus, main_filter)
        assert set(partition.relevant_ids) | set(partition.irrelevant_ids) == {"a", "b", "c"}
        assert set(partition.relevant_ids) & set(partition.irrelevant_ids) == set()
        assert dict(verdicts)["b"] == IRRELEVANT

    def test_duplicate_case_id_is_a_hard_error(self, main_filter):
        corpus = [("a", "x"), ("a", "y")]
        with pytest.raises(DuplicateCaseError, match="'a'"):
            partition_corpus(corpus, main_filter)

    def test_all_flutter_corpus_all_relevant(self, main_filter):
        corpus = [(f"c{i}", f"note {i}: flutter present") for i in range(25)]
        partition, _ = partition_corpus(corpus, main_filter)
        assert partition.n_relevant == 25 and partition.n_irrelevant == 0

    def test_determinism(self, main_filter):
        rng = random.Random(7)
        corpus = [(f"c{i}", _random_report(rng)) for i in range(200)]
        first, _ = partition_corpus(corpus, main_filter)
        second, _ = partition_corpus(corpus, main_filter)
        assert first == second


class TestFilterAudit:
    def _fixture(self, with_misspelling: bool):
        corpus = [
            ("r1", "Atrial fibrillation with rapid response."),
            ("r2", "Atrial flutter, rate controlled."),
            ("r3", "Sinus rhythm, normal ECG."),
            ("r4", "AFib noted on telemetry."),
        ]
        if with_misspelling:
            corpus.append(("r5", "Chronic atrial fibrilation, rate controlled."))
        return corpus

    def test_misspelling_splits_main_from_simple_alternative(self, main_filter):
        alt_simple = alternative_filters()[0]
        records = list(filter_audit(self._fixture(True), [main_filter, alt_simple]))
        assert [r["case_id"] for r in records] == ["r5"]
        record = records[0]
        assert record["verdict_a"] == RELEVANT and record["verdict_b"] == IRRELEVANT
        assert "fibrilation" in record["tokens_a"]

    def test_identical_filters_never_disagree(self, main_filter):
        twin = CompiledFilter("af_twin", main_filter.patterns)
        assert list(filter_audit(self._fixture(True), [main_filter, twin])) == []

    def test_verification_filters_agree_without_misspellings(self):
        alt_simple, alt_broad = alternative_filters()
        assert list(filter_audit(self._fixture(False), [alt_simple, alt_broad])) == []

    def test_needs_two_filters(self, main_filter):
        with pytest.raises(ValueError):
            list(filter_audit([], [main_filter]))


def test_alternative_patterns_are_the_published_ones():
    assert ALT_SIMPLE_PATTERN == r"\b(fibrillation|flutter|AFib|AFL|AF)\b"
    assert "lla" in ALT_BROAD_PATTERN and "AFL" in ALT_BROAD_PATTERN

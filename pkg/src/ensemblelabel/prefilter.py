"""Logical relevance filters and corpus partitioning.

The production filter screens reports for fibrillation/flutter terminology
before any agent sees them: a report is relevant iff the fibrillation
expression or the flutter expression matches anywhere. Reports that match
neither are labeled with the task default and never enter voting.

Two independently written verification filters are kept alongside the
production one so a disagreement audit can be run on any corpus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator

RELEVANT = "Relevant"
IRRELEVANT = "Irrelevant"

# Word-boundary anchored; covers abbreviations, truncations ("fibri."),
# single-l misspellings and the accented "fibrilación" variant, so matching
# must stay Unicode-aware and must NOT lowercase the input first.
FIBRILLATION_PATTERN = r"\b(([fF][ia]br[ia]l{1,2}a[tcs]i[oó]n)|([fF]ibri\.*)|(A[fF]ib)|(AF))\b"
FLUTTER_PATTERN = r"\b([fF]lutter|AFL)\b"

# Verification filter #1: simple and straightforward.
ALT_SIMPLE_PATTERN = r"\b(fibrillation|flutter|AFib|AFL|AF)\b"
# Verification filter #2: broader range of expressions, double-l spellings only.
ALT_BROAD_PATTERN = r"\b([fF][ia]br[ia]lla[tcs]ion|[fF]ibri\.*|[fF]lutter|A[fF]ib|AFL|AF)\b"


class DuplicateCaseError(ValueError):
    """The same case_id appeared twice in one corpus stream."""


@dataclass(frozen=True)
class CompiledFilter:
    """One relevance filter: a report is relevant iff any pattern matches."""

    filter_id: str
    patterns: tuple[re.Pattern, ...]

    @property
    def fibrillation_pattern(self) -> re.Pattern:
        return self.patterns[0]

    @property
    def flutter_pattern(self) -> re.Pattern | None:
        return self.patterns[1] if len(self.patterns) > 1 else None

    def is_relevant(self, report_text: str) -> bool:
        return any(p.search(report_text) for p in self.patterns)

    def matched_tokens(self, report_text: str) -> list[str]:
        tokens = []
        for p in self.patterns:
            tokens.extend(m.group(0) for m in p.finditer(report_text))
        return tokens


def compile_af_filter() -> CompiledFilter:
    """The production filter: fibrillation expression OR flutter expression."""
    return CompiledFilter(
        filter_id="af_main",
        patterns=(re.compile(FIBRILLATION_PATTERN), re.compile(FLUTTER_PATTERN)),
    )


def alternative_filters() -> list[CompiledFilter]:
    """The two independently implemented verification filters."""
    return [
        CompiledFilter("af_alt_simple", (re.compile(ALT_SIMPLE_PATTERN),)),
        CompiledFilter("af_alt_broad", (re.compile(ALT_BROAD_PATTERN),)),
    ]


def classify_relevance(report_text: str, filt: CompiledFilter) -> str:
    return RELEVANT if filt.is_relevant(report_text) else IRRELEVANT


@dataclass(frozen=True)
class CorpusPartition:
    """Disjoint cover of a corpus id set, in original stream order."""

    relevant_ids: tuple[str, ...]
    irrelevant_ids: tuple[str, ...]

    @property
    def n_relevant(self) -> int:
        return len(self.relevant_ids)

    @property
    def n_irrelevant(self) -> int:
        return len(self.irrelevant_ids)

    @property
    def n_total(self) -> int:
        return self.n_relevant + self.n_irrelevant


def partition_corpus(
    corpus: Iterable[tuple[str, str]], filt: CompiledFilter
) -> tuple[CorpusPartition, list[tuple[str, str]]]:
    """Stream the corpus once, splitting it on the relevance filter.

    Returns the partition plus per-case (case_id, verdict) pairs in stream
    order, so callers can emit default-label records for the irrelevant side
    without a second pass.
    """
    relevant: list[str] = []
    irrelevant: list[str] = []
    verdicts: list[tuple[str, str]] = []
    seen: set[str] = set()
    for case_id, report_text in corpus:
        if case_id in seen:
            raise DuplicateCaseError(f"duplicate case_id in corpus: {case_id!r}")
        seen.add(case_id)
        verdict = classify_relevance(report_text, filt)
        verdicts.append((case_id, verdict))
        if verdict == RELEVANT:
            relevant.append(case_id)
        else:
            irrelevant.append(case_id)
    return CorpusPartition(tuple(relevant), tuple(irrelevant)), verdicts


def filter_audit(
    corpus: Iterable[tuple[str, str]], filters: list[CompiledFilter]
) -> Iterator[dict]:
    """Yield one record per (case, filter pair) relevance disagreement.

    Mirrors the verification audit run on the production filter against the
    two alternatives; matched tokens are included so a reviewer can see what
    each side keyed on.
    """
    if len(filters) < 2:
        raise ValueError("filter_audit needs at least two filters")
    ids = {f.filter_id for f in filters}
    if len(ids) != len(filters):
        raise ValueError("filter ids must be distinct")
    for case_id, text in corpus:
        verdicts = [(f, classify_relevance(text, f)) for f in filters]
        for i, (fa, va) in enumerate(verdicts):
            for fb, vb in verdicts[i + 1:]:
                if va != vb:
                    yield {
                        "case_id": case_id,
                        "filter_id_a": fa.filter_id,
                        "filter_id_b": fb.filter_id,
                        "verdict_a": va,
                        "verdict_b": vb,
                        "tokens_a": fa.matched_tokens(text),
                        "tokens_b": fb.matched_tokens(text),
                    }

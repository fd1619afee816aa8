"""Tolerant extraction of the annotation JSON from raw backend output.

Backends are instructed to answer with a single JSON object, but real
completions wrap it in prose or code fences, use single or smart quotes,
leave trailing commas, or drop unescaped quotes inside the explanation.
Repair is an ordered pipeline of named transformations; after each step the
text is re-parsed and the pipeline stops at the first success. Failure is a
value (parse_status "invalid"), never an exception.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .schema import PARSE_INVALID, PARSE_OK, PARSE_REPAIRED, AgentVote, TaskSchema

# Pipeline order is part of the contract: provenance in repairs_applied
# refers to these names.
STEP_EXTRACT_BLOCK = "extract_block"
STEP_SMART_QUOTES = "smart_quotes"
STEP_SINGLE_QUOTES = "single_quotes"
STEP_TRAILING_COMMAS = "trailing_commas"
STEP_ESCAPE_INNER_QUOTES = "escape_inner_quotes"

_SMART_QUOTES = {
    "“": '"',  # left double
    "”": '"',  # right double
    "„": '"',
    "‟": '"',
    "‘": "'",  # left single
    "’": "'",  # right single
    "‚": "'",
    "‛": "'",
}


@dataclass
class RepairOutcome:
    """Parsed annotation plus the provenance needed to audit the repair."""

    annotation: AgentVote
    repairs_applied: list[str]
    raw_text: str
    warnings: list[str] = field(default_factory=list)
    repaired_text: str | None = None  # the text that finally parsed, if any


def _try_parse(text: str):
    try:
        value = json.loads(text)
    except (json.JSONDecodeError, RecursionError):
        return None
    return value if isinstance(value, dict) else None


def _strip_code_fences(text: str) -> str:
    return re.sub(r"```[a-zA-Z]*", "", text)


def extract_block(text: str) -> str:
    """Pull the first balanced {...} block out of surrounding prose.

    Brace depth is tracked outside double-quoted strings; if the braces never
    balance, fall back to first-{ .. last-} so later steps still get a chance.
    """
    text = _strip_code_fences(text)
    start = text.find("{")
    if start < 0:
        return text
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    end = text.rfind("}")
    return text[start : end + 1] if end > start else text[start:]


def smart_quotes(text: str) -> str:
    for smart, straight in _SMART_QUOTES.items():
        text = text.replace(smart, straight)
    return text


def single_quotes(text: str) -> str:
    """Turn single-quoted keys/values into double-quoted ones.

    Only rewrites quotes that sit outside double-quoted string bodies, so
    apostrophes inside already-valid strings are untouched. \\' escapes
    inside the rewritten strings become plain apostrophes.
    """
    out: list[str] = []
    in_double = False
    in_single = False
    escaped = False
    for ch in text:
        if escaped:
            if in_single and ch == "'":
                out.append("'")  # \' has no meaning in JSON
            else:
                out.append("\\" + ch)
            escaped = False
            continue
        if ch == "\\":
            escaped = True
            continue
        if in_double:
            out.append(ch)
            if ch == '"':
                in_double = False
            continue
        if in_single:
            if ch == "'":
                out.append('"')
                in_single = False
            elif ch == '"':
                out.append('\\"')
            else:
                out.append(ch)
            continue
        if ch == '"':
            in_double = True
            out.append(ch)
        elif ch == "'":
            in_single = True
            out.append('"')
        else:
            out.append(ch)
    if escaped:
        out.append("\\")
    return "".join(out)


def trailing_commas(text: str) -> str:
    out: list[str] = []
    in_string = False
    escaped = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            i += 1
            continue
        if ch == '"':
            in_string = True
            out.append(ch)
            i += 1
            continue
        if ch == ",":
            j = i + 1
            while j < len(text) and text[j] in " \t\r\n":
                j += 1
            if j < len(text) and text[j] in "}]":
                i += 1  # drop the comma, keep the whitespace
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def escape_inner_quotes(text: str, explanation_key: str = "Explanation") -> str:
    """Escape bare double quotes inside the explanation value.

    The explanation is free text and the one field where models drop
    unescaped quotes. The value is taken to run from the quote after the key
    colon to the last quote that is followed only by whitespace and , or };
    every unescaped quote strictly inside gets a backslash.
    """
    m = re.search(r'"' + re.escape(explanation_key) + r'"\s*:\s*"', text)
    if not m:
        return text
    start = m.end()  # first char of the value body
    end = None
    for i in range(len(text) - 1, start - 1, -1):
        if text[i] != '"' or (i > 0 and text[i - 1] == "\\"):
            continue
        rest = text[i + 1 :].lstrip()
        if rest.startswith("}") or rest.startswith(","):
            end = i
            break
    if end is None or end <= start:
        return text
    body = text[start:end]
    fixed = re.sub(r'(?<!\\)"', '\\"', body)
    return text[:start] + fixed + text[end:]


def _coerce_af_pr(value, warnings: list[str]):
    """Clamp a numeric probability into [0,1]; non-numeric becomes absent."""
    if value is None:
        return None
    if isinstance(value, bool):
        warnings.append(f"probability given as boolean {value}; treated as {float(value)}")
        return float(value)
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            warnings.append(f"probability not numeric: {value!r}; dropped")
            return None
        warnings.append("probability given as a quoted string")
    if not isinstance(value, (int, float)):
        warnings.append(f"probability not numeric: {value!r}; dropped")
        return None
    value = float(value)
    if value != value:  # NaN
        warnings.append("probability was NaN; dropped")
        return None
    if value < 0.0 or value > 1.0:
        clamped = min(1.0, max(0.0, value))
        warnings.append(f"probability {value} outside [0,1]; clamped to {clamped}")
        return clamped
    return value


def repair_and_extract(
    raw_text: str, schema: TaskSchema, *, case_id: str = "", agent_id: str = ""
) -> RepairOutcome:
    """Parse a backend completion into an AgentVote, repairing if needed.

    Steps run in a fixed order and accumulate; parsing is retried after each
    one and the pipeline stops at the first success. repairs_applied lists
    the steps that actually changed the text, so a strict parse reports none
    and parse_status "repaired" always carries at least one.
    """
    warnings: list[str] = []
    applied: list[str] = []
    text = raw_text if isinstance(raw_text, str) else ""

    parsed = _try_parse(text)
    if parsed is None:
        steps = (
            (STEP_EXTRACT_BLOCK, extract_block),
            (STEP_SMART_QUOTES, smart_quotes),
            (STEP_SINGLE_QUOTES, single_quotes),
            (STEP_TRAILING_COMMAS, trailing_commas),
            (STEP_ESCAPE_INNER_QUOTES, lambda t: escape_inner_quotes(t, schema.explanation_key)),
        )
        for name, step in steps:
            new_text = step(text)
            if new_text != text:
                applied.append(name)
                text = new_text
            parsed = _try_parse(text)
            if parsed is not None:
                break

    if parsed is None:
        vote = AgentVote(
            case_id=case_id,
            agent_id=agent_id,
            raw=None,
            af_pr=None,
            explanation="",
            parse_status=PARSE_INVALID,
        )
        return RepairOutcome(vote, applied, raw_text, warnings + ["unparseable output"], None)

    raw_category = schema.parse_raw_category(parsed.get(schema.category_key))
    af_pr = _coerce_af_pr(parsed.get(schema.probability_key), warnings)
    explanation = parsed.get(schema.explanation_key, "")
    if not isinstance(explanation, str):
        explanation = json.dumps(explanation)

    if raw_category is None:
        got = parsed.get(schema.category_key)
        warnings.append(f"category {got!r} not in the task raw set")
        vote = AgentVote(
            case_id=case_id,
            agent_id=agent_id,
            raw=None,
            af_pr=af_pr,
            explanation=explanation,
            parse_status=PARSE_INVALID,
        )
        return RepairOutcome(vote, applied, raw_text, warnings, text)

    vote = AgentVote(
        case_id=case_id,
        agent_id=agent_id,
        raw=raw_category,
        af_pr=af_pr,
        explanation=explanation,
        parse_status=PARSE_REPAIRED if applied else PARSE_OK,
    )
    return RepairOutcome(vote, applied, raw_text, warnings, text)

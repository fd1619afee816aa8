"""Prompt assets and per-report request rendering."""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import yaml


class EmptyReportError(ValueError):
    """The report is empty after trimming; nothing to send to a backend."""


@dataclass(frozen=True)
class PromptTemplate:
    """A shipped prompt asset: system message, instruction, trailing marker.

    The instruction carries the output JSON schema block verbatim from the
    asset file; rendering appends the report after the marker and mutates
    nothing else.
    """

    system_message: str
    instruction: str
    report_marker: str


def load_prompt_asset(path: str | Path) -> PromptTemplate:
    data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"prompt asset {path}: expected a mapping")
    missing = [k for k in ("system_message", "instruction", "report_marker") if k not in data]
    if missing:
        raise ValueError(f"prompt asset {path}: missing keys {missing}")
    return PromptTemplate(
        system_message=str(data["system_message"]),
        instruction=str(data["instruction"]),
        report_marker=str(data["report_marker"]),
    )


def builtin_prompt_path(name: str) -> Path:
    """Path of a prompt asset shipped inside the package."""
    resource = importlib.resources.files("ensemblelabel") / "assets" / f"{name}.yaml"
    return Path(str(resource))


def render_prompt(template: PromptTemplate, report_text: str) -> tuple[str, str]:
    """Build the (system, user) message pair for one report.

    The user message is instruction + marker + report text, exactly; an
    empty report is an error so the case can be routed to review with the
    reason recorded.
    """
    if not report_text or not report_text.strip():
        raise EmptyReportError("empty input")
    return template.system_message, template.instruction + template.report_marker + report_text

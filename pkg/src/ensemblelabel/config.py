"""YAML run configuration: strict loading, validation, and the run manifest.

The config file specifies the task schema, the agent committee and the
backend each agent runs on, data and prompt paths, the vote thresholds, and
evaluation inputs. Loading is strict: unknown keys are rejected with their
YAML path, because a typo in an agent list would silently corrupt a
committee.
"""

from __future__ import annotations

import hashlib
import json
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from . import __version__
from .backends import AgentConfig, BackendConfigError, RetryPolicy
from .prompting import builtin_prompt_path, load_prompt_asset
from .schema import BUILTIN_SCHEMAS, SchemaError, TaskSchema
from .voting import DENOMINATOR_COMMITTEE, DENOMINATOR_VALID


class ConfigError(ValueError):
    pass


_TOP_KEYS = {
    "task", "agents", "input_path", "prompt_path", "output_schema_note",
    "k_thresholds", "run_dir", "truth_path", "review_store", "denominator",
    "prefilter", "concurrency", "simulation", "extensions",
}
_TASK_KEYS = {
    "task_id", "raw_set", "valid_set", "raw_to_final", "review_label",
    "default_label", "positive_class", "category_key", "probability_key",
    "explanation_key",
}
_AGENT_KEYS = {
    "agent_id", "backend_kind", "model_name", "endpoint", "generation_params",
    "retry_policy", "auth_env", "request_timeout", "simulated",
}
_RETRY_KEYS = {"max_attempts", "backoff_seconds"}
_SIMULATED_KEYS = {"seed", "accuracy", "emission", "hallucination_rates", "malformed_json_rate"}
_PREFILTER_KEYS = {"enabled"}
_CONCURRENCY_KEYS = {"per_agent_requests", "max_parallel_agents"}
_SIMULATION_KEYS = {"n_cases", "mix", "seed", "irrelevant_default_fraction"}


def _require_keys(block: Mapping, allowed: set[str], path: str):
    if not isinstance(block, Mapping):
        raise ConfigError(f"{path}: expected a mapping, got {type(block).__name__}")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


@dataclass(frozen=True)
class ConcurrencyLimits:
    per_agent_requests: int = 1
    max_parallel_agents: int = 4

    def __post_init__(self):
        if self.per_agent_requests < 1 or self.max_parallel_agents < 1:
            raise ConfigError("concurrency limits must be >= 1")


@dataclass(frozen=True)
class SimulationSpec:
    n_cases: int
    mix: Mapping[str, float]
    seed: int
    irrelevant_default_fraction: float = 0.0


@dataclass(frozen=True)
class EnsembleConfig:
    task: TaskSchema
    agents: tuple[AgentConfig, ...]
    prompt_path: Path
    run_dir: Path
    k_thresholds: tuple[int, ...]
    input_path: Path | None = None
    truth_path: Path | None = None
    review_store: Path | None = None
    denominator: str = DENOMINATOR_COMMITTEE
    prefilter_enabled: bool = True
    output_schema_note: str | None = None
    concurrency: ConcurrencyLimits = ConcurrencyLimits()
    simulation: SimulationSpec | None = None
    extensions: Mapping = field(default_factory=dict)
    config_hash: str = ""

    @property
    def primary_k(self) -> int:
        return self.k_thresholds[0]

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def resolved_review_store(self) -> Path:
        return self.review_store or (self.run_dir / "review_queue.jsonl")


def config_hash_of(raw: Mapping) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_task(block, path: str) -> TaskSchema:
    if isinstance(block, str):
        factory = BUILTIN_SCHEMAS.get(block)
        if factory is None:
            raise ConfigError(f"{path}: unknown builtin task {block!r}; "
                              f"choose {sorted(BUILTIN_SCHEMAS)} or define inline")
        return factory()
    _require_keys(block, _TASK_KEYS, path)
    try:
        return TaskSchema.from_dict(dict(block))
    except SchemaError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _parse_agent(block, path: str) -> AgentConfig:
    _require_keys(block, _AGENT_KEYS, path)
    if "agent_id" not in block or "backend_kind" not in block:
        raise ConfigError(f"{path}: agent_id and backend_kind are required")
    retry = block.get("retry_policy", {})
    _require_keys(retry, _RETRY_KEYS, f"{path}.retry_policy")
    simulated = block.get("simulated")
    if simulated is not None:
        _require_keys(simulated, _SIMULATED_KEYS, f"{path}.simulated")
    try:
        return AgentConfig(
            agent_id=str(block["agent_id"]),
            backend_kind=str(block["backend_kind"]),
            model_name=str(block.get("model_name", "")),
            endpoint=block.get("endpoint"),
            generation_params=dict(block.get("generation_params", {"temperature": 0})),
            retry_policy=RetryPolicy(
                max_attempts=int(retry.get("max_attempts", 3)),
                backoff_seconds=float(retry.get("backoff_seconds", 0.5)),
            ),
            auth_env=block.get("auth_env"),
            request_timeout=float(block.get("request_timeout", 60.0)),
            simulated=None if simulated is None else dict(simulated),
        )
    except BackendConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _cross_check_prompt(task: TaskSchema, prompt_path: Path):
    """The prompt asset must actually ask for this task's vocabulary."""
    template = load_prompt_asset(prompt_path)
    missing = [raw for raw in task.raw_set if f'"{raw}"' not in template.instruction]
    if missing:
        raise ConfigError(
            f"prompt_path: asset {prompt_path} never names categories {missing} "
            f"required by task {task.task_id!r}"
        )
    for key in (task.category_key, task.probability_key, task.explanation_key):
        if f'"{key}"' not in template.instruction:
            raise ConfigError(
                f"prompt_path: asset {prompt_path} does not request output key {key!r}"
            )


def load_config(path: str | Path, *, base_dir: Path | None = None) -> EnsembleConfig:
    """Load and fully validate a run configuration.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(raw, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    base = base_dir or path.parent

    _require_keys(raw, _TOP_KEYS, str(path))
    for key in ("task", "agents", "run_dir", "k_thresholds"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key {key!r}")

    task = _parse_task(raw["task"], "task")

    agents_block = raw["agents"]
    if not isinstance(agents_block, list) or not agents_block:
        raise ConfigError("agents: need a non-empty list of agents")
    agents = tuple(_parse_agent(a, f"agents[{i}]") for i, a in enumerate(agents_block))
    ids = [a.agent_id for a in agents]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise ConfigError(f"agents: duplicate agent_id {dupes}")

    ks = raw["k_thresholds"]
    if not isinstance(ks, list) or not ks or not all(isinstance(k, int) for k in ks):
        raise ConfigError("k_thresholds: need a non-empty list of integers")
    for k in ks:
        if not 0 <= k <= len(agents):
            raise ConfigError(
                f"k_thresholds: threshold {k} exceeds committee size {len(agents)}"
                if k > len(agents) else f"k_thresholds: threshold {k} is negative"
            )

    denominator = raw.get("denominator", DENOMINATOR_COMMITTEE)
    if denominator not in (DENOMINATOR_COMMITTEE, DENOMINATOR_VALID):
        raise ConfigError(f"denominator: must be '{DENOMINATOR_COMMITTEE}' or '{DENOMINATOR_VALID}'")

    prefilter_block = raw.get("prefilter", {})
    _require_keys(prefilter_block, _PREFILTER_KEYS, "prefilter")
    prefilter_enabled = bool(prefilter_block.get("enabled", True))

    conc_block = raw.get("concurrency", {})
    _require_keys(conc_block, _CONCURRENCY_KEYS, "concurrency")
    concurrency = ConcurrencyLimits(
        per_agent_requests=int(conc_block.get("per_agent_requests", 1)),
        max_parallel_agents=int(conc_block.get("max_parallel_agents", min(4, len(agents)))),
    )

    sim_block = raw.get("simulation")
    simulation = None
    if sim_block is not None:
        _require_keys(sim_block, _SIMULATION_KEYS, "simulation")
        for req in ("n_cases", "mix", "seed"):
            if req not in sim_block:
                raise ConfigError(f"simulation: missing key {req!r}")
        simulation = SimulationSpec(
            n_cases=int(sim_block["n_cases"]),
            mix=dict(sim_block["mix"]),
            seed=int(sim_block["seed"]),
            irrelevant_default_fraction=float(sim_block.get("irrelevant_default_fraction", 0.0)),
        )

    input_path = raw.get("input_path")
    if input_path is not None:
        input_path = (base / input_path).resolve() if not Path(input_path).is_absolute() \
            else Path(input_path)
        if not input_path.is_file():
            raise ConfigError(f"input_path: file not found: {input_path}")
    elif simulation is None:
        raise ConfigError("input_path: required unless a simulation block generates the corpus")

    prompt_path = raw.get("prompt_path")
    if prompt_path is None:
        if isinstance(raw["task"], str):
            prompt_path = builtin_prompt_path(f"{task.task_id}_prompt")
        else:
            raise ConfigError("prompt_path: required for inline task definitions")
    else:
        prompt_path = (base / prompt_path) if not Path(prompt_path).is_absolute() \
            else Path(prompt_path)
    if not Path(prompt_path).is_file():
        raise ConfigError(f"prompt_path: file not found: {prompt_path}")
    _cross_check_prompt(task, Path(prompt_path))

    truth_path = raw.get("truth_path")
    if truth_path is not None:
        truth_path = (base / truth_path) if not Path(truth_path).is_absolute() else Path(truth_path)
        if not Path(truth_path).is_file():
            raise ConfigError(f"truth_path: file not found: {truth_path}")

    run_dir = Path(raw["run_dir"])
    if not run_dir.is_absolute():
        run_dir = base / run_dir

    review_store = raw.get("review_store")
    if review_store is not None:
        review_store = Path(review_store)
        if not review_store.is_absolute():
            review_store = base / review_store

    task = TaskSchema.from_dict({**task.to_dict(), "prompt_asset": str(prompt_path)})

    return EnsembleConfig(
        task=task,
        agents=agents,
        prompt_path=Path(prompt_path),
        run_dir=run_dir,
        k_thresholds=tuple(ks),
        input_path=input_path,
        truth_path=truth_path,
        review_store=review_store,
        denominator=denominator,
        prefilter_enabled=prefilter_enabled,
        output_schema_note=raw.get("output_schema_note"),
        concurrency=concurrency,
        simulation=simulation,
        extensions=dict(raw.get("extensions", {})),
        config_hash=config_hash_of(raw),
    )


@dataclass
class RunManifest:
    """Progress and provenance for one run directory."""

    run_id: str
    config_hash: str
    tool_version: str = __version__
    seed: int | None = None
    started_at: float = field(default_factory=time.time)
    finished_at: float | None = None
    partition: dict = field(default_factory=dict)
    agent_summaries: list[dict] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    @classmethod
    def new(cls, config: EnsembleConfig, seed: int | None = None) -> "RunManifest":
        return cls(run_id=uuid.uuid4().hex, config_hash=config.config_hash, seed=seed)

    def save(self, run_dir: Path):
        payload = dict(self.__dict__)
        (run_dir / "manifest.json").write_text(
            json.dumps(payload, indent=2, default=str) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        data = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        manifest = cls(run_id=data["run_id"], config_hash=data["config_hash"])
        for key, value in data.items():
            setattr(manifest, key, value)
        return manifest

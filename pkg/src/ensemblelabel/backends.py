"""Agent backends: OpenAI-compatible HTTP, local model servers, simulation.

A backend turns one rendered request into raw completion text. Transport
failures are retried per the agent's retry policy; when retries are
exhausted the caller records an invalid vote for the case, so a flaky
backend degrades a committee instead of aborting the run.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Mapping
from urllib.parse import urlparse

import requests

logger = logging.getLogger(__name__)

BACKEND_KINDS = ("chat_completion_http", "local_model_server", "simulated")


class TransportError(RuntimeError):
    """All attempts at reaching a backend failed for one request."""


class BackendConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_seconds: float = 0.5

    def __post_init__(self):
        if self.max_attempts < 1:
            raise BackendConfigError("retry_policy.max_attempts must be >= 1")
        if self.backoff_seconds < 0:
            raise BackendConfigError("retry_policy.backoff_seconds must be >= 0")


@dataclass(frozen=True)
class AgentConfig:
    """Everything needed to run one agent over a corpus."""

    agent_id: str
    backend_kind: str
    model_name: str = ""
    endpoint: str | None = None
    generation_params: Mapping = field(default_factory=dict)
    retry_policy: RetryPolicy = RetryPolicy()
    auth_env: str | None = None
    request_timeout: float = 60.0
    simulated: Mapping | None = None

    def __post_init__(self):
        if self.backend_kind not in BACKEND_KINDS:
            raise BackendConfigError(
                f"agent {self.agent_id!r}: unknown backend_kind {self.backend_kind!r}"
            )
        if self.backend_kind == "simulated":
            if self.simulated is None or "seed" not in self.simulated:
                raise BackendConfigError(f"agent {self.agent_id!r}: simulated backends require a seed")
        else:
            if not self.endpoint:
                raise BackendConfigError(f"agent {self.agent_id!r}: backend needs an endpoint")
            parsed = urlparse(self.endpoint)
            if parsed.scheme not in ("http", "https") or not parsed.netloc:
                raise BackendConfigError(
                    f"agent {self.agent_id!r}: malformed endpoint {self.endpoint!r}"
                )


@dataclass(frozen=True)
class BackendRequest:
    case_id: str
    system: str
    user: str


@dataclass(frozen=True)
class BackendResult:
    text: str
    attempts: int
    latency_ms: float


class Backend:
    def complete(self, request: BackendRequest) -> BackendResult:
        raise NotImplementedError


class _HttpBackend(Backend):
    def __init__(self, config: AgentConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env:
            import os

            token = os.environ.get(self.config.auth_env, "")
            if not token:
                raise TransportError(
                    f"auth environment variable {self.config.auth_env} is empty"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _payload(self, request: BackendRequest) -> dict:
        raise NotImplementedError

    def _extract(self, data: dict) -> str:
        raise NotImplementedError

    def complete(self, request: BackendRequest) -> BackendResult:
        policy = self.config.retry_policy
        started = time.monotonic()
        last_error: Exception | None = None
        for attempt in range(1, policy.max_attempts + 1):
            try:
                response = self.session.post(
                    self.config.endpoint,
                    json=self._payload(request),
                    headers=self._headers(),
                    timeout=self.config.request_timeout,
                )
                if response.status_code >= 500 or response.status_code == 429:
                    raise requests.RequestException(
                        f"retryable status {response.status_code}"
                    )
                response.raise_for_status()
                text = self._extract(response.json())
                latency = (time.monotonic() - started) * 1000.0
                return BackendResult(text=text, attempts=attempt, latency_ms=latency)
            except (requests.RequestException, ValueError, KeyError) as exc:
                last_error = exc
                logger.warning(
                    "agent %s case %s attempt %d/%d failed: %s",
                    self.config.agent_id, request.case_id, attempt, policy.max_attempts, exc,
                )
                if attempt < policy.max_attempts and policy.backoff_seconds:
                    time.sleep(policy.backoff_seconds)
        raise TransportError(
            f"agent {self.config.agent_id}: {policy.max_attempts} attempts failed "
            f"for case {request.case_id}: {last_error}"
        )


class ChatCompletionBackend(_HttpBackend):
    """OpenAI-compatible chat completions endpoint."""

    def _payload(self, request: BackendRequest) -> dict:
        payload = {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
        }
        payload.update(self.config.generation_params)
        return payload

    def _extract(self, data: dict) -> str:
        return data["choices"][0]["message"]["content"]


class LocalModelServerBackend(_HttpBackend):
    """Ollama-compatible generate/chat endpoint; the URL picks the dialect."""

    @property
    def _generate_style(self) -> bool:
        return self.config.endpoint.rstrip("/").endswith("generate")

    def _payload(self, request: BackendRequest) -> dict:
        options = dict(self.config.generation_params)
        if self._generate_style:
            return {
                "model": self.config.model_name,
                "prompt": request.system + "\n\n" + request.user,
                "options": options,
                "stream": False,
            }
        return {
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "options": options,
            "stream": False,
        }

    def _extract(self, data: dict) -> str:
        if self._generate_style:
            return data["response"]
        return data["message"]["content"]


class SimulatedBackend(Backend):
    """Deterministic agent simulation; see the simulate module."""

    def __init__(self, profile, cases_by_id: Mapping, schema=None):
        from .simulate import simulate_response  # local import avoids a cycle

        self._simulate = simulate_response
        self.profile = profile
        self.cases_by_id = cases_by_id
        self.schema = schema

    def complete(self, request: BackendRequest) -> BackendResult:
        case = self.cases_by_id.get(request.case_id)
        if case is None:
            raise TransportError(
                f"simulated backend has no truth for case {request.case_id!r}"
            )
        started = time.monotonic()
        text = self._simulate(self.profile, case, self.schema)
        return BackendResult(
            text=text, attempts=1, latency_ms=(time.monotonic() - started) * 1000.0
        )


def build_backend(config: AgentConfig, *, sim_cases: Mapping | None = None,
                  schema=None, session: requests.Session | None = None) -> Backend:
    if config.backend_kind == "chat_completion_http":
        return ChatCompletionBackend(config, session=session)
    if config.backend_kind == "local_model_server":
        return LocalModelServerBackend(config, session=session)
    from .simulate import SimAgentProfile

    block = dict(config.simulated)
    if schema is not None:
        block.setdefault("schema", schema)
    profile = SimAgentProfile.from_config(config.agent_id, block)
    if sim_cases is None:
        raise BackendConfigError(
            f"agent {config.agent_id!r}: simulated backend needs a synthetic corpus "
            "(generated or matched via a truth file)"
        )
    return SimulatedBackend(profile, sim_cases, schema)


def invoke_backend(backend: Backend, request: BackendRequest) -> BackendResult:
    """Single entry point used by the agent runtime."""
    return backend.complete(request)

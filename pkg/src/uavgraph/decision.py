"""Decision layer: pluggable completion backends and the validate/repair loop."""

from __future__ import annotations

import enum
import json
import logging
import os
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

from .codec import (
    CORRECTION_MARKER,
    FATAL,
    Diagnostic,
    DecisionResponse,
    parse_graph,
    parse_route_reply,
    prompt_key,
    render_prompt,
    render_route,
)
from .energy import EnergyModelConfig
from .graph import NetworkGraph
from .routing import Route, best_charge_insertion, heuristic_route, nearest_neighbor_order

log = logging.getLogger(__name__)

REPLY_DELIMITER = "--- reply"
ANY_PROMPT = "*"


class BackendConfigError(RuntimeError):
    """Misconfiguration that retrying cannot fix."""


class RetriableBackendError(RuntimeError):
    """Transient failure talking to a backend."""


class BackendKind(str, enum.Enum):
    HTTP_LLM = "http"
    REPLAY = "replay"
    HEURISTIC = "heuristic"


@dataclass(frozen=True)
class DecisionBackendSpec:
    kind: BackendKind = BackendKind.HEURISTIC
    endpoint: str | None = None
    model_name: str = "heuristic"
    max_retries: int = 2
    temperature: float = 0.0
    fixture: str | None = None
    api_key_env: str = "UAVGRAPH_API_KEY"
    timeout_s: float = 30.0
    max_in_flight: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if not 0 <= self.max_retries <= 5:
            raise BackendConfigError(f"max_retries must be in [0, 5], got {self.max_retries}")
        if self.temperature < 0:
            raise BackendConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_in_flight < 1:
            raise BackendConfigError("max_in_flight must be >= 1")
        if self.kind is BackendKind.HTTP_LLM and not self.endpoint:
            raise BackendConfigError("http backend needs an endpoint URL")
        if self.kind is BackendKind.REPLAY:
            if not self.fixture:
                raise BackendConfigError("replay backend needs a fixture file")
            if not Path(self.fixture).is_file():
                raise BackendConfigError(f"replay fixture not found: {self.fixture}")

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionBackendSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise BackendConfigError(f"unknown backend keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["kind"] = self.kind.value
        return d


# --- backends ---------------------------------------------------------------


class HeuristicBackend:
    """Reads the graph back out of the prompt and answers with NN + 2-opt."""

    def __init__(self, spec: DecisionBackendSpec, energy: EnergyModelConfig):
        self.spec = spec
        self.energy = energy

    def complete(self, prompt: str) -> str:
        if not prompt.strip():
            raise ValueError("empty prompt")
        graph = parse_graph(prompt.split(CORRECTION_MARKER, 1)[0])
        return render_route(heuristic_route(graph, self.energy), graph)


def load_replay_fixture(path: str | Path) -> dict[str, list[str]]:
    """Parse a replay fixture into ``{prompt key: [replies...]}``.

    Each block starts with a line ``--- reply <key>``; ``<key>`` is a prompt
    key from :func:`prompt_key` or ``*`` for any prompt. Everything up to the
    next header is the reply, with surrounding blank lines trimmed.
    """
    blocks: dict[str, list[str]] = {}
    key = None
    buf: list[str] = []

    def flush():
        if key is not None:
            blocks.setdefault(key, []).append("\n".join(buf).strip("\n"))

    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith(REPLY_DELIMITER):
            flush()
            rest = line[len(REPLY_DELIMITER) :].strip()
            key = rest or ANY_PROMPT
            buf = []
        elif key is not None:
            buf.append(line)
    flush()
    return blocks


def write_replay_fixture(path: str | Path, replies: list[str], key: str = ANY_PROMPT) -> None:
    text = "".join(f"{REPLY_DELIMITER} {key}\n{r}\n" for r in replies)
    Path(path).write_text(text, encoding="utf-8")


class ReplayBackend:
    def __init__(self, spec: DecisionBackendSpec):
        self.spec = spec
        self._blocks = load_replay_fixture(spec.fixture)
        self._cursor: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, prompt: str) -> str:
        if not prompt.strip():
            raise ValueError("empty prompt")
        key = prompt_key(prompt)
        if key not in self._blocks:
            key = ANY_PROMPT
        if key not in self._blocks:
            raise BackendConfigError(f"replay miss: no fixture entry for prompt key {prompt_key(prompt)}")
        with self._lock:
            i = self._cursor.get(key, 0)
            replies = self._blocks[key]
            if i >= len(replies):
                raise BackendConfigError(f"replay fixture exhausted after {len(replies)} replies")
            self._cursor[key] = i + 1
        return replies[i]


_endpoint_slots: dict[str, threading.BoundedSemaphore] = {}
_slots_lock = threading.Lock()


def _slot(endpoint: str, limit: int) -> threading.BoundedSemaphore:
    with _slots_lock:
        if endpoint not in _endpoint_slots:
            _endpoint_slots[endpoint] = threading.BoundedSemaphore(limit)
        return _endpoint_slots[endpoint]


class HttpLlmBackend:
    """Chat-completion style JSON over HTTP.

    Request: ``{"model", "messages": [{"role", "content"}], "temperature"}``.
    The reply is read from ``choices[0].message.content``. At most
    ``max_in_flight`` requests per endpoint run at once, process-wide.
    """

    def __init__(self, spec: DecisionBackendSpec):
        self.spec = spec
        self._slot = _slot(spec.endpoint, spec.max_in_flight)

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.spec.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.spec.temperature,
        }

    def complete(self, prompt: str) -> str:
        if not prompt.strip():
            raise ValueError("empty prompt")
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.spec.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(
            self.spec.endpoint,
            data=json.dumps(self.request_body(prompt)).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        with self._slot:
            try:
                with urllib.request.urlopen(req, timeout=self.spec.timeout_s) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as exc:
                raise RetriableBackendError(f"{self.spec.endpoint} returned HTTP {exc.code}") from exc
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                raise RetriableBackendError(f"cannot reach {self.spec.endpoint}: {exc}") from exc
            except json.JSONDecodeError as exc:
                raise RetriableBackendError(f"non-JSON reply from {self.spec.endpoint}") from exc
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise RetriableBackendError("reply lacks choices[0].message.content") from exc
        if not isinstance(content, str):
            raise RetriableBackendError("reply content is not text")
        return content


def make_backend(spec: DecisionBackendSpec, energy: EnergyModelConfig | None = None):
    if spec.kind is BackendKind.HEURISTIC:
        return HeuristicBackend(spec, energy or EnergyModelConfig())
    if spec.kind is BackendKind.REPLAY:
        return ReplayBackend(spec)
    return HttpLlmBackend(spec)


def complete(backend, prompt: str) -> str:
    """Send ``prompt`` through ``backend`` (an instance from :func:`make_backend`)."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    return backend.complete(prompt)


# --- validate / repair loop ----------------------------------------------------


@dataclass(frozen=True)
class Proposal:
    """A route plus how it was obtained."""

    route: Route
    backend: str
    fallback: bool = False
    retries: int = 0
    attempts: tuple[tuple[str, ...], ...] = field(default=())
    repairs: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "visit_order": list(self.route.visit_order),
            "charge_after": self.route.charge_after,
            "backend": self.backend,
            "fallback": self.fallback,
            "retries": self.retries,
            "attempts": [list(a) for a in self.attempts],
            "repairs": list(self.repairs),
        }


def correction_suffix(response: DecisionResponse | None, error: str | None = None) -> str:
    issues = [error] if error else [str(d) for d in response.diagnostics if d.severity == FATAL]
    return (
        f"\n{CORRECTION_MARKER}\nYour previous answer could not be used: "
        + "; ".join(issues)
        + ". Reply again with one line listing every monitoring point exactly once, e.g. "
        "Route: A -> 1 -> 2 -> C -> 3 -> A"
    )


def repair_route(
    response: DecisionResponse, graph: NetworkGraph, energy: EnergyModelConfig
) -> tuple[Route, tuple[str, ...]]:
    """Turn a non-fatal parse into a valid route.

    Missing monitors (if any slipped through) are appended in nearest-neighbour
    order; a missing or displaced charging stop is re-inserted at the best
    slot. Duplicates were already dropped by the parser.
    """
    route = response.parsed_route
    repairs = [d.message for d in response.diagnostics if d.severity != FATAL]
    order = nearest_neighbor_order(graph, route.visit_order)
    if order != route.visit_order:
        repairs.append("appended missing monitors in nearest-neighbour order")
        route = best_charge_insertion(order, graph, energy)
    elif response.charge_missing:
        route = best_charge_insertion(order, graph, energy)
    route.validate(graph)
    return route, tuple(repairs)


def propose_trajectory(
    graph: NetworkGraph,
    backend_spec: DecisionBackendSpec,
    energy: EnergyModelConfig | None = None,
    *,
    backend=None,
) -> Proposal:
    """Stage one: serialize, prompt, parse, repair; retry on fatal replies.

    After ``max_retries`` failed re-prompts the internal heuristic answers
    instead and the proposal is flagged ``fallback``. Only configuration
    errors propagate.
    """
    energy = energy or EnergyModelConfig()
    backend = backend if backend is not None else make_backend(backend_spec, energy)
    base_prompt = render_prompt(graph)
    prompt = base_prompt
    attempts: list[tuple[str, ...]] = []
    for attempt in range(backend_spec.max_retries + 1):
        try:
            reply = complete(backend, prompt)
        except RetriableBackendError as exc:
            log.warning("backend attempt %d failed: %s", attempt + 1, exc)
            attempts.append((f"backend error: {exc}",))
            prompt = base_prompt + correction_suffix(None, str(exc))
            continue
        response = parse_route_reply(reply, graph)
        attempts.append(tuple(str(d) for d in response.diagnostics))
        if not response.fatal:
            route, repairs = repair_route(response, graph, energy)
            return Proposal(route, backend_spec.kind.value, False, attempt, tuple(attempts), repairs)
        prompt = base_prompt + correction_suffix(response)

    log.info("falling back to heuristic after %d attempts", len(attempts))
    route = heuristic_route(graph, energy)
    return Proposal(route, BackendKind.HEURISTIC.value, True, backend_spec.max_retries, tuple(attempts))

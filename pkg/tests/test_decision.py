import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavgraph.codec import parse_route_reply, prompt_key, render_prompt, render_route
from uavgraph.decision import (
    BackendConfigError,
    BackendKind,
    DecisionBackendSpec,
    HttpLlmBackend,
    RetriableBackendError,
    complete,
    load_replay_fixture,
    make_backend,
    propose_trajectory,
    write_replay_fixture,
)
from uavgraph.graph import ScenarioConfig, build_scenario
from uavgraph.routing import Route, heuristic_route

REFUSAL = "I cannot help with that."


def _replay(tmp_path, replies, retries=2, key="*"):
    path = tmp_path / "fixture.txt"
    write_replay_fixture(path, replies, key)
    return DecisionBackendSpec(kind="replay", fixture=str(path), max_retries=retries)


def test_heuristic_reply_covers_all_monitors(seed42, energy):
    spec = DecisionBackendSpec()
    text = complete(make_backend(spec, energy), render_prompt(seed42))
    r = parse_route_reply(text, seed42)
    assert not r.fatal
    assert sorted(r.parsed_route.visit_order) == list(seed42.monitor_ids)


def test_replay_fixture_exhausted(tmp_path, seed42):
    backend = make_backend(_replay(tmp_path, ["Route: A -> 1 -> C -> A"]))
    prompt = render_prompt(seed42)
    complete(backend, prompt)
    with pytest.raises(BackendConfigError, match="fixture exhausted"):
        complete(backend, prompt)


def test_replay_keyed_by_prompt(tmp_path, seed42):
    other = build_scenario(ScenarioConfig(seed=1))
    spec = _replay(tmp_path, ["Route: A -> 1 -> C -> A"], key=prompt_key(render_prompt(seed42)))
    backend = make_backend(spec)
    assert complete(backend, render_prompt(seed42)).startswith("Route")
    with pytest.raises(BackendConfigError, match="replay miss"):
        complete(backend, render_prompt(other))


def test_fixture_format(tmp_path):
    path = tmp_path / "f.txt"
    path.write_text("--- reply *\nfirst\n\n--- reply abc\nsecond line\nmore\n--- reply\nthird\n")
    assert load_replay_fixture(path) == {"*": ["first", "third"], "abc": ["second line\nmore"]}


def test_empty_prompt_rejected(energy):
    with pytest.raises(ValueError):
        complete(make_backend(DecisionBackendSpec(), energy), "")


def test_spec_validation(tmp_path):
    with pytest.raises(BackendConfigError):
        DecisionBackendSpec(max_retries=6)
    with pytest.raises(BackendConfigError):
        DecisionBackendSpec(temperature=-1)
    with pytest.raises(BackendConfigError):
        DecisionBackendSpec(kind="http")
    with pytest.raises(BackendConfigError, match="not found"):
        DecisionBackendSpec(kind="replay", fixture=str(tmp_path / "nope.txt"))
    spec = DecisionBackendSpec(kind="http", endpoint="http://x/y", temperature=0.3)
    assert DecisionBackendSpec.from_dict(spec.to_dict()) == spec


def test_valid_reply_passes_through(tmp_path, seed42, energy):
    text = "Route: A -> 6 -> 5 -> 4 -> C -> 3 -> 2 -> 1 -> A"
    p = propose_trajectory(seed42, _replay(tmp_path, [text]), energy)
    assert p.route == Route((6, 5, 4, 3, 2, 1), 2)
    assert (p.backend, p.fallback, p.retries) == ("replay", False, 0)


def test_refusal_then_valid_reply_counts_one_retry(tmp_path, seed42, energy):
    text = "Route: A -> 6 -> 5 -> 4 -> C -> 3 -> 2 -> 1 -> A"
    p = propose_trajectory(seed42, _replay(tmp_path, [REFUSAL, text], retries=1), energy)
    assert p.route == Route((6, 5, 4, 3, 2, 1), 2)
    assert p.retries == 1
    assert len(p.attempts) == 2
    assert any("fatal" in d for d in p.attempts[0])


def test_refusal_without_retries_falls_back(tmp_path, seed42, energy):
    p = propose_trajectory(seed42, _replay(tmp_path, [REFUSAL], retries=0), energy)
    assert p.fallback
    assert p.backend == "heuristic"
    assert p.route == heuristic_route(seed42, energy)


def test_missing_charge_is_reinserted(tmp_path, seed42, energy):
    p = propose_trajectory(seed42, _replay(tmp_path, ["A -> 1 -> 3 -> 6 -> 5 -> 2 -> 4 -> A"]), energy)
    assert not p.fallback
    assert p.route.visit_order == (1, 3, 6, 5, 2, 4)
    assert "missing charge stop" in p.repairs


def test_unreachable_http_endpoint_is_retriable():
    spec = DecisionBackendSpec(kind="http", endpoint="http://127.0.0.1:9/v1/chat", timeout_s=0.5)
    t0 = time.monotonic()
    with pytest.raises(RetriableBackendError):
        HttpLlmBackend(spec).complete("hello")
    assert time.monotonic() - t0 < 5


class _Chat(BaseHTTPRequestHandler):
    reply = "Route: A -> 1 -> 3 -> 6 -> 5 -> 2 -> 4 -> C -> A"
    seen: list = []
    active = 0
    peak = 0
    lock = threading.Lock()

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        with _Chat.lock:
            _Chat.seen.append((body, self.headers.get("Authorization")))
            _Chat.active += 1
            _Chat.peak = max(_Chat.peak, _Chat.active)
        time.sleep(0.05)
        with _Chat.lock:
            _Chat.active -= 1
        payload = json.dumps({"choices": [{"message": {"content": _Chat.reply}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def chat_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Chat)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _Chat.seen, _Chat.peak, _Chat.active = [], 0, 0
    yield f"http://127.0.0.1:{server.server_port}/v1/chat"
    server.shutdown()


def test_http_backend_round_trip(chat_server, seed42, energy, monkeypatch):
    monkeypatch.setenv("UAVGRAPH_API_KEY", "k-123")
    spec = DecisionBackendSpec(kind="http", endpoint=chat_server, model_name="m1", temperature=0.2)
    p = propose_trajectory(seed42, spec, energy)
    assert p.route.visit_order == (1, 3, 6, 5, 2, 4)
    body, auth = _Chat.seen[0]
    assert body["model"] == "m1"
    assert body["temperature"] == 0.2
    assert body["messages"][0]["content"] == render_prompt(seed42)
    assert auth == "Bearer k-123"


def test_http_in_flight_limit(chat_server):
    spec = DecisionBackendSpec(kind="http", endpoint=chat_server, max_in_flight=2)
    backend = HttpLlmBackend(spec)
    threads = [threading.Thread(target=backend.complete, args=("hi",)) for _ in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(_Chat.seen) == 6
    assert _Chat.peak <= 2


@settings(max_examples=150, deadline=None)
@given(replies=st.lists(st.text(max_size=80), min_size=3, max_size=3), retries=st.integers(0, 2))
def test_propose_is_total(tmp_path_factory, replies, retries):
    g = build_scenario(ScenarioConfig(n_points=4, seed=3))
    path = tmp_path_factory.mktemp("fx") / "f.txt"
    path.write_text("".join(f"--- reply *\n{r.replace('--- reply', '')}\n" for r in replies))
    spec = DecisionBackendSpec(kind=BackendKind.REPLAY, fixture=str(path), max_retries=retries)
    p = propose_trajectory(g, spec)
    p.route.validate(g)


def test_backends_are_indistinguishable_downstream(tmp_path, seed42, energy):
    text = render_route(heuristic_route(seed42, energy), seed42)
    a = propose_trajectory(seed42, DecisionBackendSpec(), energy)
    b = propose_trajectory(seed42, _replay(tmp_path, [text]), energy)
    assert a.route == b.route
    assert a.backend != b.backend

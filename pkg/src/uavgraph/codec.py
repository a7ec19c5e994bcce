"""Graph <-> text: the prompt-side serialization and the reply-side parsers.

The text form is line oriented. One ``node`` line per node in id order, one
``edge`` line per unordered pair ``i < j``::

    node 0: start at (0.00, 0.00)
    node 1: monitor at (3.00, 4.00), task 10 MB
    edge (0,1): 5.00 m

Both parsers scan characters by hand instead of using regular expressions;
the reply parser in particular has to survive arbitrary model output.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from importlib import resources
from string import Template

from .graph import NetworkGraph, Node, NodeKind, ScenarioError
from .routing import BEFORE_FIRST_VISIT, Route

TEMPLATE_NAME = "route_prompt.txt"
TEMPLATE_VERSION = "route-prompt v1"
CORRECTION_MARKER = "### correction"
DISTANCE_TOLERANCE_M = 0.02
START_LABEL = "A"
CHARGE_LABEL = "C"

FATAL = "fatal"
REPAIRABLE = "repairable"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    line: int | None = None

    def __str__(self) -> str:
        where = f"line {self.line}: " if self.line is not None else ""
        return f"{self.severity}: {where}{self.message}"


class GraphTextError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics if d.severity == FATAL))


def _fmt_xy(v: float) -> str:
    return f"{v:.2f}"


def _fmt_task(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


@dataclass(frozen=True)
class GraphText:
    preamble: str
    node_lines: tuple[str, ...]
    edge_lines: tuple[str, ...]
    objective_clause: str

    def body(self) -> str:
        """Canonical graph bytes: preamble, node and edge lines."""
        return "\n".join((self.preamble, *self.node_lines, *self.edge_lines)) + "\n"

    def render(self, template: str | None = None) -> str:
        tpl = Template(template if template is not None else load_template())
        return tpl.substitute(
            preamble=self.preamble,
            node_block="\n".join(self.node_lines),
            edge_block="\n".join(self.edge_lines),
            objective_clause=self.objective_clause,
        )


def load_template() -> str:
    return resources.files("uavgraph").joinpath("templates").joinpath(TEMPLATE_NAME).read_text(encoding="utf-8")


def node_line(n: Node) -> str:
    s = f"node {n.id}: {n.kind.value} at ({_fmt_xy(n.position[0])}, {_fmt_xy(n.position[1])})"
    if n.kind is NodeKind.MONITOR:
        s += f", task {_fmt_task(n.task_size)} MB"
    return s


def serialize_graph(graph: NetworkGraph) -> GraphText:
    w, h = graph.area
    preamble = (
        f"Network: area {_fmt_xy(w)} m x {_fmt_xy(h)} m, {graph.n_monitors} monitoring points, "
        f"start node {graph.start_id} ({START_LABEL}), charging station node {graph.charge_id} ({CHARGE_LABEL})."
    )
    nodes = sorted(graph.nodes, key=lambda n: n.id)
    node_lines = tuple(node_line(n) for n in nodes)
    edge_lines = tuple(
        f"edge ({a.id},{b.id}): {graph.distance(a.id, b.id):.2f} m"
        for i, a in enumerate(nodes)
        for b in nodes[i + 1 :]
    )
    objective = (
        f"Task: plan one UAV tour that leaves node {graph.start_id} ({START_LABEL}), visits every monitoring "
        f"point exactly once, stops exactly once at node {graph.charge_id} ({CHARGE_LABEL}) to recharge to "
        f"full, and returns to node {graph.start_id}. Flying costs energy in proportion to distance and "
        f"collecting a task costs energy in proportion to its size. Minimise the total energy used without "
        f"letting the battery run out.\n"
        f"Answer with a single line of the form: Route: {START_LABEL} -> <id> -> ... -> {CHARGE_LABEL} -> ... "
        f"-> {START_LABEL}"
    )
    return GraphText(preamble, node_lines, edge_lines, objective)


def render_prompt(graph: NetworkGraph) -> str:
    return serialize_graph(graph).render()


def prompt_key(prompt: str) -> str:
    """Replay key: hash of the prompt up to any correction suffix."""
    base = prompt.split(CORRECTION_MARKER, 1)[0].rstrip()
    return hashlib.sha256(base.encode("utf-8")).hexdigest()[:16]


def render_route(route: Route, graph: NetworkGraph) -> str:
    """Reply text in the format the prompt asks for."""
    labels = []
    for stop in route.stops(graph):
        if stop == graph.start_id:
            labels.append(START_LABEL)
        elif stop == graph.charge_id:
            labels.append(CHARGE_LABEL)
        else:
            labels.append(str(stop))
    return "Route: " + " -> ".join(labels)


# --- graph text parsing -----------------------------------------------------

_KINDS = {k.value: k for k in NodeKind}


def _parse_pair(inner: str, conv) -> tuple:
    parts = inner.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated values in '({inner})'")
    return conv(parts[0].strip()), conv(parts[1].strip())


def _between(s: str, lo: str, hi: str) -> tuple[str, str]:
    i = s.find(lo)
    j = s.find(hi, i + 1)
    if i < 0 or j < 0:
        raise ValueError(f"missing '{lo}...{hi}'")
    return s[i + 1 : j], s[j + 1 :]


def _finite(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"non-finite number '{s}'")
    return v


def _parse_node(body: str) -> Node:
    head, sep, rest = body.partition(":")
    words = head.split()
    if not sep or len(words) != 2:
        raise ValueError("expected 'node <id>: <kind> at (x, y)'")
    nid = int(words[1])
    kind_word = rest.split(maxsplit=1)[0] if rest.split() else ""
    if kind_word not in _KINDS:
        raise ValueError(f"unknown node kind '{kind_word}'")
    kind = _KINDS[kind_word]
    inner, tail = _between(rest, "(", ")")
    x, y = _parse_pair(inner, _finite)
    task = 0.0
    tail = tail.strip()
    if tail:
        tw = tail.lstrip(",").split()
        if len(tw) != 3 or tw[0] != "task" or tw[2] != "MB":
            raise ValueError(f"unexpected trailer '{tail}'")
        task = _finite(tw[1])
    return Node(nid, kind, (x, y), task)


def _parse_edge(body: str) -> tuple[int, int, float]:
    inner, tail = _between(body, "(", ")")
    a, b = _parse_pair(inner, int)
    tail = tail.strip()
    if not tail.startswith(":"):
        raise ValueError("expected ': <distance> m' after the endpoints")
    tw = tail[1:].split()
    if len(tw) != 2 or tw[1] != "m":
        raise ValueError(f"expected '<distance> m', got '{tail[1:].strip()}'")
    return a, b, _finite(tw[0])


def _parse_area(preamble: str) -> tuple[float, float]:
    words = preamble.replace(",", " ").split()
    i = words.index("area")
    # "area <w> m x <h> m"
    if words[i + 2] != "m" or words[i + 3] != "x" or words[i + 5] != "m":
        raise ValueError("expected 'area <w> m x <h> m'")
    return _finite(words[i + 1]), _finite(words[i + 4])


def parse_graph_with_diagnostics(text: GraphText | str) -> tuple[NetworkGraph | None, list[Diagnostic]]:
    """Parse serialized graph text, collecting every issue found.

    Returns ``(graph, diagnostics)``; ``graph`` is None when any diagnostic
    is fatal. Edge distances are redundant with node positions: a mismatch
    beyond 0.02 m is reported as a warning and the positions are kept.
    """
    if isinstance(text, GraphText):
        text = text.body()
    diags: list[Diagnostic] = []
    area = None
    nodes: dict[int, Node] = {}
    edges: list[tuple[int, int, float, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        try:
            if line.startswith("Network:"):
                area = _parse_area(line)
            elif line.startswith("node "):
                n = _parse_node(line)
                if n.id in nodes:
                    diags.append(Diagnostic(FATAL, f"duplicate node id {n.id}", lineno))
                nodes[n.id] = n
            elif line.startswith("edge "):
                a, b, d = _parse_edge(line)
                edges.append((a, b, d, lineno))
        except (ValueError, IndexError) as exc:
            diags.append(Diagnostic(FATAL, f"malformed line '{line}': {exc}", lineno))

    if area is None:
        diags.append(Diagnostic(FATAL, "missing 'Network: area ...' preamble"))
    kinds = [n.kind for n in nodes.values()]
    if NodeKind.START not in kinds:
        diags.append(Diagnostic(FATAL, "missing start node"))
    if NodeKind.CHARGE not in kinds:
        diags.append(Diagnostic(FATAL, "missing charge node"))
    for a, b, d, lineno in edges:
        missing = [x for x in (a, b) if x not in nodes]
        if missing:
            diags.append(
                Diagnostic(FATAL, f"edge ({a},{b}) references unknown node {', '.join(map(str, missing))}", lineno)
            )
            continue
        actual = math.dist(nodes[a].position, nodes[b].position)
        if abs(actual - d) > DISTANCE_TOLERANCE_M:
            diags.append(
                Diagnostic(
                    WARNING,
                    f"edge ({a},{b}) states {d:.2f} m but positions give {actual:.2f} m; using positions",
                    lineno,
                )
            )
    if any(d.severity == FATAL for d in diags):
        return None, diags
    try:
        graph = NetworkGraph(tuple(nodes[i] for i in sorted(nodes)), area)
    except ScenarioError as exc:
        diags.append(Diagnostic(FATAL, str(exc)))
        return None, diags
    return graph, diags


def parse_graph(text: GraphText | str) -> NetworkGraph:
    """Parse graph text; raises :class:`GraphTextError` on any fatal issue."""
    graph, diags = parse_graph_with_diagnostics(text)
    if graph is None:
        raise GraphTextError(diags)
    return graph


# --- reply parsing ----------------------------------------------------------

_DIGITS = "0123456789"
# words that may sit between route references without ending the list
_FILLER = frozenset(
    "node nodes point points monitor monitoring station charge charging charger start "
    "to then and visit return back finally go fly via end".split()
)
_MAX_ID_DIGITS = 9


@dataclass(frozen=True)
class _Ref:
    kind: str  # "id" | "start" | "charge" | "bad"
    value: int | None
    text: str


def _tokenize(raw: str) -> list[_Ref | str | None]:
    """Yield node references, plain words (str) and separators (None)."""
    out: list[_Ref | str | None] = []
    i, n = 0, len(raw)
    while i < n:
        c = raw[i]
        if c in _DIGITS:
            j = i
            while j < n and raw[j] in _DIGITS:
                j += 1
            if j + 1 < n and raw[j] == "." and raw[j + 1] in _DIGITS:
                # decimal number: prose, not a node id
                j += 1
                while j < n and raw[j] in _DIGITS:
                    j += 1
                out.append(raw[i:j])
            elif j < n and raw[j].isalpha():
                k = j
                while k < n and raw[k].isalnum():
                    k += 1
                out.append(raw[i:k])
                j = k
            else:
                digits = raw[i:j]
                if len(digits) > _MAX_ID_DIGITS:
                    out.append(_Ref("bad", None, digits))
                else:
                    out.append(_Ref("id", int(digits), digits))
            i = j
        elif c.isalpha():
            j = i
            while j < n and (raw[j].isalpha() or raw[j] in _DIGITS):
                j += 1
            word = raw[i:j]
            if word == START_LABEL:
                out.append(_Ref("start", None, word))
            elif word == CHARGE_LABEL:
                out.append(_Ref("charge", None, word))
            elif (
                len(word) >= 2
                and word[0] in "MP"
                and all(ch in _DIGITS for ch in word[1:])
                and len(word) - 1 <= _MAX_ID_DIGITS
            ):
                out.append(_Ref("id", int(word[1:]), word))
            elif word.lower() in _FILLER:
                out.append(None)
            else:
                out.append(word)
            i = j
        else:
            out.append(None)
            i += 1
    return out


def _runs(tokens: list[_Ref | str | None]) -> list[list[_Ref]]:
    runs: list[list[_Ref]] = []
    cur: list[_Ref] = []
    for t in tokens:
        if isinstance(t, _Ref):
            cur.append(t)
        elif isinstance(t, str):
            if cur:
                runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


@dataclass(frozen=True)
class DecisionResponse:
    raw_text: str
    parsed_route: Route | None
    diagnostics: tuple[Diagnostic, ...]
    mentioned_order: tuple[int, ...] = field(default=())

    @property
    def fatal(self) -> bool:
        return any(d.severity == FATAL for d in self.diagnostics)

    @property
    def charge_missing(self) -> bool:
        return any(d.severity == REPAIRABLE and d.message == "missing charge stop" for d in self.diagnostics)


def parse_route_reply(raw: str, graph: NetworkGraph) -> DecisionResponse:
    """Extract a route from free-form model output. Never raises on text input.

    The longest list of node references (ids, ``M3``/``P3`` forms, or the
    labels ``A``/``C``) joined only by separators wins. Duplicates, a missing
    return to start, extra charging stops and a missing charging stop are
    repairable; unknown nodes and missing monitors are fatal. A missing
    charging stop yields a route charging before the first visit and a
    ``missing charge stop`` diagnostic so the caller can re-insert it.
    """
    if not isinstance(raw, str):
        raw = str(raw)
    diags: list[Diagnostic] = []
    runs = _runs(_tokenize(raw))
    monitors = set(graph.monitor_ids)

    def score(run: list[_Ref]) -> tuple[int, int]:
        return (len({r.value for r in run if r.kind == "id" and r.value in monitors}), len(run))

    if not runs:
        diags.append(Diagnostic(FATAL, "no node references found in reply"))
        return DecisionResponse(raw, None, tuple(diags))
    best = runs[0]
    for run in runs[1:]:
        if score(run) > score(best):
            best = run

    order: list[int] = []
    charge_after: int | None = None
    for pos, ref in enumerate(best):
        if ref.kind == "bad":
            diags.append(Diagnostic(FATAL, f"unknown node {ref.text}"))
            continue
        if ref.kind == "start" or (ref.kind == "id" and ref.value == graph.start_id):
            if 0 < pos < len(best) - 1:
                diags.append(Diagnostic(REPAIRABLE, "intermediate return to start ignored"))
            continue
        if ref.kind == "charge" or (ref.kind == "id" and ref.value == graph.charge_id):
            if charge_after is None:
                charge_after = len(order) - 1
            else:
                diags.append(Diagnostic(REPAIRABLE, "multiple charge stops; kept the first"))
            continue
        if ref.value == graph.operator_id:
            diags.append(Diagnostic(REPAIRABLE, f"operator node {ref.value} is not a waypoint; dropped"))
            continue
        if ref.value not in monitors:
            diags.append(Diagnostic(FATAL, f"unknown node {ref.value}"))
            continue
        if ref.value in order:
            diags.append(Diagnostic(REPAIRABLE, f"duplicate visit of node {ref.value}; kept first occurrence"))
            continue
        order.append(ref.value)

    last = best[-1]
    if not (last.kind == "start" or (last.kind == "id" and last.value == graph.start_id)):
        diags.append(Diagnostic(REPAIRABLE, "missing return to start"))
    missing = [m for m in graph.monitor_ids if m not in order]
    if missing:
        diags.append(
            Diagnostic(
                FATAL,
                f"only {len(order)} of {graph.n_monitors} monitors mentioned; missing {missing}",
            )
        )
    if charge_after is None:
        diags.append(Diagnostic(REPAIRABLE, "missing charge stop"))
    if any(d.severity == FATAL for d in diags):
        return DecisionResponse(raw, None, tuple(diags), tuple(order))
    k = BEFORE_FIRST_VISIT if charge_after is None else charge_after
    return DecisionResponse(raw, Route(tuple(order), k), tuple(diags), tuple(order))

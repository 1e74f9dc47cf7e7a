"""Directed-graph decision spaces: data model, validation, builders, enumeration.

A space is a directed multigraph. Decision vertices carry out-edges (the
available actions); terminal vertices end the walk. Parallel edges and
self-loops are allowed. Every walk from the start vertex to a terminal
defines one candidate configuration.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

DECISION = "decision"
TERMINAL = "terminal"

ADD_LAYER = "add-layer"
STOP = "stop"

HYPERPARAMS_PER_BRANCH = 4

GRAPH_FILE_VERSION = 1
ENUMERATION_LIMIT = 10_000_000


class EnumerationLimitError(RuntimeError):
    """Trajectory enumeration exceeded its result-count guard."""


@dataclass(frozen=True)
class Vertex:
    id: int
    kind: str  # DECISION or TERMINAL


@dataclass(frozen=True)
class Edge:
    id: int
    src: int
    dst: int
    label: str


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str


@dataclass(frozen=True)
class Trajectory:
    """One walk: (vertex, chosen edge) pairs plus where it ended."""

    steps: tuple[tuple[int, int], ...]
    final_vertex: int
    truncated: bool = False

    @property
    def actions(self) -> tuple[int, ...]:
        return tuple(edge for _, edge in self.steps)

    def __len__(self):
        return len(self.steps)


class SearchGraph:
    """Immutable multigraph. Vertex and edge ids must be dense (0..n-1)."""

    __slots__ = ("vertices", "edges", "start", "_out")

    def __init__(self, vertices, edges, start: int):
        vertices = tuple(vertices)
        edges = tuple(edges)
        for i, vertex in enumerate(vertices):
            if vertex.id != i:
                raise ValueError("vertex ids must be dense and ordered from 0")
        for i, edge in enumerate(edges):
            if edge.id != i:
                raise ValueError("edge ids must be dense and ordered from 0")
        out: list[list[int]] = [[] for _ in vertices]
        for edge in edges:
            if not (0 <= edge.src < len(vertices)) or not (0 <= edge.dst < len(vertices)):
                raise ValueError(f"edge {edge.id} references a missing vertex")
            out[edge.src].append(edge.id)
        if not (0 <= start < len(vertices)):
            raise ValueError(f"start vertex {start} does not exist")
        self.vertices = vertices
        self.edges = edges
        self.start = start
        self._out = tuple(tuple(ids) for ids in out)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def vertex(self, vid: int) -> Vertex:
        return self.vertices[vid]

    def edge(self, eid: int) -> Edge:
        return self.edges[eid]

    def out_edges(self, vid: int) -> tuple[int, ...]:
        """Edge ids leaving a vertex, in construction order."""
        return self._out[vid]

    def is_terminal(self, vid: int) -> bool:
        return self.vertices[vid].kind == TERMINAL

    def decision_ids(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if v.kind == DECISION)

    def terminal_ids(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if v.kind == TERMINAL)


def validate(graph: SearchGraph) -> list[Violation]:
    """Every violated structural invariant, with the offending vertex ids.

    A graph with no violations can always be walked to a terminal given an
    adequate step cap.
    """
    found: list[Violation] = []
    if graph.vertex(graph.start).kind != DECISION:
        found.append(Violation("start-not-decision", f"vertex {graph.start}"))
    terminals = graph.terminal_ids()
    if not terminals:
        found.append(Violation("no-terminal", "graph"))
    for vertex in graph.vertices:
        if vertex.kind == TERMINAL and graph.out_edges(vertex.id):
            found.append(Violation("terminal-with-out-edge", f"vertex {vertex.id}"))
        if vertex.kind == DECISION and not graph.out_edges(vertex.id):
            found.append(Violation("dead-end-decision", f"vertex {vertex.id}"))

    reachable = {graph.start}
    frontier = [graph.start]
    while frontier:
        vid = frontier.pop()
        for eid in graph.out_edges(vid):
            dst = graph.edge(eid).dst
            if dst not in reachable:
                reachable.add(dst)
                frontier.append(dst)
    for vertex in graph.vertices:
        if vertex.id not in reachable:
            found.append(Violation("unreachable-vertex", f"vertex {vertex.id}"))

    # reverse reachability from the terminals
    incoming: dict[int, list[int]] = {v.id: [] for v in graph.vertices}
    for edge in graph.edges:
        incoming[edge.dst].append(edge.src)
    can_finish = set(terminals)
    frontier = list(terminals)
    while frontier:
        vid = frontier.pop()
        for src in incoming[vid]:
            if src not in can_finish:
                can_finish.add(src)
                frontier.append(src)
    for vertex in graph.vertices:
        if vertex.kind == DECISION and vertex.id in reachable and vertex.id not in can_finish:
            found.append(Violation("no-path-to-terminal", f"vertex {vertex.id}"))
    return found


def require_valid(graph: SearchGraph):
    violations = validate(graph)
    if violations:
        details = "; ".join(f"{v.code} ({v.subject})" for v in violations)
        raise ValueError(f"invalid search graph: {details}")


def check_trajectory(graph: SearchGraph, trajectory: Trajectory):
    """Raise ValueError on any chaining violation."""
    if not trajectory.steps:
        raise ValueError("trajectory has no steps")
    current = graph.start
    for position, (vid, eid) in enumerate(trajectory.steps):
        if vid != current:
            raise ValueError(
                f"step {position} starts at vertex {vid}, expected {current}")
        if not (0 <= eid < graph.num_edges):
            raise ValueError(f"step {position} uses missing edge {eid}")
        edge = graph.edge(eid)
        if edge.src != vid:
            raise ValueError(
                f"step {position} edge {eid} does not leave vertex {vid}")
        current = edge.dst
    if trajectory.final_vertex != current:
        raise ValueError(
            f"final vertex {trajectory.final_vertex} does not match walk end {current}")
    if not trajectory.truncated and not graph.is_terminal(current):
        raise ValueError(f"non-truncated trajectory ends at non-terminal {current}")


@dataclass(frozen=True)
class LinearChainSpec:
    """Action counts for a fixed-length chain of decisions."""

    action_counts: tuple[int, ...]


def build_linear_chain(spec: LinearChainSpec) -> SearchGraph:
    """A path graph: one decision per position, one shared terminal."""
    counts = tuple(spec.action_counts)
    if not counts:
        raise ValueError("linear chain needs at least one position")
    if any(count < 1 for count in counts):
        raise ValueError("every position needs at least one action")
    vertices = [Vertex(i, DECISION) for i in range(len(counts))]
    vertices.append(Vertex(len(counts), TERMINAL))
    edges = []
    for position, count in enumerate(counts):
        for option in range(count):
            edges.append(Edge(len(edges), position, position + 1, f"option-{option}"))
    return SearchGraph(vertices, edges, 0)


def build_stack_layers(variant: str, target_layers: int) -> SearchGraph:
    """The layer-stacking space.

    graph variant: a single decision with a self-loop (add a layer) and an
    edge to the terminal (stop). linear variant: a fixed chain of
    2*target_layers binary add/stop decisions; the walk always makes all of
    them, and decoding reads the adds before the first stop.
    """
    if target_layers < 1:
        raise ValueError(f"target layer count must be >= 1, got {target_layers}")
    if variant == "graph":
        vertices = [Vertex(0, DECISION), Vertex(1, TERMINAL)]
        edges = [Edge(0, 0, 0, ADD_LAYER), Edge(1, 0, 1, STOP)]
        return SearchGraph(vertices, edges, 0)
    if variant == "linear":
        positions = 2 * target_layers
        vertices = [Vertex(i, DECISION) for i in range(positions)]
        vertices.append(Vertex(positions, TERMINAL))
        edges = []
        for position in range(positions):
            edges.append(Edge(len(edges), position, position + 1, ADD_LAYER))
            edges.append(Edge(len(edges), position, position + 1, STOP))
        return SearchGraph(vertices, edges, 0)
    raise ValueError(f"unknown variant {variant!r}, expected 'linear' or 'graph'")


def build_select_optimizer(variant: str, num_branches: int,
                           value_range: tuple[int, int] = (1, 100)) -> SearchGraph:
    """The optimizer-selection space.

    graph variant: a root decision fans out into one private chain of four
    hyperparameter decisions per branch, all ending at a shared terminal.
    linear variant: the root is followed by a flat branch-major sequence of
    4 * num_branches hyperparameter decisions, so every walk sets the
    hyperparameters of unused branches too.
    """
    low, high = value_range
    if num_branches < 1:
        raise ValueError(f"need at least one branch, got {num_branches}")
    if low > high:
        raise ValueError(f"empty value range {value_range}")
    values = range(low, high + 1)
    per_branch = HYPERPARAMS_PER_BRANCH
    if variant == "graph":
        terminal = 1 + per_branch * num_branches
        vertices = [Vertex(0, DECISION)]
        edges = []
        for branch in range(1, num_branches + 1):
            first = 1 + (branch - 1) * per_branch
            edges.append(Edge(len(edges), 0, first, f"branch-{branch}"))
        for branch in range(1, num_branches + 1):
            for slot in range(per_branch):
                vid = 1 + (branch - 1) * per_branch + slot
                vertices.append(Vertex(vid, DECISION))
                nxt = vid + 1 if slot < per_branch - 1 else terminal
                for value in values:
                    edges.append(Edge(len(edges), vid, nxt, str(value)))
        vertices.append(Vertex(terminal, TERMINAL))
        return SearchGraph(vertices, edges, 0)
    if variant == "linear":
        positions = 1 + per_branch * num_branches
        vertices = [Vertex(i, DECISION) for i in range(positions)]
        vertices.append(Vertex(positions, TERMINAL))
        edges = []
        for branch in range(1, num_branches + 1):
            edges.append(Edge(len(edges), 0, 1, f"branch-{branch}"))
        for position in range(1, positions):
            for value in values:
                edges.append(Edge(len(edges), position, position + 1, str(value)))
        return SearchGraph(vertices, edges, 0)
    raise ValueError(f"unknown variant {variant!r}, expected 'linear' or 'graph'")


def enumerate_trajectories(graph: SearchGraph, max_steps: int,
                           limit: int = ENUMERATION_LIMIT) -> list[Trajectory]:
    """All terminal-reaching trajectories of length <= max_steps, DFS order.

    Truncated prefixes are excluded. Raises EnumerationLimitError once more
    than ``limit`` trajectories have been found.
    """
    require_valid(graph)
    if max_steps < 0:
        raise ValueError(f"max_steps must be >= 0, got {max_steps}")
    found: list[Trajectory] = []
    steps: list[tuple[int, int]] = []

    def extend(vertex: int):
        if graph.is_terminal(vertex):
            if len(found) >= limit:
                raise EnumerationLimitError(
                    f"enumeration exceeded the {limit}-trajectory guard")
            found.append(Trajectory(tuple(steps), vertex, False))
            return
        if len(steps) == max_steps:
            return
        for eid in graph.out_edges(vertex):
            steps.append((vertex, eid))
            extend(graph.edge(eid).dst)
            steps.pop()

    extend(graph.start)
    return found


# --- graph description files --------------------------------------------

def graph_to_dict(graph: SearchGraph) -> dict:
    return {
        "version": GRAPH_FILE_VERSION,
        "start": graph.start,
        "vertices": [{"id": v.id, "kind": v.kind} for v in graph.vertices],
        "edges": [{"id": e.id, "src": e.src, "dst": e.dst, "label": e.label}
                  for e in graph.edges],
    }


def graph_from_dict(data: dict) -> SearchGraph:
    if data.get("version") != GRAPH_FILE_VERSION:
        raise ValueError(f"unsupported graph file version {data.get('version')!r}")
    try:
        vertices = [Vertex(v["id"], v["kind"])
                    for v in sorted(data["vertices"], key=lambda v: v["id"])]
        edges = [Edge(e["id"], e["src"], e["dst"], e["label"])
                 for e in sorted(data["edges"], key=lambda e: e["id"])]
        start = data["start"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed graph description: {exc}") from exc
    for vertex in vertices:
        if vertex.kind not in (DECISION, TERMINAL):
            raise ValueError(f"vertex {vertex.id} has unknown kind {vertex.kind!r}")
    return SearchGraph(vertices, edges, start)


def save_graph(graph: SearchGraph, path):
    Path(path).write_text(json.dumps(graph_to_dict(graph), indent=2) + "\n")


def load_graph(path) -> SearchGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))

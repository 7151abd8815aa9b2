"""Graphs, vertex colourings, flows and measurement patterns.

A measurement pattern is the static description of one delegated
computation: an open graph with a total measurement order, one angle per
vertex, the outcome dependencies derived from a causal flow, and a vertex
colouring that defines the available test-round layouts (one colour class
of traps, dummies everywhere else).

Angles are stored as integers ``k`` in 0..7 meaning ``k * pi/4``; all angle
arithmetic stays on these integers (mod 8) so that the cryptographic layer
is exact, and radians only appear at the simulator boundary.

Pattern file grammar (one directive per line, ``#`` starts a comment)::

    version 1
    vertices <count>
    edge <u> <v>              # repeated, undirected, no self loops
    order <v0> <v1> ...       # optional, defaults to 0..count-1
    inputs <v> ...            # optional, may be empty
    outputs <v> ...           # optional
    angle <v> <k>             # k in 0..7, one line per vertex
    flow <v> <succ>           # optional causal-flow successor map
    color <v> <class>         # optional colouring, greedy if absent

Unknown directives are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

ANGLE_STEPS = 8

__all__ = [
    "ANGLE_STEPS",
    "PatternError",
    "Graph",
    "Coloring",
    "ColoringCheck",
    "DependencyStructure",
    "MeasurementPattern",
    "validate_coloring",
    "greedy_coloring",
    "derive_dependencies",
    "parse_pattern",
    "format_pattern",
    "load_pattern",
    "save_pattern",
    "builtin_pattern",
    "BUILTIN_PATTERNS",
]


class PatternError(ValueError):
    """Invalid graph, colouring, flow, angle set or pattern file."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph with a total measurement order over its vertices."""

    vertex_count: int
    edges: frozenset
    ordering: tuple

    def __post_init__(self):
        if self.vertex_count < 1:
            raise PatternError("graph needs at least one vertex")
        for e in self.edges:
            u, v = e
            if u == v:
                raise PatternError(f"self-loop on vertex {u}")
            if not (0 <= u < self.vertex_count and 0 <= v < self.vertex_count):
                raise PatternError(f"edge {e} references a vertex out of range")
            if u > v:
                raise PatternError(f"edge {e} not normalized (expected u < v)")
        if sorted(self.ordering) != list(range(self.vertex_count)):
            raise PatternError("ordering must be a permutation of all vertices")

    @classmethod
    def make(cls, vertex_count: int, edges: Iterable, ordering: Sequence | None = None) -> "Graph":
        norm = frozenset((min(u, v), max(u, v)) for u, v in edges)
        if ordering is None:
            ordering = range(vertex_count)
        return cls(vertex_count, norm, tuple(ordering))

    def neighbor_map(self) -> dict:
        cached = self.__dict__.get("_nbrs")
        if cached is None:
            nbrs = {v: set() for v in range(self.vertex_count)}
            for u, v in self.edges:
                nbrs[u].add(v)
                nbrs[v].add(u)
            cached = {v: frozenset(s) for v, s in nbrs.items()}
            object.__setattr__(self, "_nbrs", cached)
        return cached

    def neighbors(self, v: int) -> frozenset:
        return self.neighbor_map()[v]

    def position(self, v: int) -> int:
        """Rank of v in the measurement order."""
        cached = self.__dict__.get("_pos")
        if cached is None:
            cached = {v: i for i, v in enumerate(self.ordering)}
            object.__setattr__(self, "_pos", cached)
        return cached[v]


@dataclass(frozen=True)
class Coloring:
    """Partition of the vertices into independent sets (colour classes)."""

    classes: tuple

    @property
    def k(self) -> int:
        return len(self.classes)

    def class_of(self, v: int) -> int:
        for i, cls in enumerate(self.classes):
            if v in cls:
                return i
        raise PatternError(f"vertex {v} has no colour")


@dataclass(frozen=True)
class ColoringCheck:
    valid: bool
    problem: str | None = None
    conflict: tuple | None = None


@dataclass(frozen=True)
class DependencyStructure:
    """Per-vertex outcome dependencies feeding the angle corrections.

    ``x_deps[v]`` are the earlier vertices whose outcomes flip the sign of
    the base angle of v, ``z_deps[v]`` those that add a half turn.
    """

    x_deps: Mapping
    z_deps: Mapping


def validate_coloring(graph: Graph, classes: Sequence) -> ColoringCheck:
    """Check that `classes` partition the vertices with no monochromatic edge.

    Returns a verdict describing the first violation found. Out-of-range
    vertices are an input error and raise instead.
    """
    seen = {}
    for i, cls in enumerate(classes):
        for v in cls:
            if not (0 <= v < graph.vertex_count):
                raise PatternError(f"colour class {i} references vertex {v} out of range")
            if v in seen:
                return ColoringCheck(False, f"vertex {v} appears in classes {seen[v]} and {i}")
            seen[v] = i
    if len(seen) != graph.vertex_count:
        missing = min(set(range(graph.vertex_count)) - set(seen))
        return ColoringCheck(False, f"vertex {missing} is uncoloured")
    for u, v in graph.edges:
        if seen[u] == seen[v]:
            return ColoringCheck(False, f"adjacent vertices {u} and {v} share colour {seen[u]}",
                                 conflict=(u, v))
    return ColoringCheck(True)


def greedy_coloring(graph: Graph, scan_order: Sequence | None = None) -> Coloring:
    """First-fit colouring along `scan_order` (defaults to the measurement order).

    Deterministic for a fixed order and never uses more than max degree + 1
    colours.
    """
    if scan_order is None:
        scan_order = graph.ordering
    if sorted(scan_order) != list(range(graph.vertex_count)):
        raise PatternError("scan_order must be a permutation of all vertices")
    nbrs = graph.neighbor_map()
    colour_of = {}
    for v in scan_order:
        taken = {colour_of[u] for u in nbrs[v] if u in colour_of}
        c = 0
        while c in taken:
            c += 1
        colour_of[v] = c
    k = max(colour_of.values()) + 1
    classes = tuple(frozenset(v for v, c in colour_of.items() if c == i) for i in range(k))
    return Coloring(classes)


def derive_dependencies(graph: Graph, flow: Mapping,
                        inputs: frozenset | None = None,
                        outputs: frozenset | None = None) -> DependencyStructure:
    """Derive outcome dependencies from a causal flow.

    The flow maps every non-output vertex v to a later neighbour f(v); the
    outcome of v then X-corrects f(v) and Z-corrects the other neighbours
    of f(v). The map must be injective and, when the input set is given,
    must avoid it.
    """
    nbrs = graph.neighbor_map()
    seen_targets = {}
    for v, w in flow.items():
        if not (0 <= v < graph.vertex_count and 0 <= w < graph.vertex_count):
            raise PatternError(f"flow entry {v} -> {w} out of range")
        if w not in nbrs[v]:
            raise PatternError(f"flow target of vertex {v} is not adjacent")
        if graph.position(w) <= graph.position(v):
            raise PatternError(f"flow target of vertex {v} does not come later in the order")
        if w in seen_targets:
            raise PatternError(f"flow is not injective: {seen_targets[w]} and {v} both map to {w}")
        seen_targets[w] = v
        if inputs is not None and w in inputs:
            raise PatternError(f"flow target of vertex {v} lies in the input set")
        if outputs is not None and v in outputs:
            raise PatternError(f"output vertex {v} must not appear in the flow domain")
    x_deps = {v: set() for v in range(graph.vertex_count)}
    z_deps = {v: set() for v in range(graph.vertex_count)}
    for v, w in flow.items():
        x_deps[w].add(v)
        for u in nbrs[w]:
            if u != v:
                z_deps[u].add(v)
    for w in range(graph.vertex_count):
        for v in x_deps[w] | z_deps[w]:
            if graph.position(v) >= graph.position(w):
                raise PatternError(
                    f"dependency of vertex {w} on {v} violates the measurement order")
    return DependencyStructure(
        {v: frozenset(s) for v, s in x_deps.items()},
        {v: frozenset(s) for v, s in z_deps.items()},
    )


@dataclass(frozen=True)
class MeasurementPattern:
    """Static description of one round: graph, I/O sets, angles, deps, colouring."""

    graph: Graph
    inputs: frozenset
    outputs: frozenset
    angles: tuple
    deps: DependencyStructure
    coloring: Coloring

    def __post_init__(self):
        n = self.graph.vertex_count
        if len(self.angles) != n:
            raise PatternError("need exactly one angle per vertex")
        for k in self.angles:
            if not (0 <= k < ANGLE_STEPS):
                raise PatternError(f"angle {k} outside 0..{ANGLE_STEPS - 1}")
        for v in self.inputs | self.outputs:
            if not (0 <= v < n):
                raise PatternError(f"I/O vertex {v} out of range")
        check = validate_coloring(self.graph, self.coloring.classes)
        if not check.valid:
            raise PatternError(f"invalid colouring: {check.problem}")

    @classmethod
    def build(cls, graph: Graph, inputs: Iterable, outputs: Iterable, angles: Sequence,
              flow: Mapping | None = None, deps: DependencyStructure | None = None,
              coloring: Coloring | None = None) -> "MeasurementPattern":
        inputs = frozenset(inputs)
        outputs = frozenset(outputs)
        if deps is None:
            deps = derive_dependencies(graph, flow or {}, inputs, outputs)
        if coloring is None:
            coloring = greedy_coloring(graph)
        return cls(graph, inputs, outputs, tuple(angles), deps, coloring)

    @property
    def k(self) -> int:
        return self.coloring.k


# --- pattern files -----------------------------------------------------------

def parse_pattern(text: str) -> MeasurementPattern:
    """Parse the text grammar documented in the module docstring."""
    version = None
    count = None
    edges = []
    ordering = None
    inputs = []
    outputs = []
    angles = {}
    flow = {}
    colours = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        key, args = fields[0], fields[1:]
        try:
            if key == "version":
                version = int(args[0])
            elif key == "vertices":
                count = int(args[0])
            elif key == "edge":
                edges.append((int(args[0]), int(args[1])))
            elif key == "order":
                ordering = [int(a) for a in args]
            elif key == "inputs":
                inputs = [int(a) for a in args]
            elif key == "outputs":
                outputs = [int(a) for a in args]
            elif key == "angle":
                angles[int(args[0])] = int(args[1])
            elif key == "flow":
                flow[int(args[0])] = int(args[1])
            elif key == "color":
                colours[int(args[0])] = int(args[1])
            else:
                raise PatternError(f"line {lineno}: unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, PatternError):
                raise
            raise PatternError(f"line {lineno}: malformed {key!r} directive") from exc
    if version != 1:
        raise PatternError("missing or unsupported pattern file version")
    if count is None:
        raise PatternError("missing 'vertices' directive")
    graph = Graph.make(count, edges, ordering)
    if set(angles) != set(range(count)):
        raise PatternError("need an 'angle' line for every vertex")
    coloring = None
    if colours:
        if set(colours) != set(range(count)):
            raise PatternError("partial colouring: colour every vertex or none")
        k = max(colours.values()) + 1
        coloring = Coloring(tuple(
            frozenset(v for v, c in colours.items() if c == i) for i in range(k)))
    return MeasurementPattern.build(
        graph, inputs, outputs, [angles[v] for v in range(count)],
        flow=flow, coloring=coloring)


def format_pattern(pattern: MeasurementPattern) -> str:
    g = pattern.graph
    lines = ["version 1", f"vertices {g.vertex_count}"]
    for u, v in sorted(g.edges):
        lines.append(f"edge {u} {v}")
    lines.append("order " + " ".join(str(v) for v in g.ordering))
    if pattern.inputs:
        lines.append("inputs " + " ".join(str(v) for v in sorted(pattern.inputs)))
    if pattern.outputs:
        lines.append("outputs " + " ".join(str(v) for v in sorted(pattern.outputs)))
    for v in range(g.vertex_count):
        lines.append(f"angle {v} {pattern.angles[v]}")
    for w in sorted(range(g.vertex_count)):
        for v in sorted(pattern.deps.x_deps[w]):
            # x_deps come exactly from the flow successors: v -> w
            lines.append(f"flow {v} {w}")
    for i, cls in enumerate(pattern.coloring.classes):
        for v in sorted(cls):
            lines.append(f"color {v} {i}")
    return "\n".join(lines) + "\n"


def load_pattern(path) -> MeasurementPattern:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_pattern(fh.read())


def save_pattern(path, pattern: MeasurementPattern) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_pattern(pattern))


# --- desk-scale pattern library ----------------------------------------------

def _line_pattern(angles: Sequence, inputs=(0,), outputs=None) -> MeasurementPattern:
    n = len(angles)
    graph = Graph.make(n, [(i, i + 1) for i in range(n - 1)])
    if outputs is None:
        outputs = (n - 1,)
    flow = {i: i + 1 for i in range(n - 1)}
    return MeasurementPattern.build(graph, inputs, outputs, angles, flow=flow)


def _star_pattern(leaves: int) -> MeasurementPattern:
    graph = Graph.make(leaves + 1, [(0, i) for i in range(1, leaves + 1)])
    return MeasurementPattern.build(graph, (), (0,), [0] * (leaves + 1))


BUILTIN_PATTERNS = {
    # one vertex measured straight in its preparation basis: y = x, no inherent error
    "identity1": lambda: _line_pattern([0]),
    # quarter-turn pair: deterministic classical identity on a 2-vertex path
    "identity2": lambda: _line_pattern([2, 2]),
    # same path read out a half turn away: deterministic NOT
    "not2": lambda: _line_pattern([2, 6]),
    # three-vertex line, deterministic identity
    "identity3": lambda: _line_pattern([0, 0, 0]),
    # one vertex read out one step off its basis: biased coin with
    # P(y=1 | x=0) = sin^2(pi/8) ~ 0.1464, a stand-in for inherent error
    "coin1": lambda: _line_pattern([1]),
    # star with 4 leaves, used for trap geometry checks
    "star4": lambda: _star_pattern(4),
}


def builtin_pattern(name: str) -> MeasurementPattern:
    try:
        factory = BUILTIN_PATTERNS[name]
    except KeyError:
        raise PatternError(f"unknown builtin pattern {name!r}; "
                           f"choose from {sorted(BUILTIN_PATTERNS)}") from None
    return factory()

"""Selection diagrams and graphical identification of transport sets.

A selection diagram is a causal DAG augmented with *selection nodes*: root
indicators that point into every variable whose generating mechanism may
differ between the source and the target population.  A set of covariates
licenses transport of the outcome distribution when it d-separates all
selection nodes from the outcome; this module answers that query, and
enumerates admissible and minimally sufficient sets over a candidate pool.

Diagrams are immutable after construction and all queries are read-only, so
one diagram can serve concurrent callers.
"""

from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "SelectionDiagram",
    "TransportSet",
    "DiagramError",
    "DiagramParseError",
    "CycleError",
    "UnknownNodeError",
    "EnumerationLimitError",
    "parse_diagram",
    "d_separated",
    "is_s_admissible",
    "enumerate_s_admissible",
    "minimal_sets",
    "find_active_trail",
    "eligible_pool",
]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# Names `S` and `S_*` denote selection nodes in diagram sources; `@differs X`
# is shorthand for the edge `S_X -> X`.
_SELECTION_RE = re.compile(r"S(_[A-Za-z0-9_]*)?\Z")

DEFAULT_ENUMERATION_LIMIT = 16


class DiagramError(ValueError):
    """A diagram violates a structural invariant."""


class DiagramParseError(DiagramError):
    """Malformed diagram source; carries the 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CycleError(DiagramError):
    """The directed graph contains a cycle."""

    def __init__(self, cycle: list[str]):
        super().__init__("cycle detected: " + " -> ".join(cycle))
        self.cycle = cycle


class UnknownNodeError(DiagramError):
    """A query referenced a node that is not in the diagram."""


class EnumerationLimitError(DiagramError):
    """Candidate pool too large for exhaustive subset enumeration."""


@dataclass(frozen=True)
class TransportSet:
    """A set of covariate names to condition on in a transport estimator."""

    members: frozenset[str]

    @classmethod
    def of(cls, names: Iterable[str]) -> "TransportSet":
        return cls(frozenset(names))

    def sort_key(self) -> tuple[int, tuple[str, ...]]:
        return (len(self.members), tuple(sorted(self.members)))

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.members))

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, name: str) -> bool:
        return name in self.members

    def __str__(self) -> str:
        return "{" + ", ".join(sorted(self.members)) + "}"


class SelectionDiagram:
    """Immutable DAG with selection nodes, a designated exposure and outcome.

    Parameters
    ----------
    nodes:
        The ordinary (non-selection) variables.
    edges:
        Directed (parent, child) pairs; endpoints must be declared either in
        `nodes` or `selection_nodes`.
    selection_nodes:
        Root indicators marking mechanisms that differ between populations.
        Each must have at least one outgoing edge and no incoming edges, and
        may not point into the exposure.
    exposure, outcome:
        Distinct members of `nodes`.
    """

    __slots__ = ("nodes", "selection_nodes", "edges", "exposure", "outcome",
                 "_parents", "_children")

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]],
                 selection_nodes: Iterable[str], exposure: str, outcome: str):
        object.__setattr__(self, "nodes", frozenset(nodes))
        object.__setattr__(self, "selection_nodes", frozenset(selection_nodes))
        object.__setattr__(self, "edges", frozenset((str(a), str(b)) for a, b in edges))
        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "outcome", outcome)

        overlap = self.nodes & self.selection_nodes
        if overlap:
            raise DiagramError(f"nodes declared both ordinary and selection: {sorted(overlap)}")
        declared = self.nodes | self.selection_nodes
        for a, b in self.edges:
            for end in (a, b):
                if end not in declared:
                    raise DiagramError(f"edge {a} -> {b} references undeclared node {end!r}")

        parents: dict[str, set[str]] = {n: set() for n in declared}
        children: dict[str, set[str]] = {n: set() for n in declared}
        for a, b in self.edges:
            parents[b].add(a)
            children[a].add(b)
        object.__setattr__(self, "_parents", {n: frozenset(p) for n, p in parents.items()})
        object.__setattr__(self, "_children", {n: frozenset(c) for n, c in children.items()})

        for s in self.selection_nodes:
            if parents[s]:
                raise DiagramError(f"selection node {s} has incoming edge from {sorted(parents[s])}")
            if not children[s]:
                raise DiagramError(f"selection node {s} has no outgoing edge")
        for decl, name in (("exposure", exposure), ("outcome", outcome)):
            if name not in self.nodes:
                kind = "a selection node" if name in self.selection_nodes else "not a declared node"
                raise DiagramError(f"{decl} {name!r} is {kind}")
        if exposure == outcome:
            raise DiagramError(f"exposure and outcome are both {exposure!r}")
        for s in self.selection_nodes:
            if exposure in children[s]:
                raise DiagramError(
                    f"selection node {s} points into the exposure {exposure!r}; "
                    "differing treatment-assignment mechanisms are not supported")
        self._check_acyclic()

    def __setattr__(self, name, value):
        raise AttributeError("SelectionDiagram is immutable")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SelectionDiagram):
            return NotImplemented
        return (self.nodes == other.nodes and self.edges == other.edges
                and self.selection_nodes == other.selection_nodes
                and self.exposure == other.exposure and self.outcome == other.outcome)

    def __hash__(self) -> int:
        return hash((self.nodes, self.edges, self.selection_nodes, self.exposure, self.outcome))

    def __repr__(self) -> str:
        return (f"SelectionDiagram({len(self.nodes)} nodes, {len(self.edges)} edges, "
                f"{len(self.selection_nodes)} selection nodes, "
                f"exposure={self.exposure}, outcome={self.outcome})")

    # -- basic graph queries ------------------------------------------------

    @property
    def all_nodes(self) -> frozenset[str]:
        return self.nodes | self.selection_nodes

    def parents(self, node: str) -> frozenset[str]:
        self._require_known([node])
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        self._require_known([node])
        return self._children[node]

    def ancestors(self, nodes: Iterable[str]) -> frozenset[str]:
        """All strict ancestors of `nodes` (the nodes themselves excluded)."""
        return self._closure(nodes, self._parents)

    def descendants(self, nodes: Iterable[str]) -> frozenset[str]:
        """All strict descendants of `nodes` (the nodes themselves excluded)."""
        return self._closure(nodes, self._children)

    def _closure(self, start: Iterable[str], step: dict[str, frozenset[str]]) -> frozenset[str]:
        start = list(start)
        self._require_known(start)
        seen: set[str] = set()
        stack = [m for n in start for m in step[n]]
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(step[n])
        return frozenset(seen)

    def _require_known(self, names: Iterable[str]) -> None:
        for n in names:
            if n not in self._parents:
                raise UnknownNodeError(f"unknown node {n!r}")

    def _check_acyclic(self) -> None:
        indeg = {n: len(self._parents[n]) for n in self._parents}
        queue = deque(n for n, d in indeg.items() if d == 0)
        seen = 0
        while queue:
            n = queue.popleft()
            seen += 1
            for c in self._children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen < len(indeg):
            raise CycleError(self._find_cycle())

    def _find_cycle(self) -> list[str]:
        # DFS with colors; only called when a cycle is known to exist.
        WHITE, GREY, BLACK = 0, 1, 2
        color = {n: WHITE for n in self._parents}
        trail: list[str] = []

        def visit(n: str) -> list[str] | None:
            color[n] = GREY
            trail.append(n)
            for c in sorted(self._children[n]):
                if color[c] == GREY:
                    return trail[trail.index(c):] + [c]
                if color[c] == WHITE:
                    found = visit(c)
                    if found:
                        return found
            color[n] = BLACK
            trail.pop()
            return None

        for n in sorted(self._parents):
            if color[n] == WHITE:
                found = visit(n)
                if found:
                    return found
        raise AssertionError("no cycle found")  # unreachable

    # -- derived diagrams ---------------------------------------------------

    def without_incoming_exposure(self) -> "SelectionDiagram":
        """Copy with all edges into the exposure removed (interventional graph)."""
        kept = [(a, b) for a, b in self.edges if b != self.exposure]
        dangling = {s for s in self.selection_nodes
                    if all(a != s for a, _ in kept)}
        # Selection nodes cannot point into the exposure, so none go dangling.
        assert not dangling
        return SelectionDiagram(self.nodes, kept, self.selection_nodes,
                                self.exposure, self.outcome)


# -- d-separation ----------------------------------------------------------

_UP, _DOWN = 0, 1  # _UP: reached from a child; _DOWN: reached from a parent


def _active_states(g: SelectionDiagram, sources: frozenset[str], cond: frozenset[str],
                   targets: frozenset[str] | None = None):
    """Reachability over active trails (Bayes-ball traversal).

    Returns (reachable set, predecessor map, hit state) where `hit` is the
    first visited state whose node lies in `targets` (None if never reached
    or `targets` is None).  O(|edges|) states.
    """
    cond_anc = cond | g.ancestors(cond)
    reachable: set[str] = set()
    visited: set[tuple[str, int]] = set()
    pred: dict[tuple[str, int], tuple[str, int] | None] = {}
    queue: deque[tuple[str, int]] = deque()
    for x in sorted(sources):
        state = (x, _UP)
        queue.append(state)
        pred[state] = None

    while queue:
        state = queue.popleft()
        if state in visited:
            continue
        visited.add(state)
        node, direction = state
        if node not in cond:
            reachable.add(node)
            if targets is not None and node in targets:
                return reachable, pred, state

        def push(nxt: tuple[str, int]) -> None:
            if nxt not in visited and nxt not in pred:
                pred[nxt] = state
                queue.append(nxt)

        if direction == _UP and node not in cond:
            for p in sorted(g._parents[node]):
                push((p, _UP))
            for c in sorted(g._children[node]):
                push((c, _DOWN))
        elif direction == _DOWN:
            if node not in cond:
                for c in sorted(g._children[node]):
                    push((c, _DOWN))
            if node in cond_anc:
                # Collider (or conditioned chain top) can bounce back upward.
                for p in sorted(g._parents[node]):
                    push((p, _UP))
    return reachable, pred, None


def _as_name_set(g: SelectionDiagram, names: Iterable[str] | str, what: str) -> frozenset[str]:
    if isinstance(names, str):
        names = [names]
    out = frozenset(names)
    for n in out:
        if n not in g.all_nodes:
            raise UnknownNodeError(f"unknown node {n!r} in {what}")
    return out


def d_separated(g: SelectionDiagram, a: Iterable[str], b: Iterable[str],
                cond: Iterable[str] = ()) -> bool:
    """True iff every path between `a` and `b` is blocked given `cond`.

    Standard d-separation semantics: chains and forks are blocked when their
    middle node is conditioned on; colliders are blocked unless the collider
    or one of its descendants is conditioned on.  The three sets must be
    disjoint and may include selection nodes.
    """
    a = _as_name_set(g, a, "first set")
    b = _as_name_set(g, b, "second set")
    cond = _as_name_set(g, cond, "conditioning set")
    if a & b or a & cond or b & cond:
        raise DiagramError("query sets must be disjoint")
    if not a or not b:
        return True
    reachable, _, _ = _active_states(g, a, cond, targets=b)
    return not (reachable & b)


def find_active_trail(g: SelectionDiagram, a: Iterable[str], b: Iterable[str],
                      cond: Iterable[str] = ()) -> list[str] | None:
    """One active trail from `a` to `b` given `cond`, or None if d-separated.

    The witness is a trail (consecutive nodes joined by an edge in either
    direction); it is what an explanation like ``S_G -> G -> Y`` prints.
    """
    a = _as_name_set(g, a, "first set")
    b = _as_name_set(g, b, "second set")
    cond = _as_name_set(g, cond, "conditioning set")
    if a & b or a & cond or b & cond:
        raise DiagramError("query sets must be disjoint")
    _, pred, hit = _active_states(g, a, cond, targets=b)
    if hit is None:
        return None
    trail: list[str] = []
    state: tuple[str, int] | None = hit
    while state is not None:
        trail.append(state[0])
        state = pred[state]
    trail.reverse()
    return trail


# -- s-admissibility -------------------------------------------------------

def _validate_transport_set(g: SelectionDiagram, ts: TransportSet | Iterable[str]) -> TransportSet:
    if not isinstance(ts, TransportSet):
        ts = TransportSet.of(ts)
    for n in ts.members:
        if n not in g.all_nodes:
            raise UnknownNodeError(f"unknown node {n!r} in transport set")
        if n in g.selection_nodes:
            raise DiagramError(f"transport set may not contain selection node {n}")
        if n in (g.exposure, g.outcome):
            raise DiagramError(f"transport set may not contain the {n!r} role node")
    return ts


def is_s_admissible(g: SelectionDiagram, ts: TransportSet | Iterable[str], *,
                    interventional: bool = False) -> bool:
    """Does conditioning on `ts` d-separate all selection nodes from the outcome?

    With no selection nodes every set (including the empty set) is admissible.
    `interventional=True` runs the check in the graph with edges into the
    exposure removed, conditioning additionally on the exposure; the default
    checks outcome-vs-selection separation in the diagram as drawn.  The two
    variants agree whenever the exposure has no incoming edges.
    """
    ts = _validate_transport_set(g, ts)
    if not g.selection_nodes:
        return True
    if interventional:
        g_mut = g.without_incoming_exposure()
        return d_separated(g_mut, g.selection_nodes, [g.outcome],
                           ts.members | {g.exposure})
    return d_separated(g, g.selection_nodes, [g.outcome], ts.members)


def eligible_pool(g: SelectionDiagram) -> frozenset[str]:
    """Default candidate pool: pre-treatment covariates.

    Excludes the exposure, the outcome, selection nodes, and all descendants
    of the exposure.
    """
    return g.nodes - {g.exposure, g.outcome} - g.descendants([g.exposure])


def _validate_pool(g: SelectionDiagram, pool: Iterable[str] | None) -> tuple[str, ...]:
    if pool is None:
        return tuple(sorted(eligible_pool(g)))
    pool = list(pool)
    seen: set[str] = set()
    post = g.descendants([g.exposure])
    for n in pool:
        if n not in g.all_nodes:
            raise UnknownNodeError(f"unknown node {n!r} in pool")
        if n in g.selection_nodes:
            raise DiagramError(f"pool may not contain selection node {n}")
        if n in (g.exposure, g.outcome):
            raise DiagramError(f"pool may not contain the {n!r} role node")
        if n in post:
            raise DiagramError(f"pool member {n} is a descendant of the exposure")
        if n in seen:
            raise DiagramError(f"duplicate pool member {n}")
        seen.add(n)
    return tuple(sorted(seen))


def enumerate_s_admissible(g: SelectionDiagram, pool: Iterable[str] | None = None, *,
                           limit: int = DEFAULT_ENUMERATION_LIMIT,
                           interventional: bool = False) -> list[TransportSet]:
    """All s-admissible subsets of `pool`, by cardinality then lexicographically.

    `pool` defaults to every eligible pre-treatment covariate.  Pools larger
    than `limit` raise EnumerationLimitError rather than attempting 2^n
    subset checks.
    """
    members = _validate_pool(g, pool)
    if len(members) > limit:
        raise EnumerationLimitError(
            f"pool of {len(members)} exceeds enumeration limit {limit} "
            f"({2 ** len(members)} subsets)")
    out: list[TransportSet] = []
    for r in range(len(members) + 1):
        for combo in itertools.combinations(members, r):
            ts = TransportSet.of(combo)
            if is_s_admissible(g, ts, interventional=interventional):
                out.append(ts)
    return out


def minimal_sets(g: SelectionDiagram, pool: Iterable[str] | None = None, *,
                 limit: int = DEFAULT_ENUMERATION_LIMIT,
                 interventional: bool = False) -> list[TransportSet]:
    """The minimum-cardinality s-admissible subsets of `pool`.

    Empty list when nothing in the pool is admissible (for example when a
    selection node points straight into the outcome).  Ties are all returned;
    no single set is canonical.
    """
    admissible = enumerate_s_admissible(g, pool, limit=limit,
                                        interventional=interventional)
    if not admissible:
        return []
    smallest = len(admissible[0])
    return [ts for ts in admissible if len(ts) == smallest]


# -- parsing ---------------------------------------------------------------

def parse_diagram(text: str) -> SelectionDiagram:
    """Parse diagram source text.

    Grammar (statements separated by `;` and/or newlines, `#` to end of line
    is a comment):

    - ``A -> B``        directed edge
    - ``@differs B``    shorthand for the selection edge ``S_B -> B``
    - ``node X``        declare an isolated node
    - ``exposure Z``    designate the exposure (exactly once)
    - ``outcome Y``     designate the outcome (exactly once)

    Node names match ``[A-Za-z_][A-Za-z0-9_]*``.  Names ``S`` or ``S_*``
    denote selection nodes.
    """
    nodes: set[str] = set()
    selection: set[str] = set()
    edges: set[tuple[str, str]] = set()
    exposure: str | None = None
    outcome: str | None = None

    def classify(name: str) -> None:
        (selection if _SELECTION_RE.match(name) else nodes).add(name)

    def check_name(name: str, lineno: int, col: int) -> str:
        if not _NAME_RE.match(name):
            raise DiagramParseError(f"invalid node name {name!r}", lineno, col)
        return name

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        pos = 0
        for segment in line.split(";"):
            col = pos + (len(segment) - len(segment.lstrip())) + 1
            pos += len(segment) + 1
            stmt = segment.strip()
            if not stmt:
                continue
            tokens = stmt.split()
            if len(tokens) == 3 and tokens[1] == "->":
                a = check_name(tokens[0], lineno, col)
                b = check_name(tokens[2], lineno, col)
                classify(a)
                classify(b)
                edges.add((a, b))
            elif len(tokens) == 2 and tokens[0] == "@differs":
                child = check_name(tokens[1], lineno, col)
                classify(child)
                selection.add(f"S_{child}")
                edges.add((f"S_{child}", child))
            elif len(tokens) == 2 and tokens[0] == "node":
                classify(check_name(tokens[1], lineno, col))
            elif len(tokens) == 2 and tokens[0] in ("exposure", "outcome"):
                name = check_name(tokens[1], lineno, col)
                if tokens[0] == "exposure":
                    if exposure is not None:
                        raise DiagramParseError("duplicate exposure declaration", lineno, col)
                    exposure = name
                else:
                    if outcome is not None:
                        raise DiagramParseError("duplicate outcome declaration", lineno, col)
                    outcome = name
                classify(name)
            else:
                raise DiagramParseError(f"cannot parse statement {stmt!r}", lineno, col)

    if exposure is None:
        raise DiagramError("missing exposure declaration")
    if outcome is None:
        raise DiagramError("missing outcome declaration")
    return SelectionDiagram(nodes, edges, selection, exposure, outcome)

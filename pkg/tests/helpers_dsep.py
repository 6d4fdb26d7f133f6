"""Brute-force d-separation oracle for cross-checking the fast traversal.

Works directly from an edge list and applies the textbook path criterion:
enumerate every simple undirected path between the two sets and test each
intermediate node with the chain/fork/collider rules.  Exponential in graph
size, so only suitable for the small random DAGs used in tests — which is
the point: it shares no code or algorithmic idea with the implementation
under test.
"""

from __future__ import annotations

from typing import Iterable, Sequence


def descendants_of(edges: Sequence[tuple[str, str]], node: str) -> set[str]:
    """Strict descendants of `node` via repeated edge scans."""
    out: set[str] = set()
    frontier = {node}
    while frontier:
        nxt = {b for a, b in edges if a in frontier} - out - {node}
        out |= nxt
        frontier = nxt
    return out


def _simple_paths(edges: Sequence[tuple[str, str]], start: str, end: str):
    """Yield simple undirected paths as node lists (directions recoverable
    from the edge list)."""
    adjacency: dict[str, set[str]] = {}
    for a, b in edges:
        adjacency.setdefault(a, set()).add(b)
        adjacency.setdefault(b, set()).add(a)

    def walk(path: list[str]):
        if path[-1] == end:
            yield list(path)
            return
        for nxt in sorted(adjacency.get(path[-1], ())):
            if nxt not in path:
                path.append(nxt)
                yield from walk(path)
                path.pop()

    if start in adjacency and end in adjacency:
        yield from walk([start])


def path_is_active(edges: Sequence[tuple[str, str]], path: Sequence[str],
                   cond: Iterable[str]) -> bool:
    """Path criterion: every intermediate node must pass its local rule."""
    cond = set(cond)
    edge_set = set(edges)
    for i in range(1, len(path) - 1):
        prev_node, node, next_node = path[i - 1], path[i], path[i + 1]
        into_from_prev = (prev_node, node) in edge_set
        into_from_next = (next_node, node) in edge_set
        if into_from_prev and into_from_next:
            # Collider: open only if it or a descendant is conditioned on.
            if node not in cond and not (descendants_of(edges, node) & cond):
                return False
        else:
            # Chain or fork: open only if not conditioned on.
            if node in cond:
                return False
    return True


def dsep_oracle(edges: Sequence[tuple[str, str]], a: Iterable[str],
                b: Iterable[str], cond: Iterable[str] = ()) -> bool:
    """True iff no active path connects any pair across the two sets."""
    a, b, cond = set(a), set(b), set(cond)
    for x in sorted(a):
        for y in sorted(b):
            for path in _simple_paths(edges, x, y):
                if any(n in cond for n in (x, y)):
                    raise ValueError("endpoints may not be conditioned on")
                if path_is_active(edges, path, cond):
                    return False
    return True


def random_dag(rng, n_nodes: int, edge_prob: float) -> list[tuple[str, str]]:
    """Random DAG over V0..V{n-1}: each forward pair (i < j) is an edge with
    probability `edge_prob` under a random topological order."""
    order = list(rng.permutation(n_nodes))
    edges = []
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                edges.append((f"V{order[i]}", f"V{order[j]}"))
    return edges

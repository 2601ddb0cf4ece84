"""Max-flow/min-cut on small graphs via Dinic's algorithm.

Arcs are stored as twinned pairs: arc i and its reverse i^1 live at adjacent
indices, so pushing flow is cap[i] -= f; cap[i^1] += f.  Good enough for the
expansion-move graphs used here (a few thousand nodes); not a throughput
solver.
"""

from __future__ import annotations

from collections import deque

from .errors import InputError

# Residual capacities at or below this are treated as saturated.
_EPS = 1e-12


class FlowGraph:
    """Directed flow network with a distinguished source and sink."""

    def __init__(self, num_nodes: int, source: int, sink: int):
        if num_nodes < 2:
            raise InputError("a flow graph needs at least source and sink")
        if not (0 <= source < num_nodes and 0 <= sink < num_nodes) or source == sink:
            raise InputError(f"bad terminals {source}, {sink} for {num_nodes} nodes")
        self.num_nodes = num_nodes
        self.source = source
        self.sink = sink
        self.head: list[int] = []  # arc target node
        self.cap: list[float] = []  # residual capacity
        self.adj: list[list[int]] = [[] for _ in range(num_nodes)]

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> int:
        """Add arc u->v and its twin v->u; returns the forward arc index."""
        if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
            raise InputError(f"arc endpoints ({u}, {v}) out of range")
        if u == v:
            raise InputError(f"self-loop at node {u} is not allowed")
        if not (cap >= 0.0 and rev_cap >= 0.0):
            raise InputError("capacities must be non-negative")
        if cap == float("inf") or rev_cap == float("inf"):
            raise InputError("capacities must be finite")
        a = len(self.head)
        self.head.extend((v, u))
        self.cap.extend((float(cap), float(rev_cap)))
        self.adj[u].append(a)
        self.adj[v].append(a + 1)
        return a

    def num_arcs(self) -> int:
        return len(self.head) // 2


def _bfs_levels(g: FlowGraph) -> list[int]:
    level = [-1] * g.num_nodes
    level[g.source] = 0
    queue = deque([g.source])
    while queue:
        u = queue.popleft()
        for a in g.adj[u]:
            v = g.head[a]
            if g.cap[a] > _EPS and level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    return level


def _augment(g: FlowGraph, level: list[int], ptr: list[int]) -> float:
    """Push one shortest augmenting path; returns 0 when none remains."""
    path_arcs: list[int] = []
    u = g.source
    while True:
        if u == g.sink:
            bottleneck = min(g.cap[a] for a in path_arcs)
            for a in path_arcs:
                g.cap[a] -= bottleneck
                g.cap[a ^ 1] += bottleneck
            return bottleneck
        advanced = False
        adj_u = g.adj[u]
        while ptr[u] < len(adj_u):
            a = adj_u[ptr[u]]
            v = g.head[a]
            if g.cap[a] > _EPS and level[v] == level[u] + 1:
                path_arcs.append(a)
                u = v
                advanced = True
                break
            ptr[u] += 1
        if advanced:
            continue
        # Dead end: no admissible arc out of u.
        level[u] = -1
        if not path_arcs:
            return 0.0
        u = g.head[path_arcs.pop() ^ 1]
        ptr[u] += 1


def max_flow(g: FlowGraph) -> tuple[float, set[int]]:
    """Maximum s-t flow value and the source side of a minimum cut.

    The source side is the set of nodes reachable from the source in the
    final residual graph; by max-flow/min-cut its outgoing capacity equals
    the flow value.
    """
    total = 0.0
    while True:
        level = _bfs_levels(g)
        if level[g.sink] < 0:
            break
        ptr = [0] * g.num_nodes
        while True:
            pushed = _augment(g, level, ptr)
            if pushed <= 0.0:
                break
            total += pushed
    reachable = _bfs_levels(g)
    source_side = {u for u in range(g.num_nodes) if reachable[u] >= 0}
    return total, source_side

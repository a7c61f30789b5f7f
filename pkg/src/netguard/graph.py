"""Digraphs behind consensus matrices.

Vertex connectivity and vertex cuts via the node-splitting max-flow
reduction (Menger), disjoint-path counts between vertex sets, and
structural (generic) rank tests through bipartite matching.  Vertices
are numbered 1..n to match agent identifiers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .numerics import as_matrix


@dataclass(frozen=True)
class DiGraph:
    """Directed graph on vertices 1..n; an edge (j, i) means j -> i."""

    n: int
    edges: frozenset

    def __post_init__(self):
        for (a, b) in self.edges:
            if not (1 <= a <= self.n and 1 <= b <= self.n):
                raise ValueError(f"edge ({a},{b}) outside vertex range 1..{self.n}")

    def vertices(self):
        return range(1, self.n + 1)

    def has_edge(self, a: int, b: int) -> bool:
        return (a, b) in self.edges

    def out_neighbors(self, v: int) -> tuple:
        return tuple(sorted(b for (a, b) in self.edges if a == v))

    def in_neighbors(self, v: int) -> tuple:
        return tuple(sorted(a for (a, b) in self.edges if b == v))


def from_matrix(A, tol: float = 1e-12) -> DiGraph:
    """Digraph of a matrix: edge (j, i) present iff ``|A[i, j]| > tol``.

    Self-loops are not recorded.
    """
    A = as_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError("matrix must be square")
    edges = {(j + 1, i + 1) for i in range(n) for j in range(n)
             if i != j and abs(A[i, j]) > tol}
    return DiGraph(n, frozenset(edges))


def read_edge_list(text: str) -> DiGraph:
    """Parse the plain-text edge-list format ``n`` then one ``j i`` per line."""
    tokens = text.split()
    if not tokens:
        raise ValueError("empty edge list")
    n = int(tokens[0])
    rest = tokens[1:]
    if len(rest) % 2:
        raise ValueError("edge list has a dangling vertex id")
    edges = {(int(rest[k]), int(rest[k + 1])) for k in range(0, len(rest), 2)}
    return DiGraph(n, frozenset(edges))


def write_edge_list(G: DiGraph) -> str:
    lines = [str(G.n)]
    lines += [f"{a} {b}" for (a, b) in sorted(G.edges)]
    return "\n".join(lines) + "\n"


def _reachable(G: DiGraph, start: int, removed: set, reverse: bool = False) -> set:
    """Vertices reachable from ``start`` in G minus ``removed``."""
    if start in removed:
        return set()
    adj = {v: [] for v in G.vertices()}
    for (a, b) in G.edges:
        if a in removed or b in removed:
            continue
        if reverse:
            adj[b].append(a)
        else:
            adj[a].append(b)
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return seen


def is_strongly_connected(G: DiGraph, removed: set | None = None) -> bool:
    removed = removed or set()
    alive = [v for v in G.vertices() if v not in removed]
    if len(alive) <= 1:
        return True
    root = alive[0]
    fwd = _reachable(G, root, removed)
    bwd = _reachable(G, root, removed, reverse=True)
    return len(fwd) == len(alive) and len(bwd) == len(alive)


# -- max-flow on the node-split network --------------------------------------

_BIG = 1 << 20


def _split_network(G: DiGraph, s: int, t: int):
    """Unit-vertex-capacity flow network: v_in = 2v, v_out = 2v + 1."""
    cap = {}

    def add(u, v, c):
        cap.setdefault(u, {})[v] = cap.get(u, {}).get(v, 0) + c
        cap.setdefault(v, {}).setdefault(u, 0)

    for v in G.vertices():
        add(2 * v, 2 * v + 1, _BIG if v in (s, t) else 1)
    for (a, b) in G.edges:
        add(2 * a + 1, 2 * b, _BIG)
    return cap


def _max_flow(cap: dict, source: int, sink: int):
    """Edmonds-Karp; returns (value, residual capacities)."""
    residual = {u: dict(nbrs) for u, nbrs in cap.items()}
    flow = 0
    while True:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for v, c in residual[u].items():
                if c > 0 and v not in parent:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            return flow, residual
        path = []
        v = sink
        while parent[v] is not None:
            path.append((parent[v], v))
            v = parent[v]
        push = min(residual[u][v] for (u, v) in path)
        for (u, v) in path:
            residual[u][v] -= push
            residual[v][u] += push
        flow += push


def local_vertex_connectivity(G: DiGraph, s: int, t: int):
    """Max internally-vertex-disjoint s -> t paths and a minimum vertex cut.

    Requires ``(s, t)`` not to be an edge.  Returns ``(count, cut)``
    where ``cut`` is a set of vertices meeting every s -> t path.
    """
    if G.has_edge(s, t):
        raise ValueError("local connectivity undefined for adjacent pair")
    cap = _split_network(G, s, t)
    value, residual = _max_flow(cap, 2 * s + 1, 2 * t)
    # Min cut: saturated v_in -> v_out arcs crossing the residual-reachable set.
    reach = {2 * s + 1}
    queue = deque(reach)
    while queue:
        u = queue.popleft()
        for v, c in residual[u].items():
            if c > 0 and v not in reach:
                reach.add(v)
                queue.append(v)
    cut = {v for v in G.vertices()
           if 2 * v in reach and 2 * v + 1 not in reach}
    return value, cut


def vertex_connectivity(G: DiGraph) -> int:
    """Minimum number of vertices whose removal breaks strong connectivity.

    Computed as the minimum over non-adjacent ordered pairs of the
    node-splitting max-flow value; a complete digraph has connectivity
    ``n - 1`` by convention and a graph that is not strongly connected
    has connectivity 0.
    """
    n = G.n
    if n <= 1:
        return 0
    if not is_strongly_connected(G):
        return 0
    best = n - 1
    for s in G.vertices():
        for t in G.vertices():
            if s == t or G.has_edge(s, t):
                continue
            value, _ = local_vertex_connectivity(G, s, t)
            best = min(best, value)
            if best == 0:
                return 0
    return best


def vertex_connectivity_bruteforce(G: DiGraph) -> int:
    """Exhaustive-removal connectivity, usable as an oracle for small n."""
    n = G.n
    if n <= 1:
        return 0
    if not is_strongly_connected(G):
        return 0
    for size in range(1, n - 1):
        for subset in combinations(G.vertices(), size):
            if not is_strongly_connected(G, set(subset)):
                return size
    return n - 1


@dataclass(frozen=True)
class VertexCut:
    """A vertex cut with the two parts it separates.

    After removing ``cut`` there is no edge from ``source_side`` into
    ``sink_side``: the sink side is closed under taking in-neighbors.
    """

    cut: tuple
    sink_side: tuple
    source_side: tuple


def find_vertex_cut(G: DiGraph, k: int) -> VertexCut | None:
    """A cut of size exactly ``k`` with its partition, or None.

    Returns None when the connectivity exceeds ``k`` (or when no cut of
    size exactly ``k`` can leave two nonempty parts).
    """
    if k < 0 or G.n - k < 2:
        return None
    if not is_strongly_connected(G):
        base: set = set()
        reach = _reachable(G, 1, base, reverse=True) | {1}
        rest = [v for v in G.vertices() if v not in reach]
        if not rest:
            # vertex 1 reaches everything backwards; anchor on a vertex it
            # cannot reach forward instead
            fwd = _reachable(G, 1, base)
            rest = [v for v in G.vertices() if v not in fwd]
            reach = set(rest)
            rest = [v for v in G.vertices() if v not in reach]
        cut, sink_side, source_side = base, sorted(reach), sorted(rest)
        return _pad_cut(G, set(cut), list(sink_side), list(source_side), k)
    for s in G.vertices():
        for t in G.vertices():
            if s == t or G.has_edge(s, t):
                continue
            value, cut = local_vertex_connectivity(G, s, t)
            if value <= k:
                sink_side = sorted(_reachable(G, t, cut, reverse=True) | {t})
                source_side = sorted(v for v in G.vertices()
                                     if v not in cut and v not in sink_side)
                padded = _pad_cut(G, set(cut), list(sink_side),
                                  list(source_side), k)
                if padded is not None:
                    return padded
    return None


def _pad_cut(G, cut: set, sink_side: list, source_side: list, k: int):
    """Grow a cut to exactly k vertices keeping both sides nonempty."""
    while len(cut) < k:
        donor = source_side if len(source_side) >= len(sink_side) else sink_side
        if len(donor) <= 1:
            donor = source_side if donor is sink_side else sink_side
            if len(donor) <= 1:
                return None
        cut.add(donor.pop())
    if len(cut) != k or not sink_side or not source_side:
        return None
    return VertexCut(tuple(sorted(cut)), tuple(sorted(sink_side)),
                     tuple(sorted(source_side)))


def disjoint_path_count(G: DiGraph, sources, sinks) -> int:
    """Maximum number of vertex-disjoint paths from ``sources`` to ``sinks``.

    Paths are disjoint including endpoints; a vertex belonging to both
    sets counts as a zero-length path.
    """
    sources = set(sources)
    sinks = set(sinks)
    if not sources or not sinks:
        return 0
    cap = {}

    def add(u, v, c):
        cap.setdefault(u, {})[v] = cap.get(u, {}).get(v, 0) + c
        cap.setdefault(v, {}).setdefault(u, 0)

    super_s, super_t = 0, 1
    for v in G.vertices():
        add(2 * v, 2 * v + 1, 1)
    for (a, b) in G.edges:
        add(2 * a + 1, 2 * b, _BIG)
    for v in sources:
        add(super_s, 2 * v, 1)
    for v in sinks:
        add(2 * v + 1, super_t, 1)
    value, _ = _max_flow(cap, super_s, super_t)
    return value


# -- structured systems -------------------------------------------------------


@dataclass(frozen=True)
class StructurePattern:
    """Zero/indeterminate pattern of a matrix.

    ``free`` holds the (row, col) positions (0-based) carrying
    indeterminate parameters; all other positions are fixed zeros.
    """

    rows: int
    cols: int
    free: frozenset

    def __post_init__(self):
        for (r, c) in self.free:
            if not (0 <= r < self.rows and 0 <= c < self.cols):
                raise ValueError(f"free position ({r},{c}) out of range")

    @classmethod
    def from_matrix(cls, A, tol: float = 1e-12) -> "StructurePattern":
        A = as_matrix(A)
        free = {(i, j) for i in range(A.shape[0]) for j in range(A.shape[1])
                if abs(A[i, j]) > tol}
        return cls(A.shape[0], A.shape[1], frozenset(free))

    def digraph(self) -> DiGraph:
        if self.rows != self.cols:
            raise ValueError("pattern must be square to define a digraph")
        edges = {(c + 1, r + 1) for (r, c) in self.free if r != c}
        return DiGraph(self.rows, frozenset(edges))

    def realization(self, rng: np.random.Generator,
                    low: float = 0.1, high: float = 1.0) -> np.ndarray:
        """Random numeric realization with free entries uniform on [low, high]."""
        A = np.zeros((self.rows, self.cols))
        for (r, c) in sorted(self.free):
            A[r, c] = rng.uniform(low, high)
        return A


def structural_generic_rank(P: StructurePattern) -> int:
    """Generic rank of a pattern via maximum bipartite matching.

    Rows are matched to columns across the free positions; the matching
    size equals the maximal rank over all numeric realizations.
    """
    adj = [[] for _ in range(P.rows)]
    for (r, c) in sorted(P.free):
        adj[r].append(c)
    match = [None] * P.cols

    def augment(r, visited):
        for c in adj[r]:
            if not visited[c]:
                visited[c] = True
                if match[c] is None or augment(match[c], visited):
                    match[c] = r
                    return True
        return False

    size = 0
    for r in range(P.rows):
        if augment(r, [False] * P.cols):
            size += 1
    return size


def generically_no_zero_dynamics(Apat: StructurePattern,
                                 Bpat: StructurePattern,
                                 Cpat: StructurePattern | None = None) -> bool:
    """Sufficient structural test for absence of zero dynamics.

    True when the state pattern's digraph is k-connected and the input
    pattern has generic rank below k; under that condition almost every
    realization (consensus realizations included) has no invisible state
    motion.  ``Cpat`` is accepted for interface symmetry; the criterion
    depends on the network pattern and the input rank only.
    """
    k = vertex_connectivity(Apat.digraph())
    return structural_generic_rank(Bpat) < k


@dataclass(frozen=True)
class ResilienceReport:
    """Connectivity-derived bounds on tolerable misbehaving agents."""

    connectivity: int
    max_generic_faulty: int
    max_generic_malicious: int


def resilience_bounds(G: DiGraph) -> ResilienceReport:
    """Graph-theoretic resilience bounds.

    A k-connected network generically supports identification of up to
    ``k - 1`` faulty agents and up to ``floor((k - 1) / 2)`` malicious
    agents by every well-behaving observer.
    """
    k = vertex_connectivity(G)
    return ResilienceReport(
        connectivity=k,
        max_generic_faulty=max(k - 1, 0),
        max_generic_malicious=max((k - 1) // 2, 0),
    )

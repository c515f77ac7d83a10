"""Bi-dimensional graphs: lattices, distances, spheres/balls, growth checks.

Graphs are immutable after construction (safe for concurrent readers).
Finite lattice boxes carry an interior region plus one outer boundary
annulus used for boundary conditions; the infinite square and triangular
lattices are represented lazily by their coordinate neighbor rules.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

#: Distance value returned for disconnected vertex pairs.
UNREACHABLE = -1

#: Precomputing all-pairs distances is only worthwhile below this size.
ALL_PAIRS_LIMIT = 40_000


def _square_neighbors(v):
    i, j = v
    return ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1))


def _moore_neighbors(v):
    i, j = v
    return (
        (i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1),
        (i + 1, j + 1), (i + 1, j - 1), (i - 1, j + 1), (i - 1, j - 1),
    )


def _triangular_neighbors(v):
    # Axial coordinates; six neighbors.
    i, j = v
    return ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1), (i + 1, j - 1), (i - 1, j + 1))


_RULES = {
    ("square", "graph"): _square_neighbors,
    ("square", "sup"): _moore_neighbors,
    ("triangular", "graph"): _triangular_neighbors,
}


class Graph:
    """Vertex set with symmetric adjacency and cached BFS distances.

    `vertices` may be None for lazily ruled infinite lattices, in which
    case only neighborhood-local operations (sphere, ball, distance) are
    available.
    """

    def __init__(self, vertices, adjacency=None, rule=None, *, interior=None,
                 boundary=None, origin=None, kind="custom", metric="graph"):
        if adjacency is None and rule is None:
            raise ValueError("need an adjacency map or a neighbor rule")
        self.kind = kind
        self.metric = metric
        self._rule = rule
        self._adj = adjacency
        self.vertices = None if vertices is None else list(vertices)
        self._vset = None if self.vertices is None else frozenset(self.vertices)
        self.interior = list(interior) if interior is not None else (self.vertices or [])
        self.boundary = list(boundary) if boundary is not None else []
        self.origin = origin if origin is not None else (self.interior[0] if self.interior else None)
        self._dist_cache: dict = {}

    # -- structure ---------------------------------------------------------

    @property
    def is_finite(self) -> bool:
        return self.vertices is not None

    def __contains__(self, v) -> bool:
        if self._vset is not None:
            return v in self._vset
        return True

    def neighbors(self, v):
        if self._adj is not None:
            return self._adj[v]
        nb = self._rule(v)
        if self._vset is not None:
            return tuple(u for u in nb if u in self._vset)
        return nb

    def degree_max(self, sample=None) -> int:
        vs = self.vertices if self.is_finite else (sample or [self.origin])
        return max(len(self.neighbors(v)) for v in vs)

    @classmethod
    def from_edges(cls, edges, **kw):
        """Build from an undirected edge list (self-loops rejected)."""
        adj: dict = {}
        for u, v in edges:
            if u == v:
                raise ValueError("self-loops are not allowed")
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
        adj = {v: tuple(sorted(ns)) for v, ns in adj.items()}
        return cls(sorted(adj), adjacency=adj, **kw)

    # -- distances ---------------------------------------------------------

    def _bfs_from(self, source, max_depth=None):
        dist = {source: 0}
        frontier = deque([source])
        while frontier:
            u = frontier.popleft()
            du = dist[u]
            if max_depth is not None and du >= max_depth:
                continue
            for w in self.neighbors(u):
                if w not in dist:
                    dist[w] = du + 1
                    frontier.append(w)
        return dist

    def distances_from(self, source) -> dict:
        """All BFS distances from source (finite graphs only); memoized."""
        if not self.is_finite:
            raise ValueError("use distance()/ball() on infinite lattices")
        if source not in self._dist_cache:
            self._dist_cache[source] = self._bfs_from(source)
        return self._dist_cache[source]

    def precompute_distances(self) -> None:
        """Fill the per-source BFS cache for every vertex (small graphs only).

        Useful before sharing the graph across workers; refuses graphs
        above ALL_PAIRS_LIMIT vertices.
        """
        if not self.is_finite:
            raise ValueError("cannot precompute on an infinite lattice")
        if len(self.vertices) > ALL_PAIRS_LIMIT:
            raise ValueError("graph too large for all-pairs precomputation")
        for v in self.vertices:
            self.distances_from(v)

    def distance(self, u, v) -> int:
        """Graph distance (minimal path length); UNREACHABLE if disconnected."""
        if self._vset is not None and (u not in self._vset or v not in self._vset):
            raise KeyError(f"vertex not in graph: {u if u not in self._vset else v}")
        if u == v:
            return 0
        if self.is_finite:
            return self.distances_from(u).get(v, UNREACHABLE)
        # Lazy lattice: expand until found (lattices are connected).
        dist = {u: 0}
        frontier = deque([u])
        while frontier:
            w = frontier.popleft()
            for nb in self.neighbors(w):
                if nb not in dist:
                    dist[nb] = dist[w] + 1
                    if nb == v:
                        return dist[nb]
                    frontier.append(nb)
        return UNREACHABLE

    # -- spheres and balls ---------------------------------------------------

    def ball(self, j, n: int) -> list:
        """Vertices at distance <= n from j."""
        if n < 0:
            raise ValueError("radius must be >= 0")
        dist = self._bfs_from(j, max_depth=n)
        return sorted(v for v, d in dist.items() if d <= n)

    def sphere(self, j, n: int) -> list:
        """Vertices at distance exactly n from j."""
        if n < 0:
            raise ValueError("radius must be >= 0")
        dist = self._bfs_from(j, max_depth=n)
        return sorted(v for v, d in dist.items() if d == n)

    # -- export ------------------------------------------------------------

    def edge_list(self):
        """Sorted undirected edge list (each edge once, src < dst)."""
        if not self.is_finite:
            raise ValueError("edge list requires a finite graph")
        out = []
        for v in self.vertices:
            for u in self.neighbors(v):
                if v < u:
                    out.append((v, u))
        return sorted(out)


@dataclass
class BidimReport:
    """Degree and sphere-growth summary for the bi-dimensionality check."""

    max_degree: int
    sphere_ratio_sup: float
    n_tested: int
    passed: bool


def build_lattice(kind: str, n: int | None = None, metric: str = "graph") -> Graph:
    """Construct a lattice graph.

    kind 'square_box' / 'ring' give finite graphs (square_box carries the
    radius-n ball as interior plus the radius-(n+1) sphere as boundary
    annulus); 'square' / 'triangular' are lazy infinite lattices.  metric
    'graph' uses nearest-neighbor adjacency; 'sup' uses the 8-neighbor
    adjacency whose BFS distance is the sup (Chebyshev) distance on Z^2.
    """
    if kind in ("square", "triangular"):
        rule = _RULES.get((kind, metric))
        if rule is None:
            raise ValueError(f"metric {metric!r} not supported for kind {kind!r}")
        return Graph(None, rule=rule, origin=(0, 0), kind=kind, metric=metric,
                     interior=[(0, 0)])
    if kind == "square_box":
        if n is None or n < 1:
            raise ValueError("square_box requires n >= 1")
        rule = _RULES.get(("square", metric))
        if rule is None:
            raise ValueError(f"unknown metric {metric!r}")
        full = Graph(None, rule=rule, origin=(0, 0))
        dist = full._bfs_from((0, 0), max_depth=n + 1)
        vertices = sorted(dist)
        interior = sorted(v for v, d in dist.items() if d <= n)
        annulus = sorted(v for v, d in dist.items() if d == n + 1)
        vset = frozenset(vertices)
        adj = {v: tuple(u for u in rule(v) if u in vset) for v in vertices}
        return Graph(vertices, adjacency=adj, interior=interior, boundary=annulus,
                     origin=(0, 0), kind=kind, metric=metric)
    if kind == "ring":
        if n is None or n < 1:
            raise ValueError("ring requires n >= 1")
        if n <= 2:
            # 1- and 2-rings degenerate (self/parallel edges); use a path.
            edges = [((i,), (i + 1,)) for i in range(n - 1)]
        else:
            edges = [((i,), ((i + 1) % n,)) for i in range(n)]
        adj: dict = {(i,): set() for i in range(n)}
        for u, v in edges:
            adj[u].add(v)
            adj[v].add(u)
        adj = {v: tuple(sorted(ns)) for v, ns in adj.items()}
        vertices = sorted(adj)
        return Graph(vertices, adjacency=adj, interior=vertices, boundary=[],
                     origin=(0,), kind=kind, metric=metric)
    raise ValueError(f"unknown lattice kind {kind!r}")


def graph_distance(g: Graph, j, j2) -> int:
    return g.distance(j, j2)


def sphere(g: Graph, j, n: int) -> list:
    return g.sphere(j, n)


def ball(g: Graph, j, n: int) -> list:
    return g.ball(j, n)


def verify_bidimensional(g: Graph, n_max: int, *, degree_bound: int = 12,
                         ratio_ceiling: float = 12.0, centers=None) -> BidimReport:
    """Check bounded degree and at-most-linear sphere growth.

    Reports sup over sampled centers and radii n <= n_max of #sphere(j,n)/n.
    Passes iff the maximal degree stays within degree_bound and the sphere
    ratio lies in (0, ratio_ceiling); ball cardinality then grows at most
    quadratically.
    """
    if centers is None:
        centers = [g.origin]
        if g.is_finite and len(g.interior) > 1:
            step = max(1, len(g.interior) // 4)
            centers += list(g.interior[::step])[:4]
    ratio_sup = 0.0
    max_degree = 0
    seen = set()
    for c in centers:
        if c in seen:
            continue
        seen.add(c)
        dist = g._bfs_from(c, max_depth=n_max)
        counts = np.zeros(n_max + 1, dtype=int)
        for v, d in dist.items():
            counts[d] += 1
            max_degree = max(max_degree, len(g.neighbors(v)))
        for n in range(1, n_max + 1):
            if counts[n] > 0:
                ratio_sup = max(ratio_sup, counts[n] / n)
    passed = bool(max_degree <= degree_bound and 0.0 < ratio_sup < ratio_ceiling)
    return BidimReport(max_degree=int(max_degree), sphere_ratio_sup=float(ratio_sup),
                       n_tested=n_max, passed=passed)


def write_edge_csv(g: Graph, path) -> None:
    """Export adjacency as an edge-list CSV with columns src,dst."""
    with open(path, "w") as fh:
        fh.write("src,dst\n")
        for u, v in g.edge_list():
            fh.write(f"\"{u}\",\"{v}\"\n")

"""Finite weighted graphs viewed as metric measure spaces.

A :class:`MetricMeasureGraph` carries a positive measure on vertices and,
on each undirected edge, a length (for the shortest-path metric) and a
conductance (for energies). Balls are open: ``B(x, r) = {y : d(x, y) < r}``.
"""

import json
import threading
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DisconnectedGraph, DuplicateEdge, NonpositiveWeight

# All-pairs distances are materialised up front below this size; larger
# graphs get per-source rows computed on demand and memoised.
EAGER_DISTANCE_LIMIT = 2048


class MetricMeasureGraph:
    """Immutable connected graph with vertex measure, edge lengths and conductances.

    Use :func:`build_graph` (or a generator) rather than calling this directly.
    """

    def __init__(self, measure, tail, head, length, conductance):
        self.n = int(len(measure))
        self.mu = _frozen(measure, float)
        self.tail = _frozen(tail, np.int64)
        self.head = _frozen(head, np.int64)
        self.length = _frozen(length, float)
        self.conductance = _frozen(conductance, float)

        n = self.n
        rows = np.concatenate([self.tail, self.head])
        cols = np.concatenate([self.head, self.tail])
        self._length_matrix = sp.csr_matrix(
            (np.concatenate([self.length, self.length]), (rows, cols)), shape=(n, n)
        )
        # incidence: column e has +1 at tail, -1 at head
        m = len(self.tail)
        self.incidence = sp.csr_matrix(
            (
                np.concatenate([np.ones(m), -np.ones(m)]),
                (np.concatenate([self.tail, self.head]), np.tile(np.arange(m), 2)),
            ),
            shape=(n, m),
        )
        self._rows = {}
        self._lock = threading.Lock()
        self._all = None
        self._diameter = None
        if n <= EAGER_DISTANCE_LIMIT:
            D = dijkstra(self._length_matrix, directed=False)
            # path sums depend on the source by an ulp; keep d exactly symmetric
            self._all = np.minimum(D, D.T)
            self._all.setflags(write=False)

    @property
    def edge_count(self):
        return len(self.tail)

    @property
    def min_length(self):
        return float(self.length.min()) if self.edge_count else 0.0

    def edge_weight(self, p):
        """Energy weights ``c * len**(1-p)`` per edge."""
        return self.conductance * self.length ** (1.0 - p)

    def distances_from(self, x):
        x = int(x)
        if self._all is not None:
            return self._all[x]
        with self._lock:
            row = self._rows.get(x)
        if row is None:
            row = dijkstra(self._length_matrix, directed=False, indices=x)
            row.setflags(write=False)
            with self._lock:
                self._rows[x] = row
        return row

    def distance(self, x, y):
        return float(self.distances_from(x)[int(y)])

    def distance_matrix(self):
        if self._all is not None:
            return self._all
        return np.vstack([self.distances_from(x) for x in range(self.n)])

    @property
    def diameter(self):
        if self._diameter is None:
            if self._all is not None:
                self._diameter = float(self._all.max())
            else:
                self._diameter = float(max(self.distances_from(x).max() for x in range(self.n)))
        return self._diameter

    def neighbors(self, x):
        m = self._length_matrix
        return m.indices[m.indptr[x]:m.indptr[x + 1]]

    def to_dict(self):
        return {
            "vertices": [{"id": i, "mu": float(m)} for i, m in enumerate(self.mu)],
            "edges": [
                {"u": int(a), "v": int(b), "len": float(l), "cond": float(c)}
                for a, b, l, c in zip(self.tail, self.head, self.length, self.conductance)
            ],
        }

    def __repr__(self):
        return f"MetricMeasureGraph(n={self.n}, edges={self.edge_count})"


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def build_graph(measure, edges):
    """Validate vertex measures and ``(u, v, length, conductance)`` edges.

    Raises NonpositiveWeight, DuplicateEdge or DisconnectedGraph.
    """
    mu = np.asarray(measure, dtype=float)
    n = len(mu)
    if n == 0:
        raise DisconnectedGraph("graph has no vertices")
    if not np.all(np.isfinite(mu)) or np.any(mu <= 0):
        raise NonpositiveWeight("vertex measures must be positive and finite")
    edges = list(edges)
    tail = np.array([e[0] for e in edges], dtype=np.int64)
    head = np.array([e[1] for e in edges], dtype=np.int64)
    length = np.array([e[2] for e in edges], dtype=float)
    cond = np.array([e[3] for e in edges], dtype=float)
    if len(edges):
        if tail.min() < 0 or head.min() < 0 or max(tail.max(), head.max()) >= n:
            raise DisconnectedGraph("edge endpoint out of range")
        if np.any(tail == head):
            raise DuplicateEdge("self-loops are not allowed")
        for name, arr in (("length", length), ("conductance", cond)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise NonpositiveWeight(f"edge {name}s must be positive and finite")
        lo, hi = np.minimum(tail, head), np.maximum(tail, head)
        keys = lo * n + hi
        if len(np.unique(keys)) != len(keys):
            raise DuplicateEdge("an unordered vertex pair appears twice")
    if n > 1:
        adj = sp.csr_matrix((np.ones(len(tail)), (tail, head)), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise DisconnectedGraph(f"graph has {ncomp} components")
    return MetricMeasureGraph(mu, tail, head, length, cond)


def graph_from_dict(data):
    vertices = sorted(data["vertices"], key=lambda v: int(v["id"]))
    ids = [int(v["id"]) for v in vertices]
    if ids != list(range(len(ids))):
        raise DisconnectedGraph("vertex ids must be 0-based and dense")
    mu = [float(v["mu"]) for v in vertices]
    edges = [
        (int(e["u"]), int(e["v"]), float(e.get("len", 1.0)), float(e.get("cond", 1.0)))
        for e in data["edges"]
    ]
    return build_graph(mu, edges)


def load_graph(path):
    with open(path) as fh:
        return graph_from_dict(json.load(fh))


def save_graph(g, path):
    with open(path, "w") as fh:
        json.dump(g.to_dict(), fh, indent=1)
        fh.write("\n")


@dataclass(frozen=True)
class Ball:
    center: int
    radius: float
    members: np.ndarray

    def __len__(self):
        return len(self.members)

    def __contains__(self, x):
        i = np.searchsorted(self.members, x)
        return i < len(self.members) and self.members[i] == x


def ball(g, x0, r):
    """Open ball ``{x : d(x, x0) < r}`` as a sorted member array."""
    if not r > 0:
        raise ValueError("radius must be positive")
    members = np.flatnonzero(g.distances_from(x0) < r)
    members.setflags(write=False)
    return Ball(int(x0), float(r), members)


def shell(g, members):
    """Vertices outside ``members`` joined to it by an edge."""
    inside = np.zeros(g.n, dtype=bool)
    inside[np.asarray(members, dtype=np.int64)] = True
    t, h = g.tail, g.head
    out = np.concatenate([h[inside[t] & ~inside[h]], t[inside[h] & ~inside[t]]])
    return np.unique(out)


def set_measure(g, vertices):
    idx = np.unique(np.asarray(list(vertices), dtype=np.int64))
    if idx.size == 0:
        return 0.0
    return float(g.mu[idx].sum())


def ball_measure(g, x0, r):
    d = g.distances_from(x0)
    return float(g.mu[d < r].sum())

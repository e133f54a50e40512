"""Weighted undirected interaction graphs.

Vertices are 0-indexed internally (printed 1-indexed by the CLI).
Edges are canonicalized as (i, j, w) with i < j and strictly positive
weights; parallel edges and self-loops are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, PreconditionError


@dataclass(frozen=True)
class WeightedGraph:
    """Immutable undirected graph with positive edge weights."""

    n_vertices: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n_vertices < 1:
            raise ConfigError("graph needs at least one vertex")
        seen = set()
        canon = []
        for e in self.edges:
            if len(e) != 3:
                raise ConfigError(f"edge {e!r} must be (i, j, weight)")
            i, j, w = int(e[0]), int(e[1]), float(e[2])
            if i == j:
                raise ConfigError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n_vertices and 0 <= j < self.n_vertices):
                raise ConfigError(f"edge ({i}, {j}) out of range for n={self.n_vertices}")
            if not w > 0.0:
                raise ConfigError(f"edge ({i}, {j}) has non-positive weight {w}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ConfigError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            canon.append((i, j, w))
        object.__setattr__(self, "edges", tuple(canon))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ei, ej, w) edge arrays for vectorized accumulation."""
        if not self.edges:
            z = np.zeros(0)
            return z.astype(np.int64), z.astype(np.int64), z
        ei, ej, w = zip(*self.edges)
        return (
            np.asarray(ei, dtype=np.int64),
            np.asarray(ej, dtype=np.int64),
            np.asarray(w, dtype=np.float64),
        )

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, float], ...], ...]:
        """Per-vertex tuple of (neighbor, weight) pairs."""
        adj: list[list[tuple[int, float]]] = [[] for _ in range(self.n_vertices)]
        for i, j, w in self.edges:
            adj[i].append((j, w))
            adj[j].append((i, w))
        return tuple(tuple(a) for a in adj)

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def is_connected(self) -> bool:
        if self.n_vertices == 1:
            return True
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u, _ in self.neighbors[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == self.n_vertices


def cycle(n: int, weights=None) -> WeightedGraph:
    """Cycle graph; ``weights[i]`` sits on the edge i -- (i+1) mod n."""
    if n < 3:
        raise ConfigError("cycle(n) requires n >= 3")
    if weights is None:
        weights = [1.0] * n
    weights = [float(w) for w in weights]
    if len(weights) != n:
        raise ConfigError(f"cycle(n={n}) needs {n} weights, got {len(weights)}")
    edges = [(i, (i + 1) % n, weights[i]) for i in range(n)]
    return WeightedGraph(n, tuple(edges))


def circulant(n: int, half_degree: int) -> WeightedGraph:
    """Circulant graph: i connects to i +- s (mod n) for s = 1..half_degree."""
    if half_degree < 1:
        raise ConfigError("circulant half_degree must be >= 1")
    if 2 * half_degree >= n:
        raise ConfigError(
            f"circulant(n={n}, d={half_degree}) needs 2*d < n to avoid duplicate edges"
        )
    edges = []
    for s in range(1, half_degree + 1):
        for i in range(n):
            edges.append((i, (i + s) % n, 1.0))
    return WeightedGraph(n, tuple(edges))


def complete(n: int) -> WeightedGraph:
    if n < 2:
        raise ConfigError("complete(n) requires n >= 2")
    edges = [(i, j, 1.0) for i in range(n) for j in range(i + 1, n)]
    return WeightedGraph(n, tuple(edges))


def from_edge_list(n: int, edges) -> WeightedGraph:
    """Build from an iterable of (i, j) or (i, j, w) tuples."""
    canon = []
    for e in edges:
        e = tuple(e)
        if len(e) == 2:
            e = (e[0], e[1], 1.0)
        canon.append(e)
    return WeightedGraph(n, tuple(canon))


def from_file(path: str) -> WeightedGraph:
    """Read an edge list: one ``i j [w]`` triple per line, '#' comments.

    Vertex count is inferred as max index + 1.
    """
    edges = []
    max_v = -1
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ConfigError(f"{path}:{lineno}: expected 'i j [w]', got {raw!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: malformed edge {raw!r}") from None
            edges.append((i, j, w))
            max_v = max(max_v, i, j)
    if max_v < 0:
        raise ConfigError(f"{path}: no edges found")
    return WeightedGraph(max_v + 1, tuple(edges))


def from_spec(text: str) -> WeightedGraph:
    """Parse a graph spec: cycle:N | circulant:N:d | complete:N | file path."""
    parts = text.strip().split(":")
    name = parts[0].lower()
    builders = {"cycle": (cycle, 1), "circulant": (circulant, 2), "complete": (complete, 1)}
    if name in builders:
        fn, arity = builders[name]
        args = parts[1:]
        if len(args) != arity:
            raise ConfigError(f"graph {name!r} takes {arity} parameter(s): {text!r}")
        try:
            nums = [int(a) for a in args]
        except ValueError:
            raise ConfigError(f"non-integer parameter in graph spec {text!r}") from None
        return fn(*nums)
    if os.path.exists(text):
        return from_file(text)
    raise ConfigError(f"unknown graph spec {text!r} (not a known family or a file)")


def require_connected(g: WeightedGraph) -> None:
    if not g.is_connected():
        raise PreconditionError("graph must be connected for consensus analysis")

"""Directed graphs and admissible topology libraries.

An edge ``(j, i)`` means vertex ``i`` receives information from vertex ``j``,
so the 0-1 adjacency matrix has ``chi[i, j] = 1``. Vertices are 0-based in
memory and 1-based in every file format; conversion happens only in
:func:`library_from_dict` / :func:`library_to_dict`.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PROBABILITY_TOL = 1e-12


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Digraph:
    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise GraphError(f"vertex count must be positive, got {self.n}")
        edges = frozenset((int(j), int(i)) for j, i in self.edges)
        for j, i in edges:
            if not (0 <= j < self.n and 0 <= i < self.n):
                raise GraphError(f"edge ({j}, {i}) out of range for n={self.n}")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable, one_based: bool = False) -> "Digraph":
        shift = 1 if one_based else 0
        return cls(n, frozenset((j - shift, i - shift) for j, i in edges))

    @classmethod
    def from_adjacency(cls, chi, tol: float = 0.0) -> "Digraph":
        """Graph of a nonnegative matrix: ``(j, i)`` is an edge iff ``chi[i, j] > tol``."""
        chi = np.asarray(chi, dtype=float)
        rows, cols = np.nonzero(chi > tol)
        return cls(chi.shape[0], frozenset(zip(cols.tolist(), rows.tolist())))

    def adjacency(self) -> np.ndarray:
        chi = np.zeros((self.n, self.n))
        for j, i in self.edges:
            chi[i, j] = 1.0
        return chi

    def missing_self_loops(self) -> list[int]:
        return [v for v in range(self.n) if (v, v) not in self.edges]

    def with_self_loops(self) -> "Digraph":
        return Digraph(self.n, self.edges | {(v, v) for v in range(self.n)})

    def reachable_from(self, root: int) -> set[int]:
        succ: dict[int, list[int]] = {}
        for j, i in self.edges:
            if i != j:
                succ.setdefault(j, []).append(i)
        seen = {root}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for w in succ.get(u, ()):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen

    def spanning_roots(self) -> list[int]:
        return [r for r in range(self.n) if len(self.reachable_from(r)) == self.n]


def has_spanning_tree(g: Digraph) -> bool:
    """True iff some vertex reaches every other vertex along directed edges."""
    return any(len(g.reachable_from(r)) == g.n for r in range(g.n))


def union_graphs(gs: Sequence[Digraph]) -> Digraph:
    if not gs:
        raise GraphError("union of an empty list of graphs")
    n = gs[0].n
    if any(g.n != n for g in gs):
        raise GraphError("graphs in a union must share the same vertex count")
    edges = frozenset().union(*(g.edges for g in gs))
    return Digraph(n, edges)


@dataclass(frozen=True)
class GraphLibrary:
    """Admissible topologies with their selection probabilities.

    Construction only checks shapes; use :func:`validate_library` for the
    modelling assumptions (self-loops, normalisation, spanning union).
    """

    graphs: tuple
    probabilities: tuple

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        if not self.graphs:
            raise GraphError("library needs at least one graph")
        if len(self.graphs) != len(self.probabilities):
            raise GraphError(
                f"{len(self.graphs)} graphs but {len(self.probabilities)} probabilities"
            )

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def __len__(self) -> int:
        return len(self.graphs)

    def adjacency_stack(self) -> np.ndarray:
        return np.stack([g.adjacency() for g in self.graphs])

    def union(self) -> Digraph:
        return union_graphs(self.graphs)


def validate_library(lib: GraphLibrary) -> list[str]:
    """Every violated library invariant as a human-readable line; empty iff valid."""
    report = []
    n = lib.graphs[0].n
    if any(g.n != n for g in lib.graphs):
        report.append("graphs do not share a common vertex count")
        return report
    for k, g in enumerate(lib.graphs):
        missing = g.missing_self_loops()
        if missing:
            verts = ", ".join(str(v + 1) for v in missing)
            report.append(f"graph {k + 1}: missing self-loop at vertex {verts}")
    probs = np.asarray(lib.probabilities)
    if not np.all(np.isfinite(probs)) or np.any(probs <= 0):
        report.append("probabilities must all be positive")
    if abs(probs.sum() - 1.0) > PROBABILITY_TOL:
        report.append(f"probabilities do not sum to 1 (sum={probs.sum():.17g})")
    if not has_spanning_tree(lib.union()):
        report.append("union of all graphs has no spanning tree")
    return report


def library_from_dict(doc: dict) -> GraphLibrary:
    """Parse ``{n, graphs: [[[j, i], ...], ...], probabilities}`` with 1-based vertices.

    An optional ``add_self_loops: true`` completes every graph with self-loops.
    """
    try:
        n = int(doc["n"])
        graphs = [Digraph.from_edges(n, [tuple(e) for e in es], one_based=True) for es in doc["graphs"]]
        probabilities = [float(p) for p in doc["probabilities"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"malformed graph library: {exc}") from exc
    if doc.get("add_self_loops", False):
        graphs = [g.with_self_loops() for g in graphs]
    return GraphLibrary(tuple(graphs), tuple(probabilities))


def library_to_dict(lib: GraphLibrary) -> dict:
    return {
        "n": lib.n,
        "graphs": [sorted([j + 1, i + 1] for j, i in g.edges) for g in lib.graphs],
        "probabilities": list(lib.probabilities),
    }


def load_library(path) -> GraphLibrary:
    return library_from_dict(json.loads(Path(path).read_text()))


def save_library(lib: GraphLibrary, path) -> None:
    Path(path).write_text(json.dumps(library_to_dict(lib), indent=2) + "\n")

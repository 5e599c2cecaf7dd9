"""Weighted graph data model, vertex/edge fields and the graph JSON format.

Vertex fields are plain ``numpy`` arrays ordered like ``WeightedGraph.ids``;
:meth:`WeightedGraph.field` converts mappings or sequences and rejects
anything that does not cover exactly the vertex set.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, GraphLoadError, ParameterError


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


class WeightedGraph:
    """Finite connected graph with vertex measure ``mu`` and symmetric edge weight ``w``.

    Each unordered edge is stored once as ``(src[k], dst[k], w[k])``; the two
    directed views share that single weight, so symmetry holds by construction.

    Parameters
    ----------
    ids : sequence of str
        Vertex ids, in the order used by every vertex field.
    mu : sequence of float
        Positive vertex measure.
    edges : iterable of (id, id, weight)
        Unordered edges. Self-loops, duplicates and unknown ids are rejected.
    """

    def __init__(self, ids, mu, edges):
        ids = tuple(str(i) for i in ids)
        if not ids:
            raise GraphLoadError("graph has no vertices")
        index = {}
        for k, vid in enumerate(ids):
            if vid in index:
                raise GraphLoadError(f"duplicate vertex id {vid!r}")
            index[vid] = k
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (len(ids),):
            raise GraphLoadError(f"mu has shape {mu.shape}, expected ({len(ids)},)")
        for vid, m in zip(ids, mu):
            if not (math.isfinite(m) and m > 0):
                raise GraphLoadError(f"vertex {vid!r}: mu must be a positive number, got {m}")

        src, dst, w = [], [], []
        seen = set()
        for rec in edges:
            a, b, weight = rec
            a, b = str(a), str(b)
            for end in (a, b):
                if end not in index:
                    raise GraphLoadError(f"edge ({a!r}, {b!r}): unknown vertex id {end!r}")
            if a == b:
                raise GraphLoadError(f"edge ({a!r}, {b!r}): self-loop")
            key = frozenset((a, b))
            if key in seen:
                raise GraphLoadError(f"edge ({a!r}, {b!r}): duplicate edge")
            weight = float(weight)
            if not (math.isfinite(weight) and weight > 0):
                raise GraphLoadError(f"edge ({a!r}, {b!r}): weight must be positive, got {weight}")
            seen.add(key)
            src.append(index[a])
            dst.append(index[b])
            w.append(weight)

        self.ids = ids
        self.index = index
        self.mu = _frozen(mu)
        self.src = _frozen(src, dtype=np.intp)
        self.dst = _frozen(dst, dtype=np.intp)
        self.w = _frozen(w)

        nbrs = [[] for _ in ids]
        for k, (a, b) in enumerate(zip(src, dst)):
            nbrs[a].append((b, k))
            nbrs[b].append((a, k))
        self._nbrs = tuple(tuple(n) for n in nbrs)

        ncomp = self._count_components()
        if ncomp != 1:
            raise GraphLoadError(f"graph is disconnected: {ncomp} connected components")

    def _count_components(self) -> int:
        seen = [False] * self.n
        count = 0
        for start in range(self.n):
            if seen[start]:
                continue
            count += 1
            stack = [start]
            seen[start] = True
            while stack:
                v = stack.pop()
                for y, _ in self._nbrs[v]:
                    if not seen[y]:
                        seen[y] = True
                        stack.append(y)
        return count

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def m(self) -> int:
        return len(self.w)

    @property
    def volume(self) -> float:
        return float(self.mu.sum())

    def neighbors(self, x):
        """List of ``(neighbor_index, edge_index)`` pairs for vertex ``x`` (id or index)."""
        return self._nbrs[self.vertex_index(x)]

    def degree(self, x) -> int:
        return len(self.neighbors(x))

    def weighted_degree(self) -> np.ndarray:
        out = np.zeros(self.n)
        np.add.at(out, self.src, self.w)
        np.add.at(out, self.dst, self.w)
        return out

    def vertex_index(self, x) -> int:
        if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
            if 0 <= x < self.n:
                return int(x)
            raise DomainError(f"vertex index {x} out of range for {self.n} vertices")
        try:
            return self.index[str(x)]
        except KeyError:
            raise DomainError(f"unknown vertex {x!r}") from None

    def edge_index(self, x, y) -> int:
        i, j = self.vertex_index(x), self.vertex_index(y)
        for nb, k in self._nbrs[i]:
            if nb == j:
                return k
        raise DomainError(f"no edge between {self.ids[i]!r} and {self.ids[j]!r}")

    def field(self, values, name: str = "field") -> np.ndarray:
        """Validate ``values`` as a vertex field and return it as a float array.

        ``values`` may be a mapping ``{id: value}`` (must cover exactly the
        vertex set) or a sequence in vertex order.
        """
        if isinstance(values, Mapping):
            keys = {str(k) for k in values}
            missing = [v for v in self.ids if v not in keys]
            extra = sorted(keys - set(self.ids))
            if missing or extra:
                raise DomainError(f"{name}: vertex-set mismatch (missing={missing}, extra={extra})")
            lookup = {str(k): v for k, v in values.items()}
            arr = np.array([lookup[v] for v in self.ids], dtype=float)
        else:
            arr = np.asarray(values, dtype=float)
            if arr.shape != (self.n,):
                raise DomainError(f"{name}: expected {self.n} vertex values, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"{name}: non-finite values")
        return arr

    def as_mapping(self, f) -> dict[str, float]:
        return {vid: float(v) for vid, v in zip(self.ids, f)}

    def subgraph_pairs(self):
        """Iterate ``(src_id, dst_id, w)`` over unordered edges."""
        for a, b, w in zip(self.src, self.dst, self.w):
            yield self.ids[a], self.ids[b], float(w)

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, m={self.m}, vol={self.volume:g})"


@dataclass(frozen=True)
class EdgeField:
    """Real function on ordered edges, stored once per unordered edge.

    ``values[k]`` is the value on the direction ``src[k] -> dst[k]``; the
    reverse direction is implied by ``orientation`` so the symmetry law holds
    exactly.
    """

    values: np.ndarray
    orientation: str = "symmetric"

    def __post_init__(self):
        if self.orientation not in ("symmetric", "antisymmetric"):
            raise ValueError(f"unknown orientation {self.orientation!r}")
        arr = np.array(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def value(self, graph: WeightedGraph, x, y) -> float:
        k = graph.edge_index(x, y)
        v = float(self.values[k])
        forward = graph.src[k] == graph.vertex_index(x)
        if forward or self.orientation == "symmetric":
            return v
        return -v

    def directed(self, graph: WeightedGraph):
        """Yield ``(x_index, y_index, value)`` for both directions of every edge."""
        sign = 1.0 if self.orientation == "symmetric" else -1.0
        for a, b, v in zip(graph.src, graph.dst, self.values):
            yield int(a), int(b), float(v)
            yield int(b), int(a), sign * float(v)


def grad_abs(f, graph: WeightedGraph) -> EdgeField:
    """``|grad f|`` as a symmetric edge field."""
    f = graph.field(f)
    return EdgeField(np.abs(f[graph.dst] - f[graph.src]), "symmetric")


@dataclass(frozen=True)
class ProblemData:
    """Coefficients of the Yamabe problem: positive ``g``, ``h`` and exponent ``alpha > 1``."""

    g: np.ndarray
    h: np.ndarray
    alpha: float

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        h = np.array(self.h, dtype=float)
        if g.shape != h.shape or g.ndim != 1:
            raise DomainError("g and h must be vertex fields of equal length")
        if not (np.all(g > 0) and np.all(np.isfinite(g))):
            raise DomainError("g must be positive at every vertex")
        if not (np.all(h > 0) and np.all(np.isfinite(h))):
            raise DomainError("h must be positive at every vertex")
        alpha = float(self.alpha)
        if not (math.isfinite(alpha) and alpha > 1):
            raise ParameterError(f"alpha must exceed 1, got {alpha}")
        g.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "alpha", alpha)

    def check(self, graph: WeightedGraph) -> None:
        if self.g.shape != (graph.n,):
            raise DomainError(f"problem data has {self.g.shape[0]} vertices, graph has {graph.n}")

    def with_alpha(self, alpha: float) -> ProblemData:
        return ProblemData(self.g, self.h, alpha)


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

def _require(rec, key, where):
    if not isinstance(rec, Mapping) or key not in rec:
        raise GraphLoadError(f"{where}: missing field {key!r}")
    return rec[key]


def _positive_number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphLoadError(f"{where}: expected a number, got {value!r}")
    if not (math.isfinite(value) and value > 0):
        raise GraphLoadError(f"{where}: must be > 0, got {value!r}")
    return float(value)


def graph_from_dict(doc, alpha: float | None = None):
    """Build ``(graph, g, h)`` or ``(graph, ProblemData)`` from a parsed graph document.

    Returns ``(graph, data)`` where ``data`` is a ``ProblemData`` when
    ``alpha`` is given, otherwise the pair of arrays ``(g, h)``.
    """
    if not isinstance(doc, Mapping):
        raise GraphLoadError("top level must be an object with 'vertices' and 'edges'")
    verts = _require(doc, "vertices", "document")
    edges = doc.get("edges", [])
    if not isinstance(verts, list) or not isinstance(edges, list):
        raise GraphLoadError("'vertices' and 'edges' must be arrays")

    ids, mu, g, h = [], [], [], []
    for k, rec in enumerate(verts):
        where = f"vertices[{k}]"
        vid = _require(rec, "id", where)
        if not isinstance(vid, str):
            raise GraphLoadError(f"{where}: id must be a string, got {vid!r}")
        where = f"vertices[{k}] (id={vid!r})"
        ids.append(vid)
        mu.append(_positive_number(_require(rec, "mu", where), f"{where}.mu"))
        g.append(_positive_number(_require(rec, "g", where), f"{where}.g"))
        h.append(_positive_number(_require(rec, "h", where), f"{where}.h"))

    triples = []
    for k, rec in enumerate(edges):
        where = f"edges[{k}]"
        a = _require(rec, "src", where)
        b = _require(rec, "dst", where)
        w = _positive_number(_require(rec, "w", where), f"{where}.w")
        triples.append((a, b, w))
    # record-level checks first so messages can name the offending position
    if len(set(ids)) != len(ids):
        dup = next(v for v in ids if ids.count(v) > 1)
        raise GraphLoadError(f"duplicate vertex id {dup!r}")
    known = set(ids)
    seen = set()
    for k, (a, b, _) in enumerate(triples):
        where = f"edges[{k}] ({a!r}->{b!r})"
        for end in (a, b):
            if end not in known:
                raise GraphLoadError(f"{where}: unknown vertex id {end!r}")
        if a == b:
            raise GraphLoadError(f"{where}: self-loop")
        key = frozenset((a, b))
        if key in seen:
            raise GraphLoadError(f"{where}: duplicate edge")
        seen.add(key)
    graph = WeightedGraph(ids, mu, triples)
    g, h = np.array(g), np.array(h)
    if alpha is None:
        return graph, (g, h)
    return graph, ProblemData(g, h, alpha)


def load_graph(path, alpha: float | None = None):
    """Read a graph JSON file. See :func:`graph_from_dict` for the return value."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GraphLoadError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphLoadError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return graph_from_dict(doc, alpha)


def graph_to_dict(graph: WeightedGraph, g, h) -> dict:
    return {
        "vertices": [
            {"id": vid, "mu": float(m), "g": float(gv), "h": float(hv)}
            for vid, m, gv, hv in zip(graph.ids, graph.mu, g, h)
        ],
        "edges": [{"src": a, "dst": b, "w": w} for a, b, w in graph.subgraph_pairs()],
    }


def save_graph(path, graph: WeightedGraph, g, h) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(graph, g, h), indent=2), encoding="utf-8")

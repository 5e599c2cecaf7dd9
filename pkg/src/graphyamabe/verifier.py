"""Interval-arithmetic check of the set-valued 1-Yamabe inclusion.

A candidate ``u`` passes at vertex x when

    A+(x) = -Delta_1 u(x) + g(x) Sgn(u(x))   and   A-(x) = h(x) |u(x)|^(alpha-1) Sgn(u(x))

intersect, up to a tolerance. Nothing here looks at how ``u`` was produced.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .calculus import default_tol_zero, one_laplacian_interval, sgn_interval
from .continuation import LimitCertificate, identity_residuals
from .errors import DomainError, ParameterError
from .graph import ProblemData, WeightedGraph
from .interval import Interval

MAX_ORACLE_VERTICES = 4
_MAX_CANDIDATES = 5_000_000


def default_tol(u, data: ProblemData) -> float:
    """``1e-6 * max(1, sup h |u|^(alpha-1))``."""
    u = np.asarray(u, dtype=float)
    return 1e-6 * max(1.0, float(np.max(data.h * np.abs(u) ** (data.alpha - 1.0))))


def a_plus_interval(u, x, data: ProblemData, graph: WeightedGraph, tol_zero: float | None = None) -> Interval:
    """``-Delta_1 u(x) + g(x) Sgn(u(x))``."""
    u = graph.field(u, "u")
    if tol_zero is None:
        tol_zero = default_tol_zero(u)
    i = graph.vertex_index(x)
    return -one_laplacian_interval(u, i, graph, tol_zero) + float(data.g[i]) * sgn_interval(float(u[i]), tol_zero)


def a_minus_interval(u, x, data: ProblemData, tol_zero: float | None = None, graph: WeightedGraph | None = None) -> Interval:
    """``h(x) |u(x)|^(alpha-1) Sgn(u(x))``.

    ``x`` is a vertex index, or any vertex id when ``graph`` is given.
    """
    u = graph.field(u, "u") if graph is not None else np.asarray(u, dtype=float)
    if tol_zero is None:
        tol_zero = default_tol_zero(u)
    i = graph.vertex_index(x) if graph is not None else int(x)
    t = float(u[i])
    return float(data.h[i]) * abs(t) ** (data.alpha - 1.0) * sgn_interval(t, tol_zero)


@dataclass
class VertexCheck:
    id: str
    a_plus: Interval
    a_minus: Interval
    gap: float
    passed: bool

    def to_dict(self) -> dict:
        return {"id": self.id, "a_plus": self.a_plus.as_list(), "a_minus": self.a_minus.as_list(),
                "gap": self.gap, "pass": self.passed}


@dataclass
class InclusionReport:
    rows: list
    tol: float
    tol_zero: float
    trivial: bool

    @property
    def overall(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def max_gap(self) -> float:
        return max((r.gap for r in self.rows), default=0.0)

    def failing(self) -> list:
        return [r.id for r in self.rows if not r.passed]

    def to_dict(self) -> dict:
        return {"overall": self.overall, "trivial": self.trivial, "tol": self.tol, "tol_zero": self.tol_zero,
                "vertices": [r.to_dict() for r in self.rows]}

    def table(self) -> str:
        lines = [f"{'vertex':>10}  {'A+':>29}  {'A-':>29}  {'gap':>10}  pass"]
        for r in self.rows:
            ap = f"[{r.a_plus.lo:.6g}, {r.a_plus.hi:.6g}]"
            am = f"[{r.a_minus.lo:.6g}, {r.a_minus.hi:.6g}]"
            lines.append(f"{r.id:>10}  {ap:>29}  {am:>29}  {r.gap:10.3e}  {'yes' if r.passed else 'NO'}")
        return "\n".join(lines)


def verify_inclusion(u, data: ProblemData, graph: WeightedGraph, tol: float | None = None,
                     tol_zero: float | None = None) -> InclusionReport:
    """Vertex-by-vertex test of ``A+(x) ∩ A-(x) ≠ ∅`` with gap ``<= tol``.

    A failing candidate gives a failing report, never an exception.
    """
    u = graph.field(u, "u")
    data.check(graph)
    if tol_zero is None:
        tol_zero = default_tol_zero(u)
    if tol is None:
        tol = default_tol(u, data)
    if tol < 0 or tol_zero < 0:
        raise ParameterError("tol and tol_zero must be nonnegative")
    rows = []
    for i, vid in enumerate(graph.ids):
        ap = a_plus_interval(u, i, data, graph, tol_zero)
        am = a_minus_interval(u, i, data, tol_zero)
        gap = ap.distance(am)
        rows.append(VertexCheck(vid, ap, am, gap, gap <= tol))
    return InclusionReport(rows, float(tol), float(tol_zero), bool(np.all(np.abs(u) <= tol_zero)))


# ---------------------------------------------------------------------------
# brute force over a finite grid
# ---------------------------------------------------------------------------

def _gaps(U, data: ProblemData, graph: WeightedGraph) -> np.ndarray:
    """Per-candidate, per-vertex gap between A+ and A- for a batch ``U`` of shape (N, n)."""
    tz = 1e-9 * (1.0 + np.max(np.abs(U), axis=1, keepdims=True))
    d = U[:, graph.dst] - U[:, graph.src]
    # Sgn(d) = [s_lo, s_hi] seen from src; from dst it is [-s_hi, -s_lo]
    s_lo = np.where(d > tz, 1.0, -1.0)
    s_hi = np.where(d < -tz, -1.0, 1.0)
    w = graph.w
    lap_lo = np.zeros_like(U)
    lap_hi = np.zeros_like(U)
    for arr, col in ((lap_lo, w * s_lo), (lap_hi, w * s_hi)):
        np.add.at(arr.T, graph.src, col.T)
    for arr, col in ((lap_lo, -w * s_hi), (lap_hi, -w * s_lo)):
        np.add.at(arr.T, graph.dst, col.T)
    own_lo = np.where(U > tz, 1.0, -1.0)
    own_hi = np.where(U < -tz, -1.0, 1.0)
    ap_lo = -lap_hi / graph.mu + data.g * own_lo
    ap_hi = -lap_lo / graph.mu + data.g * own_hi
    mag = data.h * np.abs(U) ** (data.alpha - 1.0)
    am_lo = mag * own_lo
    am_hi = mag * own_hi
    return np.maximum(0.0, np.maximum(am_lo - ap_hi, ap_lo - am_hi))


def level_guesses(data: ProblemData, graph: WeightedGraph) -> list:
    """Plateau heights ``c`` for which ``c * 1_S`` can pass, over every nonempty vertex set S.

    For x in S the inclusion reads ``h c^(alpha-1) in g + (w(x, S^c) + [-1, 1] w(x, S)) / mu``;
    both ends and the middle of the admissible range are returned.
    """
    n = graph.n
    if n > 16:
        raise ParameterError("level guesses enumerate vertex subsets; at most 16 vertices")
    a = data.alpha
    out = set()
    for mask in range(1, 1 << n):
        inside = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        w_in = np.zeros(n)
        w_out = np.zeros(n)
        for s, t, w in zip(graph.src, graph.dst, graph.w):
            for x, y in ((s, t), (t, s)):
                if inside[y]:
                    w_in[x] += w
                else:
                    w_out[x] += w
        lo = (data.g + (w_out - w_in) / graph.mu) / data.h
        hi = (data.g + (w_out + w_in) / graph.mu) / data.h
        t_lo = max(float(np.max(lo[inside])), 0.0)
        t_hi = float(np.min(hi[inside]))
        if t_lo <= t_hi:
            for t in (t_lo, 0.5 * (t_lo + t_hi), t_hi):
                if t > 0:
                    out.add(t ** (1.0 / (a - 1.0)))
    return sorted(out)


def default_grid(data: ProblemData, graph: WeightedGraph, step: float = 0.05) -> list:
    """0, a uniform grid up to 1.25 x the largest plateau guess, and the guesses themselves."""
    guesses = level_guesses(data, graph)
    top = 1.25 * max(guesses, default=1.0)
    uniform = list(np.round(np.arange(0.0, top + step / 2, step), 12))
    return sorted(set([0.0] + uniform + guesses))


def _grid_lists(grid, graph: WeightedGraph):
    if isinstance(grid, Mapping):
        keys = {str(k) for k in grid}
        if keys != set(graph.ids):
            raise DomainError("grid mapping must give a value list for every vertex")
        lookup = {str(k): v for k, v in grid.items()}
        return [sorted(set(float(v) for v in lookup[vid])) for vid in graph.ids]
    values = sorted(set(float(v) for v in grid))
    return [values] * graph.n


def brute_force_search(data: ProblemData, graph: WeightedGraph, grid, tol: float | None = None,
                       max_vertices: int = MAX_ORACLE_VERTICES) -> list:
    """Every grid candidate whose inclusion check passes.

    ``grid`` is one list of values shared by all vertices or a mapping
    ``{id: values}``. ``tol=None`` uses each candidate's default tolerance.
    """
    if graph.n > max_vertices:
        raise ParameterError(f"brute-force search is limited to {max_vertices} vertices, graph has {graph.n}")
    data.check(graph)
    lists = _grid_lists(grid, graph)
    total = math.prod(len(v) for v in lists)
    if total == 0:
        return []
    if total > _MAX_CANDIDATES:
        raise ParameterError(f"grid has {total} candidates, limit is {_MAX_CANDIDATES}")
    found = []
    prod = itertools.product(*lists)
    while True:
        chunk = list(itertools.islice(prod, 100_000))
        if not chunk:
            break
        U = np.array(chunk, dtype=float)
        gaps = _gaps(U, data, graph)
        if tol is None:
            lim = 1e-6 * np.maximum(1.0, np.max(data.h * np.abs(U) ** (data.alpha - 1.0), axis=1))
        else:
            lim = np.full(len(U), float(tol))
        ok = np.all(gaps <= lim[:, None], axis=1)
        found.extend(U[ok])
    return found


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass
class CertificateReport:
    identity_residual: np.ndarray
    identity_failures: list
    xi_failures: list
    eta_failures: list
    range_failures: list
    inclusion: InclusionReport
    tol: float
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (self.identity_failures or self.xi_failures or self.eta_failures
                    or self.range_failures) and self.inclusion.overall

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "tol": self.tol,
            "max_identity_residual": float(np.max(np.abs(self.identity_residual))) if len(self.identity_residual) else 0.0,
            "identity_failures": self.identity_failures,
            "xi_failures": self.xi_failures,
            "eta_failures": self.eta_failures,
            "range_failures": self.range_failures,
            "inclusion": self.inclusion.to_dict(),
            "notes": self.notes,
        }


def verify_certificate(cert: LimitCertificate, data: ProblemData, graph: WeightedGraph, tol: float,
                       tol_zero: float | None = None) -> CertificateReport:
    """Check the witness identity, the sign memberships of ``xi`` and ``eta``, and the inclusion they imply.

    (i) ``|-(1/mu) sum w eta + g xi - h u^(alpha-1)| <= tol`` per vertex;
    (ii) ``xi(x)`` in ``Sgn(u(x))`` and ``eta(x, y)`` in ``Sgn(u(y) - u(x))``, each up to ``tol``;
    (iii) ``verify_inclusion(u)`` passes at ``tol * (1 + max g)``.
    """
    u = graph.field(cert.u, "u")
    xi = graph.field(cert.xi, "xi")
    if cert.eta.values.shape != (graph.m,):
        raise DomainError(f"eta has {cert.eta.values.shape[0]} values, graph has {graph.m} edges")
    if tol_zero is None:
        tol_zero = default_tol_zero(u)
    resid = identity_residuals(u, xi, cert.eta, data, graph)
    id_fail = [graph.ids[i] for i in np.flatnonzero(~(np.abs(resid) <= tol))]
    xi_fail = [vid for vid, t, s in zip(graph.ids, u, xi) if not sgn_interval(float(t), tol_zero).contains(float(s), tol)]
    eta_fail = []
    range_fail = [vid for vid, s in zip(graph.ids, xi) if not 0.0 <= s <= 1.0]
    for a, b, v in zip(graph.src, graph.dst, cert.eta.values):
        pair = (graph.ids[a], graph.ids[b])
        if not sgn_interval(float(u[b] - u[a]), tol_zero).contains(float(v), tol):
            eta_fail.append(pair)
        if not -1.0 <= v <= 1.0:
            range_fail.append(pair)
    inclusion = verify_inclusion(u, data, graph, tol * (1.0 + float(np.max(data.g))), tol_zero)
    notes = []
    if inclusion.trivial:
        notes.append("u is the trivial solution")
    return CertificateReport(resid, id_fail, xi_fail, eta_fail, range_fail, inclusion, float(tol), notes)

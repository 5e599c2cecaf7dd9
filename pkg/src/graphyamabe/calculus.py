"""Discrete calculus on a weighted graph: integrals, W^{1,p} norm, p-Laplacian, set-valued 1-Laplacian."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ParameterError
from .graph import EdgeField, WeightedGraph
from .interval import Interval


def default_tol_zero(f) -> float:
    """Zero band for set-valued signs: ``1e-9 * (1 + |f|_inf)``."""
    f = np.asarray(f, dtype=float)
    return 1e-9 * (1.0 + (float(np.max(np.abs(f))) if f.size else 0.0))


def integrate_vertex(f, graph: WeightedGraph) -> float:
    """Sum of ``mu(x) f(x)`` over the vertices."""
    f = graph.field(f)
    return float(np.dot(graph.mu, f))


def integrate_edge(psi: EdgeField, graph: WeightedGraph) -> float:
    """Sum of ``w_xy psi_xy`` over unordered edges; ``psi`` must be symmetric."""
    if psi.orientation != "symmetric":
        raise DomainError("edge integral is defined for symmetric edge fields only")
    if psi.values.shape != (graph.m,):
        raise DomainError(f"edge field has {psi.values.shape[0]} values, graph has {graph.m} edges")
    return float(np.dot(graph.w, psi.values))


def edge_differences(f, graph: WeightedGraph) -> np.ndarray:
    """``f(dst) - f(src)`` per stored edge."""
    return f[graph.dst] - f[graph.src]


def grad_p_energy(f, p: float, graph: WeightedGraph) -> float:
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    f = graph.field(f)
    return float(np.dot(graph.w, np.abs(edge_differences(f, graph)) ** p))


def w1p_norm(f, p: float, graph: WeightedGraph) -> float:
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    f = graph.field(f)
    total = grad_p_energy(f, p, graph) + float(np.dot(graph.mu, np.abs(f) ** p))
    return total ** (1.0 / p)


def flux(t, p: float, eps_reg: float = 0.0) -> np.ndarray:
    """Edge kernel ``|t|^(p-2) t``, exactly 0 where ``t == 0``.

    With ``eps_reg > 0`` the smoothed kernel ``(t^2 + eps^2)^((p-2)/2) t`` is
    used instead; it is only meant for inner solver iterations.
    """
    t = np.asarray(t, dtype=float)
    if eps_reg > 0:
        return (t * t + eps_reg * eps_reg) ** ((p - 2.0) / 2.0) * t
    out = np.zeros_like(t)
    nz = t != 0
    # branch before exponentiation: 0 ** (p - 2) is never evaluated
    out[nz] = np.sign(t[nz]) * np.abs(t[nz]) ** (p - 1.0)
    return out


def p_laplacian_field(f, p: float, graph: WeightedGraph, eps_reg: float = 0.0) -> np.ndarray:
    """``Delta_p f`` at every vertex."""
    if p <= 1:
        raise ParameterError(f"p-Laplacian needs p > 1 (got {p}); use one_laplacian_interval at p = 1")
    f = graph.field(f)
    fl = graph.w * flux(edge_differences(f, graph), p, eps_reg)
    out = np.zeros(graph.n)
    np.add.at(out, graph.src, fl)
    np.add.at(out, graph.dst, -fl)
    return out / graph.mu


def p_laplacian(f, p: float, x, graph: WeightedGraph) -> float:
    """``(1/mu(x)) sum_y w_xy |f(y)-f(x)|^(p-2) (f(y)-f(x))`` at the single vertex ``x``."""
    if p <= 1:
        raise ParameterError(f"p-Laplacian needs p > 1 (got {p}); use one_laplacian_interval at p = 1")
    f = graph.field(f)
    i = graph.vertex_index(x)
    total = 0.0
    for j, k in graph.neighbors(i):
        total += graph.w[k] * float(flux(f[j] - f[i], p))
    return total / graph.mu[i]


def sgn_interval(t: float, tol_zero: float = 0.0) -> Interval:
    """Set-valued sign: ``{1}``, ``{-1}`` or ``[-1, 1]`` inside the zero band."""
    if tol_zero < 0:
        raise ParameterError("tol_zero must be nonnegative")
    if t > tol_zero:
        return Interval(1.0, 1.0)
    if t < -tol_zero:
        return Interval(-1.0, -1.0)
    return Interval(-1.0, 1.0)


def one_laplacian_interval(f, x, graph: WeightedGraph, tol_zero: float | None = None) -> Interval:
    """``Delta_1 f(x)`` as an interval: ``(1/mu(x)) sum_y w_xy Sgn(f(y) - f(x))``."""
    f = graph.field(f)
    if tol_zero is None:
        tol_zero = default_tol_zero(f)
    i = graph.vertex_index(x)
    total = Interval(0.0, 0.0)
    for j, k in graph.neighbors(i):
        total = total + graph.w[k] * sgn_interval(f[j] - f[i], tol_zero)
    return (1.0 / graph.mu[i]) * total

"""Continuation in p towards 1: rescaling, limit witnesses and the limit certificate."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calculus import default_tol_zero, flux
from .errors import ContinuationError, ConvergenceError, DomainError, ParameterError
from .graph import EdgeField, ProblemData, WeightedGraph
from .solver import BoundReport, PSolution, SolverConfig, _Model, lambda_bounds, max_u_bounds, minimize_I

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("p", "lambda", "max_u", "min_u", "el_residual", "identity_residual")


def p_upper(alpha: float) -> float:
    """Exclusive upper end ``(alpha + 1) / 2`` of the admissible p range."""
    return 0.5 * (alpha + 1.0)


@dataclass(frozen=True)
class PSchedule:
    """Strictly decreasing exponents in ``(1, (alpha+1)/2)`` ending at ``p_min``."""

    p_values: tuple

    def __post_init__(self):
        ps = tuple(float(p) for p in self.p_values)
        if not ps:
            raise ParameterError("schedule is empty")
        if any(not math.isfinite(p) or p <= 1.0 for p in ps):
            raise ParameterError("every scheduled p must exceed 1")
        if any(b >= a for a, b in zip(ps, ps[1:])):
            raise ParameterError("schedule must be strictly decreasing")
        object.__setattr__(self, "p_values", ps)

    @property
    def p_min(self) -> float:
        return self.p_values[-1]

    def __len__(self):
        return len(self.p_values)

    def __iter__(self):
        return iter(self.p_values)

    def validate(self, alpha: float) -> PSchedule:
        top = p_upper(alpha)
        if self.p_values[0] >= top:
            raise ParameterError(f"p={self.p_values[0]:g} is not below (alpha+1)/2 = {top:g}")
        return self

    @classmethod
    def geometric(cls, alpha: float, p0: float | None = None, ratio: float = 0.5,
                  p_min: float = 1.0 + 1e-4) -> PSchedule:
        """``p_n = 1 + ratio^n (p0 - 1)`` while above ``p_min``, then ``p_min`` itself."""
        if p0 is None:
            p0 = min(1.5, p_upper(alpha) - 1e-6)
        if not 0.0 < ratio < 1.0:
            raise ParameterError(f"ratio must lie in (0, 1), got {ratio}")
        if not 1.0 < p_min <= p0:
            raise ParameterError(f"need 1 < p_min <= p0 (p_min={p_min}, p0={p0})")
        ps = []
        k = 0
        while True:
            p = 1.0 + ratio ** k * (p0 - 1.0)
            if p <= p_min * (1.0 + 1e-15):
                break
            ps.append(p)
            k += 1
        ps.append(p_min)
        return cls(tuple(ps)).validate(alpha)


def rescale_factor(sol: PSolution, alpha: float) -> float:
    if not sol.p < alpha:
        raise ParameterError(f"rescaling needs p < alpha (p={sol.p}, alpha={alpha})")
    if not sol.lam > 0:
        raise ParameterError(f"rescaling needs lambda > 0, got {sol.lam}")
    return sol.lam ** (1.0 / (alpha - sol.p))


def rescale_to_hat(sol: PSolution, alpha: float) -> np.ndarray:
    """``u_hat = u lambda^(1/(alpha-p))``, which solves the equation with the multiplier removed."""
    return sol.u * rescale_factor(sol, alpha)


def hat_residual(hat, p: float, data: ProblemData, graph: WeightedGraph) -> float:
    """``sup |-Delta_p u_hat + g u_hat^(p-1) - h u_hat^(alpha-1)|`` with the exact kernel."""
    return _Model.of(data, graph).el_residual(np.asarray(hat, dtype=float), 1.0, p)


def check_lemma4_bounds(hat_series, data: ProblemData, graph: WeightedGraph, rtol: float = 1e-12) -> BoundReport:
    """Bracket ``max u_hat`` over a whole series by constants independent of p.

    upper = c1(h) * max(Lambda_1^(2/(alpha-1)), 1) and lower = c2(h) * min(Lambda_2^(2/(alpha+1)), 1),
    with ``c1, c2`` the max-u constants and ``Lambda_1, Lambda_2`` the multiplier
    bracket. The upper bound holds pointwise; the lower one bounds the maximum.
    """
    series = [np.asarray(h, dtype=float) for h in hat_series]
    if not series:
        raise DomainError("empty series")
    a = data.alpha
    c2, c1 = max_u_bounds(data, graph)
    lam_lo, lam_hi = lambda_bounds(data, graph)
    upper = c1 * max(lam_hi ** (2.0 / (a - 1.0)), 1.0)
    lower = c2 * min(lam_lo ** (2.0 / (a + 1.0)), 1.0)
    maxima = [float(np.max(h)) for h in series]
    ok = all(lower * (1 - rtol) <= m <= upper * (1 + rtol) for m in maxima)
    return BoundReport(
        "rescaled bound", lower, upper, max(maxima), ok,
        {"observed_min_of_max": min(maxima), "observed_min": min(float(np.min(h)) for h in series),
         "lower_consistent_exponent": c2 * min(lam_lo ** (2.0 / (a - 1.0)), 1.0)},
    )


def extract_limit_data(hat, p: float, graph: WeightedGraph, tol_zero: float | None = None,
                       edge_flux=None, zero_flux=None):
    """``xi = hat^(p-1)`` clamped to [0, 1] and ``eta = |d|^(p-2) d`` clamped to [-1, 1].

    ``eta`` is 0 on differences within ``tol_zero``. Solver witnesses, already
    expressed for ``hat``, override both where they are not NaN: ``edge_flux``
    on edges whose ends were merged, ``zero_flux`` on vertices merged with 0.
    Returns ``(xi, eta)`` with ``eta`` an antisymmetric ``EdgeField``.
    """
    hat = graph.field(hat, "hat")
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if tol_zero is None:
        tol_zero = default_tol_zero(hat)
    xi = np.abs(hat) ** (p - 1.0)
    d = hat[graph.dst] - hat[graph.src]
    eta = flux(d, p)
    eta[np.abs(d) <= tol_zero] = 0.0
    if zero_flux is not None:
        zf = np.asarray(zero_flux, dtype=float)
        xi = np.where(np.isnan(zf), xi, zf)
    if edge_flux is not None:
        ef = np.asarray(edge_flux, dtype=float)
        eta = np.where(np.isnan(ef), eta, ef)
    return np.clip(xi, 0.0, 1.0), EdgeField(np.clip(eta, -1.0, 1.0), "antisymmetric")


def identity_residuals(u, xi, eta: EdgeField, data: ProblemData, graph: WeightedGraph) -> np.ndarray:
    """Per vertex ``-(1/mu) sum_y w eta(x,y) + g xi - h u^(alpha-1)``."""
    if eta.orientation != "antisymmetric":
        raise DomainError("eta must be antisymmetric")
    div = np.zeros(graph.n)
    fl = graph.w * eta.values
    np.add.at(div, graph.src, fl)
    np.add.at(div, graph.dst, -fl)
    u = np.asarray(u, dtype=float)
    return -div / graph.mu + data.g * xi - data.h * np.abs(u) ** (data.alpha - 1.0)


def _hat_witnesses(sol: PSolution, alpha: float):
    c = rescale_factor(sol, alpha) ** (sol.p - 1.0)
    ef = None if sol.edge_flux is None else sol.edge_flux * c
    zf = None if sol.zero_flux is None else sol.zero_flux * c
    return ef, zf


def trace_row(sol: PSolution, data: ProblemData, graph: WeightedGraph) -> dict:
    hat = rescale_to_hat(sol, data.alpha)
    ef, zf = _hat_witnesses(sol, data.alpha)
    xi, eta = extract_limit_data(hat, sol.p, graph, edge_flux=ef, zero_flux=zf)
    ident = identity_residuals(hat, xi, eta, data, graph)
    return {
        "p": float(sol.p),
        "lambda": float(sol.lam),
        "max_u": float(np.max(hat)),
        "min_u": float(np.min(hat)),
        "el_residual": hat_residual(hat, sol.p, data, graph),
        "identity_residual": float(np.max(np.abs(ident))),
    }


def write_trace_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(row[k])) for k in TRACE_COLUMNS})


def _float_or_nan(v):
    return math.nan if v is None else float(v)


@dataclass
class LimitCertificate:
    """Limit data ``(u, xi, eta)`` at the last scheduled p, with diagnostics.

    ``inclusion_residual`` is the per-vertex residual of
    ``-(1/mu) sum w eta + g xi = h u^(alpha-1)``.
    """

    u: np.ndarray
    xi: np.ndarray
    eta: EdgeField
    inclusion_residual: np.ndarray
    p_final: float
    tail_delta: float
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    series: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.eta.orientation != "antisymmetric":
            raise DomainError("certificate eta must be antisymmetric")

    def to_dict(self, graph: WeightedGraph) -> dict:
        eta = [
            {"src": graph.ids[a], "dst": graph.ids[b], "value": float(v)}
            for a, b, v in zip(graph.src, graph.dst, self.eta.values)
        ]
        return {
            "u": graph.as_mapping(self.u),
            "xi": graph.as_mapping(self.xi),
            "eta": eta,
            "p_final": float(self.p_final),
            "tail_delta": None if math.isnan(self.tail_delta) else float(self.tail_delta),
            "inclusion_residual": graph.as_mapping(self.inclusion_residual),
            "trace": [dict(row) for row in self.trace],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, doc: dict, graph: WeightedGraph) -> LimitCertificate:
        try:
            u = graph.field(doc["u"], "u")
            xi = graph.field(doc["xi"], "xi")
            values = np.zeros(graph.m)
            seen = np.zeros(graph.m, dtype=bool)
            for rec in doc["eta"]:
                k = graph.edge_index(rec["src"], rec["dst"])
                sign = 1.0 if graph.ids[graph.src[k]] == str(rec["src"]) else -1.0
                if seen[k] and values[k] != sign * float(rec["value"]):
                    raise DomainError(f"eta on edge ({rec['src']}, {rec['dst']}) is not antisymmetric")
                values[k] = sign * float(rec["value"])
                seen[k] = True
            if not seen.all():
                missing = [(graph.ids[a], graph.ids[b]) for a, b, s in zip(graph.src, graph.dst, seen) if not s]
                raise DomainError(f"eta missing on edges {missing}")
            resid = doc.get("inclusion_residual")
            resid = graph.field(resid, "inclusion_residual") if resid is not None else np.full(graph.n, np.nan)
            return cls(
                u=u, xi=xi, eta=EdgeField(values, "antisymmetric"), inclusion_residual=resid,
                p_final=float(doc["p_final"]), tail_delta=_float_or_nan(doc.get("tail_delta")),
                trace=list(doc.get("trace", [])), warnings=list(doc.get("warnings", [])),
            )
        except KeyError as exc:
            raise DomainError(f"certificate is missing field {exc.args[0]!r}") from None

    def save(self, path, graph: WeightedGraph) -> None:
        Path(path).write_text(json.dumps(self.to_dict(graph), indent=2) + "\n", encoding="utf-8")

    def write_trace(self, path) -> None:
        write_trace_csv(self.trace, path)


def run_continuation(schedule: PSchedule, data: ProblemData, graph: WeightedGraph,
                     cfg: SolverConfig | None = None, tail_tol: float = 1e-3, init=None) -> LimitCertificate:
    """Solve along the schedule with warm starts and build the certificate at its last p.

    Raises ``ContinuationError`` (with the solved prefix in ``series``) when a
    solve fails. A final step change ``tail_delta`` above ``tail_tol`` only
    attaches a warning.
    """
    cfg = cfg or SolverConfig()
    schedule.validate(data.alpha)
    series = []
    trace = []
    hats = []
    warm = init
    for p in schedule:
        try:
            sol = minimize_I(p, data, graph, cfg, init=warm)
        except ConvergenceError as exc:
            raise ContinuationError(f"solve failed at p={p:g}: {exc}", series=series, cause=exc) from exc
        hat = rescale_to_hat(sol, data.alpha)
        series.append(sol)
        hats.append(hat)
        trace.append(trace_row(sol, data, graph))
        log.info("p=%.8g lambda=%.6g max=%.6g identity=%.2e", p, sol.lam, hat.max(), trace[-1]["identity_residual"])
        warm = hat

    last = series[-1]
    hat = hats[-1]
    ef, zf = _hat_witnesses(last, data.alpha)
    xi, eta = extract_limit_data(hat, last.p, graph, edge_flux=ef, zero_flux=zf)
    resid = identity_residuals(hat, xi, eta, data, graph)
    tail = float(np.max(np.abs(hats[-1] - hats[-2]))) if len(hats) > 1 else math.nan
    warnings = []
    if len(hats) > 1 and tail > tail_tol:
        warnings.append(f"tail_delta={tail:.3e} exceeds {tail_tol:.1e}: the series may not have settled")
    return LimitCertificate(hat, xi, eta, resid, last.p, tail, trace, warnings, series)


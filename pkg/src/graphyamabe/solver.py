"""Constrained variational solver for the p-th Yamabe equation.

Minimizes ``I(phi) = sum_E w |grad phi|^p + sum_V mu g phi^p`` over the set
``Gamma = {phi >= 0, sum_V mu h phi^alpha = 1}`` and recovers the multiplier
``lambda`` so that

    -Delta_p u + g u^(p-1) = lambda h u^(alpha-1).

Two iterations are available. ``"plain"`` is projected gradient descent on
the vertex values with a smoothed kernel. ``"contract"`` (the default) runs
the same projected descent on a quotient problem in which vertices whose
values agree to ``merge_tol`` move rigidly, then resolves the flux carried
inside each merged group exactly. As p approaches 1 the minimizers develop
plateaus on which the kernel ``|t|^(p-2) t`` is numerically singular; the
quotient iteration is what keeps those solves well conditioned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .calculus import flux
from .errors import BoundViolation, ConvergenceError, DegenerateInputError, DomainError, ParameterError
from .graph import ProblemData, WeightedGraph

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
# energy may rise by this many ulps on an accepted step (rounding of I itself)
_ROUNDOFF_ULPS = 16.0
# largest intra-group split applied in one outer step, relative to max u
_SPLIT_CAP = 1e-3
_INNER_BUDGET = 5000


@dataclass(frozen=True)
class SolverConfig:
    """Knobs of :func:`minimize_I`.

    ``grad_tol`` is relative: residuals are compared against
    ``grad_tol * sup_x h u^(alpha-1)``. ``merge_tol`` is the relative gap
    below which two values are treated as one group by the ``"contract"``
    iteration; ``eps_reg`` only affects the ``"plain"`` iteration.
    ``restarts`` bounds the extra cold-start solves seeded from vertex-set
    indicators (0 keeps the single constant start).
    """

    grad_tol: float = 1e-9
    max_iters: int = 50_000
    armijo_c: float = 1e-4
    armijo_shrink: float = 0.5
    step_init: float = 1.0
    eps_reg: float = 1e-10
    floor_clip: float = 1e-12
    merge_tol: float = 1e-6
    max_outer: int = 60
    method: str = "contract"
    restarts: int = 3

    def __post_init__(self):
        for name in ("grad_tol", "step_init", "floor_clip", "merge_tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.armijo_shrink < 1):
            raise ParameterError("armijo_c and armijo_shrink must lie in (0, 1)")
        if self.eps_reg < 0:
            raise ParameterError("eps_reg must be nonnegative")
        if int(self.max_iters) < 1 or int(self.max_outer) < 1:
            raise ParameterError("max_iters and max_outer must be positive integers")
        if int(self.restarts) < 0:
            raise ParameterError("restarts must be a nonnegative integer")
        if self.method not in ("contract", "plain"):
            raise ParameterError(f"unknown method {self.method!r} (expected 'contract' or 'plain')")


@dataclass
class PSolution:
    """A solved p-Yamabe instance.

    ``edge_flux`` and ``zero_flux`` are the flux witnesses produced by the
    ``"contract"`` iteration: ``edge_flux[k]`` replaces
    ``|du|^(p-2) du`` on stored edge ``k`` where the two ends sit in one merged
    group (NaN elsewhere), ``zero_flux[x]`` replaces ``u(x)^(p-1)`` on vertices
    merged with the value 0 (NaN elsewhere). ``structured_residual`` is the
    equation residual with those replacements; ``el_residual`` never uses them.
    """

    p: float
    u: np.ndarray
    lam: float
    el_residual: float
    constraint_residual: float
    iters: int
    energy: float
    stationarity: float = math.nan
    converged: bool = True
    structured_residual: float = math.nan
    edge_flux: np.ndarray | None = None
    zero_flux: np.ndarray | None = None
    notes: dict = field(default_factory=dict)

    @property
    def scale(self) -> float:
        return self.notes.get("scale", math.nan)

    def to_dict(self, graph: WeightedGraph) -> dict:
        return {
            "p": float(self.p),
            "lambda": float(self.lam),
            "u": graph.as_mapping(self.u),
            "el_residual": float(self.el_residual),
            "constraint_residual": float(self.constraint_residual),
            "iters": int(self.iters),
            "energy": float(self.energy),
        }

    @classmethod
    def from_dict(cls, doc: dict, graph: WeightedGraph) -> PSolution:
        return cls(
            p=float(doc["p"]),
            u=graph.field(doc["u"], "u"),
            lam=float(doc["lambda"]),
            el_residual=float(doc["el_residual"]),
            constraint_residual=float(doc["constraint_residual"]),
            iters=int(doc["iters"]),
            energy=float(doc["energy"]),
        )


class _Model:
    """Array view of (graph, data) used by the numerical kernels."""

    def __init__(self, mu, src, dst, w, g, h, alpha):
        self.mu = np.asarray(mu, dtype=float)
        self.src = np.asarray(src, dtype=np.intp)
        self.dst = np.asarray(dst, dtype=np.intp)
        self.w = np.asarray(w, dtype=float)
        self.g = np.asarray(g, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.alpha = float(alpha)
        self.n = len(self.mu)

    @classmethod
    def of(cls, data: ProblemData, graph: WeightedGraph) -> _Model:
        data.check(graph)
        return cls(graph.mu, graph.src, graph.dst, graph.w, data.g, data.h, data.alpha)

    def laplacian(self, u, p, eps=0.0):
        fl = self.w * flux(u[self.dst] - u[self.src], p, eps)
        out = np.zeros(self.n)
        np.add.at(out, self.src, fl)
        np.add.at(out, self.dst, -fl)
        return out / self.mu

    def energy(self, u, p, eps=0.0):
        d = u[self.dst] - u[self.src]
        if eps > 0:
            edge = (d * d + eps * eps) ** (p / 2.0)
        else:
            edge = np.abs(d) ** p
        return float(np.dot(self.w, edge) + np.dot(self.mu * self.g, u ** p))

    def constraint(self, u):
        return float(np.dot(self.mu * self.h, u ** self.alpha))

    def project(self, u):
        c = self.constraint(u)
        if not c > 0:
            raise DegenerateInputError("cannot project the zero field onto the constraint set")
        return u / c ** (1.0 / self.alpha)

    def lhs(self, u, p, eps=0.0):
        """``-Delta_p u + g u^(p-1)``."""
        return -self.laplacian(u, p, eps) + self.g * u ** (p - 1.0)

    def lam(self, u, p):
        c = self.constraint(u)
        if not c > 0:
            raise DegenerateInputError("integral of h u^alpha vanishes")
        return self.energy(u, p) / c

    def el_residual(self, u, lam, p):
        return float(np.max(np.abs(self.lhs(u, p) - lam * self.h * u ** (self.alpha - 1.0))))

    def tangent(self, u, p, eps=0.0):
        """Projected gradient in the mu-weighted metric, divided by p.

        Returns ``(r, kappa, lhs)`` with ``r = lhs - kappa h u^(alpha-1)`` and
        ``kappa`` the mu-least-squares multiplier, so ``r`` is tangent to Gamma.
        """
        lhs = self.lhs(u, p, eps)
        nrm = self.h * u ** (self.alpha - 1.0)
        kappa = float(np.dot(self.mu * lhs, nrm) / np.dot(self.mu * nrm, nrm))
        return lhs - kappa * nrm, kappa, lhs


def _check_p(p, alpha):
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    if not p < alpha:
        raise ParameterError(f"p must be smaller than alpha (p={p}, alpha={alpha})")


def _nonneg(phi, graph):
    phi = graph.field(phi, "phi")
    if np.any(phi < 0):
        raise DomainError("phi must be nonnegative")
    return phi


def eval_I(phi, p: float, data: ProblemData, graph: WeightedGraph) -> float:
    """``sum_E w |grad phi|^p + sum_V mu g phi^p``."""
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    phi = _nonneg(phi, graph)
    return _Model.of(data, graph).energy(phi, p)


def grad_I(phi, p: float, data: ProblemData, graph: WeightedGraph) -> np.ndarray:
    """Euclidean gradient of ``eval_I``: ``p mu (-Delta_p phi + g phi^(p-1))``."""
    if not p > 1:
        raise ParameterError(f"p must exceed 1, got {p}")
    phi = _nonneg(phi, graph)
    model = _Model.of(data, graph)
    return p * graph.mu * model.lhs(phi, p)


def project_to_gamma(phi, data: ProblemData, graph: WeightedGraph) -> np.ndarray:
    """Rescale ``phi`` so that ``sum mu h phi^alpha = 1``."""
    phi = _nonneg(phi, graph)
    return _Model.of(data, graph).project(phi)


def compute_lambda(u, p: float, data: ProblemData, graph: WeightedGraph) -> float:
    """``(int |grad u|^p dw + int g u^p dmu) / int h u^alpha dmu``."""
    u = _nonneg(u, graph)
    return _Model.of(data, graph).lam(u, p)


def el_residual(u, lam: float, p: float, data: ProblemData, graph: WeightedGraph) -> float:
    """``sup_x |-Delta_p u + g u^(p-1) - lam h u^(alpha-1)|`` with the exact kernel."""
    u = graph.field(u, "u")
    return _Model.of(data, graph).el_residual(u, lam, p)


def default_init(data: ProblemData, graph: WeightedGraph) -> np.ndarray:
    """The constant feasible field ``(int h dmu)^(-1/alpha)``."""
    c = float(np.dot(graph.mu, data.h)) ** (-1.0 / data.alpha)
    return np.full(graph.n, c)


def _indicator_starts(model: _Model, p: float, max_subsets: int = 12):
    """Normalized indicators ``1_S`` of proper vertex subsets, sorted by energy.

    All subsets up to ``max_subsets`` vertices, single vertices and their
    complements beyond that.
    """
    n = model.n
    if n <= max_subsets:
        codes = np.arange(1, (1 << n) - 1)
        masks = ((codes[:, None] >> np.arange(n)) & 1).astype(float)
    else:
        eye = np.eye(n)
        masks = np.vstack([eye, 1.0 - eye])
    if len(masks) == 0:
        return masks, np.zeros(0)
    c = (masks * (model.mu * model.h)).sum(axis=1)
    U = masks / c[:, None] ** (1.0 / model.alpha)
    E = (np.abs(U[:, model.dst] - U[:, model.src]) ** p * model.w).sum(axis=1) + (U ** p * (model.g * model.mu)).sum(axis=1)
    order = np.argsort(E, kind="stable")
    return U[order], E[order]


def _roundoff_ok(e_new, e_old):
    return e_new <= e_old + _ROUNDOFF_ULPS * _EPS * abs(e_old)


# ---------------------------------------------------------------------------
# plain projected gradient descent
# ---------------------------------------------------------------------------

def _descend(model: _Model, p: float, u0, cfg: SolverConfig):
    """Projected gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

    Returns ``(u, iters, converged, stats)``.
    """
    alpha = model.alpha
    mu = model.mu
    u = model.project(np.maximum(u0, cfg.floor_clip * float(np.max(u0))))
    eps = cfg.eps_reg
    energy = model.energy(u, p, eps)
    r, _, _ = model.tangent(u, p, eps)
    step = cfg.step_init
    stall = 0
    it = 0
    converged = False
    for it in range(int(cfg.max_iters) + 1):
        scale = float(np.max(model.h * u ** (alpha - 1.0)))
        target = cfg.grad_tol * scale
        r_exact = model.tangent(u, p)[0] if eps > 0 else r
        if float(np.max(np.abs(r_exact))) <= target:
            if model.el_residual(u, model.lam(u, p), p) <= target:
                converged = True
                break
        if it == cfg.max_iters:
            break

        t = step
        accepted = False
        while t > 1e-300:
            v = u - t * r
            vmax = float(np.max(v))
            if not vmax > 0:
                t *= cfg.armijo_shrink
                continue
            v = model.project(np.maximum(v, cfg.floor_clip * vmax))
            e_new = model.energy(v, p, eps)
            decrease = p * float(np.dot(mu * r, u - v))
            if decrease > 0 and e_new <= energy - cfg.armijo_c * decrease:
                accepted = True
                break
            t *= cfg.armijo_shrink
        if not accepted:
            stall += 1
            if eps > 0:
                # smoothing too coarse to make progress: halve it and restart the step
                eps = 0.5 * eps if eps > 1e-300 else 0.0
                energy = model.energy(u, p, eps)
                r, _, _ = model.tangent(u, p, eps)
                step = cfg.step_init
                continue
            break
        r_new, _, _ = model.tangent(v, p, eps)
        s = v - u
        y = r_new - r
        sy = float(np.dot(mu * s, y))
        if sy > 0:
            step = min(max(float(np.dot(mu * s, s)) / sy, 1e-12), 1e12)
        else:
            step = min(t / cfg.armijo_shrink, 1e12)
        u, r, energy = v, r_new, e_new
    return u, it, converged, {"eps_final": eps, "stalls": stall}


# ---------------------------------------------------------------------------
# contracted iteration
# ---------------------------------------------------------------------------

class _Augmented:
    """Graph edges plus one edge from a ground node (index n, value 0) to each vertex.

    The ground edge into x has weight ``mu(x) g(x)``, which turns the term
    ``g u^(p-1)`` into the p-flux through that edge. Edges ``0..m-1`` are the
    graph's own, edge ``m + x`` is the ground edge of vertex x.
    """

    def __init__(self, model: _Model):
        n = model.n
        self.n = n
        self.m = len(model.w)
        self.src = np.concatenate([model.src, np.full(n, n, dtype=np.intp)])
        self.dst = np.concatenate([model.dst, np.arange(n, dtype=np.intp)])
        self.w = np.concatenate([model.w, model.mu * model.g])
        adj = [[] for _ in range(n + 1)]
        for e, (a, b) in enumerate(zip(self.src, self.dst)):
            adj[a].append((int(b), e))
            adj[b].append((int(a), e))
        self.adj = adj

    def diffs(self, u):
        return np.append(u, 0.0)[self.dst] - np.append(u, 0.0)[self.src]

    def div(self, F):
        """Net inflow at each real vertex."""
        out = np.zeros(self.n + 1)
        np.add.at(out, self.dst, F)
        np.add.at(out, self.src, -F)
        return out[: self.n]

    def labels(self, u, tiny):
        """Group label per node (ground included) joining edges with ``|du| <= tiny``."""
        close = np.abs(self.diffs(u)) <= tiny
        adj = coo_matrix(
            (np.ones(int(close.sum())), (self.src[close], self.dst[close])), shape=(self.n + 1, self.n + 1)
        )
        return connected_components(adj, directed=False)[1]


def _same_partition(a, b):
    k = len(np.unique(a))
    return k == len(np.unique(b)) == len(np.unique(np.c_[a, b], axis=0))


def _psi(t, q):
    """Inverse kernel ``sign(t) |t|^q`` (scalar); saturates instead of overflowing."""
    if t == 0.0:
        return 0.0
    lg = q * math.log(abs(t))
    if lg < -745.0:
        return 0.0
    v = math.exp(min(lg, 700.0))
    return v if t > 0 else -v


def _psi_array(t, q):
    out = np.zeros_like(t)
    nz = t != 0
    out[nz] = np.sign(t[nz]) * np.exp(np.minimum(q * np.log(np.abs(t[nz])), 700.0))
    return out


class _Groups:
    """Spanning forest of the merged groups, rooted at the ground for the zero group."""

    def __init__(self, aug: _Augmented, lab):
        n = aug.n
        self.lab = lab
        self.ground = lab[n]
        self.internal = lab[aug.src] == lab[aug.dst]
        self.trees = []
        seen = np.zeros(n + 1, dtype=bool)
        for root in [n] + list(range(n)):
            if seen[root]:
                continue
            seen[root] = True
            order, parent = [root], {root: None}
            i = 0
            while i < len(order):
                x = order[i]
                i += 1
                for y, e in aug.adj[x]:
                    if self.internal[e] and y not in parent:
                        parent[y] = e
                        seen[y] = True
                        order.append(y)
            if len(order) == 1:
                continue
            tree_edges = set(e for e in parent.values() if e is not None)
            members = set(order)
            nontree = [
                e for e in np.flatnonzero(self.internal)
                if int(aug.src[e]) in members and e not in tree_edges
            ]
            self.trees.append((root, order, parent, nontree))

    @staticmethod
    def path_to_root(aug, parent, x):
        """``(edge, sign)`` pairs along the tree path from x to the root; sign +1 means src->dst."""
        out = []
        while parent[x] is not None:
            e = parent[x]
            if aug.dst[e] == x:
                out.append((e, -1))
                x = int(aug.src[e])
            else:
                out.append((e, 1))
                x = int(aug.dst[e])
        return out


def _reduced_descent(model: _Model, aug: _Augmented, u, p, tol, maxit, cfg: SolverConfig):
    """Projected gradient descent over rigid group moves; the zero group stays fixed.

    Returns ``(u, labels, iters, residual)`` where the residual is the
    group-aggregated Euler-Lagrange defect ``max |L - lambda N| / M``.
    """
    n = model.n
    mu = model.mu

    def setup(v):
        lab = aug.labels(v, cfg.merge_tol * float(np.max(v)))
        free = lab[:n] != lab[n]
        ids, inv = np.unique(lab[:n][free], return_inverse=True)
        mass = np.bincount(inv, weights=mu[free], minlength=len(ids))
        return lab, free, inv, len(ids), mass

    def tangent(v, free, inv, k, mass):
        lhs = model.lhs(v, p)
        nrm = model.h * v ** (model.alpha - 1.0)
        L = np.bincount(inv, weights=(mu * lhs)[free], minlength=k)
        N = np.bincount(inv, weights=(mu * nrm)[free], minlength=k)
        kappa = np.dot(L, N / mass) / np.dot(N, N / mass)
        r = np.zeros(n)
        r[free] = ((L - kappa * N) / mass)[inv]
        res = float(np.max(np.abs(L - model.lam(v, p) * N) / mass))
        return r, res

    lab, free, inv, k, mass = setup(u)
    if k == 0:
        return u, lab, 0, 0.0
    energy = model.energy(u, p)
    r, res = tangent(u, free, inv, k, mass)
    step = cfg.step_init
    it = 0
    for it in range(maxit):
        if res <= tol:
            break
        t = step
        accepted = False
        while t > 1e-30:
            v = u - t * r
            v = model.project(np.maximum(v, cfg.floor_clip * float(np.max(v))))
            e_new = model.energy(v, p)
            decrease = p * float(np.dot(mu * r, u - v))
            if decrease > 0 and e_new <= energy - cfg.armijo_c * decrease:
                accepted = True
                break
            # below rounding of I: accept if the defect still shrinks
            if _roundoff_ok(e_new, energy) and tangent(v, free, inv, k, mass)[1] < res:
                accepted = True
                break
            t *= cfg.armijo_shrink
        if not accepted:
            break
        lab2, free2, inv2, k2, mass2 = setup(v)
        if not _same_partition(lab, lab2):
            lab, free, inv, k, mass = lab2, free2, inv2, k2, mass2
            u, energy = v, e_new
            if k == 0:
                return u, lab, it + 1, 0.0
            r, res = tangent(u, free, inv, k, mass)
            step = cfg.step_init
            continue
        r_new, res_new = tangent(v, free, inv, k, mass)
        s = v - u
        sy = float(np.dot(mu * s, r_new - r))
        step = min(max(float(np.dot(mu * s, s)) / sy, 1e-12), 1e12) if sy > 0 else 2.0 * t
        u, r, energy, res = v, r_new, e_new, res_new
    return u, lab, it, res


def _cycle_flows(f, cycles, w, q, tol_pot):
    """Minimize ``sum w |f/w|^(1+q) / (1+q)`` over circulations on the given cycles.

    Stationarity is the discrete curl-free condition on ``psi(f/w)``, i.e.
    the flows come from potentials. L-BFGS-B gets close, then a sweep of
    one-dimensional root solves per cycle reaches ``tol_pot``.
    """
    k = len(cycles)
    used = sorted({e for cyc in cycles for e, _ in cyc})
    pos = {e: i for i, e in enumerate(used)}
    C = np.zeros((len(used), k))
    for j, cyc in enumerate(cycles):
        for e, sg in cyc:
            C[pos[e], j] = sg
    f0 = f[used].copy()
    wu = w[used]
    def obj(z):
        e = (f0 + C @ z) / wu
        a = np.abs(e)
        # exponent capped well below overflow so the weighted sum stays finite
        pw = np.exp(np.minimum(q * np.log(np.maximum(a, 1e-300)), 600.0))
        return float(np.sum(wu * a * pw)) / (1.0 + q), C.T @ (np.sign(e) * pw)

    with np.errstate(under="ignore"):
        z = minimize(obj, np.zeros(k), jac=True, method="L-BFGS-B",
                     options={"gtol": tol_pot, "ftol": 0.0, "maxiter": 2000, "maxcor": 30}).x
    if np.all(np.isfinite(z)):
        f = f.copy()
        f[used] = f0 + C @ z

    for _ in range(200):
        worst = 0.0
        for cyc in cycles:
            def curl(s, cyc=cyc):
                return sum(sg * _psi((f[e] + sg * s) / w[e], q) for e, sg in cyc)

            c0 = curl(0.0)
            if abs(c0) <= tol_pot:
                continue
            worst = max(worst, abs(c0))
            span = max(max(abs(f[e]) for e, _ in cyc), 1e-300)
            if c0 > 0:
                lo, hi = -span, 0.0
                while curl(lo) > 0:
                    lo *= 2.0
            else:
                lo, hi = 0.0, span
                while curl(hi) < 0:
                    hi *= 2.0
            s = brentq(curl, lo, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=200)
            for e, sg in cyc:
                f[e] += sg * s
        if worst <= tol_pot:
            break
    return f


def _group_flows(model: _Model, aug: _Augmented, u, p, lam, groups: _Groups, tol_pot):
    """Fluxes on intra-group edges that balance the equation exactly at every vertex.

    Edges between groups carry the exact kernel; the remaining demand of
    each vertex is routed through its group's spanning tree and then the
    cycle part is chosen so that ``psi(flux / w)`` derives from potentials.
    Returns ``eta`` per augmented edge (NaN on edges between groups).
    """
    q = 1.0 / (p - 1.0)
    F = aug.w * flux(aug.diffs(u), p)
    F[groups.internal] = 0.0
    need = np.append(model.mu * lam * model.h * u ** (model.alpha - 1.0) - aug.div(F), 0.0)
    f = np.zeros(len(aug.w))
    for root, order, parent, nontree in groups.trees:
        acc = {x: need[x] for x in order}
        for x in reversed(order[1:]):
            e = parent[x]
            a, b = int(aug.src[e]), int(aug.dst[e])
            if b == x:
                f[e] = acc[x]
                acc[a] += acc[x]
            else:
                f[e] = -acc[x]
                acc[b] += acc[x]
        if not nontree:
            continue
        cycles = []
        for e in nontree:
            a, b = int(aug.src[e]), int(aug.dst[e])
            cyc = {e: 1}
            for ee, sg in _Groups.path_to_root(aug, parent, b):
                cyc[ee] = cyc.get(ee, 0) + sg
            for ee, sg in _Groups.path_to_root(aug, parent, a):
                cyc[ee] = cyc.get(ee, 0) - sg
            cycles.append([(ee, sg) for ee, sg in cyc.items() if sg != 0])
        f = _cycle_flows(f, cycles, aug.w, q, tol_pot)
    eta = np.full(len(aug.w), np.nan)
    eta[groups.internal] = f[groups.internal] / aug.w[groups.internal]
    return eta


def _split(model: _Model, aug: _Augmented, u, p, eta, groups: _Groups, floor):
    """Move each group onto the potentials its fluxes imply (capped), keeping its mu-mean."""
    n = model.n
    q = 1.0 / (p - 1.0)
    cap = _SPLIT_CAP * float(np.max(u))
    new = u.copy()
    for root, order, parent, _ in groups.trees:
        theta = {root: 0.0}
        for x in order[1:]:
            e = parent[x]
            dv = min(cap, max(-cap, _psi(float(eta[e]), q)))
            if aug.dst[e] == x:
                theta[x] = theta[int(aug.src[e])] + dv
            else:
                theta[x] = theta[int(aug.dst[e])] - dv
        nodes = [x for x in order if x < n]
        tv = np.array([theta[x] for x in nodes])
        if root == n:
            new[nodes] = tv
        else:
            m = model.mu[nodes]
            new[nodes] = (np.dot(m, u[nodes]) - np.dot(m, tv)) / m.sum() + tv
    return np.maximum(new, floor * float(np.max(new)))


def _structured_residual(model: _Model, aug: _Augmented, u, p, lam, eta, consistency):
    """Residual with witnesses on intra-group edges; counts witnesses off their edge difference."""
    d = aug.diffs(u)
    F = aug.w * flux(d, p)
    q = 1.0 / (p - 1.0)
    wit = np.flatnonzero(~np.isnan(eta))
    bad = 0
    if len(wit):
        ok = np.abs(_psi_array(eta[wit], q) - d[wit]) <= consistency
        bad = int(np.count_nonzero(~ok))
        F[wit[ok]] = aug.w[wit[ok]] * eta[wit[ok]]
    r = aug.div(F) / model.mu - lam * model.h * u ** (model.alpha - 1.0)
    return float(np.max(np.abs(r))), bad


def _contract_solve(model: _Model, p: float, u0, cfg: SolverConfig):
    aug = _Augmented(model)
    floor = cfg.floor_clip
    u = model.project(np.maximum(u0, floor * float(np.max(u0))))
    total = 0
    eta = np.full(len(aug.w), np.nan)
    sres, bad = math.inf, 0
    outer = 0
    converged = False
    for outer in range(int(cfg.max_outer)):
        budget = min(_INNER_BUDGET, int(cfg.max_iters) - total)
        if budget <= 0:
            break
        scale = float(np.max(model.h * u ** (model.alpha - 1.0)))
        u, lab, it, _ = _reduced_descent(model, aug, u, p, 0.1 * cfg.grad_tol * scale, budget, cfg)
        total += it
        lam = model.lam(u, p)
        groups = _Groups(aug, lab)
        eta = _group_flows(model, aug, u, p, lam, groups, 0.1 * floor * float(np.max(u)))
        target = _split(model, aug, u, p, eta, groups, floor)

        # the split may overshoot when groups are far from their final layout
        e0 = model.energy(u, p)
        t, s = 1.0, 1.0
        while True:
            trial = u + t * (target - u)
            s = model.constraint(trial) ** (-1.0 / model.alpha)
            trial = trial * s
            if _roundoff_ok(model.energy(trial, p), e0):
                break
            t *= 0.5
            if t < 1e-6:
                trial, s = u, 1.0
                break
        u = trial
        eta = eta * s ** (p - 1.0)
        lam = model.lam(u, p)
        scale = float(np.max(model.h * u ** (model.alpha - 1.0)))
        sres, bad = _structured_residual(model, aug, u, p, lam, eta, 2.0 * floor * float(np.max(u)))
        log.debug("p=%g outer %d: %d steps, %d groups, structured residual %.3e, %d bad witnesses",
                  p, outer, it, len(np.unique(lab)), sres, bad)
        if sres <= cfg.grad_tol * scale and bad == 0:
            converged = True
            break
    m = aug.m
    stats = {"outer": outer + 1, "structured_residual": sres, "bad_witnesses": bad}
    return u, total, converged, eta[:m], eta[m:], stats


def _solution(model: _Model, p: float, u, iters: int, converged: bool,
              edge_flux=None, zero_flux=None, stats=None) -> PSolution:
    lam = model.lam(u, p)
    scale = float(np.max(model.h * u ** (model.alpha - 1.0)))
    r, _, _ = model.tangent(u, p)
    notes = dict(stats or {})
    notes["scale"] = scale
    exact = model.el_residual(u, lam, p)
    return PSolution(
        p=float(p),
        u=u,
        lam=lam,
        el_residual=exact,
        constraint_residual=abs(model.constraint(u) - 1.0),
        iters=int(iters),
        energy=model.energy(u, p),
        stationarity=float(np.max(np.abs(r))),
        converged=converged,
        structured_residual=float(notes.pop("structured_residual", exact)),
        edge_flux=edge_flux,
        zero_flux=zero_flux,
        notes=notes,
    )


def minimize_I(p: float, data: ProblemData, graph: WeightedGraph, cfg: SolverConfig | None = None, init=None) -> PSolution:
    """Minimize ``I`` over ``Gamma`` and return the solution with its multiplier.

    Convergence means the equation holds to ``cfg.grad_tol * sup h u^(alpha-1)``.
    For the ``"contract"`` method this is judged on ``structured_residual``:
    inside a merged group the exact kernel is replaced by a flux witness whose
    implied value differences match ``u`` to ``2 * floor_clip * max u``.
    A cold start (``init is None``) is followed by up to ``cfg.restarts``
    descents from vertex-set indicators whose energy undercuts the first
    result; the lowest converged energy wins.

    Raises
    ------
    ParameterError
        Unless ``1 < p < alpha``.
    ConvergenceError
        When the iteration budget is exhausted; ``exc.best`` holds the last iterate,
        which is also the lowest-energy one.
    """
    cfg = cfg or SolverConfig()
    _check_p(p, data.alpha)
    model = _Model.of(data, graph)
    if init is None:
        u0 = default_init(data, graph)
    else:
        u0 = graph.field(init, "init")
        if np.any(u0 < 0) or not np.any(u0 > 0):
            raise DomainError("init must be nonnegative and not identically zero")
    sol = _solve_from(model, p, u0, cfg)
    if not sol.converged:
        raise ConvergenceError(
            f"p={p:g}: no convergence after {sol.iters} iterations "
            f"(residual={sol.structured_residual:.3e}, target={cfg.grad_tol * sol.scale:.3e})",
            best=sol,
        )
    if init is None and cfg.restarts > 0:
        # I is not convex on Gamma: the constant start can stall in a local
        # minimum. Indicators with lower energy seed further descents.
        starts, energies = _indicator_starts(model, p)
        tried = 0
        for u1, e1 in zip(starts, energies):
            if tried >= cfg.restarts or e1 >= sol.energy:
                break
            tried += 1
            cand = _solve_from(model, p, u1, cfg)
            if cand.converged and cand.energy < sol.energy:
                sol = cand
        sol.notes["restarts"] = tried
    return sol


def _solve_from(model: _Model, p: float, u0, cfg: SolverConfig) -> PSolution:
    if cfg.method == "plain":
        u, iters, converged, stats = _descend(model, p, u0, cfg)
        return _solution(model, p, u, iters, converged, stats=stats)
    u, iters, converged, ef, zf, stats = _contract_solve(model, p, u0, cfg)
    return _solution(model, p, u, iters, converged, ef, zf, stats)


# ---------------------------------------------------------------------------
# a-priori bounds
# ---------------------------------------------------------------------------

@dataclass
class BoundReport:
    name: str
    lower: float
    upper: float
    observed: float
    passed: bool
    details: dict = field(default_factory=dict)

    def require(self) -> BoundReport:
        if not self.passed:
            raise BoundViolation(
                f"{self.name}: observed {self.observed:.6g} outside [{self.lower:.6g}, {self.upper:.6g}]",
                report=self,
            )
        return self

    def to_dict(self) -> dict:
        out = {"name": self.name, "lower": self.lower, "upper": self.upper,
               "observed": self.observed, "passed": self.passed}
        out.update(self.details)
        return out


def max_u_bounds(data: ProblemData, graph: WeightedGraph) -> tuple[float, float]:
    """``(c2, c1)`` bracketing ``max u`` for any field in Gamma."""
    a = data.alpha
    hmu = data.h * graph.mu
    c1 = max(float(np.min(hmu)) ** (-1.0 / a), 1.0)
    c2 = min((float(np.max(data.h)) * float(np.max(graph.mu)) * graph.n) ** (-1.0 / a), 1.0)
    return c2, c1


def lambda_bounds(data: ProblemData, graph: WeightedGraph) -> tuple[float, float]:
    """``(lower, upper)`` bracketing the multiplier of any constrained solution."""
    a = data.alpha
    c2, c1 = max_u_bounds(data, graph)
    c_graph = float(np.max(graph.weighted_degree() / graph.mu))
    lower = min(float(np.min(data.g / data.h)) * c1 ** (1.0 - a), 1.0)
    upper = max((c_graph * 2.0 ** (a - 1.0) + float(np.max(data.g))) / float(np.min(data.h)) * c2 ** (1.0 - a), 1.0)
    return lower, upper


def check_lemma2_bounds(sol: PSolution, data: ProblemData, graph: WeightedGraph, rtol: float = 1e-12) -> BoundReport:
    """Check ``c2 <= max u <= c1`` for a constrained solution."""
    c2, c1 = max_u_bounds(data, graph)
    m = float(np.max(sol.u))
    ok = c2 * (1 - rtol) <= m <= c1 * (1 + rtol)
    return BoundReport("max-u bound", c2, c1, m, ok, {"p": sol.p})


def check_lemma3_bounds(sol: PSolution, data: ProblemData, graph: WeightedGraph, rtol: float = 1e-12) -> BoundReport:
    """Check that the multiplier lies in its a-priori bracket."""
    lower, upper = lambda_bounds(data, graph)
    ok = lower * (1 - rtol) <= sol.lam <= upper * (1 + rtol)
    return BoundReport("lambda bound", lower, upper, float(sol.lam), ok, {"p": sol.p})

"""Discrete Wasserstein-1 between empirical manifold-valued distributions.

The ground cost is the geodesic distance of the sample geometry.  Samples
may be single points or whole images; images are compared on the product
manifold, ``sqrt(sum_p d(x_p, y_p)^2)``.

Exact solves go through a Hungarian fast path for uniform, equal-size sets
and a transportation-simplex (network simplex on the bipartite graph) for
everything else.  :func:`solve_w1_sinkhorn` is the entropic approximation for
large sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import geometry as geo
from .geometry import GeometryTag

WEIGHT_TOL = 1e-12
FEASIBILITY_TOL = 1e-9
EXACT_MAX_CELLS = 250_000


class TransportError(ValueError):
    pass


@dataclass
class SampleSet:
    """Weighted empirical distribution on one geometry.

    ``points`` has shape ``(n, *point_shape)`` for single points or
    ``(n, pixels, *point_shape)`` for images flattened per pixel.
    """

    tag: GeometryTag
    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.tag = GeometryTag.parse(self.tag)
        self.points = np.asarray(self.points, dtype=np.float64)
        nd = len(self.tag.point_shape)
        if self.points.ndim == nd:
            self.points = self.points[None]
        if self.points.ndim == nd + 1:
            self.points = self.points[:, None]
        if self.points.ndim != nd + 2 or self.points.shape[0] == 0:
            raise TransportError(f"bad sample array shape {self.points.shape} for {self.tag.label}")
        n = self.points.shape[0]
        if self.weights is None:
            self.weights = np.full(n, 1.0 / n)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (n,) or np.any(self.weights < 0):
                raise TransportError("weights must be a nonnegative vector, one per sample")
            if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
                raise TransportError(f"weights sum to {self.weights.sum():.15g}, not 1")

    def __len__(self):
        return self.points.shape[0]

    @property
    def pixels(self) -> int:
        return self.points.shape[1]


@dataclass
class TransportPlan:
    matrix: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    cost: float
    converged: bool = True
    iterations: int = 0
    marginal_error: float = 0.0
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# costs


def _pair_distances(tag: GeometryTag, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel distances between every row of ``a`` and every row of ``b``: (n, m, P)."""
    if tag is GeometryTag.HSV:
        d = a[:, None] - b[None, :]
        d[..., 0] = geo.wrap_angle(d[..., 0])
        return np.linalg.norm(d, axis=-1)
    if tag is GeometryTag.SPHERE:
        c = np.einsum("ipk,jpk->ijp", a, b)
        if np.any(c <= -1.0 + geo.SPHERE_ANTIPODAL_TOL):
            raise geo.AntipodalError("antipodal sample pair in cost matrix")
        cross = np.linalg.norm(np.cross(a[:, None], b[None, :]), axis=-1)
        return np.arctan2(cross, c)
    # a, b hold matrix logarithms here
    return np.linalg.norm(a[:, None] - b[None, :], axis=(-2, -1))


def cost_matrix(a: SampleSet, b: SampleSet, cost: str = "geodesic", anchor=None,
                chunk: int = 64) -> np.ndarray:
    """Pairwise ground costs between two sample sets.

    ``cost="geodesic"`` uses the geodesic distance (product metric over
    pixels).  ``cost="anchored"`` uses ``||log_a(x) - log_a(y)||`` at a fixed
    anchor ``a`` (default anchor of the geometry), in basis coordinates.
    """
    if a.tag is not b.tag:
        raise TransportError(f"tag mismatch: {a.tag.label} vs {b.tag.label}")
    if a.pixels != b.pixels:
        raise TransportError(f"pixel count mismatch: {a.pixels} vs {b.pixels}")
    tag = a.tag
    if cost == "anchored":
        frame = geo.TangentFrame(tag, geo.default_anchor(tag) if anchor is None else anchor)
        xa = frame.log(a.points).reshape(len(a), -1)
        xb = frame.log(b.points).reshape(len(b), -1)
        out = np.empty((len(a), len(b)))
        for lo in range(0, len(a), chunk):
            out[lo:lo + chunk] = np.linalg.norm(xa[lo:lo + chunk, None] - xb[None], axis=-1)
        return out
    if cost != "geodesic":
        raise TransportError(f"unknown cost {cost!r}")
    pa, pb = a.points, b.points
    if tag is GeometryTag.SPD:
        pa, pb = geo.sym_matrix_log(pa), geo.sym_matrix_log(pb)
    out = np.empty((len(a), len(b)))
    for lo in range(0, len(a), chunk):
        d = _pair_distances(tag, pa[lo:lo + chunk], pb)
        out[lo:lo + chunk] = np.sqrt(np.sum(d * d, axis=-1))
    return out


# ---------------------------------------------------------------------------
# exact solvers


def _check_weights(cost, wa, wb):
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or not np.all(np.isfinite(cost)):
        raise TransportError("cost must be a finite 2-d array")
    n, m = cost.shape
    wa = np.full(n, 1.0 / n) if wa is None else np.asarray(wa, dtype=np.float64)
    wb = np.full(m, 1.0 / m) if wb is None else np.asarray(wb, dtype=np.float64)
    if wa.shape != (n,) or wb.shape != (m,):
        raise TransportError(f"weight lengths {wa.shape}, {wb.shape} do not match cost {cost.shape}")
    if np.any(wa < 0) or np.any(wb < 0):
        raise TransportError("negative weights")
    if abs(wa.sum() - wb.sum()) > FEASIBILITY_TOL:
        raise TransportError(f"infeasible: source mass {wa.sum():.12g} != target mass {wb.sum():.12g}")
    return cost, wa, wb


def solve_assignment(cost) -> np.ndarray:
    """Minimum-cost perfect assignment of a square matrix (Hungarian method).

    Shortest augmenting paths with dual potentials, O(n^3).  Returns ``perm``
    with row ``i`` assigned to column ``perm[i]``.  Ties go to the lowest
    column index.
    """
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    if c.shape != (n, n):
        raise TransportError(f"assignment needs a square matrix, got {c.shape}")
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=np.int64)  # owner[j]: 1-based row matched to column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1
    perm = np.empty(n, dtype=np.int64)
    perm[owner[1:] - 1] = np.arange(n)
    return perm


def _northwest_corner(wa, wb):
    n, m = len(wa), len(wb)
    sa, sb = wa.copy(), wb.copy()
    flow = {}
    i = j = 0
    while i < n and j < m:
        x = min(sa[i], sb[j])
        flow[(i, j)] = x
        sa[i] -= x
        sb[j] -= x
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and sa[i] <= sb[j]):
            i += 1
        else:
            j += 1
    return flow


def _tree_path(basis, n, m, src, dst):
    """Cells on the basis-tree path from node ``src`` to node ``dst``.

    Rows are nodes ``0..n-1``, columns ``n..n+m-1``.
    """
    adj = [[] for _ in range(n + m)]
    for (i, j) in basis:
        adj[i].append((n + j, (i, j)))
        adj[n + j].append((i, (i, j)))
    parent = {src: None}
    stack = [src]
    while stack:
        node = stack.pop()
        if node == dst:
            break
        for nxt, cell in adj[node]:
            if nxt not in parent:
                parent[nxt] = (node, cell)
                stack.append(nxt)
    path = []
    node = dst
    while parent[node] is not None:
        node, cell = parent[node]
        path.append(cell)
    return path[::-1]


def _potentials(basis, cost, n, m):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    adj_r = [[] for _ in range(n)]
    adj_c = [[] for _ in range(m)]
    for (i, j) in basis:
        adj_r[i].append(j)
        adj_c[j].append(i)
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in adj_r[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in adj_c[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    stack.append(("r", i))
    return u, v


def transport_simplex(cost, wa, wb, max_iter: int = 100_000):
    """Transportation simplex with Bland's rule. Returns ``(plan, iterations)``."""
    n, m = cost.shape
    flow = _northwest_corner(wa, wb)
    tol = 1e-12 * max(1.0, float(np.abs(cost).max(initial=0.0)))
    it = 0
    for it in range(1, max_iter + 1):
        u, v = _potentials(flow, cost, n, m)
        reduced = cost - u[:, None] - v[None, :]
        neg = np.flatnonzero(reduced.ravel() < -tol)
        if neg.size == 0:
            break
        ei, ej = divmod(int(neg[0]), m)
        # cycle: entering cell (+), then the tree path from column ej back to row ei
        path = _tree_path(flow, n, m, n + ej, ei)
        minus = path[0::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] == theta), key=lambda c: c[0] * m + c[1])
        for k, c in enumerate(path):
            flow[c] += -theta if k % 2 == 0 else theta
        del flow[leaving]
        flow[(ei, ej)] = theta
    else:
        raise TransportError(f"transport simplex did not converge in {max_iter} pivots")
    plan = np.zeros((n, m))
    for (i, j), x in flow.items():
        plan[i, j] = max(x, 0.0)
    return plan, it


def _uniform(w):
    return np.all(np.abs(w - w[0]) <= WEIGHT_TOL)


def solve_w1_exact(cost, wa=None, wb=None) -> TransportPlan:
    """Optimal coupling for ``sum gamma_ij c_ij`` under the given marginals."""
    cost, wa, wb = _check_weights(cost, wa, wb)
    n, m = cost.shape
    if n == m and _uniform(wa) and _uniform(wb):
        perm = solve_assignment(cost)
        plan = np.zeros((n, m))
        plan[np.arange(n), perm] = 1.0 / n
        value = float(np.sum(cost[np.arange(n), perm]) / n)
        return TransportPlan(plan, wa, wb, value, info={"method": "assignment", "perm": perm})
    # drop zero-mass rows/columns; they carry no flow
    ra, rb = np.flatnonzero(wa > 0), np.flatnonzero(wb > 0)
    sub, iters = transport_simplex(cost[np.ix_(ra, rb)], wa[ra], wb[rb])
    plan = np.zeros((n, m))
    plan[np.ix_(ra, rb)] = sub
    value = float(np.sum(plan * cost))
    err = max(np.abs(plan.sum(1) - wa).max(), np.abs(plan.sum(0) - wb).max())
    return TransportPlan(plan, wa, wb, value, iterations=iters, marginal_error=float(err),
                         info={"method": "simplex"})


# ---------------------------------------------------------------------------
# entropic approximation


def solve_w1_sinkhorn(cost, wa=None, wb=None, eps: float = 0.01, max_iter: int = 10_000,
                      tol: float = 1e-6) -> TransportPlan:
    """Log-domain Sinkhorn iterations.

    ``cost`` of the returned plan is the transport cost ``<P, C>`` (no
    entropy term).  ``converged`` is False when the marginal violation is
    still above ``tol`` after ``max_iter`` sweeps.
    """
    if eps <= 0:
        raise TransportError("eps must be positive")
    cost, wa, wb = _check_weights(cost, wa, wb)
    ra, rb = np.flatnonzero(wa > 0), np.flatnonzero(wb > 0)
    c = cost[np.ix_(ra, rb)]
    la, lb = np.log(wa[ra]), np.log(wb[rb])
    f = np.zeros(len(ra))
    g = np.zeros(len(rb))
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f = eps * (la - logsumexp((g[None, :] - c) / eps, axis=1))
        g = eps * (lb - logsumexp((f[:, None] - c) / eps, axis=0))
        if it % 10 == 0 or it == max_iter:
            p = np.exp((f[:, None] + g[None, :] - c) / eps)
            err = float(np.abs(p.sum(axis=1) - wa[ra]).max())
            if err < tol:
                break
    p = np.exp((f[:, None] + g[None, :] - c) / eps)
    err = float(np.abs(p.sum(axis=1) - wa[ra]).max())
    plan = np.zeros(cost.shape)
    plan[np.ix_(ra, rb)] = p
    return TransportPlan(plan, wa, wb, float(np.sum(p * c)), converged=err < tol, iterations=it,
                         marginal_error=err, info={"method": "sinkhorn", "eps": eps})


# ---------------------------------------------------------------------------


def w1_plan(a: SampleSet, b: SampleSet, method: str = "auto", cost: str = "geodesic",
            eps: float | None = None, anchor=None) -> TransportPlan:
    c = cost_matrix(a, b, cost=cost, anchor=anchor)
    if method == "auto":
        method = "exact" if c.size <= EXACT_MAX_CELLS else "sinkhorn"
    if method == "exact":
        return solve_w1_exact(c, a.weights, b.weights)
    if method == "sinkhorn":
        if eps is None:
            eps = 0.01 * float(c.mean()) if c.mean() > 0 else 1e-3
        return solve_w1_sinkhorn(c, a.weights, b.weights, eps=eps)
    raise TransportError(f"unknown method {method!r}")


def w1(a: SampleSet, b: SampleSet, method: str = "auto", cost: str = "geodesic",
       eps: float | None = None, anchor=None) -> float:
    """Wasserstein-1 distance between two sample sets."""
    return w1_plan(a, b, method=method, cost=cost, eps=eps, anchor=anchor).cost

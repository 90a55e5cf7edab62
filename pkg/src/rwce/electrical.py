"""Voltages, currents, energies and effective resistances on finite networks.

All solves are Dirichlet problems for the weighted graph Laplacian: some
vertices are held at fixed potentials and the rest are harmonic.  Below
``DENSE_LIMIT`` free vertices the reduced system is factorised densely;
above it a Jacobi-preconditioned conjugate gradient is used.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AbsorptionError, ConnectivityError, ConsistencyError, PreconditionError
from .graphs import (Ball, CollapsedNetwork, GraphFamily, Network, as_weights, ball,
                     check_positive, collapse_boundary)

DENSE_LIMIT = 2000
SMALL_LIMIT = 200
CG_RTOL = 1e-12


def _cond(net: Network, weights) -> np.ndarray:
    if weights is None:
        return net.conductance
    c = np.asarray(weights, dtype=float)
    if c.shape != net.conductance.shape:
        raise ValueError(f"expected {net.conductance.shape[0]} conductances, got {c.shape}")
    check_positive(c)
    return c


def _as_set(s) -> tuple:
    if isinstance(s, (int, np.integer)):
        return (int(s),)
    return tuple(sorted({int(x) for x in s}))


def laplacian(n: int, edges: np.ndarray, c: np.ndarray) -> sp.csr_matrix:
    i, j = edges[:, 0], edges[:, 1]
    w = sp.coo_matrix((np.r_[c, c], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
    return (sp.diags(np.asarray(w.sum(axis=1)).ravel()) - w).tocsr()


def dirichlet(net: Network, fixed: dict, weights=None) -> np.ndarray:
    """Potential that is harmonic off ``fixed`` and equals ``fixed[i]`` on it.

    Raises
    ------
    ConnectivityError
        If some connected piece of free vertices touches no fixed vertex
        (the reduced system is singular).
    """
    c = _cond(net, weights)
    n = net.n_vertices
    fixed_idx = np.fromiter(fixed.keys(), dtype=np.int64, count=len(fixed))
    fixed_val = np.fromiter(fixed.values(), dtype=float, count=len(fixed))
    is_fixed = np.zeros(n, dtype=bool)
    is_fixed[fixed_idx] = True
    free = np.flatnonzero(~is_fixed)
    phi = np.zeros(n)
    phi[fixed_idx] = fixed_val
    if free.size == 0:
        return phi
    _check_reaches_fixed(net, is_fixed)
    if n <= SMALL_LIMIT:
        # sparse assembly dominates the cost for tiny networks
        L = np.zeros((n, n))
        i, j = net.edges[:, 0], net.edges[:, 1]
        np.add.at(L, (i, j), -c)
        np.add.at(L, (j, i), -c)
        L[np.diag_indices(n)] = -L.sum(axis=1)
        Lff = L[np.ix_(free, free)]
        rhs = -(L[np.ix_(free, fixed_idx)] @ fixed_val)
        s = 1.0 / np.sqrt(np.diag(Lff))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            phi[free] = s * scipy.linalg.solve(Lff * s[:, None] * s[None, :], s * rhs,
                                               assume_a="pos", check_finite=False)
        return phi
    L = laplacian(n, net.edges, c)
    Lff = L[free][:, free]
    rhs = -(L[free][:, fixed_idx] @ fixed_val)
    if free.size < DENSE_LIMIT:
        # symmetric diagonal scaling; geometric weights otherwise wreck rcond
        s = 1.0 / np.sqrt(Lff.diagonal())
        A = Lff.toarray() * s[:, None] * s[None, :]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            x = s * scipy.linalg.solve(A, s * rhs, assume_a="pos", check_finite=False)
    else:
        d = Lff.diagonal()
        M = sp.diags(1.0 / d)
        x, info = spla.cg(Lff, rhs, rtol=CG_RTOL, atol=0.0, M=M, maxiter=50 * free.size)
        if info != 0:
            raise ConsistencyError(f"conjugate gradient did not converge (info={info})")
    phi[free] = x
    return phi


def _check_reaches_fixed(net: Network, is_fixed: np.ndarray) -> None:
    n = net.n_vertices
    if n <= SMALL_LIMIT:
        # label propagation from the fixed set
        reach = is_fixed.copy()
        a, b = net.edges[:, 0], net.edges[:, 1]
        while True:
            new = reach.copy()
            new[b[reach[a]]] = True
            new[a[reach[b]]] = True
            if (new == reach).all():
                break
            reach = new
        if not reach.all():
            raise ConnectivityError(f"vertex {int(np.flatnonzero(~reach)[0])} is in a component with no source or sink")
        return
    g = sp.coo_matrix((np.ones(len(net.edges)), (net.edges[:, 0], net.edges[:, 1])), shape=(n, n))
    ncomp, lab = sp.csgraph.connected_components(g, directed=False)
    has_fixed = np.zeros(ncomp, dtype=bool)
    has_fixed[lab[is_fixed]] = True
    if not has_fixed.all():
        bad = int(np.flatnonzero(~has_fixed[lab])[0])
        raise ConnectivityError(f"vertex {bad} is in a component with no source or sink")


def harmonicity_residual(net: Network, phi: np.ndarray, free: np.ndarray, weights=None) -> float:
    """max over ``free`` of |phi(x) - sum_y P(x, y) phi(y)|."""
    if free.size == 0:
        return 0.0
    c = _cond(net, weights)
    W = laplacian(net.n_vertices, net.edges, c)
    deg = W.diagonal()
    # W = D - A, so A phi = D phi - W phi
    mean = (deg * phi - W @ phi) / np.where(deg > 0, deg, 1.0)
    return float(np.max(np.abs(phi[free] - mean[free])))


@dataclass(frozen=True, eq=False)
class VoltageField:
    """Voltage with ``values[source] == 1`` and zero on every sink vertex."""

    values: np.ndarray
    source: int
    sink: tuple
    residual: float
    network: Network = field(repr=False)

    def __getitem__(self, i):
        return self.values[i]


def solve_voltage(net: Network, weights, source: int, sink) -> VoltageField:
    """Unit voltage at ``source``, ground on ``sink``; harmonic elsewhere.

    ``v(x)`` is the probability that the weighted walk from ``x`` reaches
    ``source`` before ``sink``.
    """
    sink = _as_set(sink)
    if source in sink:
        raise ValueError("source must not be a sink vertex")
    c = _cond(net, weights)
    fixed = {source: 1.0, **{s: 0.0 for s in sink}}
    v = dirichlet(net, fixed, c)
    free = np.setdiff1d(np.arange(net.n_vertices), np.fromiter(fixed, dtype=np.int64))
    res = harmonicity_residual(net, v, free, c)
    return VoltageField(v, int(source), sink, res, net if weights is None else net.with_conductance(c))


def escape_potential(net: Network, weights, source: int, sink) -> np.ndarray:
    """1 - v computed directly (0 at ``source``, 1 on ``sink``), avoiding cancellation near 1."""
    sink = _as_set(sink)
    fixed = {int(source): 0.0, **{s: 1.0 for s in sink}}
    return dirichlet(net, fixed, weights)


@dataclass(frozen=True, eq=False)
class EdgeFlow:
    """Antisymmetric flow stored along the network's edge orientation.

    ``flow[k]`` is the amount moving from ``edges[k, 0]`` to ``edges[k, 1]``.
    """

    flow: np.ndarray
    edges: np.ndarray
    source: int
    sink: tuple
    n_vertices: int

    def j(self, x: int, y: int) -> float:
        """Flow from ``x`` to ``y``; 0 when ``{x, y}`` is not an edge."""
        fwd = np.flatnonzero((self.edges[:, 0] == x) & (self.edges[:, 1] == y))
        bwd = np.flatnonzero((self.edges[:, 0] == y) & (self.edges[:, 1] == x))
        return float(self.flow[fwd].sum() - self.flow[bwd].sum())

    def divergence(self) -> np.ndarray:
        """Net outflow J_x at every vertex."""
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.edges[:, 0], self.flow)
        np.add.at(out, self.edges[:, 1], -self.flow)
        return out

    @property
    def strength(self) -> float:
        return float(self.divergence()[self.source])

    def node_balance_defect(self) -> float:
        d = self.divergence()
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.source] = False
        mask[list(self.sink)] = False
        return float(np.max(np.abs(d[mask]))) if mask.any() else 0.0

    def scaled(self, s: float) -> "EdgeFlow":
        return EdgeFlow(self.flow * s, self.edges, self.source, self.sink, self.n_vertices)


def _raw_current(net: Network, c: np.ndarray, v: np.ndarray) -> np.ndarray:
    return c * (v[net.edges[:, 0]] - v[net.edges[:, 1]])


def unit_current(net: Network, weights, source: int, sink) -> EdgeFlow:
    """The unit current from ``source`` to ``sink`` (energy minimiser among unit flows)."""
    c = _cond(net, weights)
    vf = solve_voltage(net, c, source, sink)
    raw = _raw_current(net, c, vf.values)
    f = EdgeFlow(raw, net.edges, int(source), vf.sink, net.n_vertices)
    s = f.strength
    if not s > 0:
        raise ConnectivityError("no current reaches the sink")
    return f.scaled(1.0 / s)


def flow_energy(flow: EdgeFlow, resistances) -> float:
    """sum_e j(e)^2 R(e)."""
    r = np.asarray(resistances, dtype=float)
    return float(np.sum(flow.flow ** 2 * r))


def effective_resistance(net: Network, weights, source: int, sink) -> float:
    """Resistance between ``source`` and the (merged) ``sink`` set."""
    c = _cond(net, weights)
    v = solve_voltage(net, c, source, sink).values
    s = _raw_current(net, c, v)
    strength = s[net.edges[:, 0] == source].sum() - s[net.edges[:, 1] == source].sum()
    if not strength > 0:
        raise ConnectivityError("source and sink are not connected")
    return float(1.0 / strength)


def kirchhoff_defect(flow: EdgeFlow, resistances) -> float:
    """Largest potential mismatch around the fundamental cycles of a BFS tree."""
    r = np.asarray(resistances, dtype=float)
    n = flow.n_vertices
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, (u, v) in enumerate(flow.edges):
        adj[u].append((v, k))
        adj[v].append((u, k))
    phi = np.full(n, np.nan)
    tree_edge = np.zeros(len(flow.edges), dtype=bool)
    for root in range(n):
        if not np.isnan(phi[root]):
            continue
        phi[root] = 0.0
        q = deque([root])
        while q:
            x = q.popleft()
            for y, k in adj[x]:
                if np.isnan(phi[y]):
                    drop = flow.flow[k] * r[k] if flow.edges[k, 0] == x else -flow.flow[k] * r[k]
                    phi[y] = phi[x] - drop
                    tree_edge[k] = True
                    q.append(y)
    u, v = flow.edges[~tree_edge, 0], flow.edges[~tree_edge, 1]
    if u.size == 0:
        return 0.0
    return float(np.max(np.abs(phi[u] - phi[v] - flow.flow[~tree_edge] * r[~tree_edge])))


def ohm_defect(net: Network, weights, source: int, sink) -> float:
    """max_e |v(x) - v(y) - i(x, y) R(x, y) / R_eff| for the unit voltage and unit current."""
    c = _cond(net, weights)
    v = solve_voltage(net, c, source, sink).values
    i = unit_current(net, c, source, sink)
    reff = effective_resistance(net, c, source, sink)
    lhs = v[net.edges[:, 0]] - v[net.edges[:, 1]]
    return float(np.max(np.abs(lhs - i.flow / c / reff)))


def return_probability(net: CollapsedNetwork | Network, weights=None, origin: int = 0, sink=None) -> float:
    """Probability that the walk from ``origin`` returns before reaching the sink.

    Equals ``1 - 1 / (C(origin) R_eff)``.
    """
    if sink is None:
        sink = net.sink
    c = _cond(net, weights)
    reff = effective_resistance(net, c, origin, sink)
    ca = c[(net.edges[:, 0] == origin) | (net.edges[:, 1] == origin)].sum()
    prod = ca * reff
    if prod < 1.0 - 1e-9:
        raise ConsistencyError(f"C(a) * R_eff = {prod!r} < 1")
    return float(min(1.0, max(0.0, 1.0 - 1.0 / prod)))


# ---------------------------------------------------------------------------
# profiles over radii

@dataclass(frozen=True)
class ResistanceProfile:
    """Effective resistance between origin and collapsed boundary, per radius.

    ``verdict`` is a heuristic read of finitely many radii: "divergent" when
    each of the last ``window`` per-radius increments exceeds ``eps``,
    "convergent" otherwise (with ``limit`` an extrapolated value).  The
    largest radius used is ``radii[-1]``.
    """

    radii: tuple
    values: tuple
    monotone: bool
    verdict: str
    limit: float
    origin_conductance: float
    eps: float = 1e-6
    window: int = 5

    @property
    def return_probabilities(self) -> tuple:
        return tuple(1.0 - 1.0 / (self.origin_conductance * r) for r in self.values)

    @property
    def limiting_return_probability(self) -> float:
        if self.verdict == "divergent":
            return 1.0
        return 1.0 - 1.0 / (self.origin_conductance * self.limit)


def _verdict(radii, values, eps, window):
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return "convergent", float(v[-1])
    inc = np.diff(v) / np.diff(r)
    tail = inc[-window:]
    if np.all(tail > eps):
        return "divergent", float("inf")
    limit = float(v[-1])
    if v.size >= 3:
        d1, d2 = v[-1] - v[-2], v[-2] - v[-3]
        if d2 > 0 and 0 <= d1 < d2:
            q = d1 / d2
            limit = float(v[-1] + d1 * q / (1.0 - q))
    return "convergent", limit


def resistance_profile(family: GraphFamily, weights_fn, n_list: Sequence[int], *,
                       eps: float = 1e-6, window: int = 5) -> ResistanceProfile:
    """Effective resistances R_n for every radius in ``n_list``.

    ``weights_fn`` is anything :func:`rwce.graphs.as_weights` accepts for the
    largest ball (callable on labels, array, scalar or None for unit weights).
    """
    radii = sorted(int(n) for n in n_list)
    if not radii or radii[0] < 1:
        raise ValueError("radii must be >= 1")
    big = ball(family, radii[-1])
    c = as_weights(big, weights_fn)
    vals = []
    for n in radii:
        b = big.restrict(n)
        net = collapse_boundary(b, c)
        vals.append(effective_resistance(net, None, 0, net.sink))
    mono = bool(np.all(np.diff(vals) >= -1e-12 * np.maximum(1.0, np.abs(vals[:-1])))) if len(vals) > 1 else True
    verdict, limit = _verdict(radii, vals, eps, window)
    ca = float(c[(big.edges[:, 0] == 0) | (big.edges[:, 1] == 0)].sum())
    return ResistanceProfile(tuple(radii), tuple(vals), mono, verdict, limit, ca, eps, window)


# ---------------------------------------------------------------------------
# perturbation

@dataclass(frozen=True)
class PerturbationCheck:
    bound: float
    radii: tuple
    differences: tuple
    holds: bool


def perturbation_bound(weights1, weights2, b: Ball, radii: Sequence[int] | None = None) -> PerturbationCheck:
    """sum_e |R_1(e) - R_2(e)| over ``b`` and |R_1,n - R_2,n| for each radius.

    The bound dominates every difference (the minimal-energy flows are unit
    flows with |j| <= 1 on every edge).
    """
    c1, c2 = as_weights(b, weights1), as_weights(b, weights2)
    bound = float(np.sum(np.abs(1.0 / c1 - 1.0 / c2)))
    radii = tuple(range(1, b.radius + 1)) if radii is None else tuple(radii)
    diffs = []
    for n in radii:
        net = collapse_boundary(b.restrict(n), c1)
        r1 = effective_resistance(net, None, 0, net.sink)
        r2 = effective_resistance(net.reweight(c2), None, 0, net.sink)
        diffs.append(abs(r1 - r2))
    holds = all(d <= bound + 1e-12 * max(1.0, bound) for d in diffs)
    return PerturbationCheck(bound, radii, tuple(diffs), holds)


# ---------------------------------------------------------------------------
# Monte Carlo on a finite network

def _incidence(net: Network, c: np.ndarray):
    n = net.n_vertices
    deg = np.zeros(n, dtype=np.int64)
    np.add.at(deg, net.edges[:, 0], 1)
    np.add.at(deg, net.edges[:, 1], 1)
    maxdeg = int(deg.max())
    nbr = np.full((n, maxdeg), -1, dtype=np.int64)
    inc = np.full((n, maxdeg), -1, dtype=np.int64)
    fill = np.zeros(n, dtype=np.int64)
    for k, (u, v) in enumerate(net.edges):
        nbr[u, fill[u]], inc[u, fill[u]] = v, k
        fill[u] += 1
        nbr[v, fill[v]], inc[v, fill[v]] = u, k
        fill[v] += 1
    w = np.where(inc >= 0, c[np.maximum(inc, 0)], 0.0)
    cum = np.cumsum(w, axis=1)
    cum /= np.where(cum[:, -1:] > 0, cum[:, -1:], 1.0)
    return nbr, inc, cum


@dataclass(frozen=True)
class WalkBatch:
    """Outcome of independent walks run until they hit a stopping set."""

    end: np.ndarray
    steps: np.ndarray
    crossings: np.ndarray | None


def absorbing_walks(net: Network, weights, start: int, stop, trials: int, seed: int, *,
                    count_crossings: bool = False, max_steps: int = 1_000_000) -> WalkBatch:
    """Run ``trials`` walks from ``start`` until they hit ``stop`` at some time t >= 1.

    Raises
    ------
    AbsorptionError
        If any walk is still running after ``max_steps`` steps.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    c = _cond(net, weights)
    nbr, inc, cum = _incidence(net, c)
    stop_mask = np.zeros(net.n_vertices, dtype=bool)
    stop_mask[list(_as_set(stop))] = True
    rng = np.random.default_rng(seed)
    pos = np.full(trials, int(start), dtype=np.int64)
    steps = np.zeros(trials, dtype=np.int64)
    alive = np.arange(trials)
    cross = np.zeros((trials, len(net.edges))) if count_crossings else None
    for t in range(1, max_steps + 1):
        p = pos[alive]
        u = rng.random(alive.size)
        slot = (cum[p] < u[:, None]).sum(axis=1)
        nxt = nbr[p, slot]
        if count_crossings:
            e = inc[p, slot]
            sign = np.where(net.edges[e, 0] == p, 1.0, -1.0)
            np.add.at(cross, (alive, e), sign)
        pos[alive] = nxt
        steps[alive] = t
        alive = alive[~stop_mask[nxt]]
        if alive.size == 0:
            return WalkBatch(pos, steps, cross)
    raise AbsorptionError(f"{alive.size} walks not absorbed after {max_steps} steps")


@dataclass(frozen=True)
class CrossingEstimate:
    """Monte Carlo mean of net signed crossings per edge, with standard errors."""

    mean: np.ndarray
    stderr: np.ndarray
    trials: int

    def agrees_with(self, flow: EdgeFlow, sigmas: float = 4.0, floor: float = 1e-12) -> np.ndarray:
        return np.abs(self.mean - flow.flow) <= sigmas * self.stderr + floor


def net_crossings_estimate(net: Network, weights, source: int, sink, trials: int, seed: int,
                           max_steps: int = 1_000_000) -> CrossingEstimate:
    """Estimate the unit current by counting net edge crossings of walks from ``source``."""
    res = absorbing_walks(net, weights, source, sink, trials, seed,
                          count_crossings=True, max_steps=max_steps)
    x = res.crossings
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros_like(mean)
    return CrossingEstimate(mean, se, trials)


def estimate_return_probability(net: Network, weights, origin: int, sink, trials: int, seed: int):
    """Fraction of walks from ``origin`` that come back before the sink, and its standard error."""
    stop = set(_as_set(sink)) | {int(origin)}
    res = absorbing_walks(net, weights, origin, stop, trials, seed)
    hits = (res.end == origin).astype(float)
    p = float(hits.mean())
    return p, float(np.sqrt(max(p * (1 - p), 0.0) / trials))


# ---------------------------------------------------------------------------
# identities and inequalities

@dataclass(frozen=True)
class IdentityCheck:
    left: float
    right: float

    @property
    def discrepancy(self) -> float:
        return abs(self.left - self.right)


def voltage_difference_identity(net: Network, weights_t, weights_t1, x: int,
                                origin: int = 0, sink=None) -> IdentityCheck:
    """Both sides of the exact formula for v_t(x) - v_{t+1}(x).

    The left side comes from two voltage solves.  The right side is
    ``(1/R_t) * sum_e (R_t - R_{t+1})(e) * i1(e) * i0(e)`` where ``i0`` is
    the unit current origin -> sink under the old weights and ``i1`` the
    unit current x -> {origin} ∪ sink under the new ones.
    """
    if sink is None:
        sink = net.sink
    sink = _as_set(sink)
    if x == origin or x in sink:
        raise PreconditionError("x must be a free vertex")
    c0, c1 = _cond(net, weights_t), _cond(net, weights_t1)
    v0 = solve_voltage(net, c0, origin, sink).values
    v1 = solve_voltage(net, c1, origin, sink).values
    r0 = effective_resistance(net, c0, origin, sink)
    i0 = unit_current(net, c0, origin, sink)
    i1 = unit_current(net, c1, x, (origin,) + sink)
    rhs = float(np.sum((1.0 / c0 - 1.0 / c1) * i1.flow * i0.flow) / r0)
    return IdentityCheck(float(v0[x] - v1[x]), rhs)


def separates(net: Network, u: int, S: Iterable[int], y: int) -> bool:
    """True when every path from ``y`` to ``u`` meets ``S``."""
    S = set(int(s) for s in S)
    if y in S:
        return True
    adj: list[list[int]] = [[] for _ in range(net.n_vertices)]
    for a, b in net.edges:
        adj[a].append(int(b))
        adj[b].append(int(a))
    seen = {y}
    q = deque([y])
    while q:
        x = q.popleft()
        if x == u:
            return False
        for z in adj[x]:
            if z not in seen and z not in S:
                seen.add(z)
                q.append(z)
    return True


@dataclass(frozen=True)
class SeparatorCheck:
    max_on_separator: float
    value_at_y: float

    @property
    def holds(self) -> bool:
        return self.max_on_separator >= self.value_at_y - 1e-12


def separator_bound_check(net: Network, weights, u: int, S, A, y: int) -> SeparatorCheck:
    """Check max_{x in S} v(x) >= v(y) for the voltage with v(u) = 1, v = 0 on A."""
    S, A = _as_set(S), _as_set(A)
    if not S or not A:
        raise PreconditionError("S and A must be non-empty")
    if u in S or u in A or set(S) & set(A):
        raise PreconditionError("{u}, S and A must be mutually disjoint")
    if not separates(net, u, S, y):
        raise PreconditionError(f"there is a path from {y} to {u} avoiding S")
    v = solve_voltage(net, weights, u, A).values
    return SeparatorCheck(float(max(v[s] for s in S)), float(v[y]))


def random_unit_flow(net: Network, base: EdgeFlow, rng: np.random.Generator, scale: float = 0.5) -> EdgeFlow:
    """``base`` plus a random circulation: still a unit flow with the same source and sink."""
    n, m = net.n_vertices, len(net.edges)
    # cycle space = null space of the incidence matrix
    B = np.zeros((n, m))
    B[net.edges[:, 0], np.arange(m)] = 1.0
    B[net.edges[:, 1], np.arange(m)] = -1.0
    _, s, vt = np.linalg.svd(B)
    rank = int(np.sum(s > 1e-10))
    cycles = vt[rank:]
    if cycles.shape[0] == 0:
        return base
    circ = rng.normal(size=cycles.shape[0]) @ cycles
    return EdgeFlow(base.flow + scale * circ, base.edges, base.source, base.sink, base.n_vertices)

"""Walks in changing environments: simulation, martingale traces and exact laws.

The Monte Carlo engine advances all trials of a chunk together.  Trial ``k``
draws its step uniforms from its own Philox stream (walk stream) and the
environment's uniforms from a second one, both derived from the root seed
and ``k``; a trial's path therefore does not depend on how trials are
chunked or threaded.

The enumeration oracles (``exact_law`` and friends) list every
(path, environment history) atom up to a small horizon with its exact
probability.
"""

from __future__ import annotations

import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .electrical import resistance_profile
from .environment import (EnvTrace, Environment, FreezeRule, Geometry, escape_on_star, gamma_star, plateau,
                          star_piece)
from .errors import (CapExceededError, DomainError, ImproperConfigError, OracleUnsupportedError,
                     PreconditionError, ProbeRadiusError, TruncationExceededError)
from .graphs import Ball, ComponentSplit, GraphFamily, ball, split_at_origin

NOT_HIT = -1
BLOCK = 1024
CHUNK = 2048


# ---------------------------------------------------------------------------
# one step

def transition_probabilities(weights) -> np.ndarray:
    """C(x, y) / sum_z C(x, z) for the incident weights of one vertex.

    Raises
    ------
    ImproperConfigError
        If a weight is not finite and positive, or all are zero.
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ImproperConfigError(f"weights must be finite and >= 0, got {w!r}")
    tot = w.sum()
    if not tot > 0:
        raise ImproperConfigError("total conductance at the vertex is zero")
    if np.any(w == 0):
        raise ImproperConfigError("zero conductance on an edge")
    return w / tot


def transition_distribution(b: Ball, x, config) -> tuple[tuple, np.ndarray]:
    """Neighbors of vertex label ``x`` (family order) and P(x, . ; C)."""
    i = b.index[x]
    if b.dist[i] >= b.radius:
        raise PreconditionError(f"{x!r} is on the boundary of the ball; its neighbors are not all inside")
    nb, inc = b.incident(i)
    c = np.asarray(config, dtype=float)
    return tuple(b.labels[j] for j in nb), transition_probabilities(c[inc])


# ---------------------------------------------------------------------------
# random streams

def _streams(seed: int, trial: int):
    walk = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial, 0))))
    env = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(trial, 1))))
    return walk, env


class _Uniforms:
    """Block-buffered uniforms, one row per trial."""

    def __init__(self, gens):
        self.gens = gens
        self.buf = None
        self.pos = BLOCK

    def next(self) -> np.ndarray:
        if self.pos == BLOCK:
            self.buf = np.stack([g.random(BLOCK) for g in self.gens], axis=1)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


# ---------------------------------------------------------------------------
# simulation

@dataclass(eq=False)
class Trajectory:
    """One simulated walk.

    ``positions`` are dense indices into ``ball.labels``; ``env_configs[t]``
    (when recorded) is C_t on the edges of ``ball`` and was used for the
    step t -> t + 1.
    """

    trial: int
    seed: int
    ball: Ball
    positions: np.ndarray | None
    first_return: int
    truncated: bool
    env_configs: np.ndarray | None = None
    env_edges: np.ndarray | None = None

    @property
    def labels(self) -> list:
        return [self.ball.labels[i] for i in self.positions]

    @property
    def horizon(self) -> int:
        return len(self.positions) - 1

    def visit_counts(self) -> dict:
        idx, cnt = np.unique(self.positions, return_counts=True)
        return {self.ball.labels[i]: int(c) for i, c in zip(idx, cnt)}

    def env_trace(self) -> EnvTrace:
        if self.env_configs is None:
            raise PreconditionError("environment snapshots were not recorded")
        return EnvTrace.from_configs(self.ball, self.env_configs, self.env_edges)


@dataclass(eq=False)
class SimulationResult:
    """Aggregated output of :func:`simulate`."""

    trajectories: list
    ball: Ball
    horizon: int
    seed: int
    first_return: np.ndarray
    truncated: np.ndarray
    visits: np.ndarray
    ellipticity: np.ndarray
    checkpoint_times: np.ndarray
    gamma: np.ndarray
    sup_c: np.ndarray
    gamma_star_sup: np.ndarray | None
    final_radius: int

    @property
    def trials(self) -> int:
        return self.first_return.size

    @property
    def return_frequency(self) -> float:
        return float(np.mean(self.first_return != NOT_HIT))

    def visit_statistics(self) -> dict:
        nz = np.flatnonzero(self.visits)
        return {self.ball.labels[i]: int(self.visits[i]) for i in nz}

    def ellipticity_certificate(self) -> dict:
        """min observed P(x, y) per directed edge (x, y) with x visited."""
        out = {}
        for i, row in enumerate(self.ellipticity):
            for s, p in enumerate(row):
                if np.isfinite(p):
                    out[(self.ball.labels[i], self.ball.labels[self.ball.nbr[i, s]])] = float(p)
        return out


def _pad_rows(a: np.ndarray, n: int, fill) -> np.ndarray:
    if a.shape[0] >= n:
        return a
    pad = np.full((n - a.shape[0],) + a.shape[1:], fill, dtype=a.dtype)
    return np.concatenate([a, pad])


def _pad_cols(a: np.ndarray, d: int, fill) -> np.ndarray:
    if a.shape[1] >= d:
        return a
    pad = np.full((a.shape[0], d - a.shape[1]) + a.shape[2:], fill, dtype=a.dtype)
    return np.concatenate([a, pad], axis=1)


def _distance_of(family, x) -> int:
    r = 1
    while True:
        b = ball(family, r)
        if x in b.index:
            return int(b.dist[b.index[x]])
        r *= 2


def _run_chunk(family, env, horizon, trials, seed, start, record_paths, record_env,
               max_radius, on_truncation, d_max, every):
    n = len(trials)
    walk_u = _Uniforms([_streams(seed, k)[0] for k in trials])
    env_u = _Uniforms([_streams(seed, k)[1] for k in trials]) if env.random else None
    zeros_u = np.zeros(n)

    d0 = _distance_of(family, start)
    r0 = max(4, env.min_radius, d0 + 1, d_max or 0)
    if max_radius is not None:
        if d0 >= max_radius:
            raise PreconditionError("start lies outside the maximum radius")
        r0 = min(r0, max_radius)
    b = ball(family, r0)
    s_idx = b.index[start]
    table, rows, states = env.start_batch(b, n)
    pos = np.full(n, s_idx, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    truncated = np.zeros(n, dtype=bool)
    first_ret = np.full(n, NOT_HIT, dtype=np.int64)
    visits = np.zeros(b.n_vertices, dtype=np.int64)
    visits[s_idx] += n
    cert = np.full(b.nbr.shape, np.inf)
    paths = np.empty((horizon + 1, n), dtype=np.int64) if record_paths else None
    if record_paths:
        paths[0] = pos
    snaps = [(table.copy(), rows.copy())] if record_env else None
    edge_log = np.empty((horizon, n), dtype=np.int64) if record_env else None
    gamma_acc = np.zeros(n)
    ck_times = np.arange(0, horizon + 1, every)
    if ck_times[-1] != horizon:
        ck_times = np.r_[ck_times, horizon]
    gam_ck = np.zeros((ck_times.size, n))
    sup_ck = np.zeros((ck_times.size, n))
    running_sup = table.max(axis=1)[rows].astype(float)
    sup_ck[0] = running_sup
    geo = Geometry.of(b, d_max) if d_max is not None else None
    gs_sup = gamma_star(geo, table)[rows] if geo is not None else None
    local = getattr(env, "adaptive", False) and type(env).__name__ in ("OnceReinforced", "LinearlyReinforced")
    cum_cache = None
    ar = np.arange(n)
    ck = 1
    t_done = horizon

    seen = np.zeros(b.n_vertices, dtype=bool)
    seen[s_idx] = True
    for t in range(horizon):
        if env.shared:
            if cum_cache is None or cum_cache[0] is not table:
                w_all = np.where(b.inc >= 0, table[0][np.maximum(b.inc, 0)], 0.0)
                tot_all = w_all.sum(axis=1)
                p_all = w_all / tot_all[:, None]
                cum_all = np.cumsum(p_all, axis=1)
                cum_all[np.arange(b.n_vertices), b.degree - 1] = np.inf
                cum_cache = (table, p_all, cum_all)
                # probabilities changed: every vertex has to be looked at again
                seen[:] = False
                seen[np.unique(pos[active])] = True
                vis = np.flatnonzero(seen)
                cert[vis] = np.minimum(cert[vis], np.where(b.inc[vis] >= 0, p_all[vis], np.inf))
            u = walk_u.next()
            slot = (cum_cache[2][pos] <= u[:, None]).sum(axis=1)
        else:
            inc = b.inc[pos]
            valid = inc >= 0
            w = np.where(valid, table[rows[:, None], np.maximum(inc, 0)], 0.0)
            cum = np.cumsum(w, axis=1)
            tot = cum[:, -1]
            u = walk_u.next()
            slot = (cum <= (u * tot)[:, None]).sum(axis=1)
            slot = np.minimum(slot, b.degree[pos] - 1)
            act_idx = ar[active]
            if act_idx.size:
                probs = w[act_idx] / tot[act_idx, None]
                rr, ss = np.nonzero(valid[act_idx])
                np.minimum.at(cert, (pos[act_idx][rr], ss), probs[rr, ss])
        nb = b.nbr[pos, slot]
        edge = b.inc[pos, slot]
        edge = np.where(active, edge, -1)
        pos = np.where(active, nb, pos)
        ue = env_u.next() if env_u is not None else zeros_u
        prev_table = table
        table, rows, states, dg = env.advance_batch(t, b, table, rows, states, edge, ue)
        if env.shared and table is not prev_table and np.array_equal(table, prev_table):
            table = prev_table
        changed = table is not prev_table
        if not env.shared:
            gamma_acc += dg
        if local:
            hit = edge >= 0
            running_sup[hit] = np.maximum(running_sup[hit], table[rows[hit], edge[hit]])
            if geo is not None:
                gs_sup = np.maximum(gs_sup, gamma_star(geo, table)[rows])
        elif changed:
            running_sup = np.maximum(running_sup, table.max(axis=1)[rows])
            if geo is not None:
                gs_sup = np.maximum(gs_sup, gamma_star(geo, table)[rows])
        back = active & (pos == s_idx) & (first_ret == NOT_HIT)
        first_ret[back] = t + 1
        now = np.bincount(pos[active], minlength=visits.size)
        visits += now
        if env.shared:
            fresh_v = np.flatnonzero((now > 0) & ~seen)
            if fresh_v.size:
                seen[fresh_v] = True
                pv = cum_cache[1][fresh_v]
                cert[fresh_v] = np.minimum(cert[fresh_v], np.where(b.inc[fresh_v] >= 0, pv, np.inf))
        if record_paths:
            paths[t + 1] = pos
        if record_env:
            snaps.append((table.copy(), rows.copy()))
            edge_log[t] = edge
        # grow or truncate
        far = active & (b.dist[pos] >= b.radius)
        if far.any():
            if max_radius is None or b.radius < max_radius:
                new_r = 2 * b.radius if max_radius is None else min(2 * b.radius, max_radius)
                while np.any(b.dist[pos[far]] >= new_r) and (max_radius is None or new_r < max_radius):
                    new_r = 2 * new_r if max_radius is None else min(2 * new_r, max_radius)
                b_new = ball(family, new_r)
                table = env.extend(t + 1, b, b_new, table, rows, states)
                if not local:
                    running_sup = np.maximum(running_sup, table.max(axis=1)[rows])
                else:
                    running_sup = np.maximum(running_sup, table[:, b.n_edges:].max(axis=1, initial=0)[rows])
                visits = _pad_rows(visits, b_new.n_vertices, 0)
                seen = _pad_rows(seen, b_new.n_vertices, False)
                cert = _pad_cols(_pad_rows(cert, b_new.n_vertices, np.inf), b_new.nbr.shape[1], np.inf)
                b = b_new
                cum_cache = None
                far = active & (b.dist[pos] >= b.radius)
            if far.any():
                if on_truncation == "raise":
                    partial = dict(trials=list(trials), time=t + 1, radius=b.radius,
                                   first_return=first_ret.copy())
                    raise TruncationExceededError(
                        f"walk reached the maximum radius {max_radius} at time {t + 1}", partial)
                active &= ~far
                truncated |= far
        while ck < ck_times.size and ck_times[ck] == t + 1:
            gam_ck[ck] = gamma_acc
            sup_ck[ck] = running_sup
            ck += 1
        if not active.any():
            # every walker stopped; later checkpoints repeat the last values
            t_done = t + 1
            break
    if t_done < horizon:
        gam_ck[ck:] = gamma_acc
        sup_ck[ck:] = running_sup
        if record_paths:
            paths[t_done + 1:] = pos

    trajs = []
    if record_paths or record_env:
        for j, k in enumerate(trials):
            cfg = None
            if record_env:
                m = b.n_edges
                cfg = np.empty((horizon + 1, m))
                for s, (tab, rw) in enumerate(snaps):
                    row = tab[rw[j]]
                    if row.size < m:
                        st = None if (states is None or s == 0) else states[j]
                        row = env_extend_row(env, s, row, b, st)
                    cfg[s] = row
                if len(snaps) < horizon + 1:
                    cfg[len(snaps):] = cfg[len(snaps) - 1]
            trajs.append(Trajectory(int(k), seed, b, paths[:, j].copy() if record_paths else None,
                                    int(first_ret[j]), bool(truncated[j]), cfg,
                                    edge_log[:, j].copy() if record_env else None))
    return dict(b=b, trajs=trajs, first_ret=first_ret, truncated=truncated, visits=visits, cert=cert,
                gamma=gam_ck, sup=sup_ck, gs=gs_sup, states=states, ck_times=ck_times)


def env_extend_row(env, t, row, b, state):
    """Extend a recorded config row (from a smaller ball) to the edges of ``b``."""
    if t == 0 or state is None or env.adaptive:
        fresh = env.initial(b) if t == 0 or env.adaptive else env.fresh(t, b, env.initial_state())
    else:
        fresh = env.fresh(t, b, state)
    out = fresh.copy()
    out[: row.size] = row
    return out


def simulate(family: GraphFamily, env: Environment, horizon: int, trials: int, seed: int, *,
             start=None, record_paths: bool = True, record_env: bool = False,
             max_radius: int | None = None, on_truncation: str = "raise",
             d_max: int | None = None, threads: int | None = None) -> SimulationResult:
    """Simulate ``trials`` independent walks for ``horizon`` steps.

    Each step samples the next vertex from P(X_t, . ; C_t) and then lets the
    environment produce C_{t+1}.  The working ball doubles whenever a walker
    reaches its boundary.  When ``max_radius`` is set, a walker reaching it
    either raises :class:`~rwce.errors.TruncationExceededError`
    (``on_truncation="raise"``) or stops and is flagged as truncated
    (``"stop"``).
    """
    if horizon < 1 or trials < 1:
        raise DomainError("horizon and trials must be >= 1")
    if on_truncation not in ("raise", "stop"):
        raise ValueError("on_truncation must be 'raise' or 'stop'")
    start = family.origin if start is None else start
    every = max(1, horizon // 1000)
    chunks = [list(range(lo, min(lo + CHUNK, trials))) for lo in range(0, trials, CHUNK)]
    if threads is None:
        threads = int(os.environ.get("RWCE_THREADS", "1") or 1)

    def job(ch):
        return _run_chunk(family, env, horizon, ch, seed, start, record_paths, record_env,
                          max_radius, on_truncation, d_max, every)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(ch) for ch in chunks]
    big = max(parts, key=lambda p: p["b"].radius)["b"]
    nv = big.n_vertices
    dmax_cols = big.nbr.shape[1]
    visits = sum(_pad_rows(p["visits"], nv, 0) for p in parts)
    cert = np.min(np.stack([_pad_cols(_pad_rows(p["cert"], nv, np.inf), dmax_cols, np.inf) for p in parts]), axis=0)
    ck_times = parts[0]["ck_times"]
    gamma = np.concatenate([p["gamma"] for p in parts], axis=1)
    if not env.adaptive:
        gamma = _walk_free_gamma(env, big, ck_times, parts)
    trajs = [t for p in parts for t in p["trajs"]]
    gs = np.concatenate([p["gs"] for p in parts]) if d_max is not None else None
    return SimulationResult(
        trajs, big, horizon, seed,
        np.concatenate([p["first_ret"] for p in parts]),
        np.concatenate([p["truncated"] for p in parts]),
        visits, cert, ck_times, gamma,
        np.concatenate([p["sup"] for p in parts], axis=1), gs, big.radius)


def _walk_free_gamma(env, b, times, parts):
    """Gamma_t on the final working ball for environments that ignore the walk."""
    cols = []
    cache: dict = {}
    for p in parts:
        states = p["states"]
        n = p["first_ret"].size
        for j in range(n):
            st = None if states is None else int(np.asarray(states)[j])
            if st not in cache:
                cache[st] = env.gamma_series(b, times, st) if st is not None else env.gamma_series(b, times)
            cols.append(cache[st])
    return np.stack(cols, axis=1)


def hitting_time(traj: Trajectory | Sequence, target: Iterable) -> int:
    """First t >= 0 with X_t in ``target`` (labels); ``NOT_HIT`` if never."""
    labels = traj.labels if isinstance(traj, Trajectory) else list(traj)
    tgt = set(target)
    for t, x in enumerate(labels):
        if x in tgt:
            return t
    return NOT_HIT


# ---------------------------------------------------------------------------
# martingales

@dataclass(frozen=True)
class MartingaleTrace:
    """A^{*(n)} and B^{*(n)} along one trajectory, stopped at ``tau``."""

    n: int
    tau: int
    a: np.ndarray
    b: np.ndarray
    alpha_products: np.ndarray
    beta_products: np.ndarray


def _exit_time(pos_dist: np.ndarray, at_origin: np.ndarray, n: int) -> int:
    out = np.flatnonzero(at_origin | (pos_dist >= n))
    return int(out[0]) if out.size else len(pos_dist)


def martingale_trace(traj: Trajectory, split: ComponentSplit, k: int, n: int) -> MartingaleTrace:
    """Stopped processes A_t = (1 - v_{n,t}(X_t)) / prod alpha*, B_t likewise with beta*."""
    b = traj.ball
    if n < split.d_max:
        raise PreconditionError(f"n must be >= D_max = {split.d_max}")
    if n > b.radius:
        raise PreconditionError("n exceeds the trajectory's ball")
    trace = traj.env_trace()
    piece = star_piece(b, split, k, n)
    local = {int(g): i for i, g in enumerate(piece.keep)}
    pos = traj.positions
    if int(pos[0]) not in local:
        raise PreconditionError("X_0 is not in the component star")
    T = len(pos) - 1
    tau = _exit_time(b.dist[pos], pos == 0, n)
    a = np.empty(T + 1)
    bb = np.empty(T + 1)
    pa = np.ones(T + 1)
    pb = np.ones(T + 1)
    u = escape_on_star(piece, trace.configs[0])
    a[0] = bb[0] = u[local[int(pos[0])]]
    for t in range(min(tau, T)):
        u1 = escape_on_star(piece, trace.configs[t + 1])
        r = u1[1:] / u[1:]
        pa[t + 1] = pa[t] * max(1.0, float(r.max(initial=1.0)))
        pb[t + 1] = pb[t] * min(1.0, float(r.min(initial=1.0)))
        x = local[int(pos[t + 1])]
        a[t + 1] = u1[x] / pa[t + 1]
        bb[t + 1] = u1[x] / pb[t + 1]
        u = u1
    s = min(tau, T)
    a[s + 1:] = a[s]
    bb[s + 1:] = bb[s]
    pa[s + 1:] = pa[s]
    pb[s + 1:] = pb[s]
    return MartingaleTrace(n, tau, a, bb, pa, pb)


@dataclass(frozen=True)
class MartingaleCheck:
    """Worst slack of E[A_{t+1} | state] <= A_t and E[B_{t+1} | state] >= B_t."""

    states: int
    super_excess: float
    sub_deficit: float
    max_equality_gap: float

    def passes(self, tol: float = 1e-10) -> bool:
        return self.states > 0 and self.super_excess <= tol and self.sub_deficit <= tol


def one_step_martingale_check(family: GraphFamily, env: Environment, split: ComponentSplit, k: int, n: int,
                              depth: int = 2, starts: Sequence | None = None,
                              atom_cap: int = 200_000) -> MartingaleCheck:
    """Exact one-step expectations of A and B at every enumerated interior state.

    States are generated by :func:`exact_law` from each start in
    V*_k ∩ V_(n-1) minus the origin, up to ``depth`` steps, keeping only
    histories that have not left V_(n-1) minus the origin.
    """
    if n < split.d_max:
        raise PreconditionError(f"n must be >= D_max = {split.d_max}")
    radius = max(n + 1, depth + n + 1, env.min_radius)
    b = ball(family, radius)
    piece = star_piece(b, split, k, n)
    local = {int(g): i for i, g in enumerate(piece.keep)}
    if starts is None:
        starts = [b.labels[g] for g in piece.keep[1:] if b.dist[g] < n]
    cache: dict = {}

    def esc(cfg: np.ndarray) -> np.ndarray:
        key = cfg.tobytes()
        if key not in cache:
            cache[key] = escape_on_star(piece, cfg)
        return cache[key]

    n_states, sup_ex, sub_def, eq_gap = 0, -np.inf, -np.inf, 0.0
    for s in starts:
        law = exact_law(family, env, depth, start=s, keep_levels=True, radius=radius, atom_cap=atom_cap)
        for level in law.levels[:depth]:
            for atom in level:
                path = atom.path
                if any(b.dist[i] >= n or i == 0 for i in path):
                    continue  # stopped; the stopped process is constant
                # running products along the recorded config history
                pa = pb = 1.0
                us = [esc(c) for c in atom.configs]
                for t in range(len(atom.configs) - 1):
                    r = us[t + 1][1:] / us[t][1:]
                    pa *= max(1.0, float(r.max(initial=1.0)))
                    pb *= min(1.0, float(r.min(initial=1.0)))
                t = len(path) - 1
                x = path[-1]
                cfg = atom.configs[-1]
                ux = us[-1][local[x]]
                A, B = ux / pa, ux / pb
                nb, inc = b.incident(x)
                probs = transition_probabilities(cfg[inc])
                ea = eb = 0.0
                for y, e, p in zip(nb, inc, probs):
                    for q, nxt, _ in env.branches(t, b, cfg, atom.state, int(e)):
                        u1 = esc(nxt)
                        r = u1[1:] / us[-1][1:]
                        al = max(1.0, float(r.max(initial=1.0)))
                        be = min(1.0, float(r.min(initial=1.0)))
                        uy = u1[local[int(y)]]
                        ea += p * q * uy / (pa * al)
                        eb += p * q * uy / (pb * be)
                n_states += 1
                sup_ex = max(sup_ex, ea - A)
                sub_def = max(sub_def, B - eb)
                eq_gap = max(eq_gap, abs(ea - A), abs(eb - B))
    return MartingaleCheck(n_states, float(sup_ex), float(sub_def), float(eq_gap))


# ---------------------------------------------------------------------------
# exact laws

@dataclass(frozen=True, eq=False)
class Atom:
    path: tuple
    configs: tuple
    state: object
    prob: float

    @property
    def env_key(self) -> tuple:
        return tuple(c.tobytes() for c in self.configs)


@dataclass(frozen=True, eq=False)
class ExactLaw:
    """Every (path, environment history) of length ``horizon`` with its probability."""

    horizon: int
    ball: Ball
    atoms: list
    levels: list | None = None

    @property
    def total(self) -> float:
        return float(sum(a.prob for a in self.atoms))

    def marginal(self, t: int) -> dict:
        out: dict = defaultdict(float)
        for a in self.atoms:
            out[self.ball.labels[a.path[t]]] += a.prob
        return dict(out)

    def marginals(self) -> list:
        return [self.marginal(t) for t in range(self.horizon + 1)]

    def joint(self) -> dict:
        """(path, env history) -> probability, merging hidden states."""
        out: dict = defaultdict(float)
        for a in self.atoms:
            out[(a.path, a.env_key)] += a.prob
        return dict(out)

    def path_law(self) -> dict:
        out: dict = defaultdict(float)
        for a in self.atoms:
            out[a.path] += a.prob
        return dict(out)

    def probability(self, event) -> float:
        """P(event(path_labels))."""
        return float(sum(a.prob for a in self.atoms if event([self.ball.labels[i] for i in a.path])))


def _law_ball(family, env, horizon, start, radius):
    b = ball(family, 1)
    r = 1
    while start not in b.index:
        r *= 2
        b = ball(family, r)
    d0 = int(b.dist[b.index[start]])
    need = max(horizon + 1 + d0, env.min_radius)
    if radius is not None:
        if radius < need:
            raise PreconditionError(f"ball radius {radius} does not cover the horizon (need {need})")
        need = radius
    return ball(family, need)


def exact_law(family: GraphFamily, env: Environment, horizon: int, start=None, *,
              atom_cap: int = 200_000, keep_levels: bool = False, radius: int | None = None) -> ExactLaw:
    """Enumerate the joint law of (X_0..X_T, C_0..C_T) by depth-first expansion.

    Raises
    ------
    CapExceededError
        When more than ``atom_cap`` atoms would be produced at some level.
    """
    if horizon < 0:
        raise DomainError("horizon must be >= 0")
    start = family.origin if start is None else start
    b = _law_ball(family, env, horizon, start, radius)
    c0 = env.initial(b)
    level = [Atom((b.index[start],), (c0,), env.initial_state(), 1.0)]
    levels = [level] if keep_levels else None
    for t in range(horizon):
        nxt_level = []
        for a in level:
            x = a.path[-1]
            cfg = a.configs[-1]
            nb, inc = b.incident(x)
            probs = transition_probabilities(cfg[inc])
            for y, e, p in zip(nb, inc, probs):
                for q, c1, st in env.branches(t, b, cfg, a.state, int(e)):
                    if q == 0:
                        continue
                    nxt_level.append(Atom(a.path + (int(y),), a.configs + (c1,), st, a.prob * p * q))
            if len(nxt_level) > atom_cap:
                raise CapExceededError(f"more than {atom_cap} atoms at level {t + 1}")
        level = nxt_level
        if keep_levels:
            levels.append(level)
    return ExactLaw(horizon, b, level, levels)


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys))


def hierarchical_law(family: GraphFamily, env: Environment, horizon: int, start=None) -> dict:
    """Joint law when the whole environment history is drawn first and the walk then follows it."""
    if env.adaptive:
        raise PreconditionError("the hierarchical construction needs a non-adaptive environment")
    start = family.origin if start is None else start
    b = _law_ball(family, env, horizon, start, None)
    # environment histories, drawn without looking at the walk
    hist = [((env.initial(b),), env.initial_state(), 1.0)]
    for t in range(horizon):
        new = []
        for cfgs, st, p in hist:
            for q, c1, st1 in env.branches(t, b, cfgs[-1], st, -1):
                if q > 0:
                    new.append((cfgs + (c1,), st1, p * q))
        hist = new
    out: dict = defaultdict(float)
    for cfgs, _, pe in hist:
        key = tuple(c.tobytes() for c in cfgs)
        paths = [((b.index[start],), pe)]
        for t in range(horizon):
            step = []
            for path, p in paths:
                nb, inc = b.incident(path[-1])
                for y, pr in zip(nb, transition_probabilities(cfgs[t][inc])):
                    step.append((path + (int(y),), p * pr))
            paths = step
        for path, p in paths:
            out[(path, key)] += p
    return dict(out)


def nonadaptive_equivalence(family: GraphFamily, env: Environment, horizon: int, start=None) -> float:
    """Total variation between the interleaved and hierarchical joint laws."""
    if env.adaptive:
        raise PreconditionError("environment is adaptive")
    if horizon > 6:
        raise PreconditionError("horizon must be <= 6")
    inter = exact_law(family, env, horizon, start).joint()
    return total_variation(inter, hierarchical_law(family, env, horizon, start))


@dataclass(frozen=True)
class FrozenCheck:
    passed: bool
    max_defect: float
    histories: int
    gamma_law: dict
    tv_frozen_env: float | None


def frozen_law(family: GraphFamily, env: Environment, rule: FreezeRule, horizon: int, start=None) -> dict:
    """Joint law of (X~, C~) built from the original process as in the freezing construction.

    Up to gamma_m the frozen walk is the original one; from then on it is a
    fresh walk on C_{gamma_m - 1} started at X_{gamma_m}.
    """
    start = family.origin if start is None else start
    b = _law_ball(family, env, horizon, start, max(rule.ball.radius, horizon + 1))
    out: dict = defaultdict(float)
    gamma_law: dict = defaultdict(float)

    def fwalk(path, cfgs, frozen_cfg, p, t):
        if t == horizon:
            out[(path, tuple(c.tobytes() for c in cfgs))] += p
            return
        nb, inc = b.incident(path[-1])
        for y, pr in zip(nb, transition_probabilities(frozen_cfg[inc])):
            fwalk(path + (int(y),), cfgs + (frozen_cfg,), frozen_cfg, p * pr, t + 1)

    def orig(path, cfgs, st, mon, p, t):
        # (path, cfgs) is the original history up to time t and gamma_m > t
        if t == horizon:
            out[(path, tuple(c.tobytes() for c in cfgs))] += p
            gamma_law[None] += p
            return
        cfg = cfgs[-1]
        nb, inc = b.incident(path[-1])
        for y, e, pr in zip(nb, inc, transition_probabilities(cfg[inc])):
            for q, c1, st1 in env.branches(t, b, cfg, st, int(e)):
                if q == 0:
                    continue
                mon1, fire = rule.update(mon, cfg, c1)
                if fire:
                    # gamma_m = t + 1: X~_{t+1} = X_{t+1}, C~_{t+1} = C_t
                    gamma_law[t + 1] += p * pr * q
                    fwalk(path + (int(y),), cfgs + (cfg,), cfg, p * pr * q, t + 1)
                else:
                    orig(path + (int(y),), cfgs + (c1,), st1, mon1, p * pr * q, t + 1)

    orig((b.index[start],), (env.initial(b),), env.initial_state(), rule.start(), 1.0, 0)
    return dict(out), dict(gamma_law), b


def frozen_process_check(family: GraphFamily, env: Environment, rule: FreezeRule, horizon: int,
                         start=None, compare_env: bool = True) -> FrozenCheck:
    """Check the frozen process's one-step conditional laws against P(X~_t, . ; C~_t).

    Conditioning is on the frozen process's own history (X~_s, C~_s)_{s<=t},
    aggregated over the original atoms that produce it.
    """
    if horizon > 6:
        raise PreconditionError("horizon must be <= 6")
    law, gamma_law, b = frozen_law(family, env, rule, horizon, start)
    worst = 0.0
    n_hist = 0
    for t in range(horizon):
        hist: dict = defaultdict(float)
        ext: dict = defaultdict(float)
        for (path, key), p in law.items():
            h = (path[: t + 1], key[: t + 1])
            hist[h] += p
            ext[(h, path[t + 1])] += p
        for h, ph in hist.items():
            if ph <= 0:
                continue
            n_hist += 1
            x = h[0][-1]
            cfg = np.frombuffer(h[1][-1], dtype=float)
            nb, inc = b.incident(x)
            probs = transition_probabilities(cfg[inc])
            for y, p in zip(nb, probs):
                worst = max(worst, abs(ext.get((h, int(y)), 0.0) / ph - p))
    tv = None
    if compare_env:
        from .environment import FrozenEnvironment
        fenv = FrozenEnvironment(env, rule)
        tv = total_variation(exact_law(family, fenv, horizon, start, radius=b.radius).joint(), law)
    passed = worst <= 1e-12 and (tv is None or tv <= 1e-10)
    return FrozenCheck(bool(passed), float(worst), n_hist, gamma_law, tv)


def reach_bound_check(law: ExactLaw, cert_edge: tuple, horizon_reached: int) -> tuple[float, float]:
    """P(y reached by horizon+1) and P_{x,y} * P(X_horizon = x) on a law of horizon + 1 steps.

    ``cert_edge = (x, y, p_xy)`` with labels.
    """
    x, y, pxy = cert_edge
    b = law.ball
    xi, yi = b.index[x], b.index[y]
    lhs = sum(a.prob for a in law.atoms if yi in a.path[: horizon_reached + 2])
    px = sum(a.prob for a in law.atoms if a.path[horizon_reached] == xi)
    return float(lhs), float(pxy * px)


# ---------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class ClassificationReport:
    """Theorem-based verdict plus the empirical statistics behind it."""

    verdict: str
    slowness_verdict: str
    profile_verdict: str | None
    profile_radius: int | None
    return_frequency: float
    trials: int
    horizon: int
    truncated: int
    final_radius: int
    gamma_total: float
    gamma_increment: float
    sup_c: float
    visit_statistics: dict
    ellipticity: dict
    profile: object = field(repr=False, default=None)


def slowness_from_checkpoints(gamma: np.ndarray, sup_c: np.ndarray, window: int = 10,
                              tol: float = 1e-9) -> tuple[str, float]:
    """Per-trial plateau test on recorded checkpoints; plausible only if every trial plateaus."""
    ok = True
    worst = 0.0
    for j in range(gamma.shape[1]):
        g, s = gamma[:, j], sup_c[:, j]
        w = min(window, g.size - 1)
        if w > 0:
            worst = max(worst, float(g[-1] - g[-1 - w]))
        if not (plateau(g, window, tol) and plateau(s, window, tol * max(1.0, float(s[-1])))):
            ok = False
    return ("hypothesis-plausible" if ok else "not-plausible"), worst


def classify(family: GraphFamily, env: Environment, horizon: int, trials: int, radii: Sequence[int],
             seed: int, *, max_radius: int | None = None, probe_radius: int = 6,
             threads: int | None = None) -> ClassificationReport:
    """recurrent-by-theorem / transient-by-theorem / hypothesis-fails / inconclusive.

    The slowness verdict comes from Gamma and sup C along the simulated
    trajectories; the recurrence type of C_0 from its resistance profile at
    ``radii`` (empty radii give "inconclusive").
    """
    try:
        d_max = split_at_origin(family, probe_radius).d_max
    except ProbeRadiusError:
        d_max = None
    res = simulate(family, env, horizon, trials, seed, record_paths=False, max_radius=max_radius,
                   on_truncation="stop", d_max=d_max, threads=threads)
    return classify_result(family, env, res, radii)


def classify_result(family: GraphFamily, env: Environment, res: SimulationResult,
                    radii: Sequence[int]) -> ClassificationReport:
    """Verdict for an existing simulation (see :func:`classify`)."""
    sv, inc = slowness_from_checkpoints(res.gamma, res.sup_c)
    prof = None
    if len(radii):
        rmax = max(radii)
        c0 = env.initial(ball(family, rmax))
        prof = resistance_profile(family, c0, radii)
    if sv != "hypothesis-plausible":
        verdict = "hypothesis-fails"
    elif prof is None:
        verdict = "inconclusive"
    elif prof.verdict == "divergent":
        verdict = "recurrent-by-theorem"
    else:
        verdict = "transient-by-theorem"
    return ClassificationReport(
        verdict, sv, None if prof is None else prof.verdict, None if prof is None else prof.radii[-1],
        res.return_frequency, res.trials, res.horizon, int(res.truncated.sum()), res.final_radius,
        float(res.gamma[-1].max()), inc, float(res.sup_c[-1].max()),
        res.visit_statistics(), res.ellipticity_certificate(), prof)

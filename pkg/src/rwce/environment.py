"""Environment processes C_t and the certificates computed from their traces.

An environment describes how the conductances move after each step of the
walk.  All environments act on the edges of a working :class:`~rwce.graphs.Ball`
(indexed as in ``Ball.edges``); an edge that has never been inside the
working ball is at the value it would have had untouched by the walk.

Batched interface
-----------------
The simulation engine stores conductances as a table of rows plus a row
index per trial.  Shared deterministic environments keep a single row,
random schedules keep one row per branch and adaptive rules keep one row
per trial.  ``advance_batch`` maps ``(table, rows, states)`` at time ``t`` to
time ``t + 1`` given the edge each trial just traversed (``-1`` for trials
that are no longer moving).

Exact interface
---------------
``branches(t, b, config, state, edge)`` lists ``(probability, next_config,
next_state)`` for the law of C_{t+1} given the history summarised in
``state``.  It is what the enumeration oracles in :mod:`rwce.walker` use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .electrical import escape_potential
from .errors import (ConnectivityError, DegenerateVoltageError, DomainError, OracleUnsupportedError,
                     PreconditionError, ScheduleExhaustedError)
from .graphs import Ball, ComponentSplit, as_weights, check_positive, star_network


class Environment:
    """Base class; subclasses override :meth:`initial` and :meth:`branches`."""

    kind = "abstract"
    adaptive = False
    # one shared row for all trials (deterministic and walk-independent)
    shared = False
    # walk-independent but random: one row per outcome
    random = False
    min_radius = 1

    def initial(self, b: Ball) -> np.ndarray:
        raise NotImplementedError

    def initial_state(self):
        return 0

    def fresh(self, t: int, b: Ball, state) -> np.ndarray:
        """Config at time ``t`` of edges the walk has never touched."""
        return self.initial(b)

    def branches(self, t: int, b: Ball, config: np.ndarray, state, edge: int) -> list:
        raise NotImplementedError

    def step(self, t, b, config, state, edge, u: float):
        br = self.branches(t, b, config, state, edge)
        cum = np.cumsum([p for p, _, _ in br])
        k = min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(br) - 1)
        return br[k][1], br[k][2]

    # -- batched -----------------------------------------------------------

    def start_batch(self, b: Ball, trials: int):
        """Initial ``(table, rows, states)``."""
        c0 = self.initial(b)
        if self.shared:
            return c0[None, :].copy(), np.zeros(trials, dtype=np.int64), None
        states = [self.initial_state()] * trials
        return np.tile(c0, (trials, 1)), np.arange(trials), states

    def advance_batch(self, t, b, table, rows, states, edges, u):
        """Generic per-trial fallback.  Returns ``(table, rows, states, dgamma)``."""
        new = table.copy()
        dgamma = np.zeros(rows.size)
        states = list(states)
        for k in range(rows.size):
            e = int(edges[k])
            if e < 0:
                continue
            cfg, st = self.step(t, b, table[rows[k]], states[k], e, float(u[k]))
            new[rows[k]] = cfg
            states[k] = st
            dgamma[k] = np.abs(1.0 / table[rows[k]] - 1.0 / cfg).sum()
        return new, rows, states, dgamma

    def extend(self, t, b_old: Ball, b_new: Ball, table, rows, states):
        """Grow the table's columns to the edges of ``b_new``."""
        m0 = b_old.n_edges
        extra = np.empty((table.shape[0], b_new.n_edges - m0))
        for r in range(table.shape[0]):
            st = self.initial_state() if states is None else states[int(np.flatnonzero(rows == r)[0])] \
                if np.any(rows == r) else self.initial_state()
            extra[r] = self.fresh(t, b_new, st)[m0:]
        return np.hstack([table, extra])

    def gamma_series(self, b: Ball, times: np.ndarray, state=None) -> np.ndarray | None:
        """Gamma_t over the edges of ``b`` at each of ``times``, for walk-independent environments.

        Returns None for adaptive environments (the engine accumulates them online).
        """
        if self.adaptive:
            return None
        times = np.asarray(times, dtype=np.int64)
        out = np.zeros(times.size)
        if times.size == 0:
            return out
        c = self.initial(b)
        st = self.initial_state() if state is None else state
        acc, t = 0.0, 0
        order = np.argsort(times)
        for i in order:
            while t < times[i]:
                nxt, st = self._walk_free_next(t, b, c, st)
                acc += float(np.abs(1.0 / c - 1.0 / nxt).sum())
                c, t = nxt, t + 1
            out[i] = acc
        return out

    def _walk_free_next(self, t, b, c, st):
        br = self.branches(t, b, c, st, -1)
        if len(br) != 1:
            raise OracleUnsupportedError("walk-free evolution needs a deterministic branch")
        return br[0][1], br[0][2]

    def describe(self) -> dict:
        return {"kind": self.kind}


def evolve(env: Environment, b: Ball, config, edge: int, t: int = 0, state=None, u: float = 0.0):
    """One environment update C_t -> C_{t+1} after the walk traversed ``edge``.

    Returns the new config and the new hidden state.
    """
    config = np.asarray(config, dtype=float)
    check_positive(config)
    if state is None:
        state = env.initial_state()
    new, st = env.step(t, b, config, state, int(edge), u)
    check_positive(new)
    return new, st


# ---------------------------------------------------------------------------
# walk-independent environments

class _WeightCache:
    """Per-family cache of an edge function evaluated on the largest ball seen."""

    def __init__(self, fn):
        self.fn = fn
        self._store: dict = {}

    def __call__(self, b: Ball) -> np.ndarray:
        key = id(b.family)
        hit = self._store.get(key)
        if hit is None or hit[0].family is not b.family or hit[1].size < b.n_edges:
            hit = (b, self.fn(b))
            self._store[key] = hit
        return hit[1][: b.n_edges]


class StaticEnvironment(Environment):
    """C_t = C_0 for every t."""

    kind = "static"
    shared = True

    def __init__(self, weights=None):
        self.weights = weights
        self._c = _WeightCache(lambda b: as_weights(b, weights))

    def initial(self, b):
        return self._c(b).copy()

    def branches(self, t, b, config, state, edge):
        return [(1.0, config, state)]

    def advance_batch(self, t, b, table, rows, states, edges, u):
        return table, rows, states, np.zeros(rows.size)

    def gamma_series(self, b, times, state=None):
        return np.zeros(len(times))


def summable_weights(b: Ball, p: float) -> np.ndarray:
    """w_e = (edge index + 1) ** -p, with the ball's canonical edge order."""
    return np.arange(1, b.n_edges + 1, dtype=float) ** (-float(p))


class ScheduledEnvironment(Environment):
    """R_t(e) = R_base(e) + amplitude * rate**t * w_e, independent of the walk.

    ``w_e = (index of e + 1) ** -p`` with the canonical edge order, so
    ``sum_e w_e`` is finite for ``p > 1`` and Gamma = amplitude * sum_e w_e.
    """

    kind = "scheduled"
    shared = True

    def __init__(self, base=None, amplitude: float = 1.0, rate: float = 0.5, p: float = 0.0):
        if not 0 <= rate < 1:
            raise DomainError("rate must be in [0, 1)")
        if amplitude < 0:
            raise DomainError("amplitude must be >= 0")
        self.base, self.amplitude, self.rate, self.p = base, float(amplitude), float(rate), float(p)
        self._rb = _WeightCache(lambda b: 1.0 / as_weights(b, base))
        self._w = _WeightCache(lambda b: summable_weights(b, self.p))

    def resistance_at(self, t: int, b: Ball) -> np.ndarray:
        return self._rb(b) + self.amplitude * self.rate ** t * self._w(b)

    def config_at(self, t: int, b: Ball) -> np.ndarray:
        c = 1.0 / self.resistance_at(t, b)
        check_positive(c)
        return c

    def initial(self, b):
        return self.config_at(0, b)

    def fresh(self, t, b, state):
        return self.config_at(t, b)

    def branches(self, t, b, config, state, edge):
        return [(1.0, self.config_at(t + 1, b), state)]

    def advance_batch(self, t, b, table, rows, states, edges, u):
        if self.amplitude * self.rate ** t == 0.0:
            return table, rows, states, np.zeros(rows.size)
        new = self.config_at(t + 1, b)[None, :]
        dg = self.amplitude * self.rate ** t * (1.0 - self.rate) * self._w(b).sum()
        return new, rows, states, np.full(rows.size, dg)

    def extend(self, t, b_old, b_new, table, rows, states):
        return self.config_at(t, b_new)[None, :]

    def gamma_series(self, b, times, state=None):
        times = np.asarray(times, dtype=float)
        return self.amplitude * self._w(b).sum() * (1.0 - self.rate ** times)

    def describe(self):
        return {"kind": self.kind, "amplitude": self.amplitude, "rate": self.rate, "p": self.p}


class BumpEnvironment(Environment):
    """A single edge's resistance is raised by ``size`` during ``[t0, t0 + duration)``."""

    kind = "bump"
    shared = True

    def __init__(self, base=None, edge: tuple = (0, 1), size: float = 0.5, t0: int = 1, duration: int = 1):
        if t0 < 1 or duration < 1:
            raise DomainError("need t0 >= 1 and duration >= 1")
        self.base, self.edge, self.size, self.t0, self.duration = base, tuple(edge), float(size), int(t0), int(duration)
        self._rb = _WeightCache(lambda b: 1.0 / as_weights(b, base))

    def config_at(self, t, b):
        r = self._rb(b).copy()
        if self.t0 <= t < self.t0 + self.duration:
            r[b.edge_index(*self.edge)] += self.size
        c = 1.0 / r
        check_positive(c)
        return c

    def initial(self, b):
        return self.config_at(0, b)

    def fresh(self, t, b, state):
        return self.config_at(t, b)

    def branches(self, t, b, config, state, edge):
        return [(1.0, self.config_at(t + 1, b), state)]

    def advance_batch(self, t, b, table, rows, states, edges, u):
        new = self.config_at(t + 1, b)[None, :]
        dg = float(np.abs(1.0 / table[0] - 1.0 / new[0]).sum())
        return new, rows, states, np.full(rows.size, dg)

    def extend(self, t, b_old, b_new, table, rows, states):
        return self.config_at(t, b_new)[None, :]


class ListSchedule(Environment):
    """An explicit finite list of configs C_0, C_1, ..., C_L.

    Each entry is anything :func:`rwce.graphs.as_weights` accepts.  Asking
    for C_{L+1} raises :class:`~rwce.errors.ScheduleExhaustedError`.
    """

    kind = "list"
    shared = True

    def __init__(self, configs: Sequence):
        if len(configs) < 1:
            raise DomainError("schedule needs at least one config")
        self.configs = list(configs)
        self._cache = [_WeightCache(lambda b, w=w: as_weights(b, w)) for w in self.configs]

    def config_at(self, t, b):
        if t >= len(self.configs):
            raise ScheduleExhaustedError(f"schedule has {len(self.configs)} configs, asked for C_{t}")
        return self._cache[t](b).copy()

    def initial(self, b):
        return self.config_at(0, b)

    def fresh(self, t, b, state):
        return self.config_at(t, b)

    def branches(self, t, b, config, state, edge):
        return [(1.0, self.config_at(t + 1, b), state)]

    def advance_batch(self, t, b, table, rows, states, edges, u):
        new = self.config_at(t + 1, b)[None, :]
        dg = float(np.abs(1.0 / table[0] - 1.0 / new[0]).sum())
        return new, rows, states, np.full(rows.size, dg)

    def extend(self, t, b_old, b_new, table, rows, states):
        return self.config_at(t, b_new)[None, :]


class RandomSchedule(Environment):
    """A coin tossed at the first step picks which schedule drives C_1, C_2, ...

    ``options`` is a list of ``(probability, environment)`` with shared,
    walk-independent environments.  C_0 is the first option's C_0.  The
    hidden state is the selected index (``-1`` before the toss).
    """

    kind = "random_schedule"
    random = True

    def __init__(self, options: Sequence[tuple]):
        ps = np.array([p for p, _ in options], dtype=float)
        if np.any(ps <= 0) or abs(ps.sum() - 1.0) > 1e-12:
            raise DomainError("option probabilities must be positive and sum to 1")
        for _, env in options:
            if not env.shared:
                raise DomainError("options must be shared deterministic schedules")
        self.probs = ps
        self.options = [env for _, env in options]

    def initial_state(self):
        return -1

    def initial(self, b):
        return self.options[0].initial(b)

    def fresh(self, t, b, state):
        if state < 0:
            return self.initial(b)
        return self.options[state].fresh(t, b, 0)

    def branches(self, t, b, config, state, edge):
        if state < 0:
            return [(float(p), env.fresh(t + 1, b, 0), k) for k, (p, env) in enumerate(zip(self.probs, self.options))]
        return [(1.0, self.options[state].fresh(t + 1, b, 0), state)]

    def start_batch(self, b, trials):
        return self.initial(b)[None, :], np.zeros(trials, dtype=np.int64), np.full(trials, -1)

    def advance_batch(self, t, b, table, rows, states, edges, u):
        states = np.asarray(states)
        if t == 0:
            cum = np.cumsum(self.probs)
            states = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        new = np.stack([env.fresh(t + 1, b, 0) for env in self.options])
        old = table if t > 0 else np.repeat(table, len(self.options), axis=0)
        dg_row = np.abs(1.0 / old - 1.0 / new).sum(axis=1)
        return new, states.astype(np.int64), states, dg_row[states]

    def extend(self, t, b_old, b_new, table, rows, states):
        if table.shape[0] == 1 and t == 0:
            return self.initial(b_new)[None, :]
        return np.stack([env.fresh(t, b_new, 0) for env in self.options])

    def gamma_series(self, b, times, state=None):
        if state is None or state < 0:
            raise PreconditionError("gamma series of a random schedule needs the selected option")
        times = np.asarray(times, dtype=np.int64)
        env = self.options[state]
        g = env.gamma_series(b, times)
        g1 = env.gamma_series(b, np.array([1]))[0]
        jump = float(np.abs(1.0 / self.initial(b) - 1.0 / env.fresh(1, b, 0)).sum())
        return np.where(times >= 1, jump + g - g1, 0.0)

    def describe(self):
        return {"kind": self.kind, "probabilities": self.probs.tolist(),
                "options": [env.describe() for env in self.options]}


# ---------------------------------------------------------------------------
# adaptive rules

class OnceReinforced(Environment):
    """ORRW: an edge's conductance becomes ``delta`` the first time it is traversed."""

    kind = "once_reinforced"
    adaptive = True

    def __init__(self, delta: float = 2.0, initial=1.0):
        if not (np.isfinite(delta) and delta > 0):
            raise DomainError("delta must be finite and > 0")
        self.delta = float(delta)
        self.init = initial
        self._c = _WeightCache(lambda b: as_weights(b, initial))

    def initial(self, b):
        return self._c(b).copy()

    def branches(self, t, b, config, state, edge):
        new = config.copy()
        if edge >= 0:
            # idempotent after the first traversal
            new[edge] = self.delta
        return [(1.0, new, state)]

    def advance_batch(self, t, b, table, rows, states, edges, u):
        act = np.flatnonzero(edges >= 0)
        r, e = rows[act], edges[act]
        old = table[r, e]
        table[r, e] = self.delta
        dg = np.zeros(rows.size)
        dg[act] = np.abs(1.0 / old - 1.0 / self.delta)
        return table, rows, states, dg

    def extend(self, t, b_old, b_new, table, rows, states):
        extra = self.initial(b_new)[b_old.n_edges:]
        return np.hstack([table, np.broadcast_to(extra, (table.shape[0], extra.size))])

    def describe(self):
        return {"kind": self.kind, "delta": self.delta}


class LinearlyReinforced(Environment):
    """LRRW: every traversal adds ``increment`` to the traversed edge."""

    kind = "linear_reinforced"
    adaptive = True

    def __init__(self, increment: float = 1.0, initial=1.0):
        if not (np.isfinite(increment) and increment > 0):
            raise DomainError("increment must be finite and > 0")
        self.increment = float(increment)
        self.init = initial
        self._c = _WeightCache(lambda b: as_weights(b, initial))

    def initial(self, b):
        return self._c(b).copy()

    def branches(self, t, b, config, state, edge):
        new = config.copy()
        if edge >= 0:
            new[edge] += self.increment
        return [(1.0, new, state)]

    def advance_batch(self, t, b, table, rows, states, edges, u):
        act = np.flatnonzero(edges >= 0)
        r, e = rows[act], edges[act]
        old = table[r, e].copy()
        np.add.at(table, (r, e), self.increment)
        dg = np.zeros(rows.size)
        dg[act] = np.abs(1.0 / old - 1.0 / table[r, e])
        return table, rows, states, dg

    extend = OnceReinforced.extend

    def describe(self):
        return {"kind": self.kind, "increment": self.increment}


class RuleEnvironment(Environment):
    """Deterministic adaptive rule ``rule(t, config, edge) -> new config``."""

    kind = "custom_rule"
    adaptive = True

    def __init__(self, rule: Callable, initial=1.0):
        self.rule = rule
        self._c = _WeightCache(lambda b: as_weights(b, initial))

    def initial(self, b):
        return self._c(b).copy()

    def branches(self, t, b, config, state, edge):
        new = np.asarray(self.rule(t, config.copy(), edge), dtype=float)
        check_positive(new)
        return [(1.0, new, state)]


# ---------------------------------------------------------------------------
# traces

@dataclass(frozen=True, eq=False)
class EnvTrace:
    """C_0, ..., C_T on a fixed ball, with the traversed edges and per-step |dR| sums."""

    ball: Ball
    configs: np.ndarray
    edges: np.ndarray
    dgamma: np.ndarray

    @property
    def horizon(self) -> int:
        return self.configs.shape[0] - 1

    @property
    def resistances(self) -> np.ndarray:
        return 1.0 / self.configs

    @classmethod
    def from_configs(cls, b: Ball, configs, edges=None) -> "EnvTrace":
        cfg = np.asarray(configs, dtype=float)
        if cfg.ndim != 2 or cfg.shape[1] != b.n_edges:
            raise ValueError(f"configs must have shape (T + 1, {b.n_edges})")
        check_positive(cfg.ravel())
        e = np.full(cfg.shape[0] - 1, -1, dtype=np.int64) if edges is None else np.asarray(edges, dtype=np.int64)
        if e.shape != (cfg.shape[0] - 1,):
            raise ValueError("need one traversed edge per step")
        dg = np.abs(np.diff(1.0 / cfg, axis=0)).sum(axis=1)
        return cls(b, cfg, e, dg)


def run_environment(env: Environment, b: Ball, edges: Sequence[int], seed: int = 0) -> EnvTrace:
    """Drive ``env`` on ball ``b`` with a prescribed sequence of traversed edges."""
    rng = np.random.default_rng(seed)
    c = env.initial(b)
    st = env.initial_state()
    out = [c]
    for t, e in enumerate(edges):
        c, st = env.step(t, b, c, st, int(e), float(rng.random()))
        check_positive(c)
        out.append(c)
    return EnvTrace.from_configs(b, np.array(out), list(edges))


# ---------------------------------------------------------------------------
# slowness

@dataclass(frozen=True)
class Geometry:
    """Ball-local constants entering Pi_{t,l} and Gamma*_t."""

    n_boundary1: int
    m1: int
    m_d: int
    deg_sup_d: int
    d_max: int

    @classmethod
    def of(cls, b: Ball, d_max: int) -> "Geometry":
        if d_max > b.radius:
            raise PreconditionError(f"ball radius {b.radius} < D_max = {d_max}")
        return cls(b.count_within(1) - 1, b.edges_within(1), b.edges_within(d_max),
                   int(b.degree[: b.count_within(d_max)].max()), d_max)


def pi_factor(b: Ball, config: np.ndarray, ell: int) -> np.ndarray:
    """Pi_{t,l} = inf_{E_(l)} C / (sup_{V_(l)} deg * sup_{E_(l)} C); works row-wise on 2-D input."""
    m = b.edges_within(ell)
    c = np.atleast_2d(config)[:, :m]
    deg = int(b.degree[: b.count_within(ell)].max())
    out = c.min(axis=1) / (deg * c.max(axis=1))
    return out if np.ndim(config) == 2 else float(out[0])


def gamma_star(geo: Geometry, config: np.ndarray) -> np.ndarray:
    """Gamma*_t for one config or a stack of configs (rows)."""
    c = np.atleast_2d(config)
    cd = c[:, : geo.m_d]
    out = geo.n_boundary1 * geo.deg_sup_d * c[:, : geo.m1].max(axis=1) * cd.max(axis=1) / cd.min(axis=1)
    return out if np.ndim(config) == 2 else float(out[0])


def plateau(series: np.ndarray, window: int = 10, tol: float = 1e-9) -> bool:
    """True when the last ``window`` increments add up to less than ``tol``."""
    s = np.asarray(series, dtype=float)
    if s.size < 2:
        return True
    w = min(window, s.size - 1)
    return bool(s[-1] - s[-1 - w] < tol)


@dataclass(frozen=True)
class SlownessReport:
    """Gamma partial sums, Pi factors, Gamma* and the implied lower bounds on C_t.

    ``verdict`` is "hypothesis-plausible" when Gamma_T has plateaued and the
    running sup of C_t stopped growing over the final steps of the trace,
    "not-plausible" otherwise.  Both are read off a finite horizon.
    """

    gamma: np.ndarray
    gamma_converged: bool
    pi: dict
    gamma_star_t: np.ndarray
    gamma_star_sup: float
    lower_bound: np.ndarray
    observed_min: np.ndarray
    sup_bounded: bool
    verdict: str
    d_max: int
    radius: int

    @property
    def gamma_total(self) -> float:
        return float(self.gamma[-1])


def slowness_report(trace: EnvTrace, d_max: int, *, window: int = 10, tol: float = 1e-9) -> SlownessReport:
    if trace.horizon < 1:
        raise PreconditionError("trace must contain at least two configs")
    b = trace.ball
    geo = Geometry.of(b, d_max)
    gamma = np.r_[0.0, np.cumsum(trace.dgamma)]
    pi = {ell: pi_factor(b, trace.configs, ell) for ell in range(1, b.radius + 1)}
    gs = gamma_star(geo, trace.configs)
    running_sup = np.maximum.accumulate(trace.configs.max(axis=1))
    sup_ok = plateau(running_sup, window, tol * max(1.0, float(running_sup[-1])))
    conv = plateau(gamma, window, tol)
    lb = 1.0 / (gamma[-1] + 1.0 / trace.configs[0])
    return SlownessReport(gamma, conv, pi, gs, float(gs.max()), lb, trace.configs.min(axis=0), sup_ok,
                          "hypothesis-plausible" if conv and sup_ok else "not-plausible", d_max, b.radius)


@dataclass(frozen=True)
class LowerBoundCheck:
    holds: bool
    worst_slack: float


def lower_bound_check(trace: EnvTrace) -> LowerBoundCheck:
    """C_t(e) >= 1 / (Gamma_T + 1/C_0(e)) for every edge of the ball and every t <= T."""
    gamma_T = float(trace.dgamma.sum())
    lb = 1.0 / (gamma_T + 1.0 / trace.configs[0])
    slack = trace.configs - lb[None, :]
    worst = float(slack.min())
    return LowerBoundCheck(bool(worst >= -1e-12 * float(trace.configs.max())), worst)


def monotone_identity(trace: EnvTrace) -> tuple[float, float]:
    """For an edgewise monotone trace, sum_{t,e}|R_t - R_{t+1}| and sum_e |R_0 - R_T|.

    Raises
    ------
    PreconditionError
        If some edge moves in both directions.
    """
    d = np.diff(trace.resistances, axis=0)
    mixed = (d > 0).any(axis=0) & (d < 0).any(axis=0)
    if mixed.any():
        raise PreconditionError(f"edge {int(np.flatnonzero(mixed)[0])} is not monotone")
    return float(np.abs(d).sum()), float(np.abs(trace.resistances[-1] - trace.resistances[0]).sum())


# ---------------------------------------------------------------------------
# voltage ratios

@dataclass(frozen=True)
class StarPiece:
    """V*_k inside V_(n): local network plus bookkeeping for one radius."""

    n: int
    net: object
    keep: np.ndarray
    edge_ids: np.ndarray
    sink: tuple


def star_piece(b: Ball, split: ComponentSplit, k: int, n: int) -> StarPiece:
    bn = b.restrict(n)
    net, keep = star_network(bn, split, k)
    mask = split.star_mask(bn, k)
    emask = mask[bn.edges[:, 0]] & mask[bn.edges[:, 1]]
    sink = tuple(int(i) for i in np.flatnonzero(bn.dist[keep] == n))
    return StarPiece(n, net, keep, np.flatnonzero(emask), sink)


def escape_on_star(piece: StarPiece, config: np.ndarray) -> np.ndarray:
    """1 - v_{n,t} on the star vertices (index 0 is the origin)."""
    if not piece.sink:
        raise DegenerateVoltageError(f"component star has no vertex at distance {piece.n}")
    try:
        u = escape_potential(piece.net, config[piece.edge_ids], 0, piece.sink)
    except ConnectivityError as exc:
        raise DegenerateVoltageError(str(exc)) from exc
    if np.any(u[1:] <= 0.0):
        raise DegenerateVoltageError("voltage equals 1 at a vertex other than the origin")
    return u


def ratio_pair(piece: StarPiece, c_t: np.ndarray, c_t1: np.ndarray) -> tuple[float, float]:
    """(alpha*, beta*) for one radius and one step."""
    r = escape_on_star(piece, c_t1)[1:] / escape_on_star(piece, c_t)[1:]
    # vertices of V* outside V_(n) (and on its boundary) have ratio exactly 1
    return max(1.0, float(r.max(initial=1.0))), min(1.0, float(r.min(initial=1.0)))


@dataclass(frozen=True)
class RatioCertificate:
    """alpha*_{n,t}, beta*_{n,t} for radii x steps, with running products and Lambda."""

    radii: tuple
    component: int
    alpha: np.ndarray
    beta: np.ndarray
    d_max: int

    @property
    def alpha_products(self) -> np.ndarray:
        """Pi_{s<t} alpha*_{n,s}; column t = 0 is the empty product."""
        return np.hstack([np.ones((len(self.radii), 1)), np.cumprod(self.alpha, axis=1)])

    @property
    def beta_products(self) -> np.ndarray:
        return np.hstack([np.ones((len(self.radii), 1)), np.cumprod(self.beta, axis=1)])

    def lam(self, N: int | None = None) -> np.ndarray:
        """Lambda_{N,t} = min over computed radii n >= N of Pi_{s<t} beta*_{n,s}."""
        N = self.d_max if N is None else N
        sel = [i for i, n in enumerate(self.radii) if n >= N]
        if not sel:
            return np.ones(self.beta.shape[1] + 1)
        return self.beta_products[sel].min(axis=0)

    @property
    def deviation(self) -> np.ndarray:
        """max_x |ratio - 1| per (n, t)."""
        return np.maximum(self.alpha - 1.0, 1.0 - self.beta)


def ratio_certificate(trace: EnvTrace, split: ComponentSplit, k: int, radii: Sequence[int],
                      d_max: int | None = None) -> RatioCertificate:
    d_max = split.d_max if d_max is None else d_max
    radii = tuple(sorted(int(n) for n in radii))
    if any(n < d_max for n in radii):
        raise PreconditionError(f"every radius must be >= D_max = {d_max}")
    if radii and radii[-1] > trace.ball.radius:
        raise PreconditionError("radii exceed the trace's ball")
    T = trace.horizon
    alpha = np.ones((len(radii), T))
    beta = np.ones((len(radii), T))
    for i, n in enumerate(radii):
        piece = star_piece(trace.ball, split, k, n)
        u_prev = escape_on_star(piece, trace.configs[0])[1:]
        for t in range(T):
            u_next = escape_on_star(piece, trace.configs[t + 1])[1:]
            r = u_next / u_prev
            alpha[i, t] = max(1.0, float(r.max(initial=1.0)))
            beta[i, t] = min(1.0, float(r.min(initial=1.0)))
            u_prev = u_next
    return RatioCertificate(radii, k, alpha, beta, d_max)


@dataclass(frozen=True)
class RatioBoundCheck:
    holds: bool
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def worst_ratio(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(self.rhs > 0, self.lhs / self.rhs, np.where(self.lhs > 0, np.inf, 0.0))
        return float(q.max()) if q.size else 0.0


def ratio_bound_rhs(trace: EnvTrace, split: ComponentSplit, k: int, d_max: int) -> np.ndarray:
    """(|dV_(1)| sup_{E_(1)} C_t / Pi_{t,Dmax}) * sum_{E*_k} |R_t - R_{t+1}| per step t."""
    b = trace.ball
    geo = Geometry.of(b, d_max)
    mask = split.star_mask(b, k)
    estar = mask[b.edges[:, 0]] & mask[b.edges[:, 1]]
    dR = np.abs(np.diff(trace.resistances[:, estar], axis=0)).sum(axis=1)
    c = trace.configs[:-1]
    factor = geo.n_boundary1 * c[:, : geo.m1].max(axis=1) / pi_factor(b, c, d_max)
    return factor * dR


def ratio_bound_check(cert: RatioCertificate, trace: EnvTrace, split: ComponentSplit) -> RatioBoundCheck:
    """The ratio deviation bound at every computed (n, t), maximised over x."""
    rhs = ratio_bound_rhs(trace, split, cert.component, cert.d_max)
    lhs = cert.deviation
    rhs_b = np.broadcast_to(rhs, lhs.shape)
    ok = lhs <= rhs_b * (1 + 1e-9) + 1e-13
    return RatioBoundCheck(bool(ok.all()), lhs, rhs_b.copy())


# ---------------------------------------------------------------------------
# freezing

@dataclass(frozen=True, eq=False)
class FreezeRule:
    """Everything needed to evaluate gamma_m online on a fixed ball.

    Lambda is taken over ``radii`` only (all >= D_max); with no radii it is
    identically 1.
    """

    ball: Ball
    split: ComponentSplit | None
    component: int
    radii: tuple
    d_max: int
    m: float
    _pieces: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.m < 1:
            raise DomainError("freeze level m must be >= 1")
        if any(n < self.d_max for n in self.radii):
            raise PreconditionError("radii must be >= D_max")
        if self.split is not None:
            self._pieces.extend(star_piece(self.ball, self.split, self.component, n) for n in self.radii)

    @property
    def geometry(self) -> Geometry:
        return Geometry.of(self.ball, self.d_max)

    def start(self):
        return (0, 0.0, tuple(1.0 for _ in self.radii))

    def update(self, monitor, c_t: np.ndarray, c_t1: np.ndarray):
        """Monitor after C_{t+1} is revealed and whether gamma_m = t + 1."""
        t, gam, prods = monitor
        m = self.ball.n_edges
        gam = gam + float(np.abs(1.0 / c_t[:m] - 1.0 / c_t1[:m]).sum())
        prods = tuple(p * ratio_pair(piece, c_t, c_t1)[1] for p, piece in zip(prods, self._pieces))
        lam = min(prods) if prods else 1.0
        gs = gamma_star(self.geometry, c_t1)
        fire = lam <= 1.0 / self.m or max(gam, gs) >= self.m
        return (t + 1, gam, prods), fire


class FrozenEnvironment(Environment):
    """The base environment until gamma_m - 1, then held at C_{gamma_m - 1} forever.

    The hidden state is ``(base_state, monitor, frozen)``.
    """

    kind = "frozen"

    def __init__(self, base: Environment, rule: FreezeRule):
        self.base = base
        self.rule = rule
        self.adaptive = True
        self.min_radius = max(base.min_radius, rule.ball.radius)

    def initial(self, b):
        return self.base.initial(b)

    def initial_state(self):
        return (self.base.initial_state(), self.rule.start(), False)

    def branches(self, t, b, config, state, edge):
        bstate, mon, frozen = state
        if frozen:
            return [(1.0, config, state)]
        out = []
        for p, nxt, bst in self.base.branches(t, b, config, bstate, edge):
            mon2, fire = self.rule.update(mon, config, nxt)
            if fire:
                out.append((p, config, (bst, mon2, True)))
            else:
                out.append((p, nxt, (bst, mon2, False)))
        return out

    def describe(self):
        return {"kind": self.kind, "base": self.base.describe(), "m": self.rule.m}


@dataclass(frozen=True)
class FreezeResult:
    gamma: int | None
    environment: FrozenEnvironment
    lam: np.ndarray
    gamma_t: np.ndarray
    gamma_star_t: np.ndarray

    @property
    def triggered(self) -> bool:
        return self.gamma is not None


def freeze_at(env: Environment, trace: EnvTrace, m: float, split: ComponentSplit | None = None,
              component: int = 0, radii: Sequence[int] = ()) -> FreezeResult:
    """gamma_m along a recorded trace, and the frozen version of ``env``.

    ``gamma`` is None when the trigger never fires within the trace horizon.
    """
    d_max = split.d_max if split is not None else 1
    rule = FreezeRule(trace.ball, split, component, tuple(radii), d_max, float(m))
    mon = rule.start()
    T = trace.horizon
    lam, gam, gst = [1.0], [0.0], [gamma_star(rule.geometry, trace.configs[0])]
    gamma = None
    for t in range(T):
        mon, fire = rule.update(mon, trace.configs[t], trace.configs[t + 1])
        lam.append(min(mon[2]) if mon[2] else 1.0)
        gam.append(mon[1])
        gst.append(gamma_star(rule.geometry, trace.configs[t + 1]))
        if fire:
            gamma = t + 1
            break
    return FreezeResult(gamma, FrozenEnvironment(env, rule), np.array(lam), np.array(gam), np.array(gst))


def frozen_trace(trace: EnvTrace, gamma: int | None) -> EnvTrace:
    """C~_t = C_{min(gamma - 1, t)} along a recorded trace."""
    if gamma is None:
        return trace
    idx = np.minimum(np.arange(trace.horizon + 1), gamma - 1)
    return EnvTrace.from_configs(trace.ball, trace.configs[idx], trace.edges)

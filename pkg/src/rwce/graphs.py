"""Locally finite graphs given by neighbor generators, and their finite pieces.

An infinite graph is never materialised.  Everything downstream works on a
:class:`Ball` of some radius around the origin, whose vertices are indexed
densely in breadth-first order.  Because breadth-first discovery does not
depend on how far the search goes, the vertex list of ``ball(n)`` is a prefix
of the vertex list of ``ball(n + 1)``, and so is the edge list (edges are
ordered by their larger endpoint, then their smaller one).  Weight arrays
built for a large ball can therefore be sliced for any smaller one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .errors import GraphStructureError, IncompleteConfigError, ProbeRadiusError, DomainError

Vertex = Hashable


@dataclass(frozen=True, eq=False)
class GraphFamily:
    """A connected, locally finite, simple graph with a designated origin.

    ``neighbor_fn(x)`` returns the neighbors of ``x`` in a fixed order.  The
    order matters: it is the order in which transition probabilities are
    listed and in which the walk samples its next step.
    """

    neighbor_fn: Callable[[Vertex], Sequence[Vertex]]
    origin: Vertex
    name: str
    params: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def neighbors(self, x: Vertex) -> tuple:
        try:
            return self._cache[x]
        except KeyError:
            nb = tuple(self.neighbor_fn(x))
            self._cache[x] = nb
            return nb

    def degree(self, x: Vertex) -> int:
        return len(self.neighbors(x))


# ---------------------------------------------------------------------------
# registry

def line() -> GraphFamily:
    """The integers with nearest-neighbor edges, origin 0."""
    return GraphFamily(lambda x: (x - 1, x + 1), 0, "line")


def grid2d() -> GraphFamily:
    """The square lattice Z^2, origin (0, 0)."""

    def nb(p):
        x, y = p
        return ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))

    return GraphFamily(nb, (0, 0), "grid2d")


def tree(b: int = 2, root_degree: int | None = None) -> GraphFamily:
    """Rooted tree in which every vertex has ``b`` children.

    The root has ``root_degree`` children instead when given, so
    ``tree(2, root_degree=3)`` is the 3-regular tree.  Vertices are tuples
    spelling the path from the root.
    """
    if b < 1:
        raise ValueError("branching factor must be >= 1")
    rd = b if root_degree is None else int(root_degree)

    def nb(v):
        if not v:
            return tuple((i,) for i in range(rd))
        return (v[:-1],) + tuple(v + (i,) for i in range(b))

    return GraphFamily(nb, (), "tree", {"b": b, "root_degree": rd})


def explicit(edges: Iterable[tuple], origin: Vertex = 0, name: str = "explicit") -> GraphFamily:
    """Finite graph from an edge list.  Neighbor order follows first appearance."""
    adj: dict = {}
    for u, v in edges:
        if u == v:
            raise GraphStructureError(f"self-loop at {u!r}")
        for a, b in ((u, v), (v, u)):
            lst = adj.setdefault(a, [])
            if b in lst:
                raise GraphStructureError(f"repeated edge {{{u!r}, {v!r}}}")
            lst.append(b)
    if origin not in adj:
        raise GraphStructureError(f"origin {origin!r} is not on any edge")
    frozen = {k: tuple(v) for k, v in adj.items()}

    def nb(x):
        try:
            return frozen[x]
        except KeyError:
            raise GraphStructureError(f"vertex {x!r} is not in the graph") from None

    return GraphFamily(nb, origin, name, {"edges": [list(e) for e in edges]})


def read_edge_list(path) -> list[tuple[int, int]]:
    """Read ``u v`` pairs, one per line; blank lines and ``#`` comments are skipped."""
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise GraphStructureError(f"{path}:{lineno}: expected two labels, got {text!r}")
            out.append((int(parts[0]), int(parts[1])))
    return out


def path_graph(k: int) -> GraphFamily:
    """Finite path 0 - 1 - ... - k, origin 0."""
    return explicit([(i, i + 1) for i in range(k)], 0, "path")


def triangle() -> GraphFamily:
    return explicit([(0, 1), (0, 2), (1, 2)], 0, "triangle")


def star(k: int) -> GraphFamily:
    """K_{1,k} with the center as origin."""
    return explicit([(0, i) for i in range(1, k + 1)], 0, "star")


def box_grid(width: int, height: int | None = None) -> GraphFamily:
    """Finite ``width x height`` grid with origin at the central cell (odd sizes)."""
    height = width if height is None else height
    cx, cy = width // 2, height // 2

    def nb(p):
        x, y = p
        cand = ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))
        return tuple((u, w) for u, w in cand if 0 <= u < width and 0 <= w < height)

    return GraphFamily(nb, (cx, cy), "box_grid", {"width": width, "height": height})


def triangle_with_tail() -> GraphFamily:
    """Triangle {0, 1, 2} with an infinite ray 2 - 3 - 4 - ... attached at 2."""

    def nb(x):
        if x == 0:
            return (1, 2)
        if x == 1:
            return (0, 2)
        if x == 2:
            return (0, 1, 3)
        return (x - 1, x + 1)

    return GraphFamily(nb, 0, "triangle_with_tail")


FAMILIES: dict[str, Callable[..., GraphFamily]] = {
    "line": line,
    "grid2d": grid2d,
    "tree": tree,
    "explicit": None,  # filled below; takes edges or a path
    "path": path_graph,
    "triangle": triangle,
    "star": star,
    "box_grid": box_grid,
    "triangle_with_tail": triangle_with_tail,
}


def _explicit_from_params(edges=None, path=None, origin=0):
    if (edges is None) == (path is None):
        raise ValueError("explicit family needs exactly one of 'edges' or 'path'")
    if path is not None:
        edges = read_edge_list(path)
    return explicit([tuple(e) for e in edges], origin)


FAMILIES["explicit"] = _explicit_from_params


def make_family(name: str, **params) -> GraphFamily:
    try:
        ctor = FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown graph family {name!r}; known: {sorted(FAMILIES)}") from None
    fam = ctor(**params)
    fam.params.setdefault("_registry", name)
    return fam


# ---------------------------------------------------------------------------
# balls

@dataclass(frozen=True, eq=False)
class Ball:
    """The ball of radius ``radius`` around the family's origin.

    Attributes
    ----------
    labels : tuple
        Vertex labels in breadth-first order; ``labels[0]`` is the origin.
    dist : ndarray of int
        Graph distance from the origin, per dense index.
    edges : ndarray of shape (m, 2)
        Edges of the induced subgraph as ``(i, j)`` with ``i < j``.
    degree : ndarray of int
        Degree in the full graph (not the induced one).
    """

    family: GraphFamily
    radius: int
    labels: tuple
    index: dict
    dist: np.ndarray
    edges: np.ndarray
    degree: np.ndarray
    # padded incidence: neighbor index / edge index per vertex, -1 when absent
    # or outside the ball
    nbr: np.ndarray = field(repr=False)
    inc: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def vertices(self) -> tuple:
        return self.labels

    @property
    def boundary(self) -> tuple:
        return tuple(self.labels[i] for i in np.flatnonzero(self.dist == self.radius))

    @property
    def distance_map(self) -> dict:
        return {lab: int(d) for lab, d in zip(self.labels, self.dist)}

    @property
    def edge_labels(self) -> list:
        return [(self.labels[i], self.labels[j]) for i, j in self.edges]

    def count_within(self, n: int) -> int:
        """Number of vertices at distance <= n (a prefix of the BFS order)."""
        return int(np.searchsorted(self.dist, n, side="right"))

    def edges_within(self, n: int) -> int:
        """Number of edges of the induced subgraph of V_(n) (a prefix of ``edges``)."""
        k = self.count_within(n)
        return int(np.searchsorted(self.edges[:, 1], k, side="left"))

    def restrict(self, n: int) -> "Ball":
        """The ball of radius ``n <= radius``, sliced out of this one."""
        if n > self.radius:
            raise ValueError("can only restrict to a smaller radius")
        if n == self.radius:
            return self
        k, m = self.count_within(n), self.edges_within(n)
        nbr = self.nbr[:k].copy()
        inc = self.inc[:k].copy()
        outside = (nbr >= k) | (inc >= m)
        nbr[outside] = -1
        inc[outside] = -1
        return Ball(self.family, n, self.labels[:k], {lab: i for i, lab in enumerate(self.labels[:k])},
                    self.dist[:k], self.edges[:m], self.degree[:k], nbr, inc)

    def edge_index(self, u: Vertex, v: Vertex) -> int:
        i, j = self.index[u], self.index[v]
        row = self.inc[i]
        hit = np.flatnonzero(self.nbr[i] == j)
        if hit.size == 0:
            raise KeyError(f"{{{u!r}, {v!r}}} is not an edge of the ball")
        return int(row[hit[0]])

    def incident(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbor indices and edge indices of vertex ``i``, in neighbor order.

        Only meaningful for ``dist[i] < radius``; boundary vertices may have
        neighbors outside the ball.
        """
        d = int(self.degree[i])
        return self.nbr[i, :d], self.inc[i, :d]

    def weights(self, weights) -> np.ndarray:
        """Coerce a weight description into a conductance array aligned with ``edges``.

        ``weights`` may be an array (sliced if longer than needed), a callable
        ``f(u_label, v_label)``, a mapping from label pairs (either order), or
        a scalar.
        """
        return as_weights(self, weights)


def _bfs(family: GraphFamily, n: int):
    origin = family.origin
    labels = [origin]
    index = {origin: 0}
    dist = [0]
    queue = deque([origin])
    while queue:
        x = queue.popleft()
        dx = dist[index[x]]
        if dx >= n:
            continue
        for y in family.neighbors(x):
            if y not in index:
                index[y] = len(labels)
                labels.append(y)
                dist.append(dx + 1)
                queue.append(y)
    return labels, index, dist


def _check_vertex(family: GraphFamily, x: Vertex, nb: tuple):
    if not nb:
        raise GraphStructureError(f"vertex {x!r} has no neighbors")
    if x in nb:
        raise GraphStructureError(f"self-loop at {x!r}")
    if len(set(nb)) != len(nb):
        raise GraphStructureError(f"repeated neighbor at {x!r}")
    for y in nb:
        if x not in family.neighbors(y):
            raise GraphStructureError(f"asymmetric neighbor lists: {y!r} in N({x!r}) but not conversely")


def ball(family: GraphFamily, n: int) -> Ball:
    """Breadth-first ball of radius ``n`` around ``family.origin``.

    Raises
    ------
    GraphStructureError
        If a neighbor list met along the way is asymmetric, contains the
        vertex itself, repeats a neighbor, or is empty.
    """
    if n < 0:
        raise ValueError("radius must be >= 0")
    labels, index, dist = _bfs(family, n)
    nv = len(labels)
    deg = np.empty(nv, dtype=np.int64)
    nbs = []
    for i, x in enumerate(labels):
        nb = family.neighbors(x)
        _check_vertex(family, x, nb)
        deg[i] = len(nb)
        nbs.append(nb)
    maxdeg = int(deg.max()) if nv else 0
    nbr = np.full((nv, maxdeg), -1, dtype=np.int64)
    inc = np.full((nv, maxdeg), -1, dtype=np.int64)
    edges = []
    for j, x in enumerate(labels):
        lower = sorted(index[y] for y in nbs[j] if y in index and index[y] < j)
        for i in lower:
            edges.append((i, j))
    edges_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    eid = {(int(i), int(j)): k for k, (i, j) in enumerate(edges_arr)}
    for i, nb in enumerate(nbs):
        for slot, y in enumerate(nb):
            j = index.get(y)
            if j is None:
                continue
            nbr[i, slot] = j
            inc[i, slot] = eid[(min(i, j), max(i, j))]
    return Ball(family, n, tuple(labels), index, np.array(dist, dtype=np.int64), edges_arr, deg, nbr, inc)


def as_weights(b: Ball, weights) -> np.ndarray:
    m = b.n_edges
    if weights is None or (np.isscalar(weights) and not isinstance(weights, str)):
        c = np.full(m, 1.0 if weights is None else float(weights))
    elif callable(weights):
        c = np.array([float(weights(u, v)) for u, v in b.edge_labels], dtype=float)
    elif isinstance(weights, dict):
        c = np.empty(m)
        for k, (u, v) in enumerate(b.edge_labels):
            if (u, v) in weights:
                c[k] = weights[(u, v)]
            elif (v, u) in weights:
                c[k] = weights[(v, u)]
            else:
                raise IncompleteConfigError(f"no weight for edge {{{u!r}, {v!r}}}")
    else:
        c = np.asarray(weights, dtype=float)
        if c.ndim != 1 or c.size < m:
            raise IncompleteConfigError(f"need {m} edge weights, got shape {c.shape}")
        c = c[:m].copy()
    check_positive(c)
    return c


def check_positive(c: np.ndarray) -> None:
    if c.size and not (np.all(np.isfinite(c)) and np.all(c > 0)):
        bad = np.flatnonzero(~(np.isfinite(c) & (c > 0)))
        raise DomainError(f"conductances must be finite and > 0 (edge {int(bad[0])} has {c[bad[0]]!r})")


# ---------------------------------------------------------------------------
# finite networks

@dataclass(frozen=True, eq=False)
class Network:
    """Finite weighted graph on vertices ``0 .. n_vertices - 1``."""

    n_vertices: int
    edges: np.ndarray
    conductance: np.ndarray
    labels: tuple = ()

    @property
    def resistance(self) -> np.ndarray:
        return 1.0 / self.conductance

    def with_conductance(self, c) -> "Network":
        c = np.asarray(c, dtype=float)
        if c.shape != self.conductance.shape:
            raise IncompleteConfigError(f"expected {self.conductance.shape[0]} conductances, got {c.shape}")
        check_positive(c)
        return Network(self.n_vertices, self.edges, c, self.labels)

    def total_conductance(self) -> np.ndarray:
        out = np.zeros(self.n_vertices)
        np.add.at(out, self.edges[:, 0], self.conductance)
        np.add.at(out, self.edges[:, 1], self.conductance)
        return out


def network_from_edges(edges, conductance=None, labels=()) -> Network:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    nv = int(e.max()) + 1 if e.size else 0
    if labels:
        nv = max(nv, len(labels))
    c = np.ones(len(e)) if conductance is None else np.asarray(conductance, dtype=float)
    check_positive(c)
    return Network(nv, e, c, tuple(labels))


def ball_network(b: Ball, weights=None) -> Network:
    """The induced subgraph G_(n) of the ball, un-collapsed."""
    return Network(b.n_vertices, b.edges, as_weights(b, weights), b.labels)


@dataclass(frozen=True, eq=False)
class CollapsedNetwork(Network):
    """G_(n) with every vertex of the boundary identified into one sink.

    Vertices ``0 .. n_interior - 1`` are the ball's V_(n-1) (origin is 0) and
    vertex ``sink`` (= ``n_interior``) is the merged boundary.  ``back_map[k]``
    lists the ball edges merged into collapsed edge ``k``.
    """

    ball: Ball | None = None
    n_interior: int = 0
    back_map: tuple = ()
    _merge: np.ndarray | None = field(default=None, repr=False)

    origin = 0

    @property
    def sink(self) -> int:
        return self.n_interior

    def reweight(self, weights) -> "CollapsedNetwork":
        """Same structure, conductances recomputed from new ball weights."""
        c = as_weights(self.ball, weights)
        merged = np.zeros(len(self.edges))
        np.add.at(merged, self._merge[0], c[self._merge[1]])
        return CollapsedNetwork(self.n_vertices, self.edges, merged, self.labels,
                                self.ball, self.n_interior, self.back_map, self._merge)


def collapse_boundary(b: Ball, weights=None) -> CollapsedNetwork:
    """Identify the boundary of ``b`` into a single sink vertex.

    Edges between two boundary vertices become self-loops and are dropped;
    parallel edges into the sink are merged by adding conductances.
    """
    if b.radius < 1:
        raise ValueError("collapsing needs radius >= 1")
    c = as_weights(b, weights)
    k = b.count_within(b.radius - 1)
    sink = k
    merged_index: dict = {}
    back: list = []
    src_k, src_e = [], []
    for e, (i, j) in enumerate(b.edges):
        i, j = int(i), int(j)
        if i >= k and j >= k:
            continue
        key = (i, sink) if j >= k else (i, j)
        if key not in merged_index:
            merged_index[key] = len(back)
            back.append([])
        kk = merged_index[key]
        back[kk].append(e)
        src_k.append(kk)
        src_e.append(e)
    edges = np.array(list(merged_index), dtype=np.int64).reshape(-1, 2)
    merge = np.array([src_k, src_e], dtype=np.int64).reshape(2, -1)
    cond = np.zeros(len(edges))
    np.add.at(cond, merge[0], c[merge[1]])
    labels = b.labels[:k] + (("sink", b.radius),)
    return CollapsedNetwork(k + 1, edges, cond, labels, b, k, tuple(tuple(x) for x in back), merge)


# ---------------------------------------------------------------------------
# origin removal

@dataclass(frozen=True, eq=False)
class ComponentSplit:
    """Connected components of the graph minus its origin, seen inside a probe ball.

    ``finite[k]`` is False when component ``k`` reaches the probe boundary,
    which is taken as evidence (not proof) that it is infinite.  ``d_k[k]``
    is the least n such that every pair of component-``k`` neighbors of the
    origin is joined by a path avoiding the origin and lying in V_(n-1);
    the witnessing paths are kept in ``paths``.
    """

    family: GraphFamily
    probe_radius: int
    components: tuple
    finite: tuple
    d_k: tuple
    paths: tuple
    neighbors_of_origin: tuple

    @property
    def d_max(self) -> int:
        return max(self.d_k) if self.d_k else 1

    @property
    def infinite_components(self) -> list[int]:
        return [k for k, f in enumerate(self.finite) if not f]

    def component_of(self, x: Vertex) -> int:
        for k, comp in enumerate(self.components):
            if x in comp:
                return k
        raise KeyError(f"{x!r} is not in any component inside the probe ball")

    def star_vertices(self, k: int) -> frozenset:
        """V*_k = component k plus the origin (restricted to the probe ball)."""
        return frozenset(self.components[k]) | {self.family.origin}

    def star_mask(self, b: Ball, k: int) -> np.ndarray:
        """Boolean mask over ``b``'s vertices selecting V*_k.

        Vertices of ``b`` beyond the probe radius are assigned through
        adjacency to already-assigned vertices, so any ball size works.
        """
        mask = np.zeros(b.n_vertices, dtype=bool)
        comp = frozenset(self.components[k])
        mask[0] = True
        for i in range(1, b.n_vertices):
            lab = b.labels[i]
            if int(b.dist[i]) <= self.probe_radius:
                mask[i] = lab in comp
            else:
                # a vertex beyond the probe joins the component of any closer neighbor
                for j in b.nbr[i]:
                    if 0 < j < i and int(b.dist[j]) < int(b.dist[i]):
                        mask[i] = mask[j]
                        break
        return mask


def split_at_origin(family: GraphFamily, probe_radius: int) -> ComponentSplit:
    """Components of G minus the origin inside the probe ball, with D_k witnesses.

    Raises
    ------
    ProbeRadiusError
        If two origin-neighbors of one component cannot be joined inside the
        probe ball by a path whose vertices all lie strictly inside it.
    """
    if probe_radius < 2:
        raise ValueError("probe radius must be >= 2")
    b = ball(family, probe_radius)
    nv = b.n_vertices
    comp_id = np.full(nv, -1, dtype=np.int64)
    comps = []
    for s in range(1, nv):
        if comp_id[s] >= 0:
            continue
        cid = len(comps)
        members = [s]
        comp_id[s] = cid
        q = deque([s])
        while q:
            i = q.popleft()
            for j in b.nbr[i]:
                if j > 0 and comp_id[j] < 0:
                    comp_id[j] = cid
                    members.append(int(j))
                    q.append(int(j))
        comps.append(sorted(members))
    nb0 = [int(j) for j in b.nbr[0] if j >= 0]
    d_k, paths, finite = [], [], []
    for cid, members in enumerate(comps):
        finite.append(bool(np.all(b.dist[members] < probe_radius)))
        ends = [j for j in nb0 if comp_id[j] == cid]
        dk, pk = _component_depth(b, ends, probe_radius)
        d_k.append(dk)
        paths.append(pk)
    return ComponentSplit(
        family, probe_radius,
        tuple(tuple(b.labels[i] for i in m) for m in comps),
        tuple(finite), tuple(d_k), tuple(paths),
        tuple(b.labels[j] for j in nb0),
    )


def _component_depth(b: Ball, ends: list[int], probe_radius: int):
    """Smallest D with all ``ends`` pairwise joined inside V_(D-1) minus origin."""
    if len(ends) < 2:
        return 1, {}
    for r in range(1, probe_radius):
        allowed = (b.dist <= r)
        allowed[0] = False
        paths = {}
        ok = True
        for p in range(len(ends)):
            parent = _bfs_tree(b, ends[p], allowed)
            for q in range(p + 1, len(ends)):
                if ends[q] not in parent:
                    ok = False
                    break
                node, path = ends[q], []
                while node != -1:
                    path.append(b.labels[node])
                    node = parent[node]
                paths[(b.labels[ends[p]], b.labels[ends[q]])] = tuple(reversed(path))
            if not ok:
                break
        if ok:
            return r + 1, paths
    raise ProbeRadiusError(
        f"origin-neighbors {[b.labels[e] for e in ends]} are not pairwise connected inside "
        f"radius {probe_radius - 1}; increase the probe radius")


def _bfs_tree(b: Ball, s: int, allowed: np.ndarray) -> dict:
    parent = {s: -1}
    q = deque([s])
    while q:
        i = q.popleft()
        for j in b.nbr[i]:
            j = int(j)
            if j >= 0 and allowed[j] and j not in parent:
                parent[j] = i
                q.append(j)
    return parent


def star_network(b: Ball, split: ComponentSplit, k: int, weights=None) -> tuple[Network, np.ndarray]:
    """The network (V*_k ∩ V_(n), E*_k ∩ E_(n)) on ball ``b``.

    Returns the network (origin at local index 0) and the array mapping
    local vertex indices back to indices of ``b``.
    """
    c = as_weights(b, weights)
    mask = split.star_mask(b, k)
    keep = np.flatnonzero(mask)
    local = np.full(b.n_vertices, -1, dtype=np.int64)
    local[keep] = np.arange(keep.size)
    emask = mask[b.edges[:, 0]] & mask[b.edges[:, 1]]
    edges = local[b.edges[emask]]
    labels = tuple(b.labels[i] for i in keep)
    net = Network(keep.size, edges, c[emask], labels)
    return net, keep


def geometric_weights(lam: float) -> Callable:
    """C(k, k+1) = lam**k on the integers (any sign of k)."""
    lam = float(lam)
    if not lam > 0:
        raise DomainError("lambda must be > 0")

    def w(u, v):
        return lam ** min(u, v)
    return w

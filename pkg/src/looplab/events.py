"""Boolean detectors for connection events; one call is one MC sample.

Detectors return True, False, or the INDETERMINATE sentinel (the
exploration budget ran out before the answer was decided).  Tallies
must treat INDETERMINATE as its own bucket, never as False; to make
that hard to get wrong the sentinel refuses to be used as a boolean.

Every detector is a pure function of (cfg, arguments), so replicas can
run in any order and in parallel.  All detectors are increasing in p
under the shared-u coupling of the sampler, except where noted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from fractions import Fraction
from typing import Optional, Tuple

from .graphcore import (
    DEFAULT_GROW_BUDGET,
    DEFAULT_MAX_BOX_SITES,
    GraphError,
    OpenSubgraph,
    grow_cluster,
    max_edge_disjoint_paths,
)
from .lattice import (
    GeometryError,
    Region,
    box_region,
    half_space_region,
    linf_distance,
)
from .loops import (
    box_decomposition,
    count_large,
    extremal_point_count,
    large_threshold,
    loop_cluster_of,
    loop_clusters_in_box,
    power_threshold,
    t_set,
)

Point = Tuple[int, ...]


class ScaleError(ValueError):
    """The instance is too large for an exhaustive-search detector."""


class _Indeterminate:
    __slots__ = ()

    def __repr__(self):
        return "INDETERMINATE"

    def __bool__(self):
        raise TypeError(
            "indeterminate sample has no truth value; test with "
            "'result is INDETERMINATE' before branching"
        )


INDETERMINATE = _Indeterminate()

# exhaustive path-tuple searches refuse instances above these caps
MAX_SEARCH_EDGES = 20
MAX_SEARCH_STEPS = 2_000_000

EVENT_KINDS = (
    "connected",
    "halfspace",
    "exit",
    "two-loops",
    "f-event",
    "g-event",
    "star",
    "boundary-star",
    "t-size",
    "loop-count",
    "extremal",
)


def _exact(x):
    """Read a numeric parameter exactly (floats as their printed decimal)."""
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def _ceil_mul(factor, N):
    return int(math.ceil(_exact(factor) * N))


def working_box(spec, N, c_work=3.0):
    """Box confining exploration for events stated on the whole lattice.

    Radius ceil(c_work * N); far excursions beyond it contribute only
    O(N^(2-d)) relative corrections, which the c_work sensitivity runs
    quantify.
    """
    if N < 1:
        raise GeometryError("scale N must be >= 1")
    if _exact(c_work) <= 1:
        raise GeometryError("working-region factor must exceed 1")
    return box_region(spec, (0,) * spec.d, _ceil_mul(c_work, N))


# -------------------------------------------------------------- detectors


def ev_connected(cfg, x, y, region: Region, budget=DEFAULT_GROW_BUDGET):
    """True iff an open path inside region joins x to y."""
    spec = cfg.spec
    x = spec.check_point(x)
    y = spec.check_point(y)
    if not region.contains(x) or not region.contains(y):
        raise GraphError("anchors must lie inside the region")
    g = grow_cluster(cfg, x, region, budget=budget)
    if y in g:
        # a found witness stands even if the budget then ran out
        return True
    if g.truncated:
        return INDETERMINATE
    return False


def ev_halfspace(
    cfg,
    x,
    y,
    variant,
    axis=0,
    side="ge",
    box_radius=None,
    cone_k=None,
    budget=DEFAULT_GROW_BUDGET,
):
    """Connection inside the half-space whose wall passes through x.

    variant "bb": x and y both on the wall, x != y.
    variant "bi": x on the wall, y inside, subject to the cone condition
    |x-y| < K*dist(y, wall) with K = cone_k.
    box_radius additionally clips the half-space to the box of that
    radius around x (the slab variant with uniform constants).
    """
    spec = cfg.spec
    x = spec.check_point(x)
    y = spec.check_point(y)
    axis = spec.check_axis(axis)
    wall = x[axis]
    depth = y[axis] - wall if side == "ge" else wall - y[axis]
    if depth < 0:
        raise GeometryError("y lies outside the half-space")
    if variant == "bb":
        if depth != 0:
            raise GeometryError("boundary-boundary variant needs y on the wall")
        if x == y:
            raise GeometryError("boundary anchors must differ")
    elif variant == "bi":
        if cone_k is None:
            raise GeometryError("boundary-interior variant needs cone_k")
        if _exact(cone_k) <= 1:
            raise GeometryError("cone constant must exceed 1")
        if linf_distance(x, y) >= _exact(cone_k) * depth:
            raise GeometryError(
                "cone condition violated: |x-y| must stay below K*dist(y, wall)"
            )
    else:
        raise GeometryError("variant must be 'bb' or 'bi'")
    region = half_space_region(spec, axis, wall, side=side)
    if box_radius is not None:
        region = region.intersect(box_region(spec, x, box_radius))
    return ev_connected(cfg, x, y, region, budget=budget)


def ev_exit_connected(cfg, x, y, inner: Region, outer: Region, budget=DEFAULT_GROW_BUDGET):
    """Connection between x and y that leaves the inner region.

    For x != y: some site of t_set(x, y), computed in the configuration
    restricted to outer, lies outside inner (equivalently, an
    edge-simple open x-y path exits inner).  For x == y: some site of
    x's loop-cluster lies outside inner (an edge-simple open loop
    through x exits inner).
    """
    spec = cfg.spec
    x = spec.check_point(x)
    y = spec.check_point(y)
    if inner.intersect(outer) != inner:
        raise GeometryError("inner region must lie inside the outer region")
    if not inner.contains(x) or not inner.contains(y):
        raise GraphError("anchors must lie in the inner region")
    g = grow_cluster(cfg, x, outer, budget=budget)
    if g.truncated:
        return INDETERMINATE
    if x == y:
        _, members = loop_cluster_of(g, x)
        return any(not inner.contains(z) for z in members)
    if y not in g:
        return False
    return any(not inner.contains(z) for z in t_set(g, x, y))


def ev_two_disjoint_loops(cfg, N, a, alpha, max_sites=DEFAULT_MAX_BOX_SITES):
    """Some ordinary cluster of the box-restricted configuration holds
    two distinct nontrivial loop-clusters, one of diameter >= a*N and
    another of diameter >= N**alpha.  Distinct loop-clusters are
    vertex-disjoint, so the two loops really are disjoint.

    Not monotone in p: an extra open edge can merge the two witness
    loop-clusters into one."""
    spec = cfg.spec
    dec = box_decomposition(
        cfg, box_region(spec, (0,) * spec.d, N), max_sites=max_sites
    )
    return dec.two_large_disjoint(a, alpha)


def t_set_size_given_connected(cfg, x, y, region, budget=DEFAULT_GROW_BUDGET):
    """|t_set(x, y)| when x and y are connected in region, else None.

    Feeds the conditional mean estimator: average the sizes over the
    connected samples only.
    """
    spec = cfg.spec
    x = spec.check_point(x)
    y = spec.check_point(y)
    if x == y:
        raise GraphError("endpoints must differ")
    if not region.contains(x) or not region.contains(y):
        raise GraphError("anchors must lie inside the region")
    g = grow_cluster(cfg, x, region, budget=budget)
    if g.truncated:
        return INDETERMINATE
    if y not in g:
        return None
    return len(t_set(g, x, y))


def ev_star(cfg, z, legs, radius, budget=DEFAULT_GROW_BUDGET):
    """legs edge-disjoint open paths from z to the boundary of z + box(radius).

    By Menger's theorem this is exactly "legs disjoint one-arm events",
    so the detector runs one max-flow from z to the boundary site set.
    """
    spec = cfg.spec
    z = spec.check_point(z)
    if legs < 1:
        raise GraphError("legs must be >= 1")
    if radius < 1:
        raise GeometryError("radius must be >= 1")
    box = box_region(spec, z, radius)
    g = grow_cluster(cfg, z, box, budget=budget)
    if g.truncated:
        return INDETERMINATE
    sinks = [v for v in g.vertices if linf_distance(v, z) == radius]
    if not sinks:
        return False
    return max_edge_disjoint_paths(g, z, sinks, legs) >= legs


def ev_boundary_star(cfg, z, N, legs, a, budget=DEFAULT_GROW_BUDGET):
    """legs edge-disjoint open paths inside the box of radius N from a
    boundary site z to legs distinct sites, each at distance >= a*N
    from z."""
    spec = cfg.spec
    z = spec.check_point(z)
    if legs < 1:
        raise GraphError("legs must be >= 1")
    origin = (0,) * spec.d
    box = box_region(spec, origin, N)
    if not box.contains(z) or linf_distance(z, origin) != N:
        raise GraphError("z must lie on the box boundary")
    t = large_threshold(a, N)
    g = grow_cluster(cfg, z, box, budget=budget)
    if g.truncated:
        return INDETERMINATE
    far = [v for v in g.vertices if linf_distance(v, z) >= t]
    if not far:
        return False
    return max_edge_disjoint_paths(g, z, far, legs, distinct_sinks=True) >= legs


# ------------------------------------------- exhaustive path-tuple events


def _open_box_subgraph(cfg, box, max_edges):
    spec = cfg.spec
    edges = []
    for p in box.iter_points():
        for a in range(spec.d):
            q = list(p)
            q[a] += 1
            q = tuple(q)
            if box.contains(q) and cfg.is_open((p, q)):
                edges.append((p, q))
                if len(edges) > max_edges:
                    raise ScaleError(
                        "scale unsupported: more than %d open edges in the "
                        "search box" % max_edges
                    )
    return OpenSubgraph.from_edges(edges)


class _Steps:
    __slots__ = ("left",)

    def __init__(self, left):
        self.left = left

    def tick(self):
        self.left -= 1
        if self.left < 0:
            raise ScaleError("scale unsupported: path-tuple search budget exceeded")


def _role_paths_exist(g, x, y, preds, used, steps):
    """Do edge-disjoint x-y paths exist, one per predicate in preds?

    Enumerates edge-simple paths for the first predicate by depth-first
    search and recurses on the rest; a trailing None predicate (any
    path) is answered by reachability on the unused edges.
    """
    if not preds:
        return True
    if preds[0] is None and len(preds) == 1:
        seen = {x}
        stack = [x]
        while stack:
            v = stack.pop()
            if v == y:
                return True
            for iw, key in g.adjacency[g.index[v]]:
                w = g.vertices[iw]
                if key in used or w in seen:
                    continue
                seen.add(w)
                stack.append(w)
        return False

    pred = preds[0]
    path = [x]

    def dfs(v):
        steps.tick()
        if v == y and len(path) > 1:
            if pred is None or pred(path):
                if _role_paths_exist(g, x, y, preds[1:], used, steps):
                    return True
            # y may be an interior vertex of a longer qualifying path,
            # so the search continues past it
        for iw, key in g.adjacency[g.index[v]]:
            if key in used:
                continue
            w = g.vertices[iw]
            used.add(key)
            path.append(w)
            if dfs(w):
                return True
            path.pop()
            used.discard(key)
        return False

    return dfs(x)


def _exits_box(center, radius):
    def pred(path):
        return any(linf_distance(v, center) > radius for v in path)

    return pred


def ev_F(cfg, N, a, alpha, max_edges=MAX_SEARCH_EDGES, max_steps=MAX_SEARCH_STEPS):
    """Three pairwise edge-disjoint open x-y paths somewhere in the box
    of radius N, the second exiting x + box(ceil(a*N)) and the third
    exiting x + box(ceil(N**alpha)).

    Exhaustive search; instances above the caps raise ScaleError rather
    than returning a silent False.  Lattice-scale use is intentionally
    unsupported (the quantitative content at scale travels through the
    diagram sums).
    """
    spec = cfg.spec
    box = box_region(spec, (0,) * spec.d, N)
    g = _open_box_subgraph(cfg, box, max_edges)
    ta = large_threshold(a, N)
    talpha = power_threshold(N, alpha)
    steps = _Steps(max_steps)
    for x in g.vertices:
        for y in g.vertices:
            if x == y:
                continue
            preds = [_exits_box(x, ta), _exits_box(x, talpha), None]
            if _role_paths_exist(g, x, y, preds, set(), steps):
                return True
    return False


def ev_G(
    cfg, N, a, alpha, beta, max_edges=MAX_SEARCH_EDGES, max_steps=MAX_SEARCH_STEPS
):
    """Two edge-disjoint open x-y paths for some pair at distance
    <= ceil(N**beta), one exiting x + box(ceil(a*N)) and the other
    exiting x + box(ceil(N**alpha))."""
    if not 0 < float(beta) < float(alpha):
        raise GeometryError("beta must lie in (0, alpha)")
    spec = cfg.spec
    box = box_region(spec, (0,) * spec.d, N)
    g = _open_box_subgraph(cfg, box, max_edges)
    ta = large_threshold(a, N)
    talpha = power_threshold(N, alpha)
    tbeta = power_threshold(N, beta)
    steps = _Steps(max_steps)
    for x in g.vertices:
        for y in g.vertices:
            if x == y or linf_distance(x, y) > tbeta:
                continue
            preds = [_exits_box(x, ta), _exits_box(x, talpha)]
            if _role_paths_exist(g, x, y, preds, set(), steps):
                return True
    return False


# ------------------------------------------------------------- event plans


@dataclass(frozen=True)
class EventSpec:
    """Declarative description of one event; run_event turns it into a
    detector call.

    Regions are derived from the parameters: the restricted variants
    confine exploration to the box of radius N, everything else runs in
    working_box(N, c_work).  Exact rational parameters (a, m, c_work)
    may be given as strings like "1/3" and survive config round-trips.
    """

    kind: str
    d: int
    N: Optional[int] = None
    a: Optional[object] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    m: Optional[object] = None
    eps: Optional[float] = None
    cone_k: Optional[object] = None
    legs: Optional[int] = None
    radius: Optional[int] = None
    axis: int = 0
    variant: Optional[str] = None
    restricted: bool = False
    anchors: Tuple[Point, ...] = ()
    c_work: object = 3.0

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise GeometryError(
                "unknown event kind %r (expected one of %s)"
                % (self.kind, ", ".join(EVENT_KINDS))
            )
        if self.d < 1:
            raise GeometryError("d must be >= 1")
        if self.N is not None and self.N < 1:
            raise GeometryError("N must be >= 1")
        if self.a is not None and not 0 < _exact(self.a) < 1:
            raise GeometryError("a must lie in (0, 1)")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise GeometryError("alpha must lie in (0, 1)")
        if self.beta is not None:
            if self.alpha is None or not 0 < self.beta < self.alpha:
                raise GeometryError("beta must lie in (0, alpha)")
        if self.m is not None and _exact(self.m) <= 1:
            raise GeometryError("m must exceed 1")
        if self.eps is not None and not 0 < self.eps < 1:
            raise GeometryError("eps must lie in (0, 1)")
        if self.cone_k is not None and _exact(self.cone_k) <= 1:
            raise GeometryError("cone constant must exceed 1")
        if self.legs is not None and self.legs < 1:
            raise GeometryError("legs must be >= 1")
        if self.radius is not None and self.radius < 1:
            raise GeometryError("radius must be >= 1")
        if _exact(self.c_work) <= 1:
            raise GeometryError("c_work must exceed 1")
        for anchor in self.anchors:
            if len(anchor) != self.d:
                raise GeometryError("anchor %r does not have d=%d coords" % (anchor, self.d))

    def _need(self, *names):
        for name in names:
            if getattr(self, name) in (None, ()):
                raise GeometryError(
                    "event kind %r needs parameter %r" % (self.kind, name)
                )

    def region_for(self, spec):
        """Exploration region implied by the parameters."""
        self._need("N")
        if self.restricted:
            return box_region(spec, (0,) * spec.d, self.N)
        return working_box(spec, self.N, self.c_work)

    def to_config(self):
        """Flat string mapping for the cli config format."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or v == ():
                continue
            if f.name == "anchors":
                out[f.name] = ";".join(",".join(str(c) for c in a) for a in v)
            elif isinstance(v, bool):
                out[f.name] = "true" if v else "false"
            else:
                out[f.name] = str(v)
        return out

    @classmethod
    def from_config(cls, items):
        kw = {}
        for key, raw in items.items():
            if key == "anchors":
                kw[key] = tuple(
                    tuple(int(c) for c in part.split(","))
                    for part in raw.split(";")
                    if part
                )
            elif key in ("d", "N", "legs", "radius", "axis"):
                kw[key] = int(raw)
            elif key in ("alpha", "beta", "eps"):
                kw[key] = float(raw)
            elif key == "restricted":
                kw[key] = raw == "true"
            elif key in ("kind", "variant"):
                kw[key] = raw
            elif key in ("a", "m", "cone_k", "c_work"):
                kw[key] = raw
            else:
                raise GeometryError("unknown event field %r" % key)
        return cls(**kw)


def run_event(event: EventSpec, cfg, budget=DEFAULT_GROW_BUDGET):
    """Evaluate one event sample.  Returns True/False/INDETERMINATE for
    boolean kinds; int/None/INDETERMINATE for t-size; a non-negative int
    for the box statistics (loop-count, extremal)."""
    spec = cfg.spec
    if spec.d != event.d:
        raise GeometryError("configuration dimension does not match the event")
    k = event.kind
    if k == "connected":
        event._need("anchors")
        x, y = event.anchors
        return ev_connected(cfg, x, y, event.region_for(spec), budget=budget)
    if k == "halfspace":
        event._need("anchors", "variant")
        x, y = event.anchors
        box_radius = None
        if event.N is not None:
            box_radius = _ceil_mul(event.m if event.m is not None else event.c_work, event.N)
        return ev_halfspace(
            cfg,
            x,
            y,
            event.variant,
            axis=event.axis,
            box_radius=box_radius,
            cone_k=event.cone_k,
            budget=budget,
        )
    if k == "exit":
        event._need("anchors", "N")
        x, y = event.anchors if len(event.anchors) == 2 else (event.anchors[0], event.anchors[0])
        inner = box_region(spec, (0,) * spec.d, event.N)
        outer_factor = event.m if event.m is not None else event.c_work
        outer = box_region(spec, (0,) * spec.d, _ceil_mul(outer_factor, event.N))
        return ev_exit_connected(cfg, x, y, inner, outer, budget=budget)
    if k == "two-loops":
        event._need("N", "a", "alpha")
        return ev_two_disjoint_loops(cfg, event.N, event.a, event.alpha)
    if k == "f-event":
        event._need("N", "a", "alpha")
        return ev_F(cfg, event.N, event.a, event.alpha)
    if k == "g-event":
        event._need("N", "a", "alpha", "beta")
        return ev_G(cfg, event.N, event.a, event.alpha, event.beta)
    if k == "star":
        event._need("anchors", "legs")
        radius = event.radius
        if radius is None:
            event._need("N", "a")
            radius = large_threshold(event.a, event.N)
        return ev_star(cfg, event.anchors[0], event.legs, radius, budget=budget)
    if k == "boundary-star":
        event._need("anchors", "N", "legs", "a")
        return ev_boundary_star(
            cfg, event.anchors[0], event.N, event.legs, event.a, budget=budget
        )
    if k == "t-size":
        event._need("anchors", "N")
        x, y = event.anchors
        return t_set_size_given_connected(
            cfg, x, y, event.region_for(spec), budget=budget
        )
    if k == "loop-count":
        event._need("N", "a")
        spectrum, _ = loop_clusters_in_box(cfg, event.N, budget=budget)
        return count_large(spectrum, event.a)
    if k == "extremal":
        event._need("N", "a")
        return extremal_point_count(
            cfg, event.N, event.a, event.axis, budget=budget
        )
    raise GeometryError("unhandled event kind %r" % k)


__all__ = [
    "EVENT_KINDS",
    "EventSpec",
    "INDETERMINATE",
    "MAX_SEARCH_EDGES",
    "MAX_SEARCH_STEPS",
    "ScaleError",
    "ev_F",
    "ev_G",
    "ev_boundary_star",
    "ev_connected",
    "ev_exit_connected",
    "ev_halfspace",
    "ev_star",
    "ev_two_disjoint_loops",
    "run_event",
    "t_set_size_given_connected",
    "working_box",
]

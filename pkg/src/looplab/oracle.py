"""Exact ground truth on tiny instances by exhaustive enumeration.

A TinyInstance is a graph of at most 25 edges with an exact rational
edge probability.  Every probability or expectation here is a Fraction
obtained by summing over all 2^E open-edge subsets, so these values
anchor the Monte Carlo detectors and the structural algorithms.

Predicates and statistics take (instance, mask) where bit i of mask
says edge i is open; instance.open_subgraph(mask) gives the explicit
subgraph when structure is needed.  The reference predicates in this
module deliberately use only elementary search (breadth-first
connectivity and exhaustive path enumeration), never the low-link or
flow algorithms they are used to validate.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numba import njit

from .graphcore import OpenSubgraph, bridges_and_components

__all__ = [
    "OracleError",
    "TinyInstance",
    "exact_probability",
    "exact_expectation",
    "brute_connected",
    "brute_two_edge_disjoint",
    "brute_t_set",
    "brute_loop_cluster",
    "brute_disjoint_paths_to_set",
    "bk_check",
    "BkVerdict",
    "equivalence_check",
    "EquivalenceVerdict",
]

MAX_ORACLE_EDGES = 25

# 3^E composed-event scans get slow beyond this
MAX_BK_EDGES = 18


class OracleError(ValueError):
    pass


def _endpoints(key):
    """Endpoints of an edge key: lattice (base, axis) or a vertex pair."""
    a, b = key
    if isinstance(a, tuple) and isinstance(b, int):
        nbr = list(a)
        nbr[b] += 1
        return a, tuple(nbr)
    return a, b


class TinyInstance:
    """An explicit small graph with an exact rational edge probability.

    Edges are lattice keys (base, axis) or abstract vertex pairs; the
    vertex list is the explicitly supplied vertices followed by edge
    endpoints in first-appearance order.
    """

    def __init__(self, name, edges, p, vertices=(), d=None):
        self.name = name
        self.edges = tuple(edges)
        if len(self.edges) > MAX_ORACLE_EDGES:
            raise OracleError(f"{len(self.edges)} edges, oracle cap is {MAX_ORACLE_EDGES}")
        if len(set(self.edges)) != len(self.edges):
            raise OracleError("duplicate edges")
        self.p = Fraction(p)
        if not 0 <= self.p <= 1:
            raise OracleError(f"p must be in [0, 1], got {self.p}")
        self.d = d
        verts = []
        seen = set()
        for v in vertices:
            if v not in seen:
                seen.add(v)
                verts.append(v)
        self.endpoint_pairs = []
        for key in self.edges:
            u, v = _endpoints(key)
            if u == v:
                raise OracleError(f"self-loop edge {key!r}")
            self.endpoint_pairs.append((u, v))
            for w in (u, v):
                if w not in seen:
                    seen.add(w)
                    verts.append(w)
        self.vertices = tuple(verts)

    @property
    def n_edges(self):
        return len(self.edges)

    def open_edge_keys(self, mask):
        return [self.edges[i] for i in range(len(self.edges)) if mask >> i & 1]

    def open_subgraph(self, mask):
        pairs = [self.endpoint_pairs[i] for i in range(len(self.edges)) if mask >> i & 1]
        return OpenSubgraph.from_edges(pairs, vertices=self.vertices)


def _popcount_weights(p, n_edges):
    q = 1 - p
    pk = [Fraction(1)] * (n_edges + 1)
    qk = [Fraction(1)] * (n_edges + 1)
    for k in range(1, n_edges + 1):
        pk[k] = pk[k - 1] * p
        qk[k] = qk[k - 1] * q
    return pk, qk


def exact_probability(inst, event):
    """P[event] summed exactly over all 2^E configurations."""
    e = inst.n_edges
    counts = [0] * (e + 1)
    for mask in range(1 << e):
        if event(inst, mask):
            counts[mask.bit_count()] += 1
    pk, qk = _popcount_weights(inst.p, e)
    return sum((counts[k] * pk[k] * qk[e - k] for k in range(e + 1)), Fraction(0))


def exact_expectation(inst, stat):
    """E[stat] for an integer- or rational-valued statistic of the mask."""
    e = inst.n_edges
    sums = [Fraction(0)] * (e + 1)
    for mask in range(1 << e):
        v = stat(inst, mask)
        if v:
            sums[mask.bit_count()] += Fraction(v)
    pk, qk = _popcount_weights(inst.p, e)
    return sum((sums[k] * pk[k] * qk[e - k] for k in range(e + 1)), Fraction(0))


# ---------------------------------------------------------------------------
# elementary reference searches


def _bfs_reaches(g, src, dst, banned):
    if src == dst:
        return True
    seen = {src}
    stack = [src]
    while stack:
        u = stack.pop()
        for v, key in g.adjacency[u]:
            if v in seen or key in banned:
                continue
            if v == dst:
                return True
            seen.add(v)
            stack.append(v)
    return False


def _exists_disjoint_pair(g, src, dst_first, dst_second):
    """Some simple path src->dst_first whose removal leaves src->dst_second
    reachable; exhaustive over first paths."""
    isrc, i1, i2 = g.index[src], g.index[dst_first], g.index[dst_second]
    visited = {isrc}
    path_edges = []

    def dfs(u):
        if u == i1:
            return _bfs_reaches(g, isrc, i2, set(path_edges))
        for v, key in g.adjacency[u]:
            if v in visited:
                continue
            visited.add(v)
            path_edges.append(key)
            if dfs(v):
                return True
            path_edges.pop()
            visited.discard(v)
        return False

    return dfs(isrc)


def brute_connected(g, x, y):
    """Open path from x to y?  Plain breadth-first search."""
    if x == y:
        return x in g.index
    if x not in g.index or y not in g.index:
        return False
    return _bfs_reaches(g, g.index[x], g.index[y], frozenset())


def brute_two_edge_disjoint(g, x, y):
    """Two edge-disjoint x-y paths exist?  Exhaustive, by trying every
    simple first path and testing leftover connectivity.  x related to
    itself by convention."""
    if x == y:
        return True
    if x not in g.index or y not in g.index:
        return False
    return _exists_disjoint_pair(g, x, y, y)


def brute_t_set(g, x, y):
    """{t : edge-disjoint open t->x and t->y paths exist}; empty when x
    and y are not connected."""
    if x == y:
        raise OracleError("t-set needs two distinct anchors")
    if x not in g.index or y not in g.index:
        return set()
    if not _bfs_reaches(g, g.index[x], g.index[y], frozenset()):
        return set()
    out = {x, y}
    for t in g.vertices:
        if t in out:
            continue
        if _exists_disjoint_pair(g, t, x, y):
            out.add(t)
    return out


def brute_loop_cluster(g, x):
    """{x} plus every y with two edge-disjoint x-y paths."""
    return {y for y in g.vertices if brute_two_edge_disjoint(g, x, y)} | {x}


def brute_disjoint_paths_to_set(g, source, sinks, k, distinct_sinks=False):
    """Exhaustive check for k edge-disjoint paths from source into sinks.

    Enumerates edge-simple walks one path at a time, branching on
    whether a sink hit ends the current path or is passed through.
    Independent of the max-flow machinery on purpose: this is its
    cross-check.  With distinct_sinks the k paths must end at k
    different sinks (shared intermediate visits stay allowed).
    """
    if k < 1:
        raise OracleError("k must be >= 1")
    present = {s for s in sinks if s in g}
    if source in present:
        raise OracleError("source may not be one of the sinks")
    if source not in g:
        return False

    def one_more(used_edges, used_sinks, need):
        if need == 0:
            return True

        local = set()

        def dfs(v):
            for iw, key in g.adjacency[g.index[v]]:
                if key in used_edges or key in local:
                    continue
                w = g.vertices[iw]
                local.add(key)
                if w in present and (not distinct_sinks or w not in used_sinks):
                    if one_more(used_edges | local, used_sinks | {w}, need - 1):
                        return True
                if dfs(w):
                    return True
                local.discard(key)
            return False

        return dfs(source)

    return one_more(frozenset(), frozenset(), k)


# ---------------------------------------------------------------------------
# BK disjoint-occurrence check


@njit(cache=True)
def _composed_masks(a, b):
    # out[m] = 1 iff some submask s of m has a[s] and b[m^s]
    n = a.size
    out = np.zeros(n, dtype=np.uint8)
    for m in range(n):
        s = m
        while True:
            if a[s] and b[m ^ s]:
                out[m] = 1
                break
            if s == 0:
                break
            s = (s - 1) & m
    return out


def _mask_probability(arr, inst):
    e = inst.n_edges
    counts = [0] * (e + 1)
    for m in np.nonzero(arr)[0]:
        counts[int(m).bit_count()] += 1
    pk, qk = _popcount_weights(inst.p, e)
    return sum((counts[k] * pk[k] * qk[e - k] for k in range(e + 1)), Fraction(0))


def _require_increasing(arr, e, label):
    n = 1 << e
    masks = np.arange(n)
    for i in range(e):
        bit = 1 << i
        lower = masks[(masks & bit) == 0]
        if np.any(arr[lower] & ~arr[lower | bit]):
            raise OracleError(f"event {label} is not increasing")


@dataclass(frozen=True)
class BkVerdict:
    ok: bool
    p_composed: Fraction
    p_a: Fraction
    p_b: Fraction


def bk_check(inst, event_a, event_b):
    """Exact disjoint-occurrence inequality check for increasing events.

    Verifies monotonicity of both events over the whole subset lattice,
    evaluates the composed event by witness splitting (for increasing
    events a disjoint witness pair exists iff some submask s has
    event_a(s) and event_b(mask minus s)), and asserts
    P[composed] <= P[a] P[b] and <= min(P[a], P[b]).
    """
    e = inst.n_edges
    if e > MAX_BK_EDGES:
        raise OracleError(f"{e} edges, composed-event cap is {MAX_BK_EDGES}")
    n = 1 << e
    arr_a = np.zeros(n, dtype=np.uint8)
    arr_b = np.zeros(n, dtype=np.uint8)
    for m in range(n):
        arr_a[m] = bool(event_a(inst, m))
        arr_b[m] = bool(event_b(inst, m))
    _require_increasing(arr_a, e, "A")
    _require_increasing(arr_b, e, "B")
    comp = _composed_masks(arr_a, arr_b)
    p_comp = _mask_probability(comp, inst)
    p_a = _mask_probability(arr_a, inst)
    p_b = _mask_probability(arr_b, inst)
    ok = p_comp <= p_a * p_b and p_comp <= min(p_a, p_b)
    return BkVerdict(ok, p_comp, p_a, p_b)


# ---------------------------------------------------------------------------
# equivalence-relation check


@dataclass(frozen=True)
class EquivalenceVerdict:
    ok: bool
    symmetric: bool
    transitive: bool
    matches_components: bool
    n_vertices: int


def equivalence_check(g):
    """The two-edge-disjoint-paths relation on g is an equivalence
    relation whose classes are the bridge-free components.

    The relation matrix is computed in both orders for every pair, so
    symmetry is a genuine test of the search, not a restatement.
    """
    n = g.n_vertices
    rel = [[False] * n for _ in range(n)]
    for i in range(n):
        rel[i][i] = True
        for j in range(n):
            if i != j:
                rel[i][j] = brute_two_edge_disjoint(g, g.vertices[i], g.vertices[j])
    symmetric = all(rel[i][j] == rel[j][i] for i in range(n) for j in range(i + 1, n))
    transitive = all(
        rel[i][k]
        for i in range(n)
        for j in range(n)
        if rel[i][j]
        for k in range(n)
        if rel[j][k]
    )
    bf = bridges_and_components(g)
    comp = bf.component_of
    matches = all(
        rel[i][j] == (comp[i] == comp[j]) for i in range(n) for j in range(i + 1, n)
    )
    return EquivalenceVerdict(
        ok=symmetric and transitive and matches,
        symmetric=symmetric,
        transitive=transitive,
        matches_components=matches,
        n_vertices=n,
    )

"""Open-subgraph machinery: cluster growth, bridges, edge-disjoint paths.

The algorithms in this module run on an explicit OpenSubgraph, which is
small by construction (cluster growth is budgeted, test graphs are
tiny).  Whole-box labeling streams edges through a compiled kernel and
never builds an OpenSubgraph.

Vertices of an OpenSubgraph may be lattice points or any hashable id;
the structural algorithms only ever touch integer indices, so the same
code serves sampled clusters and hand-built test graphs.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .lattice import GeometryError, canonical_edge
from ._kernels import _box_union_labels

__all__ = [
    "GraphError",
    "OpenSubgraph",
    "BridgeForest",
    "ExplicitConfig",
    "MaskedConfig",
    "grow_cluster",
    "full_box_components",
    "BoxLabels",
    "bridges_and_components",
    "max_edge_disjoint_paths",
    "extract_loop",
]

DEFAULT_GROW_BUDGET = 10_000_000

# sites cap for whole-box labeling; two int32 arrays per site
DEFAULT_MAX_BOX_SITES = 1 << 27


class GraphError(ValueError):
    pass


class ExplicitConfig:
    """Openness given by a finite edge list; everything else is closed.

    Edges may be canonical (base, axis) ids or (u, v) endpoint pairs.
    Lets detectors and exploration run on hand-constructed or
    enumerated configurations with the same code path as sampled ones.
    """

    def __init__(self, spec, edges):
        self.spec = spec
        out = set()
        for e in edges:
            u, v = e
            if isinstance(v, tuple):
                out.add(canonical_edge(spec, u, v))
            else:
                out.add((tuple(u), int(v)))
        self.open_edges = frozenset(out)

    def is_open(self, edge):
        base, axis = edge
        if isinstance(axis, tuple):
            base, axis = canonical_edge(self.spec, base, axis)
        return (base, axis) in self.open_edges


class MaskedConfig:
    """View of a configuration with every edge outside ``region`` closed.

    Wrapping does not change outcomes when the region contains everything a
    detector explores; it pins down the finite world when the region is
    smaller, which is what exact enumeration over a small edge set needs.
    """

    __slots__ = ("inner", "region")

    def __init__(self, inner, region):
        self.inner = inner
        self.region = region

    @property
    def spec(self):
        return self.inner.spec

    def is_open(self, edge):
        u, v = edge
        if isinstance(v, tuple):
            a, b = tuple(u), tuple(v)
        else:
            a = tuple(u)
            b = tuple(c + (1 if i == v else 0) for i, c in enumerate(a))
        if not (self.region.contains(a) and self.region.contains(b)):
            return False
        return self.inner.is_open(edge)


class OpenSubgraph:
    """An explicit finite open subgraph.

    vertices[i] is the i-th vertex value, index maps value -> i, and
    adjacency[i] lists (neighbor index, edge key) with every undirected
    edge appearing in both endpoint lists.
    """

    __slots__ = ("vertices", "index", "adjacency", "truncated")

    def __init__(self, vertices, adjacency, truncated=False):
        self.vertices = list(vertices)
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.adjacency = adjacency
        self.truncated = truncated

    @classmethod
    def from_edges(cls, edges, vertices=()):
        """Build from explicit (u, v) pairs; vertex order is first
        appearance (extra isolated vertices may be listed up front)."""
        verts = []
        index = {}

        def vid(v):
            if v not in index:
                index[v] = len(verts)
                verts.append(v)
            return index[v]

        for v in vertices:
            vid(v)
        adjacency = []
        seen = set()
        for u, v in edges:
            if u == v:
                raise GraphError(f"self-loop at {u!r}")
            iu, iv = vid(u), vid(v)
            key = (u, v) if iu < iv else (v, u)
            if key in seen:
                continue
            seen.add(key)
            while len(adjacency) < len(verts):
                adjacency.append([])
            adjacency[iu].append((iv, key))
            adjacency[iv].append((iu, key))
        while len(adjacency) < len(verts):
            adjacency.append([])
        return cls(verts, adjacency)

    def __contains__(self, v):
        return v in self.index

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_edges(self):
        return sum(len(a) for a in self.adjacency) // 2

    def edge_keys(self):
        out = set()
        for arcs in self.adjacency:
            for _, key in arcs:
                out.add(key)
        return out

    def degree(self, v):
        return len(self.adjacency[self.index[v]])


def grow_cluster(cfg, start, region, budget=DEFAULT_GROW_BUDGET):
    """Breadth-first exploration of the open cluster of start in region.

    Every reported vertex is genuinely connected to start.  If the
    vertex budget is exhausted the result is flagged truncated and
    negative connectivity answers are unreliable; nothing is silent.
    """
    spec = cfg.spec
    start = spec.check_point(start)
    if not region.contains(start):
        raise GeometryError(f"start {start!r} outside the exploration region")
    index = {start: 0}
    vertices = [start]
    queue = deque((start,))
    truncated = False
    d = spec.d
    while queue:
        u = queue.popleft()
        for axis in range(d):
            for step in (1, -1):
                v = list(u)
                v[axis] += step
                v = tuple(v)
                if v in index or not region.contains(v):
                    continue
                base = u if step == 1 else v
                if not cfg.is_open((base, axis)):
                    continue
                if len(vertices) >= budget:
                    truncated = True
                    continue
                index[v] = len(vertices)
                vertices.append(v)
                queue.append(v)
    adjacency = [[] for _ in vertices]
    for iu, u in enumerate(vertices):
        for axis in range(d):
            v = list(u)
            v[axis] += 1
            v = tuple(v)
            iv = index.get(v)
            if iv is None:
                continue
            edge = (u, axis)
            if cfg.is_open(edge):
                adjacency[iu].append((iv, edge))
                adjacency[iv].append((iu, edge))
    g = OpenSubgraph.__new__(OpenSubgraph)
    g.vertices = vertices
    g.index = index
    g.adjacency = adjacency
    g.truncated = truncated
    return g


class BoxLabels:
    """Cluster labels for every site of a box, from streamed union-find.

    Labels are the minimal linear site index of each cluster, so they
    are deterministic and comparable across runs.
    """

    __slots__ = ("box", "dims", "strides", "labels")

    def __init__(self, box, labels):
        self.box = box
        self.dims = tuple(h - l + 1 for l, h in zip(box.lo, box.hi))
        strides = [1] * len(self.dims)
        for a in range(len(self.dims) - 2, -1, -1):
            strides[a] = strides[a + 1] * self.dims[a + 1]
        self.strides = tuple(strides)
        self.labels = labels

    def site_index(self, p):
        if not self.box.contains(p):
            raise GeometryError(f"{p!r} outside the labeled box")
        return sum((c - l) * s for c, l, s in zip(p, self.box.lo, self.strides))

    def label_of(self, p):
        return int(self.labels[self.site_index(p)])

    def same_cluster(self, p, q):
        return self.label_of(p) == self.label_of(q)

    def cluster_sizes(self):
        """Map label -> site count."""
        roots, counts = np.unique(self.labels, return_counts=True)
        return {int(r): int(c) for r, c in zip(roots, counts)}


def full_box_components(cfg, box, max_sites=DEFAULT_MAX_BOX_SITES):
    """Label every site of a finite box by its open cluster inside the box.

    Streams all in-box edges once through the hash; memory stays at two
    int32 words per site regardless of the open-edge count.
    """
    if not box.is_finite():
        raise GeometryError("whole-box labeling needs a finite box")
    n = box.site_count()
    if n == 0:
        raise GeometryError("empty box")
    if n > max_sites:
        raise GraphError(f"box has {n} sites, above the cap of {max_sites}")
    lo = np.asarray(box.lo, dtype=np.int64)
    dims = np.asarray([h - l + 1 for l, h in zip(box.lo, box.hi)], dtype=np.int64)
    strides = np.empty_like(dims)
    strides[-1] = 1
    for a in range(len(dims) - 2, -1, -1):
        strides[a] = strides[a + 1] * dims[a + 1]
    labels = _box_union_labels(np.uint64(cfg.seed), float(cfg.p), lo, dims, strides)
    return BoxLabels(box, labels)


class BridgeForest:
    """Bridge decomposition of an OpenSubgraph.

    component_of[i] labels vertex i with its bridge-free component
    (labels count up from 0 in first-vertex order).  Deleting the
    bridges and taking connected components reproduces component_of,
    and the components joined by bridges form a forest.
    """

    __slots__ = ("subgraph", "component_of", "bridges", "tree_adjacency", "n_components", "sizes")

    def __init__(self, subgraph, component_of, bridges, tree_adjacency, n_components, sizes):
        self.subgraph = subgraph
        self.component_of = component_of
        self.bridges = bridges
        self.tree_adjacency = tree_adjacency
        self.n_components = n_components
        self.sizes = sizes

    def label_of(self, v):
        return self.component_of[self.subgraph.index[v]]

    def is_nontrivial(self, label):
        return self.sizes[label] >= 2

    def members(self, label):
        sub = self.subgraph
        return [sub.vertices[i] for i, c in enumerate(self.component_of) if c == label]

    def tree_path(self, a, b):
        """Labels of the unique forest path from component a to b,
        inclusive; None if they lie in different trees."""
        if a == b:
            return [a]
        prev = {a: None}
        queue = deque((a,))
        while queue:
            u = queue.popleft()
            for v, _ in self.tree_adjacency.get(u, ()):
                if v not in prev:
                    prev[v] = u
                    if v == b:
                        path = [b]
                        while path[-1] != a:
                            path.append(prev[path[-1]])
                        path.reverse()
                        return path
                    queue.append(v)
        return None


def bridges_and_components(g):
    """Bridges and bridge-free components of g, by low-link search.

    An edge is a bridge exactly when its removal disconnects its
    endpoints; the remaining components are the classes of the
    "two edge-disjoint connecting paths" relation.
    """
    if g.truncated:
        raise GraphError("bridge structure of a truncated subgraph is not meaningful")
    n = len(g.vertices)
    disc = [-1] * n
    low = [0] * n
    bridges = []
    bridge_ends = []
    timer = 0
    for root in range(n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, None, iter(g.adjacency[root]))]
        while stack:
            u, pkey, it = stack[-1]
            advanced = False
            for v, key in it:
                if key == pkey:
                    continue  # the tree edge back to the parent, once
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, key, iter(g.adjacency[v])))
                    advanced = True
                    break
                if low[u] > disc[v]:
                    low[u] = disc[v]
            if not advanced:
                stack.pop()
                if stack:
                    pu = stack[-1][0]
                    if low[pu] > low[u]:
                        low[pu] = low[u]
                    if low[u] > disc[pu]:
                        bridges.append(pkey)
                        bridge_ends.append((pu, u, pkey))
    bridge_set = set(bridges)
    component_of = [-1] * n
    n_components = 0
    sizes = []
    for i in range(n):
        if component_of[i] != -1:
            continue
        label = n_components
        n_components += 1
        component_of[i] = label
        count = 1
        stack = [i]
        while stack:
            u = stack.pop()
            for v, key in g.adjacency[u]:
                if component_of[v] == -1 and key not in bridge_set:
                    component_of[v] = label
                    count += 1
                    stack.append(v)
        sizes.append(count)
    tree_adjacency = {}
    for iu, iv, key in bridge_ends:
        a, b = component_of[iu], component_of[iv]
        tree_adjacency.setdefault(a, []).append((b, key))
        tree_adjacency.setdefault(b, []).append((a, key))
    return BridgeForest(g, component_of, bridges, tree_adjacency, n_components, sizes)


class _FlowNet:
    """Unit-capacity undirected flow scaffolding over an OpenSubgraph."""

    __slots__ = ("g", "edge_slot", "ends", "flow")

    def __init__(self, g):
        self.g = g
        self.edge_slot = {}
        ends = []
        for iu, arcs in enumerate(g.adjacency):
            for iv, key in arcs:
                if key not in self.edge_slot and iu < iv:
                    self.edge_slot[key] = len(ends)
                    ends.append((iu, iv))
        self.ends = ends
        self.flow = [0] * len(ends)  # signed along the (iu, iv) orientation

    def residual(self, u, e):
        a, _ = self.ends[e]
        f = self.flow[e] if u == a else -self.flow[e]
        return 1 - f

    def push(self, u, e):
        a, _ = self.ends[e]
        self.flow[e] += 1 if u == a else -1

    def augment(self, source_idx, sink_ok):
        """One BFS augmenting path from source to any accepted sink;
        returns the sink index or None."""
        g = self.g
        prev = {source_idx: None}
        queue = deque((source_idx,))
        while queue:
            u = queue.popleft()
            for v, key in g.adjacency[u]:
                e = self.edge_slot[key]
                if v in prev or self.residual(u, e) <= 0:
                    continue
                prev[v] = (u, e)
                if sink_ok(v):
                    w = v
                    while prev[w] is not None:
                        pu, pe = prev[w]
                        self.push(pu, pe)
                        w = pu
                    return v
                queue.append(v)
        return None


def max_edge_disjoint_paths(g, source, sinks, k, distinct_sinks=False):
    """min(k, max number of pairwise edge-disjoint source-to-sink paths).

    Unit-capacity augmentation, stopped at k.  Sinks not present in g
    are unreachable and simply ignored.  With distinct_sinks each sink
    vertex may terminate at most one path (endpoints all different).
    """
    if k < 1:
        raise GraphError(f"k must be >= 1, got {k}")
    if source not in g.index:
        raise GraphError(f"source {source!r} not in subgraph")
    sink_idx = {g.index[s] for s in sinks if s in g.index}
    src = g.index[source]
    if src in sink_idx:
        raise GraphError("source cannot be one of the sinks")
    if not sink_idx:
        return 0
    net = _FlowNet(g)
    used = set()

    def sink_ok(v):
        return v in sink_idx and (not distinct_sinks or v not in used)

    count = 0
    while count < k:
        hit = net.augment(src, sink_ok)
        if hit is None:
            break
        used.add(hit)
        count += 1
    return count


def _consume_path(out_arcs, x, y):
    # walk positive flow arcs from x, erasing cycles as they close
    path = [x]
    pos = {x: 0}
    cur = x
    while cur != y:
        v = out_arcs[cur].pop()
        if v in pos:
            for w in path[pos[v] + 1 :]:
                del pos[w]
            del path[pos[v] + 1 :]
        else:
            path.append(v)
            pos[v] = len(path) - 1
        cur = v
    return path


def extract_loop(g, x, y):
    """An explicit edge-simple closed walk through x and y, or None.

    Exists exactly when two edge-disjoint open x-y paths do; the walk is
    their concatenation (vertices may repeat, edges never).
    """
    if x == y:
        raise GraphError("loop extraction needs two distinct anchor points")
    if x not in g.index or y not in g.index:
        return None
    ix, iy = g.index[x], g.index[y]
    net = _FlowNet(g)
    count = 0
    while count < 2:
        if net.augment(ix, lambda v: v == iy) is None:
            break
        count += 1
    if count < 2:
        return None
    out_arcs = {}
    for e, (a, b) in enumerate(net.ends):
        f = net.flow[e]
        if f == 1:
            out_arcs.setdefault(a, []).append(b)
        elif f == -1:
            out_arcs.setdefault(b, []).append(a)
    first = _consume_path(out_arcs, ix, iy)
    second = _consume_path(out_arcs, ix, iy)
    walk = first + second[::-1][1:]
    return [g.vertices[i] for i in walk]

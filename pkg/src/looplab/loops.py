"""Loop-cluster decomposition and statistics.

Two sites of an open subgraph lie in the same loop-cluster when they are
joined by two edge-disjoint open paths.  Equivalently (and this is how
everything here computes it) the loop-clusters are the connected
components left after deleting every bridge.  This module turns that
partition into box-level statistics: diameter spectra, large-cluster
counts, volumes, half-space extremal points, and the set of sites lying
"between" two connected sites in the bridge forest.

Box decompositions run through compiled kernels for hash-backed
configurations and through the plain Python graph layer for explicit
edge sets; both produce identical labels (the minimal linear site index
of each cluster), so one can cross-check the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from .graphcore import (
    DEFAULT_GROW_BUDGET,
    DEFAULT_MAX_BOX_SITES,
    GraphError,
    OpenSubgraph,
    bridges_and_components,
    grow_cluster,
)
from .lattice import (
    GeometryError,
    Region,
    box_region,
    half_space_region,
    linf_distance,
)
from .sampler import EdgeConfig

Point = Tuple[int, ...]

# Python-engine decompositions walk every site through the interpreter;
# above this many sites the compiled engine is mandatory.
MAX_PYTHON_BOX_SITES = 1 << 20


def large_threshold(a, N):
    """Smallest integer distance that counts as "at least a*N".

    Thresholds are computed in exact rational arithmetic.  A float is
    read as the decimal it prints as (0.2 means 1/5, not the slightly
    larger binary float), so ceil(a*N) never flips on rounding noise;
    strings like "1/3" are also accepted.
    """
    f = Fraction(str(a)) if isinstance(a, float) else Fraction(a)
    if not 0 < f <= 2:
        raise GeometryError("relative threshold must lie in (0, 2]")
    if N < 1:
        raise GeometryError("box radius must be >= 1")
    return math.ceil(f * N)


def power_threshold(N, alpha):
    """Smallest integer distance that counts as "at least N**alpha".

    Snaps to the nearest integer first so that e.g. 8**(1/3) is treated
    as exactly 2 despite float rounding.
    """
    if N < 1:
        raise GeometryError("box radius must be >= 1")
    t = float(N) ** float(alpha)
    r = round(t)
    if abs(t - r) < 1e-9 * max(1.0, abs(t)):
        t = float(r)
    return max(1, math.ceil(t))


@dataclass(frozen=True)
class LoopClusterSummary:
    """One loop-cluster: identity, size, and extent.

    `label` is the minimal linear site index of the cluster within the
    decomposed box (or the bridge-forest label for ad-hoc subgraphs).
    `bbox` is a per-axis (lo, hi) tuple over the member sites and
    `diameter` its largest span, so diameter equals the L-infinity
    diameter of the member set.  `host_label` identifies the ordinary
    (connectivity) cluster containing this loop-cluster, when known.
    For abstract vertex sets without coordinates, bbox and diameter are
    None.
    """

    label: int
    size: int
    bbox: Optional[Tuple[Tuple[int, int], ...]]
    diameter: Optional[int]
    nontrivial: bool
    host_label: Optional[int] = None


@dataclass(frozen=True)
class DiameterSpectrum:
    """Non-increasing diameters of the nontrivial loop-clusters in a box."""

    diameters: Tuple[int, ...]
    N: int
    seed: Optional[int]

    def __post_init__(self):
        prev = None
        for dd in self.diameters:
            if dd < 0 or dd > 2 * self.N:
                raise GeometryError(
                    "spectrum entry %d outside [0, 2N] for N=%d" % (dd, self.N)
                )
            if prev is not None and dd > prev:
                raise GeometryError("spectrum must be non-increasing")
            prev = dd

    def __len__(self):
        return len(self.diameters)


@dataclass(frozen=True)
class VolumeStats:
    """Sizes of the loop-clusters above a diameter threshold.

    When nothing qualifies, count is 0 and the aggregates are None
    rather than a fake zero.
    """

    count: int
    mean_size: Optional[float]
    max_size: Optional[int]


def count_large(spectrum: DiameterSpectrum, a) -> int:
    """Number of nontrivial loop-clusters of diameter >= a*N."""
    t = large_threshold(a, spectrum.N)
    return sum(1 for dd in spectrum.diameters if dd >= t)


def loop_cluster_volume_stats(summaries, a, N) -> VolumeStats:
    t = large_threshold(a, N)
    sizes = [s.size for s in summaries if s.diameter is not None and s.diameter >= t]
    if not sizes:
        return VolumeStats(0, None, None)
    return VolumeStats(len(sizes), sum(sizes) / len(sizes), max(sizes))


def _point_bbox(points):
    it = iter(points)
    first = next(it)
    lo = list(first)
    hi = list(first)
    for p in it:
        for a, c in enumerate(p):
            if c < lo[a]:
                lo[a] = c
            elif c > hi[a]:
                hi[a] = c
    return tuple((lo[a], hi[a]) for a in range(len(lo)))


def _bbox_diameter(bbox):
    return max(h - l for l, h in bbox)


def _is_point(v):
    return isinstance(v, tuple) and all(isinstance(c, int) for c in v)


def loop_cluster_of(g: OpenSubgraph, x):
    """Summary and member set of the loop-cluster of x inside g.

    g must already contain x (grow it first); the cluster is taken
    within the explored subgraph, so the caller controls the ambient
    region through how g was grown.
    """
    if x not in g:
        raise GraphError("vertex %r was not explored" % (x,))
    forest = bridges_and_components(g)
    label = forest.label_of(x)
    members = frozenset(forest.members(label))
    if all(_is_point(v) for v in members):
        bbox = _point_bbox(members)
        diam = _bbox_diameter(bbox)
    else:
        bbox = None
        diam = None
    summary = LoopClusterSummary(
        label=label,
        size=len(members),
        bbox=bbox,
        diameter=diam,
        nontrivial=len(members) >= 2,
    )
    return summary, members


def t_set(g: OpenSubgraph, x, y):
    """Sites t admitting edge-disjoint open connections t->x and t->y.

    Computed as the union of the loop-clusters along the bridge-forest
    path from x's cluster to y's.  Empty when x and y are not connected
    in g.  x and y must both have been explored.
    """
    if x == y:
        raise GraphError("endpoints must differ")
    for v in (x, y):
        if v not in g:
            raise GraphError("vertex %r was not explored" % (v,))
    forest = bridges_and_components(g)
    path = forest.tree_path(forest.label_of(x), forest.label_of(y))
    if path is None:
        return set()
    out = set()
    for label in path:
        out.update(forest.members(label))
    return out


class BoxDecomposition:
    """Full loop-cluster and ordinary-cluster decomposition of a box.

    Holds per-site label arrays (compiled engine) or member dictionaries
    (Python engine) so that member extraction and ordinary-cluster
    diameters can be answered after the fact.  Instances can be large;
    drop them before decomposing the next replica.
    """

    def __init__(self, box, window, N, seed, summaries, backend):
        self.box = box
        self.window = window
        self.N = N
        self.seed = seed
        self.summaries = tuple(summaries)
        self.spectrum = DiameterSpectrum(
            diameters=tuple(
                sorted((s.diameter for s in self.summaries), reverse=True)
            ),
            N=N,
            seed=seed,
        )
        self._backend = backend
        self._ordinary_diameters = None

    def count_large(self, a) -> int:
        return count_large(self.spectrum, a)

    def volume_stats(self, a) -> VolumeStats:
        return loop_cluster_volume_stats(self.summaries, a, self.N)

    def member_sites(self, label) -> Tuple[Point, ...]:
        """Window members of one loop-cluster, lexicographically sorted."""
        return self._backend.member_sites(label)

    def large_cluster_sites(self, a) -> Tuple[Point, ...]:
        """All window sites lying in loop-clusters of diameter >= a*N."""
        t = large_threshold(a, self.N)
        out = []
        for s in self.summaries:
            if s.diameter >= t:
                out.extend(self._backend.member_sites(s.label))
        return tuple(sorted(out))

    def ordinary_diameters(self) -> Tuple[int, ...]:
        """Diameters of the multi-site ordinary clusters in the window,
        non-increasing.  Singleton sites are omitted (diameter 0)."""
        if self._ordinary_diameters is None:
            self._ordinary_diameters = tuple(
                sorted(self._backend.ordinary_diameters(), reverse=True)
            )
        return self._ordinary_diameters

    def ordinary_count_large(self, a) -> int:
        t = large_threshold(a, self.N)
        return sum(1 for dd in self.ordinary_diameters() if dd >= t)

    def two_large_disjoint(self, a, alpha) -> bool:
        """True when some ordinary cluster hosts two distinct nontrivial
        loop-clusters, one of diameter >= a*N and another >= N**alpha."""
        t1 = large_threshold(a, self.N)
        t2 = power_threshold(self.N, alpha)
        lo_t, hi_t = min(t1, t2), max(t1, t2)
        best = {}
        for s in self.summaries:
            top = best.setdefault(s.host_label, [-1, -1])
            if s.diameter > top[0]:
                top[1] = top[0]
                top[0] = s.diameter
            elif s.diameter > top[1]:
                top[1] = s.diameter
        return any(d1 >= hi_t and d2 >= lo_t for d1, d2 in best.values())


class _CompiledBackend:
    def __init__(self, box, labels, comp, dims, strides, wlo, whi):
        self._box = box
        self._labels = labels
        self._comp = comp
        self._dims = dims
        self._strides = strides
        self._wlo = wlo
        self._whi = whi

    def _decode(self, idx):
        lo = self._box.lo
        out = []
        rem = int(idx)
        for a in range(len(self._dims)):
            o, rem = divmod(rem, int(self._strides[a]))
            out.append(lo[a] + o)
        return tuple(out)

    def _window_mask(self, site_idx):
        # keep only sites whose offsets fall inside the window
        rem = site_idx.astype(np.int64)
        ok = np.ones(site_idx.shape, dtype=bool)
        for a in range(len(self._dims)):
            o = rem // self._strides[a]
            rem = rem - o * self._strides[a]
            ok &= (o >= self._wlo[a]) & (o <= self._whi[a])
        return ok

    def member_sites(self, label):
        idx = np.nonzero(self._labels == np.int32(label))[0]
        idx = idx[self._window_mask(idx)]
        return tuple(self._decode(i) for i in idx)

    def ordinary_diameters(self):
        return _array_multi_diameters(
            self._comp, self._dims, self._strides, self._wlo, self._whi
        )[1]


class _PythonBackend:
    def __init__(self, members, ordinary_diams):
        self._members = members
        self._ordinary = tuple(ordinary_diams)

    def member_sites(self, label):
        return tuple(sorted(self._members[label]))

    def ordinary_diameters(self):
        return self._ordinary


def _box_arrays(box):
    d = len(box.lo)
    dims = np.array([box.hi[a] - box.lo[a] + 1 for a in range(d)], dtype=np.int64)
    strides = np.empty(d, dtype=np.int64)
    acc = 1
    for a in range(d - 1, -1, -1):
        strides[a] = acc
        acc *= dims[a]
    lo = np.array(box.lo, dtype=np.int64)
    return lo, dims, strides


def _array_multi_diameters(arr, dims, strides, wlo, whi):
    """Roots, diameters, and sizes of the multi-member label groups of a
    per-site label array, restricted to the window."""
    from ._kernels import _slot_aggregates

    uniq, counts = np.unique(arr, return_counts=True)
    keep = uniq[counts >= 2]
    n = arr.size
    compact = np.full(n, -1, dtype=np.int32)
    compact[keep] = np.arange(len(keep), dtype=np.int32)
    slots = compact[arr]
    size, alo, ahi = _slot_aggregates(slots, len(keep), strides, len(dims), wlo, whi)
    present = size > 0
    diams = (ahi - alo).max(axis=1)
    return keep[present], tuple(int(x) for x in diams[present]), size[present]


def _decompose_compiled(cfg, box, window, max_sites):
    from ._kernels import (
        _bridges_by_lowlink,
        _build_csr,
        _collect_open_edges,
        _labels_skipping_bridges,
        _slot_aggregates,
    )

    n = box.site_count()
    if n > max_sites:
        raise GraphError("box holds %d sites, above the cap %d" % (n, max_sites))
    lo, dims, strides = _box_arrays(box)
    d = len(box.lo)

    worst = sum(int(n) // int(dims[a]) * (int(dims[a]) - 1) for a in range(d))
    if worst <= 1 << 24:
        cap = max(worst, 1)
    else:
        # mean + many sigmas of the binomial open-edge count
        mean = worst * cfg.p
        cap = min(worst, int(mean * 1.15 + 6.0 * math.sqrt(mean + 1.0) + 1024))
    while True:
        ea, eb, cnt = _collect_open_edges(
            np.uint64(cfg.seed), float(cfg.p), lo, dims, strides, cap
        )
        if cnt >= 0:
            break
        cap = min(worst, cap * 2)
    ea = ea[:cnt].copy()
    eb = eb[:cnt].copy()

    off, adj_nbr, adj_eid = _build_csr(n, ea, eb, cnt)
    comp, is_bridge = _bridges_by_lowlink(n, off, adj_nbr, adj_eid, cnt)
    del off, adj_nbr, adj_eid
    labels = _labels_skipping_bridges(n, ea, eb, cnt, is_bridge)
    del ea, eb, is_bridge

    wlo = np.array([window[a][0] for a in range(d)], dtype=np.int64)
    whi = np.array([window[a][1] for a in range(d)], dtype=np.int64)

    uniq, counts = np.unique(labels, return_counts=True)
    keep = uniq[counts >= 2]
    compact = np.full(n, -1, dtype=np.int32)
    compact[keep] = np.arange(len(keep), dtype=np.int32)
    slots = compact[labels]
    del compact
    size, alo, ahi = _slot_aggregates(slots, len(keep), strides, d, wlo, whi)
    del slots

    summaries = []
    for k, root in enumerate(keep):
        if size[k] == 0:
            continue
        bbox = tuple(
            (box.lo[a] + int(alo[k, a]), box.lo[a] + int(ahi[k, a]))
            for a in range(d)
        )
        summaries.append(
            LoopClusterSummary(
                label=int(root),
                size=int(size[k]),
                bbox=bbox,
                diameter=_bbox_diameter(bbox),
                nontrivial=True,
                host_label=int(comp[int(root)]),
            )
        )
    backend = _CompiledBackend(box, labels, comp, dims, strides, wlo, whi)
    return summaries, backend


def _decompose_python(cfg, box, window, budget):
    n = box.site_count()
    if n > MAX_PYTHON_BOX_SITES:
        raise GraphError(
            "box holds %d sites; use the compiled engine above %d"
            % (n, MAX_PYTHON_BOX_SITES)
        )
    lo, dims, strides = _box_arrays(box)
    d = len(box.lo)

    def site_index(p):
        return sum((p[a] - box.lo[a]) * int(strides[a]) for a in range(d))

    def in_window(p):
        return all(
            window[a][0] <= p[a] - box.lo[a] <= window[a][1] for a in range(d)
        )

    visited = set()
    records = []
    ordinary_diams = []
    for pt in box.iter_points():
        if pt in visited:
            continue
        g = grow_cluster(cfg, pt, box, budget=budget)
        if g.truncated:
            raise GraphError("budget exhausted while decomposing the box")
        visited.update(g.vertices)
        host = min(site_index(v) for v in g.vertices)
        if g.n_vertices >= 2:
            win = [v for v in g.vertices if in_window(v)]
            if win:
                ordinary_diams.append(_bbox_diameter(_point_bbox(win)))
        forest = bridges_and_components(g)
        for lbl in range(forest.n_components):
            if forest.sizes[lbl] < 2:
                continue
            members = forest.members(lbl)
            root = min(site_index(v) for v in members)
            win = frozenset(v for v in members if in_window(v))
            if not win:
                continue
            records.append((root, win, host))

    records.sort(key=lambda r: r[0])
    summaries = []
    members_by_label = {}
    for root, win, host in records:
        bbox = _point_bbox(win)
        summaries.append(
            LoopClusterSummary(
                label=root,
                size=len(win),
                bbox=bbox,
                diameter=_bbox_diameter(bbox),
                nontrivial=True,
                host_label=host,
            )
        )
        members_by_label[root] = win
    backend = _PythonBackend(members_by_label, ordinary_diams)
    return summaries, backend


def box_decomposition(
    cfg,
    box: Region,
    mode="restricted",
    ambient_factor=2.0,
    engine="auto",
    max_sites=DEFAULT_MAX_BOX_SITES,
    budget=DEFAULT_GROW_BUDGET,
) -> BoxDecomposition:
    """Decompose the configuration restricted to a box into loop-clusters.

    mode="restricted" (the default) considers only edges with both ends
    in the box.  mode="ambient" approximates the decomposition of the
    infinite configuration by working in the box inflated by
    ambient_factor and reporting each cluster's intersection with the
    original box (nontriviality is judged in the inflated box, so an
    entry can have size 1 and diameter 0 there).
    """
    if not isinstance(box, Region):
        raise GeometryError("box must be a Region")
    if not box.is_finite() or box.is_empty():
        raise GeometryError("box must be finite and non-empty")
    spec = cfg.spec
    spec.check_point(box.lo)
    spec.check_point(box.hi)
    d = spec.d
    if len(box.lo) != d:
        raise GeometryError("box dimension does not match the lattice")
    N = max(
        (box.hi[a] - box.lo[a] + 1) // 2 for a in range(d)
    )
    N = max(N, 1)

    if mode == "restricted":
        work = box
        window = tuple((0, box.hi[a] - box.lo[a]) for a in range(d))
    elif mode == "ambient":
        if ambient_factor < 1.0:
            raise GeometryError("ambient_factor must be >= 1")
        extra = math.ceil((float(ambient_factor) - 1.0) * N)
        work = Region(
            tuple(c - extra for c in box.lo), tuple(c + extra for c in box.hi)
        )
        spec.check_point(work.lo)
        spec.check_point(work.hi)
        window = tuple(
            (extra, extra + box.hi[a] - box.lo[a]) for a in range(d)
        )
    else:
        raise GeometryError("mode must be 'restricted' or 'ambient'")

    if engine == "auto":
        engine = "compiled" if isinstance(cfg, EdgeConfig) else "python"
    if engine == "compiled":
        if not isinstance(cfg, EdgeConfig):
            raise GraphError("compiled engine needs a hash-backed configuration")
        summaries, backend = _decompose_compiled(cfg, work, window, max_sites)
        seed = cfg.seed
    elif engine == "python":
        summaries, backend = _decompose_python(cfg, work, window, budget)
        seed = cfg.seed if isinstance(cfg, EdgeConfig) else None
    else:
        raise GeometryError("engine must be 'auto', 'compiled', or 'python'")

    return BoxDecomposition(box, window, N, seed, summaries, backend)


def loop_clusters_in_box(cfg, N, mode="restricted", **kwargs):
    """Diameter spectrum and summaries of the loop-clusters of the box
    of radius N around the origin.  See box_decomposition for modes."""
    if N < 1:
        raise GeometryError("box radius must be >= 1")
    spec = cfg.spec
    box = box_region(spec, (0,) * spec.d, N)
    dec = box_decomposition(cfg, box, mode=mode, **kwargs)
    return dec.spectrum, list(dec.summaries)


def extremal_point_count(cfg, N, a, axis, budget=DEFAULT_GROW_BUDGET, **kwargs):
    """Number of box sites whose loop-cluster, recomputed with the
    configuration restricted to the upper half-space at the site's own
    coordinate (intersected with the box), still reaches distance a*N.

    Candidates are pre-filtered to sites in box loop-clusters of
    diameter >= a*N: restricting the configuration only shrinks
    loop-clusters, so any qualifying site must pass that filter.
    """
    spec = cfg.spec
    spec.check_axis(axis)
    t = large_threshold(a, N)
    box = box_region(spec, (0,) * spec.d, N)
    dec = box_decomposition(cfg, box, mode="restricted", budget=budget, **kwargs)
    count = 0
    for x in dec.large_cluster_sites(a):
        region = box.intersect(half_space_region(spec, axis, x[axis], side="ge"))
        g = grow_cluster(cfg, x, region, budget=budget)
        if g.truncated:
            raise GraphError("budget exhausted during half-space recheck")
        forest = bridges_and_components(g)
        members = forest.members(forest.label_of(x))
        if any(linf_distance(x, y) >= t for y in members):
            count += 1
    return count


__all__ = [
    "BoxDecomposition",
    "DiameterSpectrum",
    "LoopClusterSummary",
    "MAX_PYTHON_BOX_SITES",
    "VolumeStats",
    "box_decomposition",
    "count_large",
    "extremal_point_count",
    "large_threshold",
    "loop_cluster_of",
    "loop_cluster_volume_stats",
    "loop_clusters_in_box",
    "power_threshold",
    "t_set",
]

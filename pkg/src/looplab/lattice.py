"""Hypercubic lattice geometry: points, edges, axis-aligned regions.

Points are tuples of ints, edges are identified by (base, axis) where
base is the endpoint with the smaller coordinate along the axis.  All
regions used anywhere in this package are products of per-axis integer
intervals, so a single Region class with lower/upper bound vectors
covers boxes, half-spaces, slabs and their intersections.
"""

from __future__ import annotations

from dataclasses import dataclass
import struct

__all__ = [
    "GeometryError",
    "LatticeSpec",
    "Region",
    "box_region",
    "half_space_region",
    "slab_region",
    "neighbors",
    "canonical_edge",
    "serialize_edge",
    "linf_distance",
    "linf_diameter",
    "hausdorff_linf",
]

# Sentinel bound for axes a region does not constrain.  Big enough that no
# validated coordinate can reach it, small enough that arithmetic stays in
# int64 when bounds are handed to compiled kernels.
UNBOUNDED = 1 << 40

# Hard cap on configurable working radius; keeps coordinates in int32 for
# the fixed-width edge serialization.
MAX_WORKING_RADIUS = 1 << 30


class GeometryError(ValueError):
    """Raised for dimension mismatches, bad axes, out-of-range coordinates."""


@dataclass(frozen=True)
class LatticeSpec:
    """Dimension and coordinate validation policy for one lattice.

    Parameters
    ----------
    d : int
        Spatial dimension, >= 1.
    working_radius : int
        Coordinates with any |component| above this are rejected.
    """

    d: int
    working_radius: int = 1 << 20

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 1:
            raise GeometryError(f"dimension must be a positive int, got {self.d!r}")
        if not (1 <= self.working_radius <= MAX_WORKING_RADIUS):
            raise GeometryError(
                f"working_radius must be in [1, {MAX_WORKING_RADIUS}], got {self.working_radius}"
            )

    def check_point(self, p):
        if len(p) != self.d:
            raise GeometryError(f"point {p!r} has dimension {len(p)}, lattice has d={self.d}")
        for c in p:
            if abs(c) > self.working_radius:
                raise GeometryError(
                    f"coordinate out of range: {c} exceeds working radius {self.working_radius}"
                )
        return tuple(int(c) for c in p)

    def check_axis(self, axis):
        if not 0 <= axis < self.d:
            raise GeometryError(f"axis out of range: {axis} for d={self.d}")
        return int(axis)


def neighbors(spec, p):
    """The 2d lattice neighbors of p, in a fixed documented order.

    Order is axis-major, positive step first:
    p+e0, p-e0, p+e1, p-e1, ...
    """
    p = spec.check_point(p)
    out = []
    for axis in range(spec.d):
        for step in (1, -1):
            q = list(p)
            q[axis] += step
            out.append(tuple(q))
    return out


def canonical_edge(spec, u, v):
    """Canonical (base, axis) id of the edge between adjacent u, v.

    base is whichever endpoint has the smaller coordinate along the one
    axis where u and v differ.  Raises GeometryError if u, v are not
    lattice neighbors.
    """
    u = spec.check_point(u)
    v = spec.check_point(v)
    axis = -1
    for i in range(spec.d):
        delta = v[i] - u[i]
        if delta == 0:
            continue
        if abs(delta) != 1 or axis >= 0:
            raise GeometryError(f"not adjacent: {u!r} and {v!r}")
        axis = i
    if axis < 0:
        raise GeometryError(f"not adjacent: {u!r} and {v!r} (equal points)")
    base = u if u[axis] < v[axis] else v
    return (base, axis)


def serialize_edge(spec, edge):
    """Canonical fixed-width byte serialization of an edge id.

    Layout: d coordinates of the base point as little-endian int32
    (two's complement), then the axis as one byte.  This layout is part
    of the reproducibility contract: the sampler hashes exactly these
    bytes, so seeds reproduce bit-for-bit across platforms.
    """
    base, axis = edge
    base = spec.check_point(base)
    axis = spec.check_axis(axis)
    return struct.pack("<%di" % spec.d, *base) + bytes([axis])


class Region:
    """Product of per-axis closed integer intervals [lo[i], hi[i]].

    Covers every region shape needed here: boxes, half-spaces, slabs,
    and any intersection of those.  Unconstrained axes use +-UNBOUNDED.
    """

    __slots__ = ("d", "lo", "hi")

    def __init__(self, lo, hi):
        lo = tuple(int(x) for x in lo)
        hi = tuple(int(x) for x in hi)
        if len(lo) != len(hi):
            raise GeometryError("bound vectors differ in length")
        self.d = len(lo)
        self.lo = lo
        self.hi = hi

    def contains(self, p):
        if len(p) != self.d:
            raise GeometryError(f"point {p!r} has dimension {len(p)}, region has d={self.d}")
        return all(self.lo[i] <= p[i] <= self.hi[i] for i in range(self.d))

    def intersect(self, other):
        if other.d != self.d:
            raise GeometryError("cannot intersect regions of different dimension")
        return Region(
            [max(a, b) for a, b in zip(self.lo, other.lo)],
            [min(a, b) for a, b in zip(self.hi, other.hi)],
        )

    def is_empty(self):
        return any(l > h for l, h in zip(self.lo, self.hi))

    def is_finite(self):
        return all(-UNBOUNDED < l and h < UNBOUNDED for l, h in zip(self.lo, self.hi))

    def site_count(self):
        if self.is_empty():
            return 0
        if not self.is_finite():
            raise GeometryError("site_count of an unbounded region")
        n = 1
        for l, h in zip(self.lo, self.hi):
            n *= h - l + 1
        return n

    def iter_points(self):
        """All points of a finite region, lexicographic order."""
        if not self.is_finite():
            raise GeometryError("cannot enumerate an unbounded region")
        if self.is_empty():
            return
        import itertools

        ranges = [range(l, h + 1) for l, h in zip(self.lo, self.hi)]
        for p in itertools.product(*ranges):
            yield p

    def __repr__(self):
        return f"Region(lo={self.lo}, hi={self.hi})"

    def __eq__(self, other):
        return isinstance(other, Region) and self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))


def box_region(spec, center, radius):
    """Closed L-infinity ball: side length 2*radius+1 around center."""
    center = spec.check_point(center)
    if radius < 0:
        raise GeometryError(f"box radius must be >= 0, got {radius}")
    return Region([c - radius for c in center], [c + radius for c in center])


def half_space_region(spec, axis, threshold, side="ge"):
    """Half-space {x : x[axis] >= threshold} (side='ge') or <= (side='le').

    The boundary wall {x[axis] == threshold} is included either way.
    """
    axis = spec.check_axis(axis)
    lo = [-UNBOUNDED] * spec.d
    hi = [UNBOUNDED] * spec.d
    if side == "ge":
        lo[axis] = int(threshold)
    elif side == "le":
        hi[axis] = int(threshold)
    else:
        raise GeometryError(f"side must be 'ge' or 'le', got {side!r}")
    return Region(lo, hi)


def slab_region(spec, axis, lo, hi):
    """Slab {x : lo <= x[axis] <= hi}, both walls included."""
    axis = spec.check_axis(axis)
    if lo > hi:
        raise GeometryError(f"slab bounds out of order: {lo} > {hi}")
    lovec = [-UNBOUNDED] * spec.d
    hivec = [UNBOUNDED] * spec.d
    lovec[axis] = int(lo)
    hivec[axis] = int(hi)
    return Region(lovec, hivec)


def linf_distance(p, q):
    if len(p) != len(q):
        raise GeometryError("points of different dimension")
    return max(abs(a - b) for a, b in zip(p, q))


def linf_diameter(points):
    """Max L-infinity distance over pairs; equals max per-axis span.

    Empty input raises, a singleton has diameter 0.
    """
    pts = list(points)
    if not pts:
        raise GeometryError("diameter of an empty set")
    d = len(pts[0])
    span = 0
    for i in range(d):
        coords = [p[i] for p in pts]
        span = max(span, max(coords) - min(coords))
    return span


def hausdorff_linf(a, b):
    """Hausdorff distance between finite point sets under L-infinity."""
    a = list(a)
    b = list(b)
    if not a or not b:
        raise GeometryError("hausdorff distance needs two non-empty sets")

    def one_sided(src, dst):
        return max(min(linf_distance(p, q) for q in dst) for p in src)

    return max(one_sided(a, b), one_sided(b, a))

"""Named tiny instances with exact expected values.

Each entry pins one detector against exact enumeration.  An instance is
the set of all lattice edges inside a small region, an event description,
and an exact rational probability (or expectation) computed by summing
over every subset of those edges with brute-force predicates that share
no code with the detectors.  The Monte Carlo side runs the real sampling
pipeline on the same region (edges outside it forced closed), so a
registry check exercises hashing, replica seeding, exploration, and the
detector in one shot; estimates must land within three standard errors
of the registered value.

The shipped JSON file is regenerated by `write_registry`, and
`load_registry` refuses a file whose structural fields disagree with the
in-code definitions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .lattice import LatticeSpec, Region, box_region, linf_distance
from .sampler import EdgeConfig, derive_replica_seed
from .graphcore import ExplicitConfig, MaskedConfig, OpenSubgraph
from .loops import large_threshold, power_threshold
from .events import INDETERMINATE, EventSpec, ev_F, ev_G, run_event
from .oracle import (
    OracleError,
    TinyInstance,
    brute_connected,
    brute_disjoint_paths_to_set,
    brute_loop_cluster,
    brute_t_set,
    exact_expectation,
    exact_probability,
)

__all__ = [
    "DEFAULT_REGISTRY_PATH",
    "REGISTRY_VERSION",
    "InstanceCheck",
    "build_entry",
    "build_registry",
    "instance_names",
    "load_registry",
    "registry_instance",
    "verify_instance",
    "write_registry",
]

REGISTRY_VERSION = 1
DEFAULT_REGISTRY_PATH = Path(__file__).parent / "data" / "oracle_registry.json"

# regions small enough that 2^edges enumeration takes seconds
_BOX1 = {"lo": (-1, -1), "hi": (1, 1)}        # 3x3, 12 edges
_SLAB = {"lo": (-2, 0), "hi": (2, 1)}         # 5x2, 13 edges
_HBOX = {"lo": (0, -1), "hi": (2, 1)}         # 3x3 in the right half-space
_SEG1 = {"lo": (-1,), "hi": (1,)}             # 2 edges
_SEG2 = {"lo": (-2,), "hi": (2,)}             # 4 edges


def _ev(**kw):
    return EventSpec(**kw)


# name, p, region, event, note
_DEFS = [
    # ---- pair connection, restricted and working-region variants
    ("conn-d1-adjacent", "1/2", _SEG1,
     _ev(kind="connected", d=1, N=1, restricted=True, anchors=((0,), (1,))),
     "single edge, probability p"),
    ("conn-d1-span", "2/3", _SEG2,
     _ev(kind="connected", d=1, N=2, restricted=True, anchors=((-2,), (2,))),
     "unique 4-edge path, probability p^4"),
    ("conn-d2-adjacent", "1/2", _BOX1,
     _ev(kind="connected", d=2, N=1, restricted=True, anchors=((0, 0), (1, 0))),
     ""),
    ("conn-d2-diagonal", "1/2", _BOX1,
     _ev(kind="connected", d=2, N=1, restricted=True, anchors=((0, 0), (1, 1))),
     ""),
    ("conn-d2-across", "2/3", _BOX1,
     _ev(kind="connected", d=2, N=1, restricted=True, anchors=((-1, -1), (1, 1))),
     ""),
    ("conn-d2-sparse", "3/10", _BOX1,
     _ev(kind="connected", d=2, N=1, restricted=True, anchors=((0, 0), (1, 1))),
     ""),
    ("conn-d2-working", "1/2", _SLAB,
     _ev(kind="connected", d=2, N=1, restricted=False, c_work="2",
         anchors=((0, 0), (1, 0))),
     "working region larger than the open slab"),
    # ---- half-space pair connection
    ("half-bb-near", "1/2", _HBOX,
     _ev(kind="halfspace", d=2, N=1, m="2", variant="bb",
         anchors=((0, 0), (0, 1)))),
    ("half-bb-sparse", "1/3", _HBOX,
     _ev(kind="halfspace", d=2, N=1, m="2", variant="bb",
         anchors=((0, 0), (0, -1)))),
    ("half-bi-cone", "1/2", _HBOX,
     _ev(kind="halfspace", d=2, N=1, m="2", variant="bi", cone_k="2",
         anchors=((0, 0), (1, 1)))),
    # ---- loop through the anchors leaving the inner box
    ("exit-pair", "1/2", _SLAB,
     _ev(kind="exit", d=2, N=1, m="2", anchors=((0, 0), (1, 0)))),
    ("exit-pair-sparse", "1/3", _SLAB,
     _ev(kind="exit", d=2, N=1, m="2", anchors=((0, 0), (0, 1)))),
    ("exit-bubble", "1/2", _SLAB,
     _ev(kind="exit", d=2, N=1, m="2", anchors=((0, 0),)),
     "coincident anchors: a loop through the point must leave the box"),
    ("exit-bubble-dense", "2/3", _SLAB,
     _ev(kind="exit", d=2, N=1, m="2", anchors=((0, 0),))),
    # ---- two large edge-disjoint loops in one component
    ("twoloops-impossible", "2/3", _BOX1,
     _ev(kind="two-loops", d=2, N=1, a="1/2", alpha=0.5),
     "two vertex-disjoint cycles cannot fit in a 3x3 box: exactly zero"),
    ("twoloops-slab", "1/2", _SLAB,
     _ev(kind="two-loops", d=2, N=2, a="1/4", alpha=0.5)),
    ("twoloops-slab-dense", "2/3", _SLAB,
     _ev(kind="two-loops", d=2, N=2, a="1/4", alpha=0.5)),
    # ---- exhaustive path-tuple events (reference is the detector itself
    # on explicit masks, so these validate sampling + masking, not the
    # search logic; the search has its own unit oracle)
    ("f-easy", "2/3", _BOX1,
     _ev(kind="f-event", d=2, N=1, a="1/2", alpha=0.5)),
    ("f-sparse", "1/2", _BOX1,
     _ev(kind="f-event", d=2, N=1, a="1/2", alpha=0.5)),
    ("g-base", "1/2", _BOX1,
     _ev(kind="g-event", d=2, N=1, a="1/2", alpha=0.5, beta=0.25)),
    ("g-dense", "2/3", _BOX1,
     _ev(kind="g-event", d=2, N=1, a="1/2", alpha=0.5, beta=0.25)),
    # ---- stars: edge-disjoint arms to the box boundary
    ("star-l2", "1/2", _BOX1,
     _ev(kind="star", d=2, legs=2, radius=1, anchors=((0, 0),))),
    ("star-l3", "2/3", _BOX1,
     _ev(kind="star", d=2, legs=3, radius=1, anchors=((0, 0),))),
    ("star-l4", "2/3", _BOX1,
     _ev(kind="star", d=2, legs=4, radius=1, anchors=((0, 0),))),
    ("star-d1", "2/3", _SEG2,
     _ev(kind="star", d=1, legs=2, radius=2, anchors=((0,),)),
     "both 2-edge arms open, probability p^4"),
    # ---- boundary stars: arms from a boundary site to distant sites
    ("bstar-l1", "1/2", _BOX1,
     _ev(kind="boundary-star", d=2, N=1, legs=1, a="1/2", anchors=((-1, 0),))),
    ("bstar-l2", "1/2", _BOX1,
     _ev(kind="boundary-star", d=2, N=1, legs=2, a="1/2", anchors=((-1, 0),))),
    ("bstar-far", "2/3", _SLAB,
     _ev(kind="boundary-star", d=2, N=2, legs=2, a="3/4", anchors=((-2, 0),))),
    # ---- size of the two-sided interior, 0 when not connected
    ("tsize-d1-pair", "1/2", _SEG2,
     _ev(kind="t-size", d=1, N=2, restricted=True, anchors=((-1,), (1,))),
     "3 sites on the unique path, expectation 3 p^2"),
    ("tsize-d1-span", "2/3", _SEG2,
     _ev(kind="t-size", d=1, N=2, restricted=True, anchors=((-2,), (1,))),
     "4 sites on the unique path, expectation 4 p^3"),
    ("tsize-d2-adjacent", "1/2", _BOX1,
     _ev(kind="t-size", d=2, N=1, restricted=True, anchors=((0, 0), (1, 0)))),
    ("tsize-d2-diagonal", "2/3", _BOX1,
     _ev(kind="t-size", d=2, N=1, restricted=True, anchors=((0, 0), (1, 1)))),
    # ---- box statistics: large-loop-cluster counts and half-space
    # extremal points (expectation-valued, like t-size)
    ("loopcount-box", "1/2", _BOX1,
     _ev(kind="loop-count", d=2, N=1, a="1/2"),
     "number of nontrivial loop-clusters of the 3x3 box"),
    ("loopcount-box-dense", "3/4", _BOX1,
     _ev(kind="loop-count", d=2, N=1, a="1/2")),
    ("loopcount-slab-wide", "1/2", _SLAB,
     _ev(kind="loop-count", d=2, N=2, a="3/4"),
     "threshold 2: only loop-clusters spanning two cells count"),
    ("loopcount-d1-zero", "2/3", _SEG2,
     _ev(kind="loop-count", d=1, N=2, a="1/2"),
     "a line has no cycles: exactly zero"),
    ("extremal-box", "1/2", _BOX1,
     _ev(kind="extremal", d=2, N=1, a="1/2", axis=1)),
    ("extremal-box-dense", "2/3", _BOX1,
     _ev(kind="extremal", d=2, N=1, a="1/2", axis=0)),
    ("extremal-d1-zero", "2/3", _SEG2,
     _ev(kind="extremal", d=1, N=2, a="1/2"),
     "loop-clusters on a line are single sites: exactly zero"),
]
_DEFS = [d if len(d) == 5 else (*d, "") for d in _DEFS]


def instance_names():
    return [d[0] for d in _DEFS]


def _region_of(region_dict):
    return Region(tuple(region_dict["lo"]), tuple(region_dict["hi"]))


def _region_edges(spec, region):
    keys = []
    for p in region.iter_points():
        for axis in range(spec.d):
            q = list(p)
            q[axis] += 1
            if region.contains(tuple(q)):
                keys.append((p, axis))
    return keys


def registry_instance(name):
    """(spec, region, event, TinyInstance) for a named definition."""
    for n, p, region_dict, event, _ in _DEFS:
        if n == name:
            spec = LatticeSpec(event.d)
            region = _region_of(region_dict)
            inst = TinyInstance(
                name,
                _region_edges(spec, region),
                Fraction(p),
                vertices=tuple(region.iter_points()),
            )
            return spec, region, event, inst
    raise OracleError("no registry definition named %r" % name)


# --------------------------------------------------- reference predicates
#
# These recompute each event from the open subgraph of a mask using only
# the brute-force oracle helpers (path enumeration, not flows; per-site
# loop clusters, not bridge forests).


def _set_diameter(points):
    pts = list(points)
    return max(
        (linf_distance(u, v) for i, u in enumerate(pts) for v in pts[i + 1:]),
        default=0,
    )


def _components(g):
    comp = {}
    for start in g.vertices:
        if start in comp:
            continue
        stack = [start]
        comp[start] = start
        while stack:
            v = stack.pop()
            for iw, _ in g.adjacency[g.index[v]]:
                w = g.vertices[iw]
                if w not in comp:
                    comp[w] = start
                    stack.append(w)
    return comp


def _box_subgraph(inst, mask, box):
    """Open subgraph of a mask restricted to edges inside a box."""
    pairs = [
        pr
        for i, pr in enumerate(inst.endpoint_pairs)
        if mask >> i & 1 and box.contains(pr[0]) and box.contains(pr[1])
    ]
    verts = [v for v in inst.vertices if box.contains(v)]
    return OpenSubgraph.from_edges(pairs, vertices=verts)


def _loop_cluster_partition(g):
    """Loop-cluster classes of g with at least two members."""
    classes = []
    done = set()
    for v in g.vertices:
        if v in done:
            continue
        cls = brute_loop_cluster(g, v)
        done |= cls
        if len(cls) >= 2:
            classes.append(cls)
    return classes


def _ref_loop_count(g, N, a):
    t = large_threshold(a, N)
    return sum(
        1 for cls in _loop_cluster_partition(g) if _set_diameter(cls) >= t
    )


def _ref_extremal(inst, mask, box, N, a, axis):
    t = large_threshold(a, N)
    count = 0
    for x in inst.vertices:
        if not box.contains(x):
            continue
        pairs = [
            pr
            for i, pr in enumerate(inst.endpoint_pairs)
            if mask >> i & 1
            and box.contains(pr[0]) and box.contains(pr[1])
            and pr[0][axis] >= x[axis] and pr[1][axis] >= x[axis]
        ]
        g = OpenSubgraph.from_edges(pairs, vertices=[x])
        if any(linf_distance(x, y) >= t for y in brute_loop_cluster(g, x)):
            count += 1
    return count


def _ref_two_loops(g, N, a, alpha):
    lo_t, hi_t = sorted((large_threshold(a, N), power_threshold(N, alpha)))
    comp = _components(g)
    by_comp = {}
    for cls in _loop_cluster_partition(g):
        by_comp.setdefault(comp[next(iter(cls))], []).append(_set_diameter(cls))
    for diams in by_comp.values():
        if len(diams) < 2:
            continue
        d1, d2 = sorted(diams, reverse=True)[:2]
        if d1 >= hi_t and d2 >= lo_t:
            return True
    return False


def _reference_predicate(event, spec, region):
    """mask -> exact event value, or None for expectation-valued kinds."""
    k = event.kind
    if k in ("connected", "halfspace"):
        x, y = event.anchors
        return lambda inst, mask: brute_connected(inst.open_subgraph(mask), x, y)
    if k == "exit":
        anchors = event.anchors
        x = anchors[0]
        y = anchors[1] if len(anchors) == 2 else x
        inner = box_region(spec, (0,) * spec.d, event.N)

        def exit_pred(inst, mask):
            g = inst.open_subgraph(mask)
            if x == y:
                reach = brute_loop_cluster(g, x)
            else:
                reach = brute_t_set(g, x, y)
            return any(not inner.contains(t) for t in reach)

        return exit_pred
    if k == "two-loops":
        return lambda inst, mask: _ref_two_loops(
            inst.open_subgraph(mask), event.N, event.a, event.alpha
        )
    if k == "star":
        z = event.anchors[0]
        sinks = [v for v in region.iter_points()
                 if linf_distance(v, z) == event.radius]
        return lambda inst, mask: brute_disjoint_paths_to_set(
            inst.open_subgraph(mask), z, sinks, event.legs
        )
    if k == "boundary-star":
        z = event.anchors[0]
        t = large_threshold(event.a, event.N)
        far = [v for v in region.iter_points() if linf_distance(v, z) >= t]
        return lambda inst, mask: brute_disjoint_paths_to_set(
            inst.open_subgraph(mask), z, far, event.legs, distinct_sinks=True
        )
    if k == "f-event":
        def f_pred(inst, mask):
            cfg = ExplicitConfig(spec, inst.open_edge_keys(mask))
            return ev_F(cfg, event.N, event.a, event.alpha)

        return f_pred
    if k == "g-event":
        def g_pred(inst, mask):
            cfg = ExplicitConfig(spec, inst.open_edge_keys(mask))
            return ev_G(cfg, event.N, event.a, event.alpha, event.beta)

        return g_pred
    if k == "t-size":
        x, y = event.anchors

        def t_stat(inst, mask):
            g = inst.open_subgraph(mask)
            if not brute_connected(g, x, y):
                return 0
            return len(brute_t_set(g, x, y))

        return t_stat
    if k == "loop-count":
        box = box_region(spec, (0,) * spec.d, event.N)
        return lambda inst, mask: _ref_loop_count(
            _box_subgraph(inst, mask, box), event.N, event.a
        )
    if k == "extremal":
        box = box_region(spec, (0,) * spec.d, event.N)
        return lambda inst, mask: _ref_extremal(
            inst, mask, box, event.N, event.a, event.axis
        )
    raise OracleError("no reference predicate for kind %r" % k)


def build_entry(name):
    spec, region, event, inst = registry_instance(name)
    pred = _reference_predicate(event, spec, region)
    if event.kind in ("t-size", "loop-count", "extremal"):
        expected = exact_expectation(inst, pred)
    else:
        expected = exact_probability(inst, pred)
    for n, p, region_dict, ev, note in _DEFS:
        if n == name:
            return {
                "name": name,
                "d": event.d,
                "p": str(Fraction(p)),
                "region": {"lo": list(region.lo), "hi": list(region.hi)},
                "n_sites": region.site_count(),
                "n_edges": inst.n_edges,
                "event": event.to_config(),
                "expected": "%d/%d" % (expected.numerator, expected.denominator),
                "note": note,
            }
    raise OracleError("no registry definition named %r" % name)


def build_registry(names=None):
    entries = [build_entry(n) for n in (names or instance_names())]
    return {"version": REGISTRY_VERSION, "entries": entries}


def write_registry(path=None, names=None):
    path = Path(path) if path is not None else DEFAULT_REGISTRY_PATH
    data = build_registry(names)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    return path


def load_registry(path=None):
    """Shipped entries, cross-checked against the in-code definitions."""
    path = Path(path) if path is not None else DEFAULT_REGISTRY_PATH
    data = json.loads(path.read_text())
    if data.get("version") != REGISTRY_VERSION:
        raise OracleError(
            "registry version %r, this build expects %d"
            % (data.get("version"), REGISTRY_VERSION)
        )
    by_name = {e["name"]: e for e in data["entries"]}
    expected_names = instance_names()
    missing = [n for n in expected_names if n not in by_name]
    if missing or len(by_name) != len(expected_names):
        raise OracleError("registry file does not list the defined instances")
    for name in expected_names:
        entry = by_name[name]
        spec, region, event, inst = registry_instance(name)
        if (
            entry["n_edges"] != inst.n_edges
            or entry["event"] != event.to_config()
            or tuple(entry["region"]["lo"]) != region.lo
            or tuple(entry["region"]["hi"]) != region.hi
            or Fraction(entry["p"]) != inst.p
        ):
            raise OracleError("registry entry %r is stale; regenerate" % name)
    return [by_name[n] for n in expected_names]


# ------------------------------------------------------ sampled validation


@dataclass(frozen=True)
class InstanceCheck:
    name: str
    exact: Fraction
    estimate: float
    se: float
    trials: int
    indeterminate: int

    @property
    def ok(self):
        if self.se == 0.0:
            return self.estimate == float(self.exact)
        return abs(self.estimate - float(self.exact)) <= 3.0 * self.se


def _instance_seed(base_seed, name):
    digest = hashlib.blake2b(name.encode(), digest_size=8).digest()
    return derive_replica_seed(base_seed, int.from_bytes(digest, "little") >> 1)


def verify_instance(entry, replicas=2000, base_seed=20260816):
    """Monte Carlo check of one registry entry through the real pipeline.

    Samples the instance's region at its edge probability with the
    keyed-hash sampler and runs the production detector on each replica.
    """
    spec = LatticeSpec(entry["d"])
    region = Region(tuple(entry["region"]["lo"]), tuple(entry["region"]["hi"]))
    event = EventSpec.from_config(entry["event"])
    exact = Fraction(entry["expected"])
    p = float(Fraction(entry["p"]))
    master = _instance_seed(base_seed, entry["name"])

    total = 0.0
    total_sq = 0.0
    indet = 0
    for r in range(replicas):
        cfg = MaskedConfig(
            EdgeConfig(spec, p, derive_replica_seed(master, r)), region
        )
        out = run_event(event, cfg)
        if out is INDETERMINATE:
            indet += 1
            continue
        if out is None:
            v = 0.0
        elif out is True:
            v = 1.0
        elif out is False:
            v = 0.0
        else:
            v = float(out)
        total += v
        total_sq += v * v
    n = replicas - indet
    if n <= 1:
        raise OracleError("not enough valid replicas for %r" % entry["name"])
    mean = total / n
    var = max(0.0, (total_sq - n * mean * mean) / (n - 1))
    se = (var / n) ** 0.5
    return InstanceCheck(
        name=entry["name"],
        exact=exact,
        estimate=mean,
        se=se,
        trials=n,
        indeterminate=indet,
    )

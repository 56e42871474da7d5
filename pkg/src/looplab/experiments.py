"""Scale-sweep drivers sitting between the detectors and the runner.

Each experiment kind maps a scale to concrete geometry (anchors,
exploration region, thresholds) and draws replicas either through the
compiled reach kernel or through the Python detectors.  The kernel is
never trusted with a subtle event on its own: it prefilters replicas by
a necessary reachability condition, and every flagged replica is then
recomputed exactly by the same detector the oracle registry validates.
Both paths see identical configurations because replica i always draws
its edges from derive_replica_seed(master, i).

All chunk results are Tally values, so checkpointing, resuming and
seed-parallel sharding reduce to Tally.merge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, Optional, Tuple

from .events import (
    DEFAULT_GROW_BUDGET,
    EventSpec,
    INDETERMINATE,
    ev_exit_connected,
    t_set_size_given_connected,
    working_box,
)
from .lattice import GeometryError, LatticeSpec, Region, box_region
from .loops import box_decomposition, extremal_point_count, large_threshold
from .mc import (
    Estimate,
    McError,
    Tally,
    estimate_conditional,
    estimate_probability,
    run_tally,
    sample_reach,
)
from .sampler import EdgeConfig, derive_replica_seed

EXPERIMENT_KINDS = (
    "two-point",
    "restricted",
    "half-space",
    "exit",
    "bubble",
    "loop-count",
    "extremal",
    "volume",
    "t-set",
    "star",
    "e-event",
)

# box decompositions feed three statistics from the same replica
BOX_CHANNELS = ("loop-count", "ordinary-count", "volume-sum")

# channels whose point estimate is a conditional mean, not a probability
_VALUE_CHANNELS = frozenset(
    ("t-set", "extremal", "loop-count", "ordinary-count", "volume-sum")
)

DEFAULT_KERNEL_MAX_SITES = 1 << 22
DEFAULT_RECORD_CAP = 1 << 16
_KERNEL_CHUNK = 1_000_000
_PYTHON_CHUNK = 4096
# sized so one box-statistics chunk decomposes ~1.5e8 sites (about a minute)
_BOX_CHUNK_SITES = 150_000_000


def _exact(x):
    return Fraction(str(x)) if isinstance(x, float) else Fraction(x)


def _ceil_mul(factor, n):
    return int(math.ceil(_exact(factor) * n))


def _param(params, key, default=None):
    if params is None:
        return default
    v = params.get(key, default)
    return default if v is None else v


@dataclass(frozen=True)
class ScaleRun:
    """One channel of one scale: merged tally plus its estimate.

    estimate is None when the tally cannot support one (a conditional
    channel with zero successes); the tally itself still records how
    many replicas were spent, so deep-tail scales stay reportable.
    """

    kind: str
    d: int
    p: float
    scale: int
    channel: str
    estimator: str
    params: Dict[str, object]
    tally: Tally
    estimate: Optional[Estimate]


@dataclass(frozen=True)
class _Plan:
    channels: Tuple[str, ...]
    params: Dict[str, object]
    chunk: int
    run_chunk: Callable


def _absorb(acc, out):
    # same result protocol as run_tally: identity checks, then value
    if out is INDETERMINATE:
        acc[1] += 1
    elif out is True:
        acc[0] += 1
        acc[2] += 1.0
        acc[3] += 1.0
    elif out is False or out is None:
        pass
    else:
        v = float(out)
        acc[0] += 1
        acc[2] += v
        acc[3] += v * v


def _tally(n, acc, master, lo):
    return Tally(
        trials=n,
        successes=acc[0],
        indeterminate=int(acc[1]),
        value_sum=acc[2],
        value_sumsq=acc[3],
        master_seed=master,
        replica_range=((lo, lo + n),),
    )


def _origin(d):
    return (0,) * d


def _axis_point(d, axis, value):
    p = [0] * d
    p[axis] = value
    return tuple(p)


# ------------------------------------------------------------ chunk drivers


def _reach_binary_chunk(spec, channel, region, start, target):
    def run(p, master, lo, n, max_sites):
        s = sample_reach(
            spec.d,
            p,
            master,
            n,
            region,
            start=start,
            targets=(target,),
            early_stop=True,
            max_sites=max_sites or DEFAULT_KERNEL_MAX_SITES,
            rep_lo=lo,
        )
        k = s.hits[0]
        acc = [k, s.hit_indeterminate[0], float(k), float(k)]
        return {channel: _tally(n, acc, master, lo)}

    return run


def _prefiltered_chunk(
    spec, channel, region, start, targets, marker, record, cap, base_indet, recheck
):
    """Kernel prefilter plus exact Python recheck of the flagged replicas.

    The record buffer holds `cap` replica indices; if a block flags more
    candidates than that, the block is split in half and rerun, which is
    deterministic because replica indices are absolute.
    """

    counts = {
        "hits": lambda s: s.hits[0],
        "hits-with-marker": lambda s: s.hits_with_marker[0],
        "marker": lambda s: s.marker_hits,
    }[record]

    def run(p, master, lo, n, max_sites):
        s = sample_reach(
            spec.d,
            p,
            master,
            n,
            region,
            start=start,
            targets=targets,
            marker=marker,
            early_stop=True,
            max_sites=max_sites or DEFAULT_KERNEL_MAX_SITES,
            record=record,
            record_cap=cap,
            rep_lo=lo,
        )
        if counts(s) > len(s.recorded[0]):
            half = n // 2
            left = run(p, master, lo, half, max_sites)
            right = run(p, master, lo + half, n - half, max_sites)
            return {channel: left[channel].merge(right[channel])}
        acc = [0, base_indet(s), 0.0, 0.0]
        for rep in s.recorded[0]:
            cfg = EdgeConfig(spec, p, derive_replica_seed(master, rep))
            _absorb(acc, recheck(cfg))
        return {channel: _tally(n, acc, master, lo)}

    return run


def _box_stats_chunk(spec, box, a, threshold, box_sites):
    def run(p, master, lo, n, max_sites):
        acc = {ch: [0, 0, 0.0, 0.0] for ch in BOX_CHANNELS}
        cap = max_sites or max(box_sites, 2)
        for i in range(lo, lo + n):
            cfg = EdgeConfig(spec, p, derive_replica_seed(master, i))
            dec = box_decomposition(cfg, box, max_sites=cap)
            loops = dec.count_large(a)
            ordinary = dec.ordinary_count_large(a)
            volume = 0
            for summ in dec.summaries:
                if summ.diameter is not None and summ.diameter >= threshold:
                    volume += summ.size
            # label arrays are ~10 bytes/site: free them before the next draw
            del dec, cfg
            _absorb(acc["loop-count"], loops)
            _absorb(acc["ordinary-count"], ordinary)
            _absorb(acc["volume-sum"], volume)
        return {ch: _tally(n, acc[ch], master, lo) for ch in BOX_CHANNELS}

    return run


def _extremal_chunk(spec, scale, a, axis, box_sites):
    def run(p, master, lo, n, max_sites):
        acc = [0, 0, 0.0, 0.0]
        for i in range(lo, lo + n):
            cfg = EdgeConfig(spec, p, derive_replica_seed(master, i))
            # budget exceeds the box population, so growth cannot truncate
            v = extremal_point_count(
                cfg,
                scale,
                a,
                axis,
                budget=box_sites + 1,
                max_sites=max_sites or max(box_sites, 2),
            )
            _absorb(acc, v)
        return {"extremal": _tally(n, acc, master, lo)}

    return run


def _event_chunk(channel, event):
    def run(p, master, lo, n, max_sites):
        return {channel: run_tally(event, p, n, master, rep_lo=lo)}

    return run


# ------------------------------------------------------------ plan builders


def _plan_two_point(spec, scale, params, cap):
    c_work = _param(params, "c_work", 3.0)
    region = working_box(spec, scale, c_work)
    x = _origin(spec.d)
    y = _axis_point(spec.d, 0, scale)
    return _Plan(
        channels=("two-point",),
        params={
            "c_work": c_work,
            "working_radius": int(region.hi[0]),
            "anchors": (x, y),
        },
        chunk=_KERNEL_CHUNK,
        run_chunk=_reach_binary_chunk(spec, "two-point", region, x, y),
    )


def _separated_anchors(d, m, scale):
    if m < 0 or m != int(m):
        raise GeometryError("anchor separation m must be a non-negative integer")
    m = int(m)
    if (m + 1) // 2 > scale:
        raise GeometryError(
            "anchor separation %d does not fit in the box of radius %d"
            % (m, scale)
        )
    return _axis_point(d, 0, -(m // 2)), _axis_point(d, 0, m - m // 2)


def _plan_restricted(spec, scale, params, cap):
    m = _param(params, "m", 2)
    x, y = _separated_anchors(spec.d, m, scale)
    if x == y:
        raise GeometryError("restricted connection needs distinct anchors")
    region = box_region(spec, _origin(spec.d), scale)
    return _Plan(
        channels=("restricted",),
        params={"m": int(m), "anchors": (x, y)},
        chunk=_KERNEL_CHUNK,
        run_chunk=_reach_binary_chunk(spec, "restricted", region, x, y),
    )


def _plan_half_space(spec, scale, params, cap):
    d = spec.d
    cone_k = _param(params, "K")
    factor = _param(params, "m", _param(params, "c_work", 3.0))
    radius = _ceil_mul(factor, scale)
    x = _origin(d)
    if cone_k is None:
        variant = "bb"
        if d < 2:
            raise GeometryError(
                "boundary-boundary half-space connection needs d >= 2"
            )
        y = _axis_point(d, 1, scale)
    else:
        variant = "bi"
        if _exact(cone_k) <= 1:
            raise GeometryError("cone constant K must exceed 1")
        y = _axis_point(d, 0, scale)
    lo = (0,) + (-radius,) * (d - 1)
    hi = (radius,) * d
    region = Region(lo, hi)
    out = {
        "variant": variant,
        "axis": 0,
        "factor": factor,
        "box_radius": radius,
        "anchors": (x, y),
    }
    if cone_k is not None:
        out["K"] = cone_k
    return _Plan(
        channels=("half-space",),
        params=out,
        chunk=_KERNEL_CHUNK,
        run_chunk=_reach_binary_chunk(spec, "half-space", region, x, y),
    )


def _plan_exit(spec, scale, params, cap):
    m = _param(params, "m", 2)
    c_work = _param(params, "c_work", 3.0)
    x, y = _separated_anchors(spec.d, m, scale)
    inner = box_region(spec, _origin(spec.d), scale)
    outer_radius = _ceil_mul(c_work, scale)
    outer = box_region(spec, _origin(spec.d), outer_radius)

    def recheck(cfg):
        return ev_exit_connected(cfg, x, y, inner, outer, budget=DEFAULT_GROW_BUDGET)

    return _Plan(
        channels=("exit",),
        params={
            "m": int(m),
            "c_work": c_work,
            "outer_radius": outer_radius,
            "anchors": (x, y),
        },
        chunk=_KERNEL_CHUNK,
        run_chunk=_prefiltered_chunk(
            spec,
            "exit",
            outer,
            x,
            (y,),
            ("shell", scale + 1),
            "hits-with-marker",
            cap,
            lambda s: s.hits_with_marker_indeterminate[0],
            recheck,
        ),
    )


def _plan_bubble(spec, scale, params, cap):
    d = spec.d
    if d < 2:
        raise GeometryError("the slab loop experiment needs d >= 2")
    factor = _param(params, "m", 2)
    if _exact(factor) <= 1:
        raise GeometryError("half-space box factor m must exceed 1")
    radius = _ceil_mul(factor, scale)
    origin = _origin(d)
    outer = Region((0,) + (-radius,) * (d - 1), (radius,) * d)
    inner = Region(outer.lo, (scale,) + (radius,) * (d - 1))

    def recheck(cfg):
        return ev_exit_connected(
            cfg, origin, origin, inner, outer, budget=DEFAULT_GROW_BUDGET
        )

    return _Plan(
        channels=("bubble",),
        params={"m": factor, "box_radius": radius, "axis": 0},
        chunk=_KERNEL_CHUNK,
        run_chunk=_prefiltered_chunk(
            spec,
            "bubble",
            outer,
            origin,
            (),
            ("depth", scale + 1),
            "marker",
            cap,
            lambda s: s.marker_indeterminate,
            recheck,
        ),
    )


def _plan_t_set(spec, scale, params, cap):
    c_work = _param(params, "c_work", 3.0)
    region = working_box(spec, scale, c_work)
    x = _origin(spec.d)
    y = _axis_point(spec.d, 0, scale)

    def recheck(cfg):
        out = t_set_size_given_connected(cfg, x, y, region)
        if out is None:
            raise McError(
                "kernel reported a connection the detector cannot reproduce"
            )
        return out

    return _Plan(
        channels=("t-set",),
        params={
            "c_work": c_work,
            "working_radius": int(region.hi[0]),
            "anchors": (x, y),
        },
        chunk=_KERNEL_CHUNK,
        run_chunk=_prefiltered_chunk(
            spec,
            "t-set",
            region,
            x,
            (y,),
            None,
            "hits",
            cap,
            lambda s: s.hit_indeterminate[0],
            recheck,
        ),
    )


def _plan_box_stats(spec, scale, params, cap):
    a = _param(params, "a", "1/2")
    threshold = large_threshold(a, scale)
    box = box_region(spec, _origin(spec.d), scale)
    sites = box.site_count()
    return _Plan(
        channels=BOX_CHANNELS,
        params={"a": a, "threshold": threshold},
        chunk=max(1, _BOX_CHUNK_SITES // sites),
        run_chunk=_box_stats_chunk(spec, box, a, threshold, sites),
    )


def _plan_extremal(spec, scale, params, cap):
    a = _param(params, "a", "1/2")
    threshold = large_threshold(a, scale)
    box = box_region(spec, _origin(spec.d), scale)
    sites = box.site_count()
    return _Plan(
        channels=("extremal",),
        params={"a": a, "axis": 0, "threshold": threshold},
        chunk=max(1, _BOX_CHUNK_SITES // (4 * sites)),
        run_chunk=_extremal_chunk(spec, scale, a, 0, sites),
    )


def _plan_star(spec, scale, params, cap):
    legs = int(_param(params, "l", 2))
    event = EventSpec(
        kind="star",
        d=spec.d,
        anchors=(_origin(spec.d),),
        legs=legs,
        radius=scale,
    )
    return _Plan(
        channels=("star",),
        params={"l": legs, "radius": scale},
        chunk=_PYTHON_CHUNK,
        run_chunk=_event_chunk("star", event),
    )


def _plan_e_event(spec, scale, params, cap):
    a = _param(params, "a", "1/2")
    alpha = float(_param(params, "alpha", 0.75))
    beta = _param(params, "beta")
    eps = _param(params, "eps")
    if beta is not None:
        kind = "g-event"
    elif eps is not None:
        # the refined event shares (a, alpha); eps only selects it
        kind = "f-event"
    else:
        kind = "two-loops"
    event = EventSpec(
        kind=kind,
        d=spec.d,
        N=scale,
        a=a,
        alpha=alpha,
        beta=None if beta is None else float(beta),
    )
    out = {"a": a, "alpha": alpha, "event": kind}
    if beta is not None:
        out["beta"] = float(beta)
    if eps is not None:
        out["eps"] = float(eps)
    return _Plan(
        channels=("e-event",),
        params=out,
        chunk=_PYTHON_CHUNK,
        run_chunk=_event_chunk("e-event", event),
    )


_PLANNERS = {
    "two-point": _plan_two_point,
    "restricted": _plan_restricted,
    "half-space": _plan_half_space,
    "exit": _plan_exit,
    "bubble": _plan_bubble,
    "loop-count": _plan_box_stats,
    "volume": _plan_box_stats,
    "extremal": _plan_extremal,
    "t-set": _plan_t_set,
    "star": _plan_star,
    "e-event": _plan_e_event,
}


def _plan(kind, spec, scale, params, record_cap):
    if kind not in _PLANNERS:
        raise GeometryError(
            "unknown experiment kind %r (expected one of %s)"
            % (kind, ", ".join(EXPERIMENT_KINDS))
        )
    if scale != int(scale) or scale < 1:
        raise GeometryError("scale must be a positive integer")
    cap = DEFAULT_RECORD_CAP if record_cap is None else int(record_cap)
    if cap < 1:
        raise McError("record_cap must be >= 1")
    return _PLANNERS[kind](spec, int(scale), params, cap)


def scale_memory_bytes(kind, d, scale, params=None, max_sites=None):
    """Rough peak working-set estimate for one scale of one experiment.

    The runner compares this against the configured memory cap before
    starting a scale.  Box decompositions are charged 48 bytes per box
    site (label, component and scratch arrays); kernel sweeps are
    charged for their hash table and queue."""
    if kind in ("loop-count", "volume", "extremal"):
        sites = (2 * int(scale) + 1) ** d
        return 48 * sites + (1 << 20)
    if kind in ("two-point", "restricted", "half-space", "exit", "bubble", "t-set"):
        ms = max_sites or DEFAULT_KERNEL_MAX_SITES
        table_bits = max(4, int(2 * ms - 1).bit_length())
        return 8 * (1 << table_bits) + 24 * ms + (1 << 20)
    return 1 << 20


def run_experiment_scale(
    kind,
    d,
    p,
    scale,
    params=None,
    *,
    replicas,
    master_seed,
    start=0,
    base=None,
    checkpoint=None,
    chunk=None,
    max_sites=None,
    record_cap=None,
) -> Tuple[ScaleRun, ...]:
    """Drive one experiment kind at one scale over a replica range.

    Runs replicas [start, replicas) in chunks, merging each chunk's
    tallies into the running totals (`base` when resuming, one tally per
    channel).  After every chunk the cumulative tallies and the next
    replica index are handed to `checkpoint`, so an interrupted sweep
    can resume from the last call with identical final records.
    """
    if replicas < 1:
        raise McError("replicas must be >= 1")
    if not 0 <= start <= replicas:
        raise McError("resume point %d outside [0, %d]" % (start, replicas))
    if not 0.0 <= float(p) <= 1.0:
        raise McError("p must lie in [0, 1]")
    spec = LatticeSpec(d)
    plan = _plan(kind, spec, scale, params, record_cap)
    if (base is None) != (start == 0):
        raise McError("resuming needs both a start index and base tallies")
    tallies = None
    if base is not None:
        if set(base) != set(plan.channels):
            raise McError(
                "base tallies carry channels %s, the plan needs %s"
                % (sorted(base), list(plan.channels))
            )
        for ch in plan.channels:
            if base[ch].trials != start:
                raise McError(
                    "base tally for %r covers %d replicas, resume point is %d"
                    % (ch, base[ch].trials, start)
                )
            if base[ch].master_seed != master_seed:
                raise McError("base tallies come from a different master seed")
        tallies = dict(base)
    step_size = plan.chunk if chunk is None else max(1, int(chunk))
    done = start
    while done < replicas:
        n = min(step_size, replicas - done)
        fresh = plan.run_chunk(p, master_seed, done, n, max_sites)
        if tallies is None:
            tallies = fresh
        else:
            tallies = {
                ch: tallies[ch].merge(fresh[ch]) for ch in plan.channels
            }
        done += n
        if checkpoint is not None:
            checkpoint(dict(tallies), done)
    runs = []
    for ch in plan.channels:
        t = tallies[ch]
        estimator = "conditional" if ch in _VALUE_CHANNELS else "probability"
        try:
            if estimator == "conditional":
                est = estimate_conditional(t)
            else:
                est = estimate_probability(t)
        except McError:
            est = None
        runs.append(
            ScaleRun(
                kind=kind,
                d=d,
                p=float(p),
                scale=int(scale),
                channel=ch,
                estimator=estimator,
                params=dict(plan.params),
                tally=t,
                estimate=est,
            )
        )
    return tuple(runs)


def experiment_channels(kind, d, scale, params=None) -> Tuple[str, ...]:
    """Channel names a run of this kind will emit, for checkpoint layout."""
    return _plan(kind, LatticeSpec(d), scale, params, None).channels


__all__ = [
    "BOX_CHANNELS",
    "DEFAULT_KERNEL_MAX_SITES",
    "DEFAULT_RECORD_CAP",
    "EXPERIMENT_KINDS",
    "ScaleRun",
    "experiment_channels",
    "run_experiment_scale",
    "scale_memory_bytes",
]

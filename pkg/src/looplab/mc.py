"""Replica plans, mergeable tallies, and the critical-point calibration.

A plan is (event, p, replicas, master seed); replica i always draws its
configuration from derive_replica_seed(master, i), so any partition of
the replica index range can run anywhere, in any order, and the merged
Tally is bit-identical to a straight-through run.  Estimates never
count an indeterminate replica as a failure: it reduces the effective
trial count and is reported as a fraction.

The compiled reach sampler (sample_reach) answers monotone cluster
questions for millions of replicas without touching the Python graph
layer; run_plan/run_conditional_plan drive the full detector stack and
are the reference the kernel is validated against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._kernels import _reach_batch
from .events import DEFAULT_GROW_BUDGET, INDETERMINATE, EventSpec, run_event
from .graphcore import MaskedConfig
from .lattice import GeometryError, LatticeSpec, Region, box_region
from .sampler import EdgeConfig, derive_replica_seed

__all__ = [
    "Estimate",
    "McError",
    "PcEvaluation",
    "PcInterval",
    "ReachSample",
    "Tally",
    "estimate_conditional",
    "estimate_pc",
    "estimate_probability",
    "merge_tallies",
    "run_conditional_plan",
    "run_plan",
    "run_tally",
    "sample_reach",
]


class McError(ValueError):
    pass


# ------------------------------------------------------------------ tallies


def _normalize_ranges(segments):
    """Sorted, coalesced (lo, hi) segments; error on overlap."""
    segs = sorted(segments)
    out = []
    for lo, hi in segs:
        if lo >= hi:
            raise McError("replica range (%d, %d) is empty" % (lo, hi))
        if out and lo < out[-1][1]:
            raise McError("replica ranges overlap at %d" % lo)
        if out and lo == out[-1][1]:
            out[-1] = (out[-1][0], hi)
        else:
            out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True)
class Tally:
    """Mergeable replica counts for one (event, p, master seed) plan.

    value_sum and value_sumsq accumulate the integer-valued statistic of
    successful replicas in binary64; integer sums stay exact there, so
    merging commutes and associates bit-identically.
    """

    trials: int
    successes: int
    indeterminate: int
    value_sum: float
    value_sumsq: float
    master_seed: int
    replica_range: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        segs = _normalize_ranges(self.replica_range)
        object.__setattr__(self, "replica_range", segs)
        covered = sum(hi - lo for lo, hi in segs)
        if covered != self.trials:
            raise McError(
                "replica ranges cover %d replicas, trials says %d"
                % (covered, self.trials)
            )
        if self.successes < 0 or self.indeterminate < 0:
            raise McError("negative counts")
        if self.successes + self.indeterminate > self.trials:
            raise McError("successes + indeterminate exceed trials")
        if self.value_sumsq < 0:
            raise McError("negative sum of squares")

    def merge(self, other: "Tally") -> "Tally":
        if self.master_seed != other.master_seed:
            raise McError("cannot merge tallies from different master seeds")
        return Tally(
            trials=self.trials + other.trials,
            successes=self.successes + other.successes,
            indeterminate=self.indeterminate + other.indeterminate,
            value_sum=self.value_sum + other.value_sum,
            value_sumsq=self.value_sumsq + other.value_sumsq,
            master_seed=self.master_seed,
            replica_range=self.replica_range + other.replica_range,
        )


def merge_tallies(tallies) -> Tally:
    it = iter(tallies)
    try:
        out = next(it)
    except StopIteration:
        raise McError("nothing to merge") from None
    for t in it:
        out = out.merge(t)
    return out


@dataclass(frozen=True)
class Estimate:
    point: float
    se: float
    trials: int
    indeterminate_fraction: float

    def __post_init__(self):
        if self.se < 0:
            raise McError("negative standard error")


def _wilson_halfwidth(successes, n):
    # 1-sigma Wilson interval half-width; stays informative when the
    # success count is tiny, unlike the normal formula's sqrt(pq/n)
    phat = successes / n
    denom = 1.0 + 1.0 / n
    return math.sqrt(phat * (1.0 - phat) / n + 1.0 / (4.0 * n * n)) / denom


def _binomial_se(successes, n):
    if successes < 30:
        return _wilson_halfwidth(successes, n)
    phat = successes / n
    return math.sqrt(phat * (1.0 - phat) / n)


def estimate_probability(tally: Tally) -> Estimate:
    n = tally.trials - tally.indeterminate
    if n <= 0:
        raise McError("every replica was indeterminate")
    return Estimate(
        point=tally.successes / n,
        se=_binomial_se(tally.successes, n),
        trials=tally.trials,
        indeterminate_fraction=tally.indeterminate / tally.trials,
    )


def estimate_conditional(tally: Tally) -> Estimate:
    """Mean of the statistic given the conditioning event.

    Ratio estimator value_sum / successes; the delta-method standard
    error reduces to the sample SD of the conditioned values over
    sqrt(successes).
    """
    m = tally.successes
    if m <= 0:
        raise McError("no conditioning successes")
    mean = tally.value_sum / m
    if m == 1:
        se = math.inf
    else:
        var = max(0.0, (tally.value_sumsq - tally.value_sum * mean) / (m - 1))
        se = math.sqrt(var / m)
    return Estimate(
        point=mean,
        se=se,
        trials=tally.trials,
        indeterminate_fraction=tally.indeterminate / tally.trials,
    )


# ------------------------------------------------------- detector-level plans


def run_tally(
    event: EventSpec,
    p,
    replicas,
    master_seed,
    rep_lo=0,
    budget=DEFAULT_GROW_BUDGET,
    mask_region: Optional[Region] = None,
) -> Tally:
    """Drive the event detector over a replica range.

    A boolean result feeds successes; an integer-valued result counts as
    a success carrying that value (loop-count and extremal return 0 for
    an empty box, which is a value, not a failure); None is the failed
    conditioning event of the statistic kinds.
    """
    if replicas < 1:
        raise McError("replicas must be >= 1")
    spec = LatticeSpec(event.d)
    successes = 0
    indet = 0
    vsum = 0.0
    vsumsq = 0.0
    for i in range(rep_lo, rep_lo + replicas):
        cfg = EdgeConfig(spec, p, derive_replica_seed(master_seed, i))
        if mask_region is not None:
            cfg = MaskedConfig(cfg, mask_region)
        out = run_event(event, cfg, budget=budget)
        if out is INDETERMINATE:
            indet += 1
        elif out is True:
            successes += 1
            vsum += 1.0
            vsumsq += 1.0
        elif out is False or out is None:
            pass
        else:
            v = float(out)
            successes += 1
            vsum += v
            vsumsq += v * v
    return Tally(
        trials=replicas,
        successes=successes,
        indeterminate=indet,
        value_sum=vsum,
        value_sumsq=vsumsq,
        master_seed=master_seed,
        replica_range=((rep_lo, rep_lo + replicas),),
    )


def run_plan(event: EventSpec, p, replicas, master_seed, **kwargs) -> Estimate:
    return estimate_probability(run_tally(event, p, replicas, master_seed, **kwargs))


def run_conditional_plan(event: EventSpec, p, replicas, master_seed, **kwargs) -> Estimate:
    return estimate_conditional(run_tally(event, p, replicas, master_seed, **kwargs))


# ------------------------------------------------------ compiled reach plans


@dataclass(frozen=True)
class ReachSample:
    """Aggregates from one compiled reach batch.

    Per-target tuples are aligned with the targets argument.  A replica
    that ran out of sites counts in hit_indeterminate for each target it
    had not already reached (a hit is final the moment it happens), in
    marker_indeterminate if the marker had not fired, and in
    hits_with_marker_indeterminate where the joint question "target hit
    and marker fired" was still open.  recorded[j] holds the first
    replica indices satisfying the record condition.
    """

    trials: int
    replica_range: Tuple[Tuple[int, int], ...]
    hits: Tuple[int, ...]
    hit_indeterminate: Tuple[int, ...]
    hits_with_marker: Tuple[int, ...]
    hits_with_marker_indeterminate: Tuple[int, ...]
    marker_hits: int
    marker_indeterminate: int
    truncated: int
    sites_total: int
    recorded: Tuple[Tuple[int, ...], ...]


_RECORD_MODES = {None: 0, "hits": 1, "hits-with-marker": 2, "marker": 3}


def _pack_shifts(region: Region):
    d = len(region.lo)
    shifts = np.zeros(d + 1, dtype=np.int64)
    for a in range(d):
        span = int(region.hi[a] - region.lo[a])
        shifts[a + 1] = shifts[a] + max(1, span.bit_length())
    if shifts[d] > 63:
        raise GeometryError(
            "region needs %d bits per site, the packed key holds 63"
            % shifts[d]
        )
    return shifts


def sample_reach(
    d,
    p,
    master_seed,
    replicas,
    region: Region,
    start=None,
    targets=(),
    marker=None,
    early_stop=False,
    max_sites=1_000_000,
    record=None,
    record_cap=0,
    rep_lo=0,
) -> ReachSample:
    """Grow one cluster per replica inside `region` with the compiled
    sampler and tally monotone questions.

    targets: sites whose cluster membership is asked.  marker: None, or
    ("shell", m) for reaching L-infinity distance >= m from the origin,
    or ("depth", m) for reaching coordinate-0 >= m.  early_stop halts a
    replica once every asked question has fired, which cannot change
    any answer.  record selects which replicas get their indices kept
    (up to record_cap per row) for exact rechecking downstream:
    "hits", "hits-with-marker" (rows follow targets), or "marker".
    """
    spec = LatticeSpec(d)
    if not isinstance(region, Region) or not region.is_finite() or region.is_empty():
        raise GeometryError("region must be a finite non-empty Region")
    if region.d != d:
        raise GeometryError("region dimension does not match d")
    spec.check_point(region.lo)
    spec.check_point(region.hi)
    if not 0.0 <= p <= 1.0:
        raise McError("p must lie in [0, 1]")
    if replicas < 1:
        raise McError("replicas must be >= 1")
    if max_sites < 2 or max_sites > 1 << 30:
        raise McError("max_sites must lie in [2, 2^30]")

    start = tuple(start) if start is not None else (0,) * d
    if not region.contains(start):
        raise GeometryError("start site %r lies outside the region" % (start,))
    tarr = np.empty((len(targets), d), dtype=np.int64)
    for j, t in enumerate(targets):
        t = tuple(t)
        if not region.contains(t):
            raise GeometryError("target %r lies outside the region" % (t,))
        tarr[j] = t

    if marker is None:
        marker_kind, marker_m = 0, 0
    else:
        kind_name, m = marker
        if kind_name == "shell":
            marker_kind = 1
        elif kind_name == "depth":
            marker_kind = 2
        else:
            raise McError("marker kind must be 'shell' or 'depth'")
        marker_m = int(m)
        if marker_m < 1:
            raise McError("marker distance must be >= 1")

    if record not in _RECORD_MODES:
        raise McError("record must be one of %s" % sorted(
            k for k in _RECORD_MODES if k))
    rec_mode = _RECORD_MODES[record]
    if rec_mode in (1, 2) and len(targets) == 0:
        raise McError("record=%r needs targets" % record)
    if rec_mode in (2, 3) and marker is None:
        raise McError("record=%r needs a marker" % record)
    if rec_mode and record_cap < 1:
        raise McError("record_cap must be >= 1 when recording")

    shifts = _pack_shifts(region)
    table_bits = max(4, int(2 * max_sites - 1).bit_length())
    out = _reach_batch(
        np.uint64(master_seed),
        rep_lo,
        rep_lo + replicas,
        float(p),
        np.asarray(start, dtype=np.int64),
        np.asarray(region.lo, dtype=np.int64),
        np.asarray(region.hi, dtype=np.int64),
        shifts,
        tarr,
        marker_kind,
        marker_m,
        bool(early_stop),
        max_sites,
        table_bits,
        rec_mode,
        record_cap,
    )
    hits, indet_hits, both, both_indet, mkc, mki, trunc, sites, rec, rec_n = out
    nrows = len(targets) if rec_mode in (1, 2) else (1 if rec_mode == 3 else 0)
    recorded = tuple(
        tuple(int(r) for r in rec[j, : rec_n[j]]) for j in range(nrows)
    )
    return ReachSample(
        trials=replicas,
        replica_range=((rep_lo, rep_lo + replicas),),
        hits=tuple(int(h) for h in hits),
        hit_indeterminate=tuple(int(h) for h in indet_hits),
        hits_with_marker=tuple(int(h) for h in both),
        hits_with_marker_indeterminate=tuple(int(h) for h in both_indet),
        marker_hits=int(mkc),
        marker_indeterminate=int(mki),
        truncated=int(trunc),
        sites_total=int(sites),
        recorded=recorded,
    )


# --------------------------------------------------- critical-point estimate


@dataclass(frozen=True)
class PcEvaluation:
    p: float
    delta: float
    se: float
    replicas: int
    reach_small: float
    reach_large: float


@dataclass(frozen=True)
class PcInterval:
    """Bisection bracket for the percolation threshold.

    This is a heuristic calibration, not a rigorous estimator: the
    crossing statistic vanishes at criticality only under the one-arm
    scaling ansatz, and finite scales bias the root.  The interval
    width is the bisection tolerance, not a confidence radius.
    """

    lo: float
    hi: float
    d: int
    scale_small: int
    scale_large: int
    tolerance: float
    master_seed: Optional[int]
    evaluations: Tuple[PcEvaluation, ...]

    @property
    def point(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self):
        return self.hi - self.lo


def _one_arm_probability(d, p, radius, eval_master, replicas, rep_lo, max_sites):
    s = sample_reach(
        d,
        p,
        eval_master,
        replicas,
        box_region(LatticeSpec(d), (0,) * d, radius),
        marker=("shell", radius),
        early_stop=True,
        max_sites=max_sites,
    )
    n = s.trials - s.marker_indeterminate
    if n <= 0:
        raise McError("one-arm sampling was all indeterminate")
    return s.marker_hits, n


def _delta_evaluation(d, p, R, R2, rho, eval_master, replicas, max_sites):
    s1, n1 = _one_arm_probability(d, p, R, eval_master, replicas, 0, max_sites)
    s2, n2 = _one_arm_probability(d, p, R2, eval_master, replicas, 0, max_sites)
    p1 = s1 / n1
    p2 = s2 / n2
    delta = p2 - p1 ** rho
    se1 = _binomial_se(s1, n1)
    se2 = _binomial_se(s2, n2)
    # conservative: the two one-arm estimates share replicas and are
    # positively correlated, which this sum ignores
    dsmall = rho * p1 ** (rho - 1.0) * se1 if s1 > 0 else se1
    se = math.sqrt(se2 * se2 + dsmall * dsmall)
    return PcEvaluation(
        p=p, delta=delta, se=se, replicas=replicas,
        reach_small=p1, reach_large=p2,
    )


def estimate_pc(
    d,
    scale_small=6,
    scale_large=12,
    tolerance=1e-3,
    p_lo=None,
    p_hi=None,
    master_seed=20260816,
    replicas_per_eval=20_000,
    max_replicas_per_eval=1_280_000,
    max_sites=1_000_000,
) -> PcInterval:
    """Bracket the threshold by bisecting the crossing statistic
    delta(p) = P[0 reaches the scale_large shell]
             - P[0 reaches the scale_small shell] ** rho,
    rho = log(scale_large)/log(scale_small), which changes sign at
    criticality under the one-arm power-law ansatz.  Subcritical decay
    is exponential, so delta < 0 there; supercritical saturation makes
    delta > 0.  Default scales suit d=7; heuristic, see PcInterval.

    Each evaluation doubles its replica count until the sign of delta
    is 2.5 sigma clear or the cap is hit, then trusts the sign.  Two
    saturation shortcuts keep far-off-critical points cheap and
    well-defined: zero reach successes at both scales reads as
    subcritical (negative), and both one-arm estimates at 0.99 or above
    read as supercritical (positive).  Near those extremes the raw
    delta estimate degenerates toward an unresolvable 0 even though the
    phase is obvious.
    """
    if d < 1:
        raise McError("d must be >= 1")
    if scale_small < 4:
        raise McError("small scale must be >= 4")
    if scale_large < 2 * scale_small:
        raise McError("large scale must be at least twice the small one")
    if tolerance <= 0:
        raise McError("tolerance must be positive")
    if tolerance >= 1:
        return PcInterval(
            lo=0.0, hi=1.0, d=d, scale_small=scale_small,
            scale_large=scale_large, tolerance=tolerance,
            master_seed=None, evaluations=(),
        )
    if p_lo is None:
        p_lo = 0.5 / (2 * d - 1) if d > 1 else 0.25
    if p_hi is None:
        p_hi = min(0.95, 2.5 / (2 * d - 1)) if d > 1 else 0.95
    if not 0.0 <= p_lo < p_hi <= 1.0:
        raise McError("need 0 <= p_lo < p_hi <= 1")

    rho = math.log(scale_large) / math.log(scale_small)
    evals = []
    eval_index = 0

    def measure(p):
        nonlocal eval_index
        eval_master = derive_replica_seed(master_seed, eval_index)
        eval_index += 1
        n = replicas_per_eval
        while True:
            ev = _delta_evaluation(
                d, p, scale_small, scale_large, rho, eval_master, n, max_sites
            )
            certain_pos = ev.reach_small >= 0.99 and ev.reach_large >= 0.99
            certain_neg = ev.reach_large == 0.0 and ev.reach_small == 0.0
            if (
                certain_pos
                or certain_neg
                or abs(ev.delta) >= 2.5 * ev.se
                or n >= max_replicas_per_eval
            ):
                evals.append(ev)
                if certain_pos:
                    return ev, 1
                if certain_neg:
                    return ev, -1
                return ev, (1 if ev.delta > 0.0 else -1)
            n = min(2 * n, max_replicas_per_eval)

    lo_ev, lo_sign = measure(p_lo)
    hi_ev, hi_sign = measure(p_hi)
    if lo_sign >= 0:
        raise McError(
            "initial interval does not bracket the crossing: delta(%g) = %g >= 0"
            % (p_lo, lo_ev.delta)
        )
    if hi_sign <= 0:
        raise McError(
            "initial interval does not bracket the crossing: delta(%g) = %g <= 0"
            % (p_hi, hi_ev.delta)
        )
    lo, hi = p_lo, p_hi
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        _, sign = measure(mid)
        if sign < 0:
            lo = mid
        else:
            hi = mid
    return PcInterval(
        lo=lo, hi=hi, d=d, scale_small=scale_small, scale_large=scale_large,
        tolerance=tolerance, master_seed=master_seed, evaluations=tuple(evals),
    )

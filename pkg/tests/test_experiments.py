"""Driver-level cross-checks against the plain detectors.

The compiled sweep paths are held to exact replica-for-replica equality
with run_tally driving the corresponding detector, not to statistical
agreement: both sides draw replica i from derive_replica_seed(master, i),
so the merged tallies must match field by field.  Statistical tolerance
would hide a prefilter that silently drops candidates.
"""

import pytest

import looplab.experiments as experiments
from looplab.events import EventSpec, ev_exit_connected
from looplab.experiments import (
    BOX_CHANNELS,
    EXPERIMENT_KINDS,
    experiment_channels,
    run_experiment_scale,
    scale_memory_bytes,
)
from looplab.lattice import GeometryError, LatticeSpec, Region, box_region
from looplab.loops import box_decomposition, extremal_point_count, large_threshold
from looplab.mc import McError, Tally, run_tally
from looplab.sampler import EdgeConfig, derive_replica_seed


def _only(runs):
    assert len(runs) == 1
    return runs[0]


def _assert_same_tally(t: Tally, u: Tally):
    assert t.trials == u.trials
    assert t.successes == u.successes
    assert t.indeterminate == u.indeterminate
    assert t.value_sum == u.value_sum
    assert t.value_sumsq == u.value_sumsq
    assert t.replica_range == u.replica_range
    assert t.master_seed == u.master_seed


def _manual_tally(d, p, n, master, fn):
    spec = LatticeSpec(d)
    acc = [0, 0, 0.0, 0.0]
    for i in range(n):
        out = fn(EdgeConfig(spec, p, derive_replica_seed(master, i)))
        if out is True:
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
    return acc


def test_two_point_matches_event_plan():
    run = _only(
        run_experiment_scale(
            "two-point", 2, 0.45, 3,
            {"c_work": 2}, replicas=3000, master_seed=31415,
        )
    )
    spec_event = EventSpec(
        kind="connected", d=2, N=3, anchors=((0, 0), (3, 0)), c_work=2
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.45, 3000, 31415))
    assert run.estimator == "probability"
    assert run.params["working_radius"] == 6
    assert 0.0 < run.estimate.point < 1.0


def test_restricted_matches_event_plan():
    run = _only(
        run_experiment_scale(
            "restricted", 2, 0.55, 2,
            {"m": 2}, replicas=2500, master_seed=901,
        )
    )
    spec_event = EventSpec(
        kind="connected", d=2, N=2, anchors=((-1, 0), (1, 0)), restricted=True
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.55, 2500, 901))


def test_half_space_bb_matches_detector():
    run = _only(
        run_experiment_scale(
            "half-space", 2, 0.5, 2,
            {"m": 2}, replicas=2500, master_seed=77,
        )
    )
    assert run.params["variant"] == "bb"
    assert run.params["box_radius"] == 4
    spec_event = EventSpec(
        kind="halfspace", d=2, N=2, m=2, anchors=((0, 0), (0, 2)), variant="bb"
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.5, 2500, 77))


def test_half_space_bi_matches_detector():
    run = _only(
        run_experiment_scale(
            "half-space", 2, 0.5, 2,
            {"K": 3, "c_work": 2}, replicas=2500, master_seed=78,
        )
    )
    assert run.params["variant"] == "bi"
    spec_event = EventSpec(
        kind="halfspace", d=2, N=2, c_work=2,
        anchors=((0, 0), (2, 0)), variant="bi", cone_k=3,
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.5, 2500, 78))


def test_exit_matches_event_plan():
    run = _only(
        run_experiment_scale(
            "exit", 2, 0.5, 1,
            {"m": 2, "c_work": 2}, replicas=3000, master_seed=555,
        )
    )
    spec_event = EventSpec(
        kind="exit", d=2, N=1, m=2, anchors=((-1, 0), (1, 0))
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.5, 3000, 555))
    assert run.tally.successes > 0


def test_exit_loop_variant_matches_detector():
    # m=0 collapses both anchors to the origin: the exiting-loop event
    spec = LatticeSpec(2)
    inner = box_region(spec, (0, 0), 1)
    outer = box_region(spec, (0, 0), 2)
    run = _only(
        run_experiment_scale(
            "exit", 2, 0.55, 1,
            {"m": 0, "c_work": 2}, replicas=2000, master_seed=556,
        )
    )
    acc = _manual_tally(
        2, 0.55, 2000, 556,
        lambda cfg: ev_exit_connected(cfg, (0, 0), (0, 0), inner, outer),
    )
    assert run.tally.successes == acc[0]
    assert run.tally.indeterminate == acc[1]
    assert run.tally.value_sum == acc[2]


def test_bubble_matches_detector():
    run = _only(
        run_experiment_scale(
            "bubble", 2, 0.55, 1,
            {"m": 2}, replicas=3000, master_seed=808,
        )
    )
    inner = Region((0, -2), (1, 2))
    outer = Region((0, -2), (2, 2))
    acc = _manual_tally(
        2, 0.55, 3000, 808,
        lambda cfg: ev_exit_connected(cfg, (0, 0), (0, 0), inner, outer),
    )
    assert run.tally.successes == acc[0]
    assert run.tally.indeterminate == acc[1]
    assert run.tally.successes > 0


def test_t_set_matches_event_plan():
    run = _only(
        run_experiment_scale(
            "t-set", 2, 0.5, 2,
            {"c_work": 2}, replicas=2000, master_seed=444,
        )
    )
    spec_event = EventSpec(
        kind="t-size", d=2, N=2, anchors=((0, 0), (2, 0)), c_work=2
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.5, 2000, 444))
    assert run.estimator == "conditional"


def test_t_set_on_the_line_is_exact():
    run = _only(
        run_experiment_scale(
            "t-set", 1, 0.6, 3, replicas=1500, master_seed=4242
        )
    )
    # the sites between the anchors are forced, so the mean is scale+1
    assert run.estimate.point == 4.0
    assert run.estimate.se == 0.0
    assert run.tally.successes > 0


def test_box_stats_channels_match_detectors():
    runs = run_experiment_scale(
        "loop-count", 2, 0.55, 2,
        {"a": "1/2"}, replicas=400, master_seed=222,
    )
    assert tuple(r.channel for r in runs) == BOX_CHANNELS
    by_channel = {r.channel: r for r in runs}

    spec = LatticeSpec(2)
    box = box_region(spec, (0, 0), 2)
    t = large_threshold("1/2", 2)
    sums = {ch: 0 for ch in BOX_CHANNELS}
    for i in range(400):
        cfg = EdgeConfig(spec, 0.55, derive_replica_seed(222, i))
        dec = box_decomposition(cfg, box)
        sums["loop-count"] += dec.count_large("1/2")
        sums["ordinary-count"] += dec.ordinary_count_large("1/2")
        sums["volume-sum"] += sum(
            s.size for s in dec.summaries if s.diameter >= t
        )
    for ch in BOX_CHANNELS:
        assert by_channel[ch].tally.trials == 400
        assert by_channel[ch].tally.successes == 400
        assert by_channel[ch].tally.value_sum == float(sums[ch])
        assert by_channel[ch].estimator == "conditional"

    spec_event = EventSpec(kind="loop-count", d=2, N=2, a="1/2")
    _assert_same_tally(
        by_channel["loop-count"].tally, run_tally(spec_event, 0.55, 400, 222)
    )


def test_volume_kind_shares_the_box_driver():
    a = run_experiment_scale(
        "loop-count", 2, 0.5, 2, replicas=150, master_seed=93
    )
    b = run_experiment_scale(
        "volume", 2, 0.5, 2, replicas=150, master_seed=93
    )
    assert tuple(r.channel for r in a) == tuple(r.channel for r in b)
    for ra, rb in zip(a, b):
        _assert_same_tally(ra.tally, rb.tally)
        assert ra.kind == "loop-count" and rb.kind == "volume"


def test_extremal_matches_detector():
    run = _only(
        run_experiment_scale(
            "extremal", 2, 0.55, 2,
            {"a": "1/2"}, replicas=250, master_seed=333,
        )
    )
    acc = _manual_tally(
        2, 0.55, 250, 333,
        lambda cfg: extremal_point_count(cfg, 2, "1/2", 0),
    )
    assert run.tally.successes == acc[0]
    assert run.tally.value_sum == acc[2]
    assert run.tally.value_sumsq == acc[3]


def test_star_matches_event_plan():
    run = _only(
        run_experiment_scale(
            "star", 2, 0.45, 1, {"l": 2}, replicas=800, master_seed=99
        )
    )
    spec_event = EventSpec(
        kind="star", d=2, anchors=((0, 0),), legs=2, radius=1
    )
    _assert_same_tally(run.tally, run_tally(spec_event, 0.45, 800, 99))
    assert 0.0 < run.estimate.point < 1.0


def test_e_event_default_is_two_loops():
    run = _only(
        run_experiment_scale(
            "e-event", 2, 0.6, 2,
            {"a": "1/2", "alpha": 0.75}, replicas=300, master_seed=111,
        )
    )
    assert run.params["event"] == "two-loops"
    spec_event = EventSpec(kind="two-loops", d=2, N=2, a="1/2", alpha=0.75)
    _assert_same_tally(run.tally, run_tally(spec_event, 0.6, 300, 111))


def test_e_event_selection_keys():
    spec = LatticeSpec(2)
    base = {"a": "1/2", "alpha": 0.75}
    assert experiments._plan("e-event", spec, 2, base, None).params["event"] == "two-loops"
    g = experiments._plan("e-event", spec, 2, dict(base, beta=0.5), None)
    assert g.params["event"] == "g-event"
    f = experiments._plan("e-event", spec, 2, dict(base, eps=0.1), None)
    assert f.params["event"] == "f-event"


def test_checkpoint_resume_matches_straight_run():
    kwargs = dict(params={"m": 2, "c_work": 2}, replicas=1200, master_seed=777)
    straight = _only(run_experiment_scale("exit", 2, 0.5, 1, chunk=250, **kwargs))
    again = _only(run_experiment_scale("exit", 2, 0.5, 1, chunk=250, **kwargs))
    _assert_same_tally(straight.tally, again.tally)

    seen = []
    run_experiment_scale(
        "exit", 2, 0.5, 1, chunk=250,
        checkpoint=lambda tallies, done: seen.append((done, tallies)),
        **kwargs,
    )
    assert [done for done, _ in seen] == [250, 500, 750, 1000, 1200]

    done, tallies = seen[2]
    resumed = _only(
        run_experiment_scale(
            "exit", 2, 0.5, 1, chunk=250, start=done, base=tallies, **kwargs
        )
    )
    _assert_same_tally(straight.tally, resumed.tally)
    assert straight.estimate == resumed.estimate


def test_record_cap_overflow_splits_deterministically():
    kwargs = dict(replicas=64, master_seed=2024)
    full = _only(run_experiment_scale("t-set", 1, 0.9, 1, **kwargs))
    tiny = _only(run_experiment_scale("t-set", 1, 0.9, 1, record_cap=4, **kwargs))
    _assert_same_tally(full.tally, tiny.tally)
    assert full.tally.successes > 4


def test_conditional_estimate_is_none_without_successes():
    run = _only(
        run_experiment_scale("t-set", 2, 0.0, 2, replicas=150, master_seed=5)
    )
    assert run.estimate is None
    assert run.tally.trials == 150
    assert run.tally.successes == 0


def test_validation_errors():
    with pytest.raises(GeometryError, match="unknown experiment kind"):
        run_experiment_scale("three-point", 2, 0.5, 2, replicas=10, master_seed=1)
    with pytest.raises(GeometryError, match="d >= 2"):
        run_experiment_scale("bubble", 1, 0.5, 2, replicas=10, master_seed=1)
    with pytest.raises(GeometryError, match="distinct anchors"):
        run_experiment_scale(
            "restricted", 2, 0.5, 2, {"m": 0}, replicas=10, master_seed=1
        )
    with pytest.raises(GeometryError, match="does not fit"):
        run_experiment_scale(
            "exit", 2, 0.5, 2, {"m": 5}, replicas=10, master_seed=1
        )
    with pytest.raises(GeometryError, match="d >= 2"):
        run_experiment_scale("half-space", 1, 0.5, 2, replicas=10, master_seed=1)
    with pytest.raises(GeometryError, match="cone constant"):
        run_experiment_scale(
            "half-space", 2, 0.5, 2, {"K": 1}, replicas=10, master_seed=1
        )
    with pytest.raises(GeometryError, match="positive integer"):
        run_experiment_scale("two-point", 2, 0.5, 0, replicas=10, master_seed=1)
    with pytest.raises(GeometryError, match="m must exceed 1"):
        run_experiment_scale(
            "bubble", 2, 0.5, 2, {"m": 1}, replicas=10, master_seed=1
        )
    with pytest.raises(McError, match="p must lie"):
        run_experiment_scale("two-point", 2, 1.5, 2, replicas=10, master_seed=1)
    with pytest.raises(McError, match="replicas"):
        run_experiment_scale("two-point", 2, 0.5, 2, replicas=0, master_seed=1)
    with pytest.raises(McError, match="resume point"):
        run_experiment_scale(
            "two-point", 2, 0.5, 2, replicas=10, master_seed=1, start=11
        )
    with pytest.raises(McError, match="resuming needs"):
        run_experiment_scale(
            "two-point", 2, 0.5, 2, replicas=10, master_seed=1, start=5
        )
    with pytest.raises(McError, match="record_cap"):
        run_experiment_scale(
            "t-set", 2, 0.5, 2, replicas=10, master_seed=1, record_cap=0
        )


def test_resume_consistency_checks():
    run = _only(
        run_experiment_scale("two-point", 2, 0.5, 2, replicas=100, master_seed=8)
    )
    with pytest.raises(McError, match="covers"):
        run_experiment_scale(
            "two-point", 2, 0.5, 2, replicas=200, master_seed=8,
            start=50, base={"two-point": run.tally},
        )
    with pytest.raises(McError, match="different master seed"):
        run_experiment_scale(
            "two-point", 2, 0.5, 2, replicas=200, master_seed=9,
            start=100, base={"two-point": run.tally},
        )
    with pytest.raises(McError, match="channels"):
        run_experiment_scale(
            "two-point", 2, 0.5, 2, replicas=200, master_seed=8,
            start=100, base={"wrong": run.tally},
        )


def test_experiment_channels_and_memory_estimates():
    assert experiment_channels("loop-count", 2, 3) == BOX_CHANNELS
    assert experiment_channels("volume", 2, 3) == BOX_CHANNELS
    assert experiment_channels("two-point", 2, 3) == ("two-point",)
    assert set(EXPERIMENT_KINDS) == set(experiments._PLANNERS)

    # box statistics dominate and grow with the box; kernel sweeps are flat
    assert scale_memory_bytes("loop-count", 7, 6) > scale_memory_bytes(
        "loop-count", 7, 3
    )
    assert scale_memory_bytes("loop-count", 7, 6) > 2 * 10**9
    assert scale_memory_bytes("two-point", 7, 2) == scale_memory_bytes(
        "two-point", 7, 12
    )
    assert scale_memory_bytes("star", 2, 3) == 1 << 20

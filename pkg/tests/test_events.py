"""Detector semantics on hand-built configurations.

Exact distributional checks live in test_registry; here every expected
value is forced by an explicit edge list or by p in {0, 1}.
"""

import random

import pytest

from looplab.events import (
    EVENT_KINDS,
    EventSpec,
    INDETERMINATE,
    ScaleError,
    ev_F,
    ev_G,
    ev_boundary_star,
    ev_connected,
    ev_exit_connected,
    ev_halfspace,
    ev_star,
    ev_two_disjoint_loops,
    run_event,
    t_set_size_given_connected,
    working_box,
)
from looplab.graphcore import (
    ExplicitConfig,
    GraphError,
    MaskedConfig,
    grow_cluster,
    max_edge_disjoint_paths,
)
from looplab.lattice import GeometryError, LatticeSpec, Region, box_region, linf_distance
from looplab.oracle import brute_disjoint_paths_to_set
from looplab.sampler import EdgeConfig

SPEC2 = LatticeSpec(2)
BOX1 = box_region(SPEC2, (0, 0), 1)
BOX2 = box_region(SPEC2, (0, 0), 2)


def full(p=1.0, seed=7, d=2):
    return EdgeConfig(LatticeSpec(d), p, seed)


def theta_config():
    """Three vertical rails joined along the top and bottom rows: three
    edge-disjoint paths from (0,-1) to (0,1)."""
    edges = []
    for col in (-1, 0, 1):
        edges += [((col, -1), 1), ((col, 0), 1)]
    edges += [((-1, -1), 0), ((0, -1), 0), ((-1, 1), 0), ((0, 1), 0)]
    return ExplicitConfig(SPEC2, edges)


def corner_hooks_config():
    """Two edge-disjoint (-1,-1) -> (0,0) paths, each visiting a site at
    distance 2 from the corner."""
    edges = [
        ((-1, -1), 0), ((0, -1), 0), ((1, -1), 1), ((1, 0), (0, 0)),
        ((-1, -1), 1), ((-1, 0), 1), ((-1, 1), 0), ((0, 0), 1),
    ]
    return ExplicitConfig(SPEC2, edges)


# ------------------------------------------------------------ sentinel


def test_indeterminate_refuses_truth_value():
    with pytest.raises(TypeError):
        bool(INDETERMINATE)
    assert repr(INDETERMINATE) == "INDETERMINATE"
    assert (INDETERMINATE is INDETERMINATE) is True


def test_working_box():
    assert working_box(SPEC2, 4) == box_region(SPEC2, (0, 0), 12)
    assert working_box(SPEC2, 4, c_work="3/2") == box_region(SPEC2, (0, 0), 6)
    with pytest.raises(GeometryError):
        working_box(SPEC2, 0)
    with pytest.raises(GeometryError):
        working_box(SPEC2, 4, c_work=1.0)


# ------------------------------------------------------------ connected


def test_connected_saturated_and_empty():
    assert ev_connected(full(1.0), (0, 0), (1, 1), BOX1) is True
    assert ev_connected(full(0.0), (0, 0), (1, 1), BOX1) is False


def test_connected_region_confines_path():
    # the only open route climbs through row 2
    cfg = ExplicitConfig(
        SPEC2,
        [((0, 0), 1), ((0, 1), 1), ((0, 2), 0), ((1, 1), 1), ((1, 0), 1)],
    )
    low = Region((0, 0), (1, 1))
    assert ev_connected(cfg, (0, 0), (1, 0), low) is False
    tall = Region((0, 0), (1, 2))
    assert ev_connected(cfg, (0, 0), (1, 0), tall) is True


def test_connected_anchor_outside_region_raises():
    with pytest.raises(GraphError):
        ev_connected(full(), (0, 0), (9, 9), BOX1)


def test_connected_witness_survives_truncation():
    big = box_region(SPEC2, (0, 0), 8)
    assert ev_connected(full(1.0), (0, 0), (1, 0), big, budget=4) is True
    out = ev_connected(full(1.0), (0, 0), (8, 8), big, budget=4)
    assert out is INDETERMINATE


# ------------------------------------------------------------ halfspace


def test_halfspace_bb():
    rail = ExplicitConfig(SPEC2, [((0, 0), 1), ((0, 1), 1)])
    assert ev_halfspace(rail, (0, 0), (0, 2), "bb") is True
    assert ev_halfspace(full(0.0), (0, 0), (0, 2), "bb") is False
    with pytest.raises(GeometryError):
        ev_halfspace(rail, (0, 0), (1, 1), "bb")  # y off the wall
    with pytest.raises(GeometryError):
        ev_halfspace(rail, (0, 0), (0, 0), "bb")  # coincident anchors
    with pytest.raises(GeometryError):
        ev_halfspace(rail, (0, 0), (-1, 2), "bb")  # wrong side
    with pytest.raises(GeometryError):
        ev_halfspace(rail, (0, 0), (0, 2), "nope")


def test_halfspace_wall_blocks_detours():
    # the only open route dips to the closed side of the wall
    detour = ExplicitConfig(
        SPEC2, [((-1, 0), 0), ((-1, 0), 1), ((-1, 1), 1), ((-1, 2), 0)]
    )
    assert ev_halfspace(detour, (0, 0), (0, 2), "bb") is False


def test_halfspace_bi_cone():
    hook = ExplicitConfig(SPEC2, [((0, 0), 0), ((1, 0), 1)])
    assert ev_halfspace(hook, (0, 0), (1, 1), "bi", cone_k=2) is True
    with pytest.raises(GeometryError):
        ev_halfspace(hook, (0, 0), (1, 1), "bi")  # cone_k required
    with pytest.raises(GeometryError):
        ev_halfspace(hook, (0, 0), (1, 1), "bi", cone_k=1)
    with pytest.raises(GeometryError):
        # |x-y| = 3 >= 2 * depth(1): outside the cone
        ev_halfspace(full(1.0), (0, 0), (1, 3), "bi", cone_k=2)


def test_halfspace_box_radius_clips():
    with pytest.raises(GraphError):
        ev_halfspace(full(1.0), (0, 0), (0, 3), "bb", box_radius=2)


# ------------------------------------------------------------ exit


def square(base, axis0=0, axis1=1):
    (bx, by) = base
    return [((bx, by), 0), ((bx, by), 1), ((bx + 1, by), 1), ((bx, by + 1), 0)]


def test_exit_pair_requires_leaving_inner():
    direct = ExplicitConfig(SPEC2, [((1, 0), 1)])
    assert ev_exit_connected(direct, (1, 0), (1, 1), BOX1, BOX2) is False
    detour = ExplicitConfig(SPEC2, [((1, 0), 0), ((2, 0), 1), ((1, 1), 0)])
    assert ev_exit_connected(detour, (1, 0), (1, 1), BOX1, BOX2) is True
    both = ExplicitConfig(
        SPEC2, [((1, 0), 1), ((1, 0), 0), ((2, 0), 1), ((1, 1), 0)]
    )
    # the direct edge and the detour form one loop-cluster, so the
    # two-sided interior contains the outside corner sites
    assert ev_exit_connected(both, (1, 0), (1, 1), BOX1, BOX2) is True


def test_exit_bubble_loop_position():
    outer_loop = ExplicitConfig(SPEC2, square((1, 0)))
    assert ev_exit_connected(outer_loop, (1, 0), (1, 0), BOX1, BOX2) is True
    inner_loop = ExplicitConfig(SPEC2, square((0, 0)))
    assert ev_exit_connected(inner_loop, (0, 0), (0, 0), BOX1, BOX2) is False
    bare_path = ExplicitConfig(SPEC2, [((1, 0), 0), ((2, 0), 1)])
    assert ev_exit_connected(bare_path, (1, 0), (1, 0), BOX1, BOX2) is False


def test_exit_validation_and_budget():
    with pytest.raises(GeometryError):
        ev_exit_connected(full(), (0, 0), (0, 0), BOX2, BOX1)
    with pytest.raises(GraphError):
        ev_exit_connected(full(), (2, 2), (0, 0), BOX1, BOX2)
    out = ev_exit_connected(full(1.0), (0, 0), (1, 0), BOX1, BOX2, budget=3)
    assert out is INDETERMINATE


def test_exit_implies_connected():
    hits = 0
    for seed in range(40):
        cfg = EdgeConfig(SPEC2, 0.5, seed)
        got = ev_exit_connected(cfg, (0, 0), (1, 0), BOX1, BOX2)
        if got is True:
            hits += 1
            assert ev_connected(cfg, (0, 0), (1, 0), BOX2) is True
    assert hits > 0


# ------------------------------------------------------------ two loops


def slab_two_loops_edges(connector=True, big_left=True):
    edges = []
    if big_left:
        # perimeter of [-2,0]x[0,1], diameter 2
        edges += [
            ((-2, 0), 0), ((-1, 0), 0), ((-2, 1), 0), ((-1, 1), 0),
            ((-2, 0), 1), ((0, 0), 1),
        ]
    else:
        edges += square((-2, 0))
    edges += square((1, 0))
    if connector:
        edges += [((0, 0), 0)]
    return edges


def test_two_loops_needs_shared_component():
    joined = ExplicitConfig(SPEC2, slab_two_loops_edges(connector=True))
    assert ev_two_disjoint_loops(joined, 2, "1/4", 0.5) is True
    split = ExplicitConfig(SPEC2, slab_two_loops_edges(connector=False))
    assert ev_two_disjoint_loops(split, 2, "1/4", 0.5) is False


def test_two_loops_diameter_thresholds():
    # two unit squares: neither reaches the ceil(N**alpha) = 2 threshold
    small = ExplicitConfig(
        SPEC2, slab_two_loops_edges(connector=True, big_left=False)
    )
    assert ev_two_disjoint_loops(small, 2, "1/4", 0.5) is False
    # a = 3/4 asks for two diameter-2 loops; only one fits
    joined = ExplicitConfig(SPEC2, slab_two_loops_edges(connector=True))
    assert ev_two_disjoint_loops(joined, 2, "3/4", 0.5) is False


def test_two_loops_saturated_box_is_single_cluster():
    assert ev_two_disjoint_loops(full(1.0), 2, "1/4", 0.5) is False
    assert ev_two_disjoint_loops(full(0.0), 2, "1/4", 0.5) is False


# ------------------------------------------------------------ t-size


def test_t_size_values():
    assert t_set_size_given_connected(full(1.0), (0, 0), (1, 0), BOX1) == 9
    assert t_set_size_given_connected(full(0.0), (0, 0), (1, 0), BOX1) is None
    chain = ExplicitConfig(SPEC2, [((0, 0), 0), ((1, 0), 1), ((0, 1), 0)])
    assert t_set_size_given_connected(chain, (0, 0), (0, 1), BOX2) == 4
    with pytest.raises(GraphError):
        t_set_size_given_connected(full(), (0, 0), (0, 0), BOX1)
    out = t_set_size_given_connected(full(1.0), (0, 0), (1, 0), BOX2, budget=3)
    assert out is INDETERMINATE


# ------------------------------------------------------------ stars


def test_star_saturated_flow_caps_at_degree():
    for legs in (1, 2, 3, 4):
        assert ev_star(full(1.0), (0, 0), legs, 1) is True
        assert ev_star(full(1.0), (0, 0), legs, 2) is True
    assert ev_star(full(1.0), (0, 0), 5, 1) is False
    assert ev_star(full(1.0), (0, 0), 5, 2) is False
    assert ev_star(full(0.0), (0, 0), 1, 1) is False


def test_star_explicit_arms():
    plus3 = ExplicitConfig(SPEC2, [((0, 0), 0), ((0, 0), 1), ((-1, 0), 0)])
    assert ev_star(plus3, (0, 0), 3, 1) is True
    assert ev_star(plus3, (0, 0), 4, 1) is False
    with pytest.raises(GeometryError):
        ev_star(plus3, (0, 0), 1, 0)
    with pytest.raises(GraphError):
        ev_star(plus3, (0, 0), 0, 1)
    out = ev_star(full(1.0), (0, 0), 1, 3, budget=2)
    assert out is INDETERMINATE


def test_boundary_star_saturated():
    # edge-midpoint boundary site has degree 3, corner degree 2
    assert ev_boundary_star(full(1.0), (-1, 0), 1, 3, "1/2") is True
    assert ev_boundary_star(full(1.0), (-1, 0), 1, 4, "1/2") is False
    assert ev_boundary_star(full(1.0), (-1, -1), 1, 2, "1/2") is True
    assert ev_boundary_star(full(1.0), (-1, -1), 1, 3, "1/2") is False
    with pytest.raises(GraphError):
        ev_boundary_star(full(1.0), (0, 0), 1, 1, "1/2")
    out = ev_boundary_star(full(1.0), (-2, 0), 2, 1, "1/2", budget=2)
    assert out is INDETERMINATE


def test_boundary_star_forced_arms():
    # both arms from the slab corner are forced edge by edge
    arms = [((-2, 0), 0), ((-1, 0), 0), ((-2, 0), 1), ((-2, 1), 0), ((-1, 1), 0)]
    cfg = ExplicitConfig(SPEC2, arms)
    assert ev_boundary_star(cfg, (-2, 0), 2, 2, "3/4") is True
    for drop in range(len(arms)):
        cfg2 = ExplicitConfig(SPEC2, arms[:drop] + arms[drop + 1:])
        assert ev_boundary_star(cfg2, (-2, 0), 2, 2, "3/4") is False


# ------------------------------------------------------- f and g events


def test_f_event_on_theta():
    cfg = theta_config()
    assert ev_F(cfg, 1, "1/2", 0.5) is True
    # dropping any middle-rail edge starves the third path
    edges = list(cfg.open_edges)
    for e in edges:
        thin = ExplicitConfig(SPEC2, [x for x in edges if x != e])
        assert ev_F(thin, 1, "1/2", 0.5) is False


def test_f_event_saturated():
    assert ev_F(full(1.0), 1, "1/2", 0.5) is True
    assert ev_F(full(0.0), 1, "1/2", 0.5) is False


def test_g_event_constructions():
    assert ev_G(corner_hooks_config(), 1, "1/2", 0.5, 0.25) is True
    # three rails give three pair paths but no close pair with two
    # exiting routes
    assert ev_G(theta_config(), 1, "1/2", 0.5, 0.25) is False
    assert ev_G(full(1.0), 1, "1/2", 0.5, 0.25) is True
    assert ev_G(full(0.0), 1, "1/2", 0.5, 0.25) is False


def test_g_event_parameter_validation():
    with pytest.raises(GeometryError):
        ev_G(full(0.0), 1, "1/2", 0.5, 0.5)
    with pytest.raises(GeometryError):
        ev_G(full(0.0), 1, "1/2", 0.5, 0.9)


def test_path_search_scale_errors():
    with pytest.raises(ScaleError, match="scale unsupported"):
        ev_F(full(1.0), 2, "1/2", 0.5)  # 40 open edges > cap
    with pytest.raises(ScaleError, match="budget"):
        ev_F(full(1.0), 1, "1/2", 0.5, max_steps=1)


# ------------------------------------------------------------ p-coupling


def test_monotone_detectors_respect_coupling():
    checks = [
        lambda c: ev_connected(c, (0, 0), (1, 1), BOX1),
        lambda c: ev_star(c, (0, 0), 2, 1),
        lambda c: ev_exit_connected(c, (0, 0), (1, 0), BOX1, BOX2),
        lambda c: ev_boundary_star(c, (-1, 0), 1, 2, "1/2"),
        lambda c: ev_F(c, 1, "1/2", 0.5),
        lambda c: ev_G(c, 1, "1/2", 0.5, 0.25),
    ]
    flips = 0
    for seed in range(25):
        lo = EdgeConfig(SPEC2, 0.35, seed)
        hi = lo.with_p(0.7)
        for check in checks:
            a, b = check(lo), check(hi)
            if a is True:
                assert b is True
            if a is False and b is True:
                flips += 1
    assert flips > 0  # the coupling actually moved some events


# ------------------------------------------------------------ EventSpec


def test_event_spec_validation():
    with pytest.raises(GeometryError):
        EventSpec(kind="mystery", d=2)
    with pytest.raises(GeometryError):
        EventSpec(kind="connected", d=0)
    with pytest.raises(GeometryError):
        EventSpec(kind="two-loops", d=2, N=2, a="3/2", alpha=0.5)
    with pytest.raises(GeometryError):
        EventSpec(kind="g-event", d=2, N=2, a="1/2", alpha=0.5, beta=0.5)
    with pytest.raises(GeometryError):
        EventSpec(kind="g-event", d=2, N=2, a="1/2", beta=0.25)
    with pytest.raises(GeometryError):
        EventSpec(kind="halfspace", d=2, cone_k=1)
    with pytest.raises(GeometryError):
        EventSpec(kind="connected", d=2, anchors=((0, 0, 0), (1, 1, 1)))
    with pytest.raises(GeometryError):
        EventSpec(kind="star", d=2, legs=0)
    with pytest.raises(GeometryError):
        EventSpec(kind="connected", d=2, N=0)


def test_event_spec_config_roundtrip():
    specs = [
        EventSpec(kind="connected", d=2, N=3, restricted=True,
                  anchors=((0, 0), (1, 2))),
        EventSpec(kind="halfspace", d=3, N=2, m="5/2", variant="bi",
                  cone_k="2", axis=1, anchors=((0, 0, 0), (1, 1, 1))),
        EventSpec(kind="exit", d=2, N=2, m="2", anchors=((0, 0),)),
        EventSpec(kind="two-loops", d=2, N=4, a="1/3", alpha=0.5),
        EventSpec(kind="f-event", d=2, N=1, a="1/2", alpha=0.5),
        EventSpec(kind="g-event", d=2, N=1, a="1/2", alpha=0.5, beta=0.25),
        EventSpec(kind="star", d=2, legs=3, radius=2, anchors=((0, 0),)),
        EventSpec(kind="boundary-star", d=2, N=2, legs=2, a="3/4",
                  anchors=((-2, 0),)),
        EventSpec(kind="t-size", d=2, N=1, restricted=True,
                  anchors=((0, 0), (1, 1)), c_work="2"),
        EventSpec(kind="loop-count", d=2, N=3, a="1/2"),
        EventSpec(kind="extremal", d=3, N=2, a="2/3", axis=2),
    ]
    for ev in specs:
        cfgmap = ev.to_config()
        again = EventSpec.from_config(cfgmap)
        assert again.to_config() == cfgmap
        assert again.kind == ev.kind and again.anchors == ev.anchors


def test_event_spec_from_config_rejects_unknown_keys():
    with pytest.raises(GeometryError):
        EventSpec.from_config({"kind": "connected", "d": "2", "mystery": "1"})


def test_event_kinds_all_dispatch():
    # one live dispatch per kind on the saturated configuration
    table = {
        "connected": (EventSpec(kind="connected", d=2, N=1, restricted=True,
                                anchors=((0, 0), (1, 1))), True),
        "halfspace": (EventSpec(kind="halfspace", d=2, N=1, m="2",
                                variant="bb", anchors=((0, 0), (0, 1))), True),
        "exit": (EventSpec(kind="exit", d=2, N=1, m="2",
                           anchors=((0, 0),)), True),
        "two-loops": (EventSpec(kind="two-loops", d=2, N=1, a="1/2",
                                alpha=0.5), False),
        "f-event": (EventSpec(kind="f-event", d=2, N=1, a="1/2",
                              alpha=0.5), True),
        "g-event": (EventSpec(kind="g-event", d=2, N=1, a="1/2", alpha=0.5,
                              beta=0.25), True),
        "star": (EventSpec(kind="star", d=2, legs=4, radius=1,
                           anchors=((0, 0),)), True),
        "boundary-star": (EventSpec(kind="boundary-star", d=2, N=1, legs=3,
                                    a="1/2", anchors=((-1, 0),)), True),
        "t-size": (EventSpec(kind="t-size", d=2, N=1, restricted=True,
                             anchors=((0, 0), (1, 0))), 9),
        # all 12 box edges open: one loop-cluster spanning the box
        "loop-count": (EventSpec(kind="loop-count", d=2, N=1, a="1/2"), 1),
        # the rightmost column's half-space restriction is a bare path,
        # so its 3 sites drop out and the other 6 qualify
        "extremal": (EventSpec(kind="extremal", d=2, N=1, a="1/2"), 6),
    }
    assert set(table) == set(EVENT_KINDS)
    cfg = full(1.0)
    for kind, (ev, want) in table.items():
        assert run_event(ev, cfg) == want, kind


def test_run_event_dimension_and_parameter_errors():
    ev = EventSpec(kind="connected", d=3, N=1, restricted=True,
                   anchors=((0, 0, 0), (1, 1, 1)))
    with pytest.raises(GeometryError):
        run_event(ev, full(1.0, d=2))
    with pytest.raises(GeometryError):
        run_event(EventSpec(kind="connected", d=2, N=1), full(1.0))
    with pytest.raises(GeometryError):
        run_event(EventSpec(kind="two-loops", d=2, N=1, a="1/2"), full(1.0))


# ------------------------------------------------- flow vs brute search


def ring_sites(radius):
    return [v for v in box_region(SPEC2, (0, 0), radius).iter_points()
            if linf_distance(v, (0, 0)) == radius]


def test_flow_matches_brute_paths_on_random_configs():
    rng = random.Random(20260816)
    all_edges = [(p, axis) for p in BOX1.iter_points() for axis in range(2)
                 if BOX1.contains((p[0] + (axis == 0), p[1] + (axis == 1)))]
    sinks = ring_sites(1)
    corners = [v for v in sinks if abs(v[0]) == 1 and abs(v[1]) == 1]
    agree_plain = agree_distinct = 0
    for _ in range(70):
        chosen = [e for e in all_edges if rng.random() < 0.55]
        cfg = ExplicitConfig(SPEC2, chosen)
        g = grow_cluster(cfg, (0, 0), BOX1)
        for k in (1, 2, 3):
            brute = brute_disjoint_paths_to_set(g, (0, 0), sinks, k)
            flow = max_edge_disjoint_paths(g, (0, 0), sinks, k) >= k
            assert brute == flow
            agree_plain += 1
            brute_d = brute_disjoint_paths_to_set(
                g, (0, 0), corners, k, distinct_sinks=True
            )
            flow_d = (
                max_edge_disjoint_paths(g, (0, 0), corners, k, distinct_sinks=True)
                >= k
            )
            assert brute_d == flow_d
            agree_distinct += 1
    assert agree_plain == agree_distinct == 210


# ------------------------------------------------------------ masking


def test_masked_config_closes_outside_edges():
    inner = full(1.0)
    m = MaskedConfig(inner, BOX1)
    assert m.spec.d == 2
    assert m.is_open(((0, 0), 0)) is True
    assert m.is_open(((0, 0), (1, 0))) is True
    assert m.is_open(((1, 0), 0)) is False  # endpoint (2,0) outside
    assert m.is_open(((1, 0), (2, 0))) is False
    assert ev_connected(m, (0, 0), (1, 1), BOX2) is True
    assert ev_connected(m, (0, 0), (2, 0), BOX2) is False

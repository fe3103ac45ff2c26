"""Randomized invariants (1000 cases each)."""

import math

import pytest

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import oracles as o
from conftest import EX, EY, EZ, box_walls
from pwenv.emwave import InteractionKind, WaveSpec, dbm_to_watts, path_power, watts_to_dbm
from pwenv.geometry import Vec3
from pwenv.raytrace import TraceConfig, trace_paths
from pwenv.routing import Objective, build_tile_graph, plan_routes, route_vertices
from pwenv.scene import Device, Wall, make_scenario, occluded
from pwenv.tiles import Action, TileFunction

CASES = settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
W60 = WaveSpec(60e9, 25e6)

L, W, H = 6.0, 4.0, 2.0
# room split by a partition with a gap at the north end
PARTITION = Wall("p", Vec3(3.0, 0.0, 0.0), EY * 3.0, EZ * H, EX, 0.2)


def coord(lo, hi):
    return st.floats(lo, hi, allow_nan=False, allow_infinity=False)


points = st.tuples(coord(0.3, L - 0.3), coord(0.3, W - 0.3), coord(0.2, H - 0.2)).filter(
    lambda p: not (2.7 <= p[0] <= 3.1 and p[1] <= 3.2)  # keep clear of the partition slab
)


def room(tx, rx, functions=None):
    devs = [Device("tx", "transmitter", Vec3(*tx), "dipole", 30.0), Device("rx", "receiver", Vec3(*rx), "dipole")]
    walls = box_walls(L, W, H) + [PARTITION]
    return make_scenario((L, W, H), walls, devs, W60, tile_side=1.0, functions=functions)


def steer_via(s, tile_id):
    """Program ``tile_id`` to bounce tx onto rx."""
    t = s.tile(tile_id)
    tx, rx = s.device("tx").position, s.device("rx").position
    fn = TileFunction(Action.STEER, W60.band, incident=(t.center - tx).unit(), outgoing=(rx - t.center).unit())
    return s.with_functions({tile_id: fn})


BASE = room((1, 1, 1), (5, 1, 1))
TILE_IDS = sorted(t.id for t in BASE.tiles)


@CASES
@given(points, points, st.integers(1, 2))
def test_specular_reflection_law(tx, rx, depth):
    if math.dist(tx, rx) < 1e-3:
        return
    s = room(tx, rx)
    for p in trace_paths(s, "tx", "rx", TraceConfig(max_tile_depth=0, max_specular_depth=depth)):
        for k, b in enumerate(p.bounces, start=1):
            assert b.kind is InteractionKind.SPECULAR
            n = s.wall_index[b.wall_id].normal.as_tuple()
            inc = (p.vertices[k] - p.vertices[k - 1]).as_tuple()
            out = (p.vertices[k + 1] - p.vertices[k]).as_tuple()
            ai, ar = o.reflection_angles(inc, out, n)
            assert abs(ai - ar) < 1e-6
            # coplanarity: out is the mirror of inc
            mirrored = tuple(x - 2 * sum(i * j for i, j in zip(inc, n)) * y for x, y in zip(inc, n))
            assert o.reflection_angles(tuple(-x for x in mirrored), out, mirrored)[1] < 1e-6


@CASES
@given(points, points, st.sampled_from(TILE_IDS))
def test_path_segments_unoccluded(tx, rx, tile_id):
    if math.dist(tx, rx) < 1e-3:
        return
    s = steer_via(room(tx, rx), tile_id)
    boxes = [w.box for w in s.walls]
    for p in trace_paths(s, "tx", "rx", TraceConfig(max_specular_depth=2)):
        for a, b in zip(p.vertices, p.vertices[1:]):
            assert not any(o.segment_crosses_box(a.as_tuple(), b.as_tuple(), bx) for bx in boxes)


def _front(az, el):
    return Vec3(math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el))


angles = st.tuples(coord(-1.2, 1.2), coord(-1.0, 1.0))


@CASES
@given(angles, angles, coord(1e9, 100e9), coord(0.0, 6.0))
def test_focus_vs_steer_one_plus_one(a_in, a_out, freq, loss):
    wall = Wall("w", Vec3(0, 0, 0), EY * 2, EZ * 2, EX, 0.2)
    wave = WaveSpec(freq, 25e6)
    centre = Vec3(0, 1, 1)
    tx, rx = centre + _front(*a_in), centre + _front(*a_out)
    if tx.dist(rx) < 1e-6:
        return
    devs = [Device("tx", "transmitter", tx, "isotropic", 0.0), Device("rx", "receiver", rx, "isotropic")]
    s = make_scenario((3, 3, 3), [wall], devs, wave, tile_side=2.0)
    (tile,) = s.tiles
    inc = (centre - tx).unit()
    powers = {}
    for action, extra in ((Action.STEER, {"outgoing": (rx - centre).unit()}), (Action.FOCUS, {"focal": rx})):
        fn = TileFunction(action, wave.band, incident=inc, loss_db=loss, **extra)
        cfg = TraceConfig(max_specular_depth=0)
        (hop,) = [p for p in trace_paths(s.with_functions({tile.id: fn}), "tx", "rx", cfg) if p.bounces]
        powers[action] = path_power(hop, wave, 0.0)
    assert powers[Action.FOCUS] - powers[Action.STEER] == pytest.approx(20 * math.log10(2), abs=1e-9)
    assert powers[Action.FOCUS] == pytest.approx(-o.fspl(1.0, freq) - loss, abs=1e-9)


# -- routing ---------------------------------------------------------------------

KINDS = st.sampled_from(["QOS", "POWER", "SECURE", "BLOCK"])
objective = st.tuples(KINDS, st.integers(0, 3), coord(0.1, 2.0))


def plan_room(rx_points):
    devs = [Device("tx", "transmitter", Vec3(1.0, 1.0, 1.0), "dipole", 30.0)]
    devs += [Device(f"r{i}", "receiver", Vec3(*p), "dipole") for i, p in enumerate(rx_points)]
    return make_scenario((L, W, H), box_walls(L, W, H) + [PARTITION], devs, W60, tile_side=1.0)


@CASES
@given(st.lists(points, min_size=4, max_size=4), st.lists(objective, min_size=1, max_size=6), st.integers(1, 6))
def test_plan_exclusive_and_secure(rx_points, objs, K):
    s = plan_room(rx_points)
    graph = build_tile_graph(s)
    objectives = [Objective(f"o{i}", kind, f"r{dev}", radius=rad if kind == "SECURE" else None)
                  for i, (kind, dev, rad) in enumerate(objs)]
    plan = plan_routes(objectives, graph, s, K=K)
    claimed = [t for ts in plan.claims.values() for t in ts]
    assert len(claimed) == len(set(claimed))
    cmd_tiles = [c.tile_id for c in plan.commands]
    assert len(cmd_tiles) == len(set(cmd_tiles)) and set(cmd_tiles) == set(claimed)
    by_id = {ob.id: ob for ob in objectives}
    boxes = [w.box for w in s.walls]
    for r in plan.routes:
        verts = [v.as_tuple() for v in route_vertices(r, s)]
        for a, b in zip(verts, verts[1:]):
            assert not any(o.segment_crosses_box(a, b, bx) for bx in boxes)
        ob = by_id[r.objective_id]
        if ob.kind.value == "SECURE":
            others = [d.position.as_tuple() for d in s.devices if d.id not in ("tx", ob.device)]
            clearance = min(o.point_segment_dist(p, a, b) for p in others for a, b in zip(verts, verts[1:]))
            assert clearance > ob.radius
    assert set(plan.claims) | set(plan.infeasible) == set(by_id)


# -- small extras ------------------------------------------------------------------


@CASES
@given(coord(-200.0, 200.0))
def test_dbm_roundtrip(dbm):
    assert abs(watts_to_dbm(dbm_to_watts(dbm)) - dbm) < 1e-9


@CASES
@given(points, points)
def test_occlusion_symmetric(p, q):
    if p == q:
        return
    s = BASE
    a, b = Vec3(*p), Vec3(*q)
    assert occluded(a, b, s) == occluded(b, a, s)
    assert occluded(a, b, s) == any(o.segment_crosses_box(p, q, w.box, eps=1e-9) for w in s.walls)

"""Tile-assignment optimisation for max-min received power.

``greedy_assign`` serves receivers farthest-first along their shortest air-route,
claiming tiles exclusively. ``maxmin_search`` then runs a seeded first-improvement
local search with restarts over route choices, tile swaps between routes and
last-hop focus/steer toggles, accepting only moves that raise the minimum
received power (ties: higher mean, then fewer tiles).
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .emwave import pdp, rms_delay_spread
from .raytrace import TraceConfig, received_power, trace_paths
from .routing import (
    AirRoute,
    TileGraph,
    build_tile_graph,
    candidate_routes,
    device_node,
    route_functions,
)
from .scene import Device, Scenario
from .tiles import TileFunction


@dataclass(frozen=True, eq=False)
class TileAssignment:
    functions: Mapping[str, TileFunction]
    provenance: Mapping[str, str] = field(default_factory=dict)  # tile id -> receiver/objective id
    routes: tuple[AirRoute, ...] = ()
    unserved: tuple[str, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, TileAssignment):
            return NotImplemented
        return (
            dict(self.functions) == dict(other.functions)
            and dict(self.provenance) == dict(other.provenance)
            and self.routes == other.routes
            and self.unserved == other.unserved
        )

    @property
    def tile_count(self) -> int:
        return len(self.functions)

    def claims(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for tid, owner in self.provenance.items():
            out.setdefault(owner, set()).add(tid)
        return out

    def to_rows(self) -> list[list[str]]:
        rows = []
        for tid in sorted(self.functions):
            fn = self.functions[tid]
            rows.append([tid, fn.action.value, self.provenance.get(tid, "")])
        return rows


def empty_assignment() -> TileAssignment:
    return TileAssignment({})


def assignment_from_routes(
    scenario: Scenario,
    routes: Iterable[AirRoute],
    unserved: Iterable[str] = (),
    fixed: Mapping[str, TileFunction] | None = None,
    fixed_provenance: Mapping[str, str] | None = None,
) -> TileAssignment:
    functions = dict(fixed or {})
    provenance = dict(fixed_provenance or {})
    routes = tuple(routes)
    for r in routes:
        for tid, fn in route_functions(r, scenario).items():
            if tid in functions:
                raise ValueError(f"tile {tid} claimed twice")
            functions[tid] = fn
            provenance[tid] = r.objective_id or r.dst
    return TileAssignment(functions, provenance, routes, tuple(unserved))


@dataclass(frozen=True)
class EvalReport:
    per_receiver: tuple[tuple[str, float], ...]
    min: float
    mean: float
    max: float
    disconnected: int

    def __post_init__(self):
        if self.per_receiver and not (self.min <= self.mean + 1e-9 and self.mean <= self.max + 1e-9):
            raise ValueError("inconsistent statistics")

    @classmethod
    def from_powers(cls, powers: Sequence[tuple[str, float]], floor: float) -> "EvalReport":
        vals = [p for _, p in powers]
        if not vals:
            return cls((), floor, floor, floor, 0)
        return cls(
            tuple(powers),
            min(vals),
            sum(vals) / len(vals),
            max(vals),
            sum(1 for v in vals if v <= floor),
        )

    def power(self, receiver_id: str) -> float:
        return dict(self.per_receiver)[receiver_id]

    def summary(self) -> str:
        return f"min={self.min:.6f} mean={self.mean:.6f} max={self.max:.6f} disconnected={self.disconnected}"


def report_to_csv(report: EvalReport, scenario: Scenario) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["receiver", "x", "y", "z", "dbm"])
    for rid, p in report.per_receiver:
        pos = scenario.device(rid).position
        w.writerow([rid, f"{pos.x:.6f}", f"{pos.y:.6f}", f"{pos.z:.6f}", f"{p:.6f}"])
    w.writerow(["# " + report.summary()])
    return buf.getvalue()


def report_from_csv(text: str, floor: float = -250.0) -> EvalReport:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    body = [r for r in rows[1:] if not r[0].startswith("#")]
    return EvalReport.from_powers([(r[0], float(r[4])) for r in body], floor)


def _tx_of(scenario: Scenario, tx: Device | str | None) -> Device:
    if tx is None:
        return scenario.transmitters[0]
    return scenario.device(tx) if isinstance(tx, str) else tx


def _rx_list(scenario: Scenario, receivers) -> list[Device]:
    if receivers is None:
        return scenario.receivers
    return [scenario.device(r) if isinstance(r, str) else r for r in receivers]


def evaluate_assignment(
    scenario: Scenario,
    assignment: TileAssignment,
    receivers: Iterable[Device | str] | None = None,
    tx: Device | str | None = None,
    cfg: TraceConfig = TraceConfig(),
) -> EvalReport:
    """Per-receiver power with ``assignment`` installed on a snapshot of the scenario."""
    snap = scenario.with_functions(assignment.functions)
    t = _tx_of(snap, tx)
    powers = [(r.id, received_power(snap, t, snap.device(r.id), cfg)) for r in _rx_list(scenario, receivers)]
    return EvalReport.from_powers(powers, scenario.disconnect_threshold_dbm)


def route_delay_spread(scenario: Scenario, route: AirRoute, cfg: TraceConfig = TraceConfig()) -> float:
    """RMS delay spread at ``route.dst`` with the route installed on top of the current functions."""
    snap = scenario.with_functions(route_functions(route, scenario), clear=False)
    tx, rx = snap.device(route.src), snap.device(route.dst)
    paths = trace_paths(snap, tx, rx, cfg)
    return rms_delay_spread(pdp(paths, snap.wave, tx.tx_power_dbm, tx.antenna, rx.antenna))


def greedy_assign(
    scenario: Scenario,
    tx: Device | str | None = None,
    receivers: Iterable[Device | str] | None = None,
    graph: TileGraph | None = None,
    claimed: Iterable[str] = (),
    fixed: Mapping[str, TileFunction] | None = None,
    fixed_provenance: Mapping[str, str] | None = None,
) -> TileAssignment:
    """Farthest receiver first, each on its shortest route over still-unclaimed tiles."""
    t = _tx_of(scenario, tx)
    rxs = _rx_list(scenario, receivers)
    if not rxs:
        raise ValueError("need at least one receiver")
    graph = graph or build_tile_graph(scenario)
    taken = set(claimed) | set(fixed or {})
    order = sorted(rxs, key=lambda r: (-r.position.dist(t.position), r.id))
    routes, unserved = [], []
    for r in order:
        cands = candidate_routes(graph, scenario, t.id, r.id, 1, taken, r.id)
        if not cands:
            unserved.append(r.id)
            continue
        routes.append(cands[0])
        taken.update(cands[0].tiles)
    return assignment_from_routes(scenario, routes, unserved, fixed, fixed_provenance)


class _Search:
    """State and move generators for :func:`maxmin_search`."""

    def __init__(self, scenario, tx, receivers, graph, K, cfg, fixed, fixed_prov, rng):
        self.scenario = scenario
        self.tx = tx
        self.rx_ids = [r.id for r in receivers]
        self.graph = graph
        self.K = K
        self.cfg = cfg
        self.fixed = fixed
        self.fixed_prov = fixed_prov
        self.rng = rng
        self.pool: dict[str, list[AirRoute]] = {}
        self.alt_cache: dict[tuple, list[AirRoute]] = {}
        self.evals: dict[tuple, tuple] = {}
        self.evaluations = 0

    def key(self, state: Mapping[str, AirRoute | None]) -> tuple:
        return tuple((rid, None if state[rid] is None else (state[rid].tiles, state[rid].focus)) for rid in self.rx_ids)

    def assignment(self, state) -> TileAssignment:
        routes = [state[r] for r in self.rx_ids if state[r] is not None]
        unserved = [r for r in self.rx_ids if state[r] is None]
        return assignment_from_routes(self.scenario, routes, unserved, self.fixed, self.fixed_prov)

    def score(self, state) -> tuple:
        k = self.key(state)
        hit = self.evals.get(k)
        if hit is None:
            rep = evaluate_assignment(self.scenario, self.assignment(state), self.rx_ids, self.tx, self.cfg)
            n_tiles = sum(len(r.tiles) for r in state.values() if r is not None)
            hit = (round(rep.min, 9), round(rep.mean, 9), -n_tiles)
            self.evals[k] = hit
            self.evaluations += 1
        return hit

    def taken_by_others(self, state, rid) -> set[str]:
        s = set(self.fixed)
        for other, r in state.items():
            if other != rid and r is not None:
                s.update(r.tiles)
        return s

    def alternatives(self, state, rid) -> list[AirRoute]:
        taken = self.taken_by_others(state, rid)
        if rid not in self.pool:
            # a deeper pool keeps most reassignments off the exclusion-aware fallback below
            self.pool[rid] = candidate_routes(self.graph, self.scenario, self.tx.id, rid, 3 * self.K, self.fixed, rid)
        alts = [r for r in self.pool[rid] if not taken.intersection(r.tiles)][: self.K]
        if alts:
            return alts
        ck = (rid, frozenset(taken))
        if ck not in self.alt_cache:
            self.alt_cache[ck] = candidate_routes(self.graph, self.scenario, self.tx.id, rid, self.K, taken, rid)
        return self.alt_cache[ck]

    def reassign(self, state):
        rid = self.rng.choice(self.rx_ids)
        cur = state[rid]
        alts = [r for r in self.alternatives(state, rid) if cur is None or r.tiles != cur.tiles]
        if not alts:
            return None
        new = self.rng.choice(alts)
        if cur is not None and not cur.focus:
            new = AirRoute(new.src, new.tiles, new.dst, new.length, new.objective_id, focus=False)
        return {**state, rid: new}

    def swap(self, state):
        served = [r for r in self.rx_ids if state[r] is not None]
        if len(served) < 2:
            return None
        a, b = self.rng.sample(served, 2)
        ra, rb = state[a], state[b]
        i, j = self.rng.randrange(len(ra.tiles)), self.rng.randrange(len(rb.tiles))
        ta = ra.tiles[:i] + (rb.tiles[j],) + ra.tiles[i + 1 :]
        tb = rb.tiles[:j] + (ra.tiles[i],) + rb.tiles[j + 1 :]
        na, nb = self._route(ra, ta), self._route(rb, tb)
        if na is None or nb is None:
            return None
        return {**state, a: na, b: nb}

    def toggle(self, state):
        served = [r for r in self.rx_ids if state[r] is not None]
        if not served:
            return None
        rid = self.rng.choice(served)
        r = state[rid]
        return {**state, rid: AirRoute(r.src, r.tiles, r.dst, r.length, r.objective_id, focus=not r.focus)}

    def _route(self, old: AirRoute, tiles: tuple[str, ...]) -> AirRoute | None:
        if len(set(tiles)) != len(tiles):
            return None
        nodes = [device_node(old.src), *tiles, device_node(old.dst)]
        if not all(self.graph.has_edge(a, b) for a, b in zip(nodes, nodes[1:])):
            return None
        return AirRoute(old.src, tiles, old.dst, self.graph.path_length(nodes), old.objective_id, old.focus)

    def random_state(self):
        state: dict[str, AirRoute | None] = {r: None for r in self.rx_ids}
        order = list(self.rx_ids)
        self.rng.shuffle(order)
        for rid in order:
            alts = self.alternatives(state, rid)
            state[rid] = self.rng.choice(alts) if alts else None
        return state


def maxmin_search(
    scenario: Scenario,
    initial: TileAssignment,
    budget: int = 2000,
    seed: int = 0,
    tx: Device | str | None = None,
    receivers: Iterable[Device | str] | None = None,
    graph: TileGraph | None = None,
    K: int = 8,
    cfg: TraceConfig = TraceConfig(),
    patience: int = 60,
) -> TileAssignment:
    """Improve ``initial`` within ``budget`` assignment evaluations; never returns worse."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    t = _tx_of(scenario, tx)
    rxs = _rx_list(scenario, receivers)
    graph = graph or build_tile_graph(scenario)
    route_tiles = {tid for r in initial.routes for tid in r.tiles}
    fixed = {k: v for k, v in initial.functions.items() if k not in route_tiles}
    fixed_prov = {k: v for k, v in initial.provenance.items() if k in fixed}
    rng = random.Random(seed)
    s = _Search(scenario, t, rxs, graph, K, cfg, fixed, fixed_prov, rng)

    by_rx = {r.dst: r for r in initial.routes}
    cur = {r.id: by_rx.get(r.id) for r in rxs}
    cur_score = s.score(cur)
    best, best_score = cur, cur_score
    stale = 0
    attempts = 0
    moves = (s.reassign, s.reassign, s.swap, s.toggle)
    while s.evaluations < budget and attempts < 50 * budget:
        attempts += 1
        if stale >= patience:
            cand = s.random_state()
            stale = 0
            if s.key(cand) in s.evals:
                continue
            cur, cur_score = cand, s.score(cand)
        else:
            cand = rng.choice(moves)(cur)
            if cand is None or s.key(cand) in s.evals:
                stale += cand is not None
                continue
            sc = s.score(cand)
            if sc > cur_score:
                cur, cur_score, stale = cand, sc, 0
            else:
                stale += 1
        if cur_score > best_score:
            best, best_score = cur, cur_score
    if s.key(best) == s.key({r.id: by_rx.get(r.id) for r in rxs}):
        return initial
    return s.assignment(best)

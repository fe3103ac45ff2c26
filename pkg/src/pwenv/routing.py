"""Wave propagation as routing over the tile graph.

Nodes are tiles plus one virtual node per device (named ``@<device id>``).
Two tiles are linked when their centres see each other and each lies in
front of the other; a device is linked to every tile it can illuminate.
Edge weights are Euclidean lengths in metres.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .emwave import Bounce, InteractionKind, PropagationPath, antenna_gain_dbi, fspl_db, path_power
from .geometry import Vec3, point_segment_distance, segments_hit_boxes
from .scene import Device, Scenario
from .tiles import DEFAULT_FUNCTION_LOSS_DB, Action, TileCommand, TileFunction

Node = Hashable

FACING_EPS = 1e-9


def device_node(device_id: str) -> str:
    return f"@{device_id}"


def is_device_node(node: Node) -> bool:
    return isinstance(node, str) and node.startswith("@")


@dataclass
class TileGraph:
    adj: dict[Node, dict[Node, float]] = field(default_factory=dict)

    @property
    def nodes(self) -> list[Node]:
        return list(self.adj)

    def add_node(self, n: Node) -> None:
        self.adj.setdefault(n, {})

    def add_edge(self, a: Node, b: Node, w: float) -> None:
        if a == b:
            raise ValueError("self-loops are not allowed")
        if not w > 0:
            raise ValueError("edge weights must be positive")
        self.adj.setdefault(a, {})[b] = w
        self.adj.setdefault(b, {})[a] = w

    def edges(self) -> list[tuple[Node, Node, float]]:
        out = []
        for a, nb in self.adj.items():
            for b, w in nb.items():
                if repr(a) < repr(b):
                    out.append((a, b, w))
        return sorted(out, key=lambda e: (repr(e[0]), repr(e[1])))

    @property
    def edge_count(self) -> int:
        return sum(len(nb) for nb in self.adj.values()) // 2

    def has_edge(self, a: Node, b: Node) -> bool:
        return b in self.adj.get(a, ())

    def path_length(self, path: Sequence[Node]) -> float:
        return sum(self.adj[a][b] for a, b in zip(path, path[1:]))

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[Node, Node, float]], nodes: Iterable[Node] = ()) -> "TileGraph":
        g = cls()
        for n in nodes:
            g.add_node(n)
        for a, b, w in edges:
            g.add_edge(a, b, w)
        return g


def _facing(p: Vec3, tile) -> bool:
    return (p - tile.center).dot(tile.normal) > FACING_EPS


_TILE_EDGE_CACHE: dict[tuple, list[tuple[str, str, float]]] = {}


def _tile_edges(scenario: Scenario) -> list[tuple[str, str, float]]:
    key = (id(scenario.walls), scenario.walls, tuple(t.id for t in scenario.tiles))
    hit = _TILE_EDGE_CACHE.get(key)
    if hit is not None:
        return hit
    tiles = scenario.tiles
    n = len(tiles)
    if n < 2:
        return []
    c = np.array([t.center.as_tuple() for t in tiles])
    nrm = np.array([t.normal.as_tuple() for t in tiles])
    i, j = np.triu_indices(n, k=1)
    d = c[j] - c[i]
    mutual = (np.einsum("ij,ij->i", d, nrm[i]) > FACING_EPS) & (np.einsum("ij,ij->i", -d, nrm[j]) > FACING_EPS)
    i, j = i[mutual], j[mutual]
    blocked = segments_hit_boxes(c[i], c[j], [w.box for w in scenario.walls])
    i, j = i[~blocked], j[~blocked]
    lengths = np.linalg.norm(c[j] - c[i], axis=1)
    edges = [(tiles[a].id, tiles[b].id, float(L)) for a, b, L in zip(i, j, lengths)]
    if len(_TILE_EDGE_CACHE) > 8:
        _TILE_EDGE_CACHE.clear()
    _TILE_EDGE_CACHE[key] = edges
    return edges


def device_links(scenario: Scenario, device: Device) -> list[tuple[str, float]]:
    """(tile id, distance) for every tile the device can illuminate directly."""
    tiles = scenario.tiles
    if not tiles:
        return []
    p = device.position
    cand = [t for t in tiles if _facing(p, t)]
    if not cand:
        return []
    c = np.array([t.center.as_tuple() for t in cand])
    blocked = segments_hit_boxes(np.tile(np.array(p.as_tuple()), (len(cand), 1)), c, [w.box for w in scenario.walls])
    return [(t.id, p.dist(t.center)) for t, b in zip(cand, blocked) if not b]


def build_tile_graph(scenario: Scenario) -> TileGraph:
    g = TileGraph()
    for t in scenario.tiles:
        g.add_node(t.id)
    for a, b, w in _tile_edges(scenario):
        g.add_edge(a, b, w)
    for d in scenario.devices:
        attach_device(g, scenario, d)
    return g


def attach_device(graph: TileGraph, scenario: Scenario, device: Device) -> None:
    """(Re)connect a device node to the graph at its current position."""
    node = device_node(device.id)
    for nb in list(graph.adj.get(node, {})):
        del graph.adj[nb][node]
    graph.adj[node] = {}
    for tid, dist in device_links(scenario, device):
        graph.add_edge(node, tid, dist)


def entry_tiles(device: Device | str, scenario: Scenario, graph: TileGraph | None = None) -> list[str]:
    """Tiles in line of sight of the device, lowest single-hop loss first."""
    device = scenario.device(device) if isinstance(device, str) else device
    f = scenario.wave.frequency
    ranked = []
    for tid, dist in device_links(scenario, device):
        t = scenario.tile(tid)
        loss = fspl_db(dist, f) - antenna_gain_dbi(device.antenna, t.center - device.position)
        ranked.append((round(loss, 9), tid))
    return [tid for _, tid in sorted(ranked)]


# -- shortest paths ---------------------------------------------------------------


def _key(length: float, path: Sequence[Node]) -> tuple:
    return (length, tuple(path))


def _dijkstra(
    adj: Mapping[Node, Mapping[Node, float]],
    src: Node,
    dst: Node,
    banned_nodes: set = frozenset(),
    banned_edges: set = frozenset(),
) -> list[Node] | None:
    """Shortest path, ties broken by the lexicographically smallest node sequence."""
    if src in banned_nodes or src not in adj:
        return None
    heap = [(0.0, (src,))]
    best: dict[Node, tuple] = {src: (0.0, (src,))}
    done = set()
    cut: dict[Node, set] = {}
    for a, b in banned_edges:
        cut.setdefault(a, set()).add(b)
    while heap:
        d, path = heapq.heappop(heap)
        u = path[-1]
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return list(path)
        skip = cut.get(u, ())
        for v, w in adj[u].items():
            if v in done or v in banned_nodes or v in skip:
                continue
            nd = d + w
            old = best.get(v)
            if old is None or nd < old[0] or (nd == old[0] and path + (v,) < old[1]):
                item = (nd, path + (v,))
                best[v] = item
                heapq.heappush(heap, item)
    return None


def k_shortest(
    graph: TileGraph,
    src: Node,
    dst: Node,
    K: int,
    exclude: Iterable[Node] = (),
) -> list[tuple[float, list[Node]]]:
    """Up to K loopless paths from ``src`` to ``dst`` in ascending length (Yen).

    Nodes in ``exclude`` are never used. Returns ``(length, path)`` pairs.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    exclude = set(exclude) - {src, dst}
    adj = graph.adj
    first = _dijkstra(adj, src, dst, exclude)
    if first is None:
        return []

    def length(p):
        return sum(adj[a][b] for a, b in zip(p, p[1:]))

    found = [first]
    seen = {tuple(first)}
    cand: list[tuple] = []
    while len(found) < K:
        prev = found[-1]
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            banned_edges = set()
            for p in found:
                if len(p) > i + 1 and p[: i + 1] == root:
                    banned_edges.add((p[i], p[i + 1]))
            banned_nodes = exclude | set(root[:-1])
            spur_path = _dijkstra(adj, spur, dst, banned_nodes, banned_edges)
            if spur_path is None:
                continue
            total = root[:-1] + spur_path
            t = tuple(total)
            if t in seen:
                continue
            seen.add(t)
            heapq.heappush(cand, (_key(length(total), total), total))
        if not cand:
            break
        _, best = heapq.heappop(cand)
        found.append(best)
    return [(length(p), tuple(p)) for p in found]


# -- objectives and route planning -------------------------------------------------


class ObjectiveKind(str, enum.Enum):
    QOS = "QOS"
    POWER = "POWER"
    SECURE = "SECURE"
    BLOCK = "BLOCK"


@dataclass(frozen=True)
class Objective:
    id: str
    kind: ObjectiveKind
    device: str
    source: str | None = None  # serving transmitter; defaults to the first one
    radius: float | None = None  # SECURE avoid-zone radius, metres
    avoid: tuple[str, ...] | None = None  # SECURE: devices to keep clear of (default: all others)
    delay_cap: float | None = None  # QOS: optional RMS delay-spread cap, seconds

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectiveKind(self.kind))
        if self.kind is ObjectiveKind.SECURE and not (self.radius is not None and self.radius > 0):
            raise ValueError("SECURE objectives need a radius > 0")
        if self.delay_cap is not None and not self.delay_cap > 0:
            raise ValueError("delay-spread cap must be > 0")


@dataclass(frozen=True)
class AirRoute:
    src: str
    tiles: tuple[str, ...]
    dst: str
    length: float
    objective_id: str = ""
    focus: bool = True

    def __post_init__(self):
        if len(set(self.tiles)) != len(self.tiles):
            raise ValueError("tiles must be distinct within a route")


@dataclass
class PlanResult:
    routes: list[AirRoute]
    commands: list[TileCommand]
    infeasible: dict[str, str]
    claims: dict[str, tuple[str, ...]]  # objective id -> tiles it holds

    @property
    def claimed(self) -> set[str]:
        return {t for ts in self.claims.values() for t in ts}


def route_vertices(route: AirRoute, scenario: Scenario) -> list[Vec3]:
    return (
        [scenario.device(route.src).position]
        + [scenario.tile(t).center for t in route.tiles]
        + [scenario.device(route.dst).position]
    )


def route_functions(route: AirRoute, scenario: Scenario, loss_db: float = DEFAULT_FUNCTION_LOSS_DB) -> dict[str, TileFunction]:
    """STEER along the route, with the last hop FOCUS onto the destination if ``route.focus``."""
    verts = route_vertices(route, scenario)
    band = scenario.wave.band
    out = {}
    for k, tid in enumerate(route.tiles, start=1):
        inc = (verts[k] - verts[k - 1]).unit()
        last = k == len(route.tiles)
        if last and route.focus:
            out[tid] = TileFunction(Action.FOCUS, band, incident=inc, focal=verts[k + 1], loss_db=loss_db)
        else:
            out[tid] = TileFunction(Action.STEER, band, incident=inc, outgoing=(verts[k + 1] - verts[k]).unit(), loss_db=loss_db)
    return out


def route_path(route: AirRoute, scenario: Scenario, loss_db: float = DEFAULT_FUNCTION_LOSS_DB) -> PropagationPath:
    verts = route_vertices(route, scenario)
    bounces = []
    for k, tid in enumerate(route.tiles, start=1):
        kind = InteractionKind.FOCUS if (k == len(route.tiles) and route.focus) else InteractionKind.STEER
        bounces.append(Bounce(kind, loss_db, tile_id=tid, wall_id=scenario.tile(tid).wall_id))
    return PropagationPath(tuple(verts), tuple(bounces))


def predicted_power(route: AirRoute, scenario: Scenario) -> float:
    tx, rx = scenario.device(route.src), scenario.device(route.dst)
    return path_power(route_path(route, scenario), scenario.wave, tx.tx_power_dbm, tx.antenna, rx.antenna)


def commands_for(functions: Mapping[str, TileFunction], correlation_id: str) -> list[TileCommand]:
    return [TileCommand(tid, fn.action, fn, correlation_id) for tid, fn in functions.items()]


def route_clearance(route: AirRoute, scenario: Scenario, avoid: Iterable[str]) -> float:
    """Smallest distance from any avoided device to any segment of the route."""
    verts = route_vertices(route, scenario)
    best = math.inf
    for dev in avoid:
        p = scenario.device(dev).position
        for a, b in zip(verts, verts[1:]):
            best = min(best, point_segment_distance(p, a, b))
    return best


def _source_for(obj: Objective, scenario: Scenario) -> str:
    if obj.source is not None:
        return obj.source
    txs = scenario.transmitters
    if not txs:
        raise ValueError("no transmitter in scenario")
    return txs[0].id


def candidate_routes(
    graph: TileGraph,
    scenario: Scenario,
    src: str,
    dst: str,
    K: int,
    claimed: Iterable[str] = (),
    objective_id: str = "",
) -> list[AirRoute]:
    """K-shortest air-routes avoiding claimed tiles and passing through no other device."""
    others = {device_node(d.id) for d in scenario.devices} - {device_node(src), device_node(dst)}
    found = k_shortest(graph, device_node(src), device_node(dst), K, exclude=set(claimed) | others)
    routes = []
    for length, path in found:
        tiles = tuple(path[1:-1])
        if tiles:  # a route must use at least one tile
            routes.append(AirRoute(src, tiles, dst, length, objective_id))
    return routes


def plan_routes(
    objectives: Sequence[Objective],
    graph: TileGraph,
    scenario: Scenario,
    K: int = 8,
    claimed: Iterable[str] = (),
    rms_spread=None,
    max_tiles: int | None = None,
) -> PlanResult:
    """Serve objectives in list order, each tile being claimed by at most one objective.

    ``rms_spread(scenario, route)`` estimates the delay spread for QOS caps; it is
    supplied by callers that can trace (see ``optimize.route_delay_spread``).
    ``max_tiles`` caps the tiles any single objective may hold.
    """
    if max_tiles is not None and max_tiles < 1:
        raise ValueError("max_tiles must be >= 1")
    taken = set(claimed)
    result = PlanResult([], [], {}, {})
    for obj in objectives:
        try:
            scenario.device(obj.device)
        except KeyError:
            result.infeasible[obj.id] = f"unknown device {obj.device}"
            continue
        if obj.kind is ObjectiveKind.BLOCK:
            tiles = [t for t in entry_tiles(obj.device, scenario, graph) if t not in taken][:max_tiles]
            if not tiles:
                result.infeasible[obj.id] = "no entry tiles"
                continue
            fn = TileFunction(Action.ABSORB, scenario.wave.band, alpha=1.0)
            result.commands.extend(TileCommand(t, Action.ABSORB, fn, obj.id) for t in tiles)
            result.claims[obj.id] = tuple(tiles)
            taken.update(tiles)
            continue
        src = _source_for(obj, scenario)
        cands = candidate_routes(graph, scenario, src, obj.device, K, taken, obj.id)
        if max_tiles is not None:
            cands = [r for r in cands if len(r.tiles) <= max_tiles]
        if not cands:
            if not entry_tiles(obj.device, scenario, graph):
                reason = "no entry tiles"
            elif candidate_routes(graph, scenario, src, obj.device, 1, (), obj.id):
                reason = "tiles exhausted"
            else:
                reason = "no route"
            result.infeasible[obj.id] = reason
            continue
        chosen = None
        if obj.kind is ObjectiveKind.SECURE:
            avoid = obj.avoid if obj.avoid is not None else tuple(
                d.id for d in scenario.devices if d.id not in (src, obj.device)
            )
            clear = [r for r in cands if route_clearance(r, scenario, avoid) > obj.radius]
            if not clear:
                result.infeasible[obj.id] = "no clearing route"
                continue
            chosen = clear[0]
        elif obj.kind is ObjectiveKind.POWER:
            chosen = max(cands, key=lambda r: (round(predicted_power(r, scenario), 9), -r.length))
        else:
            if obj.delay_cap is not None and rms_spread is not None:
                ok = [r for r in cands if rms_spread(scenario, r) <= obj.delay_cap]
                if not ok:
                    result.infeasible[obj.id] = "delay-spread cap unmet"
                    continue
                chosen = ok[0]
            else:
                chosen = cands[0]
        result.routes.append(chosen)
        result.commands.extend(commands_for(route_functions(chosen, scenario), obj.id))
        result.claims[obj.id] = chosen.tiles
        taken.update(chosen.tiles)
    return result


def routes_report(
    routes: Iterable[AirRoute],
    infeasible: Mapping[str, str] | None = None,
    blocks: Mapping[str, Sequence[str]] | None = None,
) -> str:
    """Tab-separated plan summary; ``blocks`` maps BLOCK objective ids to their absorbing tiles."""
    lines = ["objective\ttiles\tlength_m\tcommands"]
    for r in routes:
        lines.append(f"{r.objective_id}\t{' '.join(r.tiles)}\t{r.length:.6f}\t{len(r.tiles)}")
    for oid, tiles in (blocks or {}).items():
        lines.append(f"{oid}\t{' '.join(tiles)}\tBLOCK\t{len(tiles)}")
    for oid, why in sorted((infeasible or {}).items()):
        lines.append(f"{oid}\tINFEASIBLE\t{why}\t0")
    return "\n".join(lines) + "\n"

"""Deterministic multipath enumeration with programmable reflections.

Three families of paths are collected between a transmitter and a receiver:

* the direct path, when nothing blocks it;
* specular wall bounces up to ``max_specular_depth`` via the image method,
  with exact reflection points on the wall faces;
* tile-hop chains through configured tiles, reflecting at tile centres,
  where every tile accepts the incoming ray and points its programmed beam
  at the next vertex (both within the angular tolerance).
"""

from __future__ import annotations

import csv
import io
import math
from collections import OrderedDict
from dataclasses import dataclass
from itertools import product
from typing import Iterator

from .emwave import Bounce, InteractionKind, PropagationPath, aggregate_power
from .geometry import Vec3, angle_between, segment_hits_box
from .scene import Device, Scenario, Wall
from .tiles import DEFAULT_TOLERANCE, Ray, interact


@dataclass(frozen=True)
class TraceConfig:
    max_tile_depth: int = 3
    max_specular_depth: int = 2
    coherent: bool = False
    tolerance: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.max_tile_depth < 0 or self.max_specular_depth < 0:
            raise ValueError("trace depths must be >= 0")


@dataclass(frozen=True)
class _SpecularGeometry:
    vertices: tuple[Vec3, ...]
    walls: tuple[str, ...]
    tiles: tuple[str | None, ...]


class _WallCache:
    """Per-wall-set memo of occlusion tests and specular geometry."""

    def __init__(self, walls: tuple[Wall, ...]):
        self.walls = walls
        self.boxes = [w.box for w in walls]
        self.occ: dict[tuple, bool] = {}
        self.spec: OrderedDict[tuple, list[_SpecularGeometry]] = OrderedDict()

    def occluded(self, p: Vec3, q: Vec3) -> bool:
        key = (p.as_tuple(), q.as_tuple())
        hit = self.occ.get(key)
        if hit is None:
            hit = any(segment_hits_box(p, q, b) for b in self.boxes)
            if len(self.occ) > 500_000:
                self.occ.clear()
            self.occ[key] = hit
            self.occ[(key[1], key[0])] = hit
        return hit


_CACHES: OrderedDict[int, _WallCache] = OrderedDict()


def _cache_for(scenario: Scenario) -> _WallCache:
    key = id(scenario.walls)
    c = _CACHES.get(key)
    if c is None or c.walls is not scenario.walls:
        c = _WallCache(scenario.walls)
        _CACHES[key] = c
        while len(_CACHES) > 16:
            _CACHES.popitem(last=False)
    else:
        _CACHES.move_to_end(key)
    return c


def _mirror(p: Vec3, w: Wall) -> Vec3:
    return p - w.normal * (2.0 * (p - w.corner).dot(w.normal))


def _front(p: Vec3, w: Wall, eps: float = 1e-9) -> bool:
    return (p - w.corner).dot(w.normal) > eps


def _tile_at(scenario: Scenario, w: Wall, p: Vec3) -> str | None:
    if not w.coated or scenario.tile_side is None:
        return None
    side = scenario.tile_side
    off = p - w.corner
    a = off.dot(w.edge_u.unit())
    b = off.dot(w.edge_v.unit())
    nu, nv = round(w.width / side), round(w.height / side)
    c = min(max(int(math.floor(a / side)), 0), nu - 1)
    r = min(max(int(math.floor(b / side)), 0), nv - 1)
    return f"{w.id}/{r}/{c}"


def _wall_sequences(n: int, depth: int) -> Iterator[tuple[int, ...]]:
    for k in range(1, depth + 1):
        for seq in product(range(n), repeat=k):
            if all(a != b for a, b in zip(seq, seq[1:])):
                yield seq


def _specular_geometry(scenario: Scenario, cache: _WallCache, tx: Vec3, rx: Vec3, depth: int) -> list[_SpecularGeometry]:
    key = (tx.as_tuple(), rx.as_tuple(), depth, scenario.tile_side)
    found = cache.spec.get(key)
    if found is not None:
        cache.spec.move_to_end(key)
        return found
    walls = scenario.walls
    out = []
    for seq in _wall_sequences(len(walls), depth):
        images = [tx]
        for i in seq:
            images.append(_mirror(images[-1], walls[i]))
        pts: list[Vec3] = []
        target = rx
        ok = True
        for step in range(len(seq), 0, -1):
            w = walls[seq[step - 1]]
            img = images[step]
            d = target - img
            den = d.dot(w.normal)
            if abs(den) < 1e-12:
                ok = False
                break
            t = (w.corner - img).dot(w.normal) / den
            if not 0.0 < t < 1.0:
                ok = False
                break
            p = img + d * t
            if not w.contains_on_face(p, tol=1e-7):
                ok = False
                break
            pts.append(p)
            target = p
        if not ok:
            continue
        verts = [tx] + pts[::-1] + [rx]
        if any(verts[i].dist(verts[i + 1]) <= 1e-9 for i in range(len(verts) - 1)):
            continue
        # both neighbours of each bounce must be on the room side of that face
        if not all(
            _front(verts[j - 1], walls[seq[j - 1]]) and _front(verts[j + 1], walls[seq[j - 1]])
            for j in range(1, len(verts) - 1)
        ):
            continue
        if any(cache.occluded(verts[i], verts[i + 1]) for i in range(len(verts) - 1)):
            continue
        out.append(
            _SpecularGeometry(
                tuple(verts),
                tuple(walls[i].id for i in seq),
                tuple(_tile_at(scenario, walls[i], p) for i, p in zip(seq, verts[1:-1])),
            )
        )
    cache.spec[key] = out
    if len(cache.spec) > 20_000:
        cache.spec.popitem(last=False)
    return out


def _specular_paths(scenario: Scenario, cache: _WallCache, tx: Vec3, rx: Vec3, cfg: TraceConfig) -> list[PropagationPath]:
    f = scenario.wave.frequency
    paths = []
    for g in _specular_geometry(scenario, cache, tx, rx, cfg.max_specular_depth):
        bounces = []
        alive = True
        for j, (wid, tid) in enumerate(zip(g.walls, g.tiles)):
            wall = scenario.wall_index[wid]
            loss, kind = wall.reflection_loss_db, InteractionKind.SPECULAR
            if tid is not None:
                tile = scenario.tile_index[tid]
                if tile.function is not None:
                    inc = (g.vertices[j + 1] - g.vertices[j]).unit()
                    # reflect at the exact wall point; the tile is a planar facet here
                    it = interact(tile, Ray(g.vertices[j + 1] - inc * 1e-3, inc), f, cfg.tolerance)
                    if it.kind is InteractionKind.SPECULAR:
                        loss = it.loss_db
                    elif it.kind is InteractionKind.ABSORB and it.direction is not None:
                        loss, kind = it.loss_db, InteractionKind.ABSORB
                    else:
                        alive = False  # absorbed, or redirected by the programmed function
                        break
            bounces.append(Bounce(kind, loss, tile_id=tid, wall_id=wid))
        if alive:
            paths.append(PropagationPath(g.vertices, tuple(bounces)))
    return paths


def _accept(cache: _WallCache, prev: Vec3, tile, f: float, tol: float):
    """Programmed interaction of ``tile`` for a ray arriving from ``prev``, else None."""
    if (prev - tile.center).dot(tile.normal) <= 1e-9 or cache.occluded(prev, tile.center):
        return None
    it = interact(tile, Ray(prev, (tile.center - prev).unit()), f, tol)
    if it.kind not in (InteractionKind.STEER, InteractionKind.FOCUS):
        return None
    return it


def _hop_links(scenario: Scenario, cache: _WallCache, cfg: TraceConfig):
    """Configured in-band tiles and, per tile, the tiles its beam feeds."""
    key = ("hops", cfg.tolerance)
    hit = scenario.scratch.get(key)
    if hit is not None:
        return hit
    f = scenario.wave.frequency
    active = [t for t in scenario.configured_tiles if t.function.in_band(f)]
    succ = {}
    for a in active:
        fa = a.function
        out_dir = fa.outgoing if fa.outgoing is not None else None
        links = []
        for b in active:
            if b is a:
                continue
            # a focusing tile aims at its focal point, so its beam direction is fixed too
            d = out_dir if out_dir is not None else (fa.focal - a.center) if fa.focal is not None else None
            if d is None or angle_between(d, b.center - a.center) > cfg.tolerance:
                continue
            it = _accept(cache, a.center, b, f, cfg.tolerance)
            if it is not None:
                links.append((b, it))
        succ[a.id] = links
    hit = (active, succ)
    scenario.scratch[key] = hit
    return hit


def _tx_chains(scenario: Scenario, cache: _WallCache, tx: Vec3, cfg: TraceConfig):
    """Every programmed tile chain fed by a transmitter at ``tx``, with its exit beam."""
    key = ("chains", tx.as_tuple(), cfg.tolerance, cfg.max_tile_depth)
    hit = scenario.scratch.get(key)
    if hit is not None:
        return hit
    active, succ = _hop_links(scenario, cache, cfg)
    f = scenario.wave.frequency
    chains: list[tuple[tuple[Vec3, ...], tuple[Bounce, ...], Vec3]] = []

    def extend(tile, it, verts, bounces, used):
        chains.append((verts, bounces, it.direction))
        if len(bounces) >= cfg.max_tile_depth:
            return
        for nxt, nit in succ[tile.id]:
            if nxt.id in used:
                continue
            used.add(nxt.id)
            extend(nxt, nit, verts + (nxt.center,), bounces + (Bounce(nit.kind, nit.loss_db, nxt.id, nxt.wall_id),), used)
            used.discard(nxt.id)

    for t in active:
        it = _accept(cache, tx, t, f, cfg.tolerance)
        if it is not None:
            extend(t, it, (tx, t.center), (Bounce(it.kind, it.loss_db, t.id, t.wall_id),), {t.id})
    scenario.scratch[key] = chains
    return chains


def _tile_hop_paths(scenario: Scenario, cache: _WallCache, tx: Vec3, rx: Vec3, cfg: TraceConfig) -> list[PropagationPath]:
    if cfg.max_tile_depth == 0 or not scenario.configured_tiles:
        return []
    paths = []
    cos_tol = math.cos(cfg.tolerance)
    rxx, rxy, rxz = rx.x, rx.y, rx.z
    for verts, bounces, out_dir in _tx_chains(scenario, cache, tx, cfg):
        here = verts[-1]
        dx, dy, dz = rxx - here.x, rxy - here.y, rxz - here.z
        dn = math.sqrt(dx * dx + dy * dy + dz * dz)
        if dn == 0.0 or (out_dir.x * dx + out_dir.y * dy + out_dir.z * dz) < cos_tol * dn * out_dir.norm():
            continue
        if not cache.occluded(here, rx):
            paths.append(PropagationPath(verts + (rx,), bounces))
    return paths


def _device(scenario: Scenario, d: Device | str) -> Device:
    return scenario.device(d) if isinstance(d, str) else d


def trace_paths(scenario: Scenario, tx: Device | str, rx: Device | str, cfg: TraceConfig = TraceConfig()) -> list[PropagationPath]:
    """All propagation paths from ``tx`` to ``rx``, without duplicates, in a stable order."""
    tx, rx = _device(scenario, tx), _device(scenario, rx)
    a, b = tx.position, rx.position
    if a == b:
        return []
    cache = _cache_for(scenario)
    paths: list[PropagationPath] = []
    if not cache.occluded(a, b):
        paths.append(PropagationPath((a, b)))
    if cfg.max_specular_depth:
        paths.extend(_specular_paths(scenario, cache, a, b, cfg))
    paths.extend(_tile_hop_paths(scenario, cache, a, b, cfg))
    seen = set()
    unique = []
    for p in paths:
        k = p.key()
        if k not in seen:
            seen.add(k)
            unique.append(p)
    unique.sort(key=lambda p: (len(p.vertices), p.key()))
    return unique


def received_power(scenario: Scenario, tx: Device | str, rx: Device | str, cfg: TraceConfig = TraceConfig()) -> float:
    tx, rx = _device(scenario, tx), _device(scenario, rx)
    return aggregate_power(
        trace_paths(scenario, tx, rx, cfg),
        scenario.wave,
        tx.tx_power_dbm,
        tx.antenna,
        rx.antenna,
        coherent=cfg.coherent,
        floor_dbm=scenario.disconnect_threshold_dbm,
    )


# -- coverage maps ---------------------------------------------------------------


@dataclass(frozen=True)
class CoverageGrid:
    height: float
    cell: float
    xs: tuple[float, ...]
    ys: tuple[float, ...]
    values: tuple[tuple[float, ...], ...]  # values[row=y][col=x], dBm

    def at(self, x: float, y: float) -> float:
        i = min(range(len(self.xs)), key=lambda k: abs(self.xs[k] - x))
        j = min(range(len(self.ys)), key=lambda k: abs(self.ys[k] - y))
        return self.values[j][i]


def coverage_map(
    scenario: Scenario,
    tx: Device | str,
    height: float,
    cell: float,
    cfg: TraceConfig = TraceConfig(),
    rx_antenna: str = "dipole",
) -> CoverageGrid:
    """Received power at every cell centre of a horizontal grid at ``height``."""
    tx = _device(scenario, tx)
    L, W, H = scenario.bounds
    if not 0 <= height <= H or not cell > 0:
        raise ValueError("grid must lie within the scenario bounds")
    nx, ny = max(1, int(round(L / cell))), max(1, int(round(W / cell)))
    xs = tuple((i + 0.5) * cell for i in range(nx))
    ys = tuple((j + 0.5) * cell for j in range(ny))
    floor = scenario.disconnect_threshold_dbm
    boxes = [w.box for w in scenario.walls]
    vals: dict[tuple[int, int], float] = {}
    singular = []
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            p = Vec3(x, y, height)
            if p.dist(tx.position) < 1e-6:
                singular.append((j, i))
                continue
            if any(all(lo[k] < c < hi[k] for k, c in enumerate((x, y, height))) for lo, hi in boxes):
                vals[(j, i)] = floor
                continue
            probe = Device("__cell__", "receiver", p, rx_antenna)
            vals[(j, i)] = received_power(scenario, tx, probe, cfg)
    for j, i in singular:
        # nearest regular cell stands in for the one containing the transmitter
        nj, ni = min(vals, key=lambda c: ((c[0] - j) ** 2 + (c[1] - i) ** 2, c))
        vals[(j, i)] = vals[(nj, ni)]
    values = tuple(tuple(vals[(j, i)] for i in range(nx)) for j in range(ny))
    return CoverageGrid(height, cell, xs, ys, values)


def coverage_to_csv(grid: CoverageGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        [f"height_m={grid.height:.6f}", f"cell_m={grid.cell:.6f}", f"nx={len(grid.xs)}", f"ny={len(grid.ys)}"]
    )
    for row in grid.values:
        w.writerow([f"{v:.6f}" for v in row])
    return buf.getvalue()


def coverage_from_csv(text: str) -> CoverageGrid:
    rows = list(csv.reader(io.StringIO(text)))
    meta = dict(item.split("=", 1) for item in rows[0])
    height, cell = float(meta["height_m"]), float(meta["cell_m"])
    nx, ny = int(meta["nx"]), int(meta["ny"])
    values = tuple(tuple(float(v) for v in r) for r in rows[1:])
    if len(values) != ny or any(len(r) != nx for r in values):
        raise ValueError("coverage CSV dimensions do not match its header")
    xs = tuple((i + 0.5) * cell for i in range(nx))
    ys = tuple((j + 0.5) * cell for j in range(ny))
    return CoverageGrid(height, cell, xs, ys, values)

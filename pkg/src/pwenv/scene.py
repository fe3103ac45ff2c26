"""World model: room bounds, walls with tiled coatings, devices, and the wave.

Walls are axis-aligned boxes described by their room-facing rectangle (a
corner plus two edge vectors), an outward normal pointing into the room, and
a thickness extruded behind the face. Coated walls are tiled on a regular
grid. A :class:`Scenario` is immutable; configured variants are produced
with :meth:`Scenario.with_functions`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from importlib import resources
from typing import Any, Iterable, Mapping

from .emwave import DISCONNECT_FLOOR_DBM, WaveSpec
from .geometry import Box, Vec3, segment_hits_box
from .tiles import Action, TileFunction

ROLES = ("transmitter", "receiver", "unauthorized")
ANTENNAS = ("dipole", "isotropic")


class ScenarioError(ValueError):
    """Raised for malformed or invalid scenario documents."""


@dataclass(frozen=True)
class Wall:
    id: str
    corner: Vec3
    edge_u: Vec3
    edge_v: Vec3
    normal: Vec3
    thickness: float
    reflection_loss_db: float = 10.0
    coated: bool = True

    def __post_init__(self):
        if abs(self.edge_u.dot(self.edge_v)) > 1e-9:
            raise ScenarioError(f"wall {self.id}: edge vectors must be orthogonal")
        if not self.normal.is_unit():
            raise ScenarioError(f"wall {self.id}: normal must be unit length")
        if abs(self.normal.dot(self.edge_u)) > 1e-9 or abs(self.normal.dot(self.edge_v)) > 1e-9:
            raise ScenarioError(f"wall {self.id}: normal must be orthogonal to both edges")
        for e in (self.edge_u, self.edge_v, self.normal):
            if sum(1 for c in e if abs(c) > 1e-12) != 1:
                raise ScenarioError(f"wall {self.id}: walls must be axis-aligned")
        if self.thickness <= 0:
            raise ScenarioError(f"wall {self.id}: thickness > 0 required")
        if self.reflection_loss_db < 0:
            raise ScenarioError(f"wall {self.id}: reflection loss must be >= 0 dB")

    @property
    def width(self) -> float:
        return self.edge_u.norm()

    @property
    def height(self) -> float:
        return self.edge_v.norm()

    @property
    def area(self) -> float:
        return self.width * self.height

    @cached_property
    def box(self) -> Box:
        c, u, v = self.corner, self.edge_u, self.edge_v
        back = self.normal * (-self.thickness)
        pts = [c, c + u, c + v, c + u + v]
        pts += [p + back for p in pts]
        lo = tuple(min(getattr(p, a) for p in pts) for a in "xyz")
        hi = tuple(max(getattr(p, a) for p in pts) for a in "xyz")
        return lo, hi

    def contains_on_face(self, p: Vec3, tol: float = 1e-9) -> bool:
        off = p - self.corner
        if abs(off.dot(self.normal)) > tol:
            return False
        a = off.dot(self.edge_u) / self.edge_u.dot(self.edge_u)
        b = off.dot(self.edge_v) / self.edge_v.dot(self.edge_v)
        return -tol <= a <= 1 + tol and -tol <= b <= 1 + tol


@dataclass(frozen=True)
class Tile:
    id: str
    wall_id: str
    center: Vec3
    normal: Vec3
    side: float
    u_axis: Vec3
    v_axis: Vec3
    reflection_loss_db: float = 10.0
    function: TileFunction | None = None

    def __post_init__(self):
        if not self.side > 0:
            raise ScenarioError("side length > 0 required")


@dataclass(frozen=True)
class Device:
    id: str
    role: str
    position: Vec3
    antenna: str = "dipole"
    tx_power_dbm: float | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ScenarioError(f"device {self.id}: unknown role {self.role!r}")
        if self.antenna not in ANTENNAS:
            raise ScenarioError(f"device {self.id}: unknown antenna {self.antenna!r}")
        if self.role == "transmitter":
            if self.tx_power_dbm is None or not math.isfinite(self.tx_power_dbm):
                raise ScenarioError(f"device {self.id}: transmit power must be finite")


def tile_surface(wall: Wall, side: float) -> list[Tile]:
    """Cut the face of ``wall`` into a row-major grid of square tiles."""
    if not side > 0:
        raise ScenarioError("side length > 0 required")
    w, h = wall.width, wall.height
    nu, nv = round(w / side), round(h / side)
    ru, rv = w - nu * side, h - nv * side
    if abs(ru) > 1e-9 * max(1.0, w) or abs(rv) > 1e-9 * max(1.0, h) or nu == 0 or nv == 0:
        raise ScenarioError(
            f"wall {wall.id}: {w:g} x {h:g} m is not a multiple of tile side {side:g} m "
            f"(remainder {w - math.floor(w / side) * side:g} x {h - math.floor(h / side) * side:g} m)"
        )
    u, v = wall.edge_u.unit(), wall.edge_v.unit()
    tiles = []
    for r in range(nv):
        for c in range(nu):
            center = wall.corner + u * ((c + 0.5) * side) + v * ((r + 0.5) * side)
            tiles.append(
                Tile(
                    id=f"{wall.id}/{r}/{c}",
                    wall_id=wall.id,
                    center=center,
                    normal=wall.normal,
                    side=side,
                    u_axis=u,
                    v_axis=v,
                    reflection_loss_db=wall.reflection_loss_db,
                )
            )
    return tiles


@dataclass(frozen=True)
class Scenario:
    bounds: tuple[float, float, float]
    walls: tuple[Wall, ...]
    tiles: tuple[Tile, ...]
    devices: tuple[Device, ...]
    wave: WaveSpec
    tile_side: float | None = None
    disconnect_threshold_dbm: float = DISCONNECT_FLOOR_DBM
    name: str = field(default="", compare=False)

    def __post_init__(self):
        validate(self)

    @cached_property
    def tile_index(self) -> dict[str, Tile]:
        return {t.id: t for t in self.tiles}

    @cached_property
    def device_index(self) -> dict[str, Device]:
        return {d.id: d for d in self.devices}

    @cached_property
    def wall_index(self) -> dict[str, Wall]:
        return {w.id: w for w in self.walls}

    @cached_property
    def scratch(self) -> dict:
        """Per-snapshot memo for derived data (never part of equality)."""
        return {}

    def tile(self, tile_id: str) -> Tile:
        return self.tile_index[tile_id]

    def device(self, device_id: str) -> Device:
        try:
            return self.device_index[device_id]
        except KeyError:
            raise KeyError(f"unknown device {device_id!r}") from None

    @property
    def transmitters(self) -> list[Device]:
        return [d for d in self.devices if d.role == "transmitter"]

    @property
    def receivers(self) -> list[Device]:
        return [d for d in self.devices if d.role == "receiver"]

    @cached_property
    def configured_tiles(self) -> list[Tile]:
        return [t for t in self.tiles if t.function is not None]

    def assignment(self) -> dict[str, TileFunction]:
        return {t.id: t.function for t in self.tiles if t.function is not None}

    def with_functions(self, functions: Mapping[str, TileFunction | None], clear: bool = True) -> "Scenario":
        """Snapshot with tile functions replaced; ``clear`` drops all others first."""
        unknown = set(functions) - set(self.tile_index)
        if unknown:
            raise KeyError(f"unknown tile ids: {sorted(unknown)}")
        tiles = tuple(
            replace(t, function=functions.get(t.id, None if clear else t.function))
            if (clear or t.id in functions)
            else t
            for t in self.tiles
        )
        return self._evolve(tiles=tiles)

    def _evolve(self, **changes) -> "Scenario":
        # geometry and ids are unchanged, so the validated invariants still hold
        new = object.__new__(Scenario)
        for f in fields(self):
            object.__setattr__(new, f.name, changes.get(f.name, getattr(self, f.name)))
        return new

    def with_device(self, device_id: str, position: Vec3) -> "Scenario":
        self.device(device_id)
        devices = tuple(replace(d, position=position) if d.id == device_id else d for d in self.devices)
        return replace(self, devices=devices)

    def inside(self, p: Vec3, tol: float = 1e-9) -> bool:
        L, W, H = self.bounds
        return -tol <= p.x <= L + tol and -tol <= p.y <= W + tol and -tol <= p.z <= H + tol


def validate(s: Scenario) -> None:
    if len(s.bounds) != 3 or any(not (b > 0) for b in s.bounds):
        raise ScenarioError("bounds must be three positive lengths")
    ids = [d.id for d in s.devices]
    if len(ids) != len(set(ids)):
        raise ScenarioError("device ids must be unique")
    wall_ids = [w.id for w in s.walls]
    if len(wall_ids) != len(set(wall_ids)):
        raise ScenarioError("wall ids must be unique")
    for d in s.devices:
        if not s.inside(d.position):
            raise ScenarioError(f"device {d.id}: position inside scenario bounds required")
    expected: list[str] = []
    if s.tile_side is not None:
        for w in s.walls:
            if w.coated:
                expected.extend(t.id for t in tile_surface(w, s.tile_side))
    elif any(w.coated for w in s.walls):
        raise ScenarioError("coated walls need a tiling side length")
    if [t.id for t in s.tiles] != expected:
        raise ScenarioError("tile list must be the full grid of every coated wall")
    walls = {w.id: w for w in s.walls}
    for t in s.tiles:
        if not walls[t.wall_id].contains_on_face(t.center):
            raise ScenarioError(f"tile {t.id}: center must lie on its wall")


def make_scenario(
    bounds: Iterable[float],
    walls: Iterable[Wall],
    devices: Iterable[Device],
    wave: WaveSpec,
    tile_side: float | None = None,
    disconnect_threshold_dbm: float = DISCONNECT_FLOOR_DBM,
    functions: Mapping[str, TileFunction] | None = None,
    name: str = "",
) -> Scenario:
    walls = tuple(walls)
    tiles: list[Tile] = []
    if tile_side is not None:
        for w in walls:
            if w.coated:
                tiles.extend(tile_surface(w, tile_side))
    functions = functions or {}
    tiles = [replace(t, function=functions.get(t.id)) if t.id in functions else t for t in tiles]
    if set(functions) - {t.id for t in tiles}:
        raise ScenarioError(f"functions reference unknown tiles: {sorted(set(functions) - {t.id for t in tiles})}")
    return Scenario(
        bounds=tuple(float(b) for b in bounds),
        walls=walls,
        tiles=tuple(tiles),
        devices=tuple(devices),
        wave=wave,
        tile_side=tile_side,
        disconnect_threshold_dbm=disconnect_threshold_dbm,
        name=name,
    )


# -- geometry queries -----------------------------------------------------------


def occluded(p: Vec3, q: Vec3, scenario: Scenario) -> bool:
    """True iff the open segment (p, q) passes through any wall volume."""
    if p == q:
        raise ValueError("occlusion test needs two distinct points")
    return any(segment_hits_box(p, q, w.box) for w in scenario.walls)


# -- the evaluation room ----------------------------------------------------------

PAPER_TX_POSITION = Vec3(1.5, 2.25, 2.0)


def build_paper_scenario() -> Scenario:
    """The 15 x 10 x 3 m two-section room at 60 GHz used for the coverage study.

    The 12 m middle wall starts at the west wall, leaving a 3 m passage at the
    east end (the end away from the transmitter). Receivers sit on a 3 x 4
    grid with 1 m margins inside the far section.
    """
    L, W, H = 15.0, 10.0, 3.0
    outer_t = 0.3
    mid_len, mid_t = 12.0, 1.0
    y_mid0 = (W - mid_t) / 2  # 4.5
    y_mid1 = y_mid0 + mid_t  # 5.5
    ex, ey, ez = Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)
    walls = (
        Wall("south", Vec3(0, 0, 0), ex * L, ez * H, ey, outer_t),
        Wall("north", Vec3(0, W, 0), ex * L, ez * H, -ey, outer_t),
        Wall("west", Vec3(0, 0, 0), ey * W, ez * H, ex, outer_t),
        Wall("east", Vec3(L, 0, 0), ey * W, ez * H, -ex, outer_t),
        # the middle wall is modelled as two half-thickness slabs so both faces carry tiles
        Wall("mid-s", Vec3(0, y_mid0, 0), ex * mid_len, ez * H, -ey, mid_t / 2),
        Wall("mid-n", Vec3(0, y_mid1, 0), ex * mid_len, ez * H, ey, mid_t / 2),
        Wall("mid-end", Vec3(mid_len, y_mid0, 0), ey * mid_t, ez * H, ex, mid_t / 2),
    )
    devices = [Device("tx", "transmitter", PAPER_TX_POSITION, "dipole", 100.0)]
    margin = 1.0
    xs = [margin + i * (L - 2 * margin) / 3 for i in range(4)]
    ys = [y_mid1 + margin + j * (W - y_mid1 - 2 * margin) / 2 for j in range(3)]
    k = 0
    for y in ys:
        for x in xs:
            k += 1
            devices.append(Device(f"rx{k:02d}", "receiver", Vec3(x, y, 1.5), "dipole"))
    return make_scenario(
        (L, W, H), walls, devices, WaveSpec(60e9, 25e6), tile_side=1.0, name="paper"
    )


# -- document format -------------------------------------------------------------


def _vec_out(v: Vec3) -> list[float]:
    return [v.x, v.y, v.z]


def _function_to_doc(fn: TileFunction) -> dict[str, Any]:
    doc: dict[str, Any] = {"action": fn.action.value, "band": list(fn.band), "loss_db": fn.loss_db}
    if fn.incident is not None:
        doc["incident"] = _vec_out(fn.incident)
    if fn.outgoing is not None:
        doc["outgoing"] = _vec_out(fn.outgoing)
    if fn.focal is not None:
        doc["focal"] = _vec_out(fn.focal)
    if fn.action is Action.ABSORB:
        doc["alpha"] = fn.alpha
    return doc


def to_document(s: Scenario) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "name": s.name,
        "bounds": list(s.bounds),
        "wave": {"frequency_hz": s.wave.frequency, "bandwidth_hz": s.wave.bandwidth},
        "tiling": {"side_m": s.tile_side},
        "disconnect_threshold_dbm": s.disconnect_threshold_dbm,
        "walls": [
            {
                "id": w.id,
                "corner": _vec_out(w.corner),
                "edge_u": _vec_out(w.edge_u),
                "edge_v": _vec_out(w.edge_v),
                "normal": _vec_out(w.normal),
                "thickness": w.thickness,
                "reflection_loss_db": w.reflection_loss_db,
                "coated": w.coated,
            }
            for w in s.walls
        ],
        "devices": [
            {
                "id": d.id,
                "role": d.role,
                "position": _vec_out(d.position),
                "antenna": d.antenna,
                **({"tx_power_dbm": d.tx_power_dbm} if d.tx_power_dbm is not None else {}),
            }
            for d in s.devices
        ],
    }
    fns = s.assignment()
    if fns:
        doc["functions"] = {tid: _function_to_doc(fn) for tid, fn in fns.items()}
    return doc


def serialize(s: Scenario) -> str:
    return json.dumps(to_document(s), indent=2) + "\n"


class _Reader:
    """Field accessor that names the offending path in error messages."""

    def __init__(self, data: Any, path: str):
        self.data = data
        self.path = path

    def get(self, key: str, default: Any = ...):
        if not isinstance(self.data, dict):
            raise ScenarioError(f"{self.path}: expected an object")
        if key not in self.data:
            if default is ...:
                raise ScenarioError(f"{self.path}.{key}: missing field")
            return default
        return self.data[key]

    def num(self, key: str, default: Any = ...) -> float:
        v = self.get(key, default)
        if v is None:
            return v
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{self.path}.{key}: expected a number")
        return float(v)

    def vec(self, key: str) -> Vec3:
        v = self.get(key)
        if not (isinstance(v, list) and len(v) == 3 and all(isinstance(c, (int, float)) for c in v)):
            raise ScenarioError(f"{self.path}.{key}: expected [x, y, z]")
        try:
            return Vec3.of(v)
        except ValueError as exc:
            raise ScenarioError(f"{self.path}.{key}: {exc}") from None


def _function_from_doc(r: _Reader) -> TileFunction:
    try:
        action = Action(r.get("action"))
        return TileFunction(
            action=action,
            band=tuple(float(x) for x in r.get("band")),
            incident=r.vec("incident") if "incident" in r.data else None,
            outgoing=r.vec("outgoing") if "outgoing" in r.data else None,
            focal=r.vec("focal") if "focal" in r.data else None,
            alpha=r.num("alpha", 1.0),
            loss_db=r.num("loss_db", 1.0),
        )
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"{r.path}: {exc}") from None


def from_document(doc: Any) -> Scenario:
    root = _Reader(doc, "$")
    bounds = root.get("bounds")
    if not (isinstance(bounds, list) and len(bounds) == 3):
        raise ScenarioError("$.bounds: expected [length, width, height]")
    wr = _Reader(root.get("wave"), "$.wave")
    try:
        wave = WaveSpec(wr.num("frequency_hz"), wr.num("bandwidth_hz", 0.0))
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"$.wave: {exc}") from None
    tiling = root.get("tiling", {}) or {}
    side = _Reader(tiling, "$.tiling").num("side_m", None)
    if side is not None and not side > 0:
        raise ScenarioError("$.tiling.side_m: side length > 0 required")
    walls = []
    for i, wd in enumerate(root.get("walls", [])):
        r = _Reader(wd, f"$.walls[{i}]")
        walls.append(
            Wall(
                id=str(r.get("id")),
                corner=r.vec("corner"),
                edge_u=r.vec("edge_u"),
                edge_v=r.vec("edge_v"),
                normal=r.vec("normal"),
                thickness=r.num("thickness"),
                reflection_loss_db=r.num("reflection_loss_db", 10.0),
                coated=bool(r.get("coated", True)),
            )
        )
    devices = []
    for i, dd in enumerate(root.get("devices")):
        r = _Reader(dd, f"$.devices[{i}]")
        devices.append(
            Device(
                id=str(r.get("id")),
                role=r.get("role"),
                position=r.vec("position"),
                antenna=r.get("antenna", "dipole"),
                tx_power_dbm=r.num("tx_power_dbm", None),
            )
        )
    functions = {
        tid: _function_from_doc(_Reader(fd, f"$.functions.{tid}")) for tid, fd in (root.get("functions", {}) or {}).items()
    }
    return make_scenario(
        bounds,
        walls,
        devices,
        wave,
        tile_side=side,
        disconnect_threshold_dbm=root.num("disconnect_threshold_dbm", DISCONNECT_FLOOR_DBM),
        functions=functions,
        name=str(root.get("name", "")),
    )


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document (JSON text)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_document(doc)


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def paper_scenario_text() -> str:
    return resources.files("pwenv.data").joinpath("paper_scenario.json").read_text(encoding="utf-8")

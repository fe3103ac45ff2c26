"""HyperSurface tile behaviour: the callback API, wave interaction, sizing and power.

A tile carries at most one active function. Tiles are addressed through
``callback(action_type, parameters)`` which returns an :class:`Outcome`;
anything other than a well-formed, geometrically possible request is
rejected without touching the current state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any, Mapping

from .emwave import InteractionKind, wavelength
from .geometry import Vec3, angle_between, reflect

if TYPE_CHECKING:
    from .scene import Tile

DEFAULT_TOLERANCE = math.radians(10.0)
DEFAULT_FUNCTION_LOSS_DB = 1.0
DIODE_DRAIN_W = 5.0 * 1.6e-6  # 5 V x 1.6 uA per powered diode


class Action(str, enum.Enum):
    STEER = "STEER"
    FOCUS = "FOCUS"
    ABSORB = "ABSORB"
    RESET = "RESET"


@dataclass(frozen=True)
class TileFunction:
    action: Action
    band: tuple[float, float]
    incident: Vec3 | None = None
    outgoing: Vec3 | None = None
    focal: Vec3 | None = None
    alpha: float = 1.0
    loss_db: float = DEFAULT_FUNCTION_LOSS_DB

    def __post_init__(self):
        lo, hi = self.band
        if not lo <= hi:
            raise ValueError("band requires f_low <= f_high")
        if self.action is Action.RESET:
            raise ValueError("RESET is a command, not a function")
        if self.action in (Action.STEER, Action.FOCUS) and self.incident is None:
            raise ValueError(f"{self.action.value} needs an incident direction")
        if self.action is Action.STEER and self.outgoing is None:
            raise ValueError("STEER needs an outgoing direction")
        if self.action is Action.FOCUS and self.focal is None:
            raise ValueError("FOCUS needs a focal point")
        for d in (self.incident, self.outgoing):
            if d is not None and not d.is_unit():
                raise ValueError("directions must be unit length")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("absorption coefficient must lie in [0, 1]")
        if self.loss_db < 0:
            raise ValueError("function loss must be >= 0")

    def in_band(self, f: float) -> bool:
        return self.band[0] <= f <= self.band[1]


class Status(str, enum.Enum):
    OK = "OK"
    REJECTED = "REJECTED"


@dataclass(frozen=True)
class Outcome:
    status: Status
    tile_id: str
    reason: str = ""
    config_ref: str | None = None

    def __post_init__(self):
        if self.status is Status.REJECTED and not self.reason:
            raise ValueError("a rejected outcome must carry a reason")

    @property
    def ok(self) -> bool:
        return self.status is Status.OK


@dataclass(frozen=True)
class Ray:
    origin: Vec3
    direction: Vec3


@dataclass(frozen=True)
class Interaction:
    kind: InteractionKind
    point: Vec3
    direction: Vec3 | None  # None when fully absorbed
    loss_db: float
    focal: Vec3 | None = None


def _vec(v: Any) -> Vec3:
    return v if isinstance(v, Vec3) else Vec3.of(v)


def _unit(v: Vec3) -> Vec3:
    # keep already-normalised vectors bit-exact so re-sent functions compare equal
    return v if v.is_unit(1e-12) else v.unit()


def build_function(tile: "Tile", action_type: str | Action, parameters: Mapping[str, Any]) -> TileFunction:
    """Validate callback parameters against the tile and build the function.

    Raises ValueError with a human-readable reason on any problem.
    """
    try:
        action = Action(action_type.upper() if isinstance(action_type, str) else action_type)
    except ValueError:
        raise ValueError(f"unknown action type {action_type!r}") from None
    if action is Action.RESET:
        raise ValueError("RESET carries no function")
    if "band" not in parameters:
        raise ValueError(f"{action.value} requires a frequency band")
    lo, hi = (float(x) for x in parameters["band"])
    kw: dict[str, Any] = {"band": (lo, hi)}
    if "loss_db" in parameters:
        kw["loss_db"] = float(parameters["loss_db"])
    n = tile.normal
    if action in (Action.STEER, Action.FOCUS):
        if parameters.get("incident") is None:
            raise ValueError(f"{action.value} requires an incident direction")
        inc = _unit(_vec(parameters["incident"]))
        if inc.dot(n) >= 0:
            raise ValueError("incident direction does not impinge on the tile face")
        kw["incident"] = inc
    if action is Action.STEER:
        if parameters.get("outgoing") is None:
            raise ValueError("STEER requires an outgoing direction")
        out = _unit(_vec(parameters["outgoing"]))
        if out.dot(n) <= 0:
            raise ValueError("outgoing direction points into the wall")
        kw["outgoing"] = out
    elif action is Action.FOCUS:
        if parameters.get("focal") is None:
            raise ValueError("FOCUS requires a focal point")
        focal = _vec(parameters["focal"])
        if (focal - tile.center).dot(n) <= 0:
            raise ValueError("focal point lies behind the tile")
        kw["focal"] = focal
    elif action is Action.ABSORB:
        kw["alpha"] = float(parameters.get("alpha", 1.0))
    return TileFunction(action=action, **kw)


class HyperSurfaceTile:
    """Mutable controller for one tile; the only writer of its active function."""

    def __init__(self, tile: "Tile"):
        self.tile = tile
        self.active: TileFunction | None = tile.function

    @property
    def id(self) -> str:
        return self.tile.id

    def callback(self, action_type: str | Action, parameters: Mapping[str, Any] | None = None) -> Outcome:
        parameters = parameters or {}
        if str(getattr(action_type, "value", action_type)).upper() == Action.RESET.value:
            self.active = None
            return Outcome(Status.OK, self.id)
        try:
            fn = build_function(self.tile, action_type, parameters)
        except (ValueError, TypeError) as exc:
            return Outcome(Status.REJECTED, self.id, reason=str(exc))
        self.active = fn
        return Outcome(Status.OK, self.id)

    def install(self, fn: TileFunction | None) -> Outcome:
        """Install an already validated function (or clear with None)."""
        if fn is None:
            return self.callback(Action.RESET)
        if fn.incident is not None and fn.incident.dot(self.tile.normal) >= 0:
            return Outcome(Status.REJECTED, self.id, "incident direction does not impinge on the tile face")
        if fn.outgoing is not None and fn.outgoing.dot(self.tile.normal) <= 0:
            return Outcome(Status.REJECTED, self.id, "outgoing direction points into the wall")
        if fn.focal is not None and (fn.focal - self.tile.center).dot(self.tile.normal) <= 0:
            return Outcome(Status.REJECTED, self.id, "focal point lies behind the tile")
        self.active = fn
        return Outcome(Status.OK, self.id)

    def snapshot(self) -> "Tile":
        return replace(self.tile, function=self.active)


def callback(tile: HyperSurfaceTile, action_type: str | Action, parameters: Mapping[str, Any] | None = None) -> Outcome:
    return tile.callback(action_type, parameters)


def hit_point(tile: "Tile", ray: Ray, slack: float = 1e-6) -> Vec3:
    n = tile.normal
    den = ray.direction.dot(n)
    if den >= 0:
        raise ValueError(f"ray does not approach the face of tile {tile.id}")
    t = (tile.center - ray.origin).dot(n) / den
    if t <= 0:
        raise ValueError(f"tile {tile.id} is behind the ray origin")
    p = ray.origin + ray.direction * t
    off = p - tile.center
    half = tile.side / 2 + slack
    if abs(off.dot(tile.u_axis)) > half or abs(off.dot(tile.v_axis)) > half:
        raise ValueError(f"ray misses tile {tile.id}")
    return p


def interact(tile: "Tile", ray: Ray, f: float, tolerance: float = DEFAULT_TOLERANCE) -> Interaction:
    """Outcome of a ray at frequency ``f`` impinging on ``tile``."""
    d = ray.direction.unit()
    p = hit_point(tile, Ray(ray.origin, d))
    fn = tile.function
    if fn is not None and fn.in_band(f):
        if fn.action is Action.ABSORB:
            if fn.alpha >= 1.0:
                return Interaction(InteractionKind.ABSORB, p, None, math.inf)
            return Interaction(
                InteractionKind.ABSORB, p, reflect(d, tile.normal), -10.0 * math.log10(1.0 - fn.alpha)
            )
        if angle_between(d, fn.incident) <= tolerance:
            if fn.action is Action.STEER:
                return Interaction(InteractionKind.STEER, p, fn.outgoing, fn.loss_db)
            return Interaction(InteractionKind.FOCUS, p, (fn.focal - p).unit(), fn.loss_db, focal=fn.focal)
    return Interaction(InteractionKind.SPECULAR, p, reflect(d, tile.normal), tile.reflection_loss_db)


def meta_atom_bounds(f: float) -> tuple[float, float]:
    """Side-length range (lambda/10, lambda/5) for meta-atoms at frequency ``f``."""
    lam = wavelength(f)
    return lam / 10.0, lam / 5.0


def _floor_ratio(a: float, b: float) -> int:
    return int(math.floor(a / b + 1e-9))


def meta_atom_count(width: float, height: float, side: float) -> int:
    if width <= 0 or height <= 0 or side <= 0:
        raise ValueError("dimensions must be positive")
    return _floor_ratio(width, side) * _floor_ratio(height, side)


def power_drain(area: float, side: float, on_fraction: float = 1.0, diode_watts: float = DIODE_DRAIN_W) -> float:
    """Diode-array drain in watts for ``area`` m^2 of coating with square meta-atoms."""
    if area <= 0 or side <= 0:
        raise ValueError("area and meta-atom side must be positive")
    if not 0.0 <= on_fraction <= 1.0:
        raise ValueError("on_fraction must lie in [0, 1]")
    return _floor_ratio(area, side * side) * diode_watts * on_fraction


@dataclass(frozen=True)
class TileCommand:
    """One configuration request for one tile; ``function`` is None for RESET."""

    tile_id: str
    action: Action
    function: TileFunction | None = None
    correlation_id: str = ""

    def __post_init__(self):
        if (self.action is Action.RESET) != (self.function is None):
            raise ValueError("RESET carries no function; every other action needs one")
        if self.function is not None and self.function.action is not self.action:
            raise ValueError("command action does not match its function")

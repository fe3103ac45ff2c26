"""Propagation primitives: wavelength, Friis spreading, dipole pattern, link budget.

Received power of a single path is a plain link budget::

    P_rx = P_tx + G_tx + G_rx - sum(bounce losses) - FSPL(d_eff)

where ``d_eff`` is the unfolded path length accumulated since the last
focusing bounce (a focusing tile re-collimates the beam, so free-space
spreading starts over from it).
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .geometry import UP, Vec3, angle_between

C = 299_792_458.0
DISCONNECT_FLOOR_DBM = -250.0
DIPOLE_PEAK = 1.64


@dataclass(frozen=True)
class WaveSpec:
    frequency: float
    bandwidth: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise ValueError("frequency > 0 required")
        if not self.bandwidth >= 0:
            raise ValueError("bandwidth >= 0 required")

    @property
    def wavelength(self) -> float:
        return wavelength(self.frequency)

    @property
    def band(self) -> tuple[float, float]:
        return (self.frequency - self.bandwidth / 2, self.frequency + self.bandwidth / 2)


def wavelength(f: float) -> float:
    if not f > 0:
        raise ValueError(f"frequency must be positive, got {f}")
    return C / f


def fspl_db(d: float, f: float) -> float:
    """Free-space path loss 20*log10(4*pi*d/lambda) in dB."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 20.0 * math.log10(4.0 * math.pi * d / wavelength(f))


def dipole_gain(theta: float) -> float:
    """Linear gain of a half-wave dipole at angle ``theta`` from its axis."""
    s = math.sin(theta)
    if abs(s) < 1e-12:
        return 0.0
    return DIPOLE_PEAK * (math.cos(math.pi / 2 * math.cos(theta)) / s) ** 2


def lin_to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(w: float) -> float:
    if w <= 0:
        return -math.inf
    return 10.0 * math.log10(w) + 30.0


def antenna_gain_dbi(antenna: str, direction: Vec3) -> float:
    """Gain in dBi of a vertically oriented antenna toward ``direction``."""
    if antenna == "isotropic":
        return 0.0
    if antenna == "dipole":
        return lin_to_db(dipole_gain(angle_between(UP, direction)))
    raise ValueError(f"unknown antenna model {antenna!r}")


class InteractionKind(str, enum.Enum):
    SPECULAR = "specular"
    STEER = "steer"
    FOCUS = "focus"
    ABSORB = "absorb"  # partially absorbed, remnant reflected


@dataclass(frozen=True)
class Bounce:
    kind: InteractionKind
    loss_db: float
    tile_id: str | None = None
    wall_id: str | None = None


@dataclass(frozen=True)
class PropagationPath:
    vertices: tuple[Vec3, ...]
    bounces: tuple[Bounce, ...] = ()

    def __post_init__(self):
        if len(self.vertices) < 2:
            raise ValueError("a path needs at least one segment")
        if len(self.bounces) != len(self.vertices) - 2:
            raise ValueError("need exactly one bounce record per interior vertex")
        if any(L <= 0 for L in self.segment_lengths):
            raise ValueError("zero-length segment in path")
        if any(b.loss_db < 0 for b in self.bounces):
            raise ValueError("bounce losses must be >= 0")

    @property
    def segment_lengths(self) -> tuple[float, ...]:
        v = self.vertices
        return tuple(v[i].dist(v[i + 1]) for i in range(len(v) - 1))

    @property
    def length(self) -> float:
        return sum(self.segment_lengths)

    @property
    def delay(self) -> float:
        return self.length / C

    def departure(self) -> Vec3:
        return (self.vertices[1] - self.vertices[0]).unit()

    def arrival(self) -> Vec3:
        """Direction from the receiver back toward the last vertex."""
        return (self.vertices[-2] - self.vertices[-1]).unit()

    def key(self) -> tuple:
        """Hashable identity used to deduplicate traced paths."""
        return tuple(v.as_tuple() for v in self.vertices) + tuple((b.kind.value, b.tile_id, b.wall_id) for b in self.bounces)


def spreading_distance(path: PropagationPath) -> float:
    d = 0.0
    lengths = path.segment_lengths
    for i, seg in enumerate(lengths):
        d += seg
        if i < len(path.bounces) and path.bounces[i].kind is InteractionKind.FOCUS:
            d = 0.0
    return d


def path_power(
    path: PropagationPath,
    wave: WaveSpec,
    tx_power_dbm: float,
    tx_antenna: str = "isotropic",
    rx_antenna: str = "isotropic",
) -> float:
    """Received power in dBm carried by one path."""
    if path is None:
        raise ValueError("empty path")
    g = antenna_gain_dbi(tx_antenna, path.departure()) + antenna_gain_dbi(rx_antenna, path.arrival())
    loss = sum(b.loss_db for b in path.bounces)
    return tx_power_dbm + g - loss - fspl_db(spreading_distance(path), wave.frequency)


def aggregate_power(
    paths: Iterable[PropagationPath],
    wave: WaveSpec,
    tx_power_dbm: float,
    tx_antenna: str = "isotropic",
    rx_antenna: str = "isotropic",
    coherent: bool = False,
    floor_dbm: float = DISCONNECT_FLOOR_DBM,
) -> float:
    """Total received power in dBm; ``floor_dbm`` when nothing arrives."""
    paths = list(paths)
    if not paths:
        return floor_dbm
    powers = [dbm_to_watts(path_power(p, wave, tx_power_dbm, tx_antenna, rx_antenna)) for p in paths]
    if coherent:
        lam = wave.wavelength
        field = sum(math.sqrt(w) * cmath.exp(-2j * math.pi * p.length / lam) for w, p in zip(powers, paths))
        total = abs(field) ** 2
    else:
        total = math.fsum(powers)
    return max(watts_to_dbm(total), floor_dbm)


@dataclass(frozen=True)
class Pdp:
    taps: tuple[tuple[float, float], ...]  # (delay s, power W), sorted by delay

    def __post_init__(self):
        delays = [d for d, _ in self.taps]
        if any(d < 0 for d in delays) or any(p < 0 for _, p in self.taps):
            raise ValueError("delays and powers must be non-negative")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ValueError("tap delays must be strictly increasing")


def pdp(
    paths: Sequence[PropagationPath],
    wave: WaveSpec,
    tx_power_dbm: float,
    tx_antenna: str = "isotropic",
    rx_antenna: str = "isotropic",
) -> Pdp:
    """Power-delay profile; paths with equal delay share one tap."""
    taps: dict[float, float] = {}
    for p in paths:
        # focus bounces reset spreading but not delay: delay is the full length
        w = dbm_to_watts(path_power(p, wave, tx_power_dbm, tx_antenna, rx_antenna))
        tau = p.delay
        taps[tau] = taps.get(tau, 0.0) + w
    return Pdp(tuple(sorted(taps.items())))


def rms_delay_spread(profile: Pdp) -> float:
    if not profile.taps:
        raise ValueError("delay spread is undefined for an empty profile")
    total = math.fsum(p for _, p in profile.taps)
    if total <= 0:
        raise ValueError("delay spread is undefined for a zero-power profile")
    mean = math.fsum(t * p for t, p in profile.taps) / total
    var = math.fsum(p * (t - mean) ** 2 for t, p in profile.taps) / total
    return math.sqrt(max(var, 0.0))

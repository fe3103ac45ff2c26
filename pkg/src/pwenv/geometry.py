"""Small 3D vector type and the box/segment tests used across the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Boxes are shrunk by this much before intersection so that segments which
# start/end on a face, or graze along it, are not counted as blocked.
SURFACE_EPS = 1e-9


@dataclass(frozen=True, slots=True)
class Vec3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        # nan/inf in any component propagates into the sum
        if not math.isfinite(self.x + self.y + self.z):
            raise ValueError(f"non-finite vector component in {self!r}")

    @classmethod
    def of(cls, seq: Sequence[float]) -> "Vec3":
        x, y, z = seq
        return cls(float(x), float(y), float(z))

    def __add__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x + o.x, self.y + o.y, self.z + o.z)

    def __sub__(self, o: "Vec3") -> "Vec3":
        return Vec3(self.x - o.x, self.y - o.y, self.z - o.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)

    def __iter__(self):
        yield self.x
        yield self.y
        yield self.z

    def dot(self, o: "Vec3") -> float:
        return self.x * o.x + self.y * o.y + self.z * o.z

    def cross(self, o: "Vec3") -> "Vec3":
        return Vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def unit(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return Vec3(self.x / n, self.y / n, self.z / n)

    def dist(self, o: "Vec3") -> float:
        return (self - o).norm()

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def is_unit(self, tol: float = 1e-9) -> bool:
        return abs(self.norm() - 1.0) <= tol


ZERO = Vec3(0.0, 0.0, 0.0)
UP = Vec3(0.0, 0.0, 1.0)


def angle_between(a: Vec3, b: Vec3) -> float:
    """Angle in radians between two nonzero vectors."""
    c = a.dot(b) / (a.norm() * b.norm())
    return math.acos(max(-1.0, min(1.0, c)))


def reflect(d: Vec3, n: Vec3) -> Vec3:
    """Mirror direction ``d`` about the plane with unit normal ``n``."""
    return d - n * (2.0 * d.dot(n))


def to_az_el(d: Vec3) -> tuple[float, float]:
    """Azimuth/elevation in degrees of a direction (azimuth from +x toward +y)."""
    u = d.unit()
    az = math.degrees(math.atan2(u.y, u.x))
    el = math.degrees(math.asin(max(-1.0, min(1.0, u.z))))
    return az, el


def from_az_el(az: float, el: float) -> Vec3:
    a, e = math.radians(az), math.radians(el)
    return Vec3(math.cos(e) * math.cos(a), math.cos(e) * math.sin(a), math.sin(e))


def point_segment_distance(p: Vec3, a: Vec3, b: Vec3) -> float:
    ab = b - a
    den = ab.dot(ab)
    if den == 0.0:
        return p.dist(a)
    t = max(0.0, min(1.0, (p - a).dot(ab) / den))
    return p.dist(a + ab * t)


# -- axis-aligned boxes -------------------------------------------------------

Box = tuple[tuple[float, float, float], tuple[float, float, float]]


def segment_hits_box(p: Vec3, q: Vec3, box: Box, eps: float = SURFACE_EPS) -> bool:
    """True iff the open segment (p, q) passes through the interior of ``box``."""
    lo, hi = box
    t0, t1 = 0.0, 1.0
    for a, b, l, h in ((p.x, q.x, lo[0], hi[0]), (p.y, q.y, lo[1], hi[1]), (p.z, q.z, lo[2], hi[2])):
        l += eps
        h -= eps
        d = b - a
        if d == 0.0:
            if a <= l or a >= h:
                return False
            continue
        ta = (l - a) / d
        tb = (h - a) / d
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 >= t1:
            return False
    return t1 - t0 > eps


def segments_hit_boxes(p: np.ndarray, q: np.ndarray, boxes: Iterable[Box], eps: float = SURFACE_EPS) -> np.ndarray:
    """Vectorised :func:`segment_hits_box` over many segments; True where any box blocks."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = q - p
    hit = np.zeros(p.shape[0], dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for lo, hi in boxes:
            lo_ = np.asarray(lo) + eps
            hi_ = np.asarray(hi) - eps
            t0 = np.zeros(p.shape[0])
            t1 = np.ones(p.shape[0])
            ok = np.ones(p.shape[0], dtype=bool)
            for k in range(3):
                dk = d[:, k]
                par = dk == 0.0
                ok &= ~(par & ((p[:, k] <= lo_[k]) | (p[:, k] >= hi_[k])))
                ta = np.where(par, -np.inf, (lo_[k] - p[:, k]) / np.where(par, 1.0, dk))
                tb = np.where(par, np.inf, (hi_[k] - p[:, k]) / np.where(par, 1.0, dk))
                t0 = np.maximum(t0, np.minimum(ta, tb))
                t1 = np.minimum(t1, np.maximum(ta, tb))
            hit |= ok & (t1 - t0 > eps)
    return hit

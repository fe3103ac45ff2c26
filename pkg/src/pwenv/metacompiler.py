"""Design-time synthesis of meta-atom switch states for a tile function.

The forward model is a toy binary phased array: each element either
re-radiates in phase (switch ON) or with a pi shift (switch OFF). A seeded
bit-flip hill climber with restarts searches for the configuration that
best realises a requested :class:`~pwenv.tiles.TileFunction`, and results
are kept in a :class:`LookupTable` for reuse.

This is deliberately not coupled to the ray tracer, which uses ideal tile
functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .emwave import C
from .geometry import Vec3, from_az_el, to_az_el
from .tiles import Action, TileFunction

ABSORB_GRID_STEP_DEG = 5.0
_TABLE_HEADER = "# pwenv switch lookup v1"


@dataclass(frozen=True)
class ArrayModel:
    n: int
    m: int
    spacing: float
    frequency: float

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("array needs n, m >= 1")
        if not self.spacing > 0:
            raise ValueError("element spacing must be > 0")
        if not self.frequency > 0:
            raise ValueError("frequency must be > 0")

    @property
    def size(self) -> int:
        return self.n * self.m

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi * self.frequency / C

    def positions(self) -> np.ndarray:
        """Element positions (size x 3), row-major, in the array's local frame (plane z=0)."""
        r, c = np.meshgrid(np.arange(self.n), np.arange(self.m), indexing="ij")
        xy = np.stack([c.ravel() * self.spacing, r.ravel() * self.spacing], axis=1)
        return np.hstack([xy, np.zeros((self.size, 1))])


@dataclass(frozen=True, eq=False)
class SwitchConfig:
    """ON/OFF state per element; ON means phase 0, OFF means phase pi."""

    states: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.states, dtype=bool)
        if a.ndim != 2:
            raise ValueError("switch configuration must be a 2-D matrix")
        a.setflags(write=False)
        object.__setattr__(self, "states", a)

    @classmethod
    def from_bits(cls, bits: str, n: int, m: int) -> "SwitchConfig":
        if len(bits) != n * m or set(bits) - {"0", "1"}:
            raise ValueError(f"expected {n * m} binary digits, got {bits!r}")
        return cls(np.array([b == "1" for b in bits], dtype=bool).reshape(n, m))

    @property
    def shape(self) -> tuple[int, int]:
        return self.states.shape

    def bits(self) -> str:
        return "".join("1" if b else "0" for b in self.states.ravel())

    def check(self, model: ArrayModel) -> None:
        if self.shape != (model.n, model.m):
            raise ValueError(f"configuration {self.shape} does not match array {model.n}x{model.m}")

    def __eq__(self, other):
        if not isinstance(other, SwitchConfig):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.states, other.states))

    def __hash__(self):
        return hash((self.shape, self.bits()))


@dataclass(frozen=True)
class Frame:
    """Maps world vectors into an array's local frame (u, v in-plane, n outward)."""

    origin: Vec3 = Vec3(0.0, 0.0, 0.0)
    u: Vec3 = Vec3(1.0, 0.0, 0.0)
    v: Vec3 = Vec3(0.0, 1.0, 0.0)
    n: Vec3 = Vec3(0.0, 0.0, 1.0)

    @classmethod
    def of_tile(cls, tile) -> "Frame":
        return cls(tile.center, tile.u_axis, tile.v_axis, tile.normal)

    def direction(self, d: Vec3) -> Vec3:
        return Vec3(d.dot(self.u), d.dot(self.v), d.dot(self.n))

    def point(self, p: Vec3) -> Vec3:
        return self.direction(p - self.origin)


def _phases(model: ArrayModel, direction, incident=None) -> np.ndarray:
    d = np.atleast_2d(np.asarray(direction, dtype=float))
    if incident is not None:
        d = d - np.asarray(incident, dtype=float)
    return model.wavenumber * (d @ model.positions().T)


def array_factor(config: SwitchConfig, model: ArrayModel, direction: Vec3, incident: Vec3 | None = None) -> float:
    """Linear power gain |sum exp(j(phi + k r.(d - d_in)))|^2 toward ``direction``.

    ``incident`` is the propagation direction of the illuminating wave; when
    omitted the array is treated as a transmitter with no feed phase.
    """
    if not direction.is_unit():
        raise ValueError("direction must be unit length")
    config.check(model)
    sign = np.where(config.states.ravel(), 1.0, -1.0)
    inc = None if incident is None else incident.as_tuple()
    ph = _phases(model, direction.as_tuple(), inc)[0]
    s = np.sum(sign * np.exp(1j * ph))
    return float(abs(s) ** 2)


def hemisphere_grid(step_deg: float = ABSORB_GRID_STEP_DEG) -> np.ndarray:
    """Unit directions on a regular az/el grid over the local z >= 0 half-space."""
    dirs = [(0.0, 0.0, 1.0)]
    for el in np.arange(0.0, 90.0, step_deg):
        for az in np.arange(0.0, 360.0, step_deg):
            dirs.append(from_az_el(float(az), float(el)).as_tuple())
    return np.array(dirs)


def _target_direction(target: TileFunction, frame: Frame) -> Vec3:
    if target.action is Action.STEER:
        return frame.direction(target.outgoing).unit()
    if target.action is Action.FOCUS:
        return frame.point(target.focal).unit()
    raise ValueError(f"no outgoing direction for {target.action.value}")


class _Objective:
    """Score of every configuration in one call; higher is always better."""

    def __init__(self, target: TileFunction, model: ArrayModel, frame: Frame):
        inc = None if target.incident is None else frame.direction(target.incident).as_tuple()
        self.absorb = target.action is Action.ABSORB
        if self.absorb:
            ph = _phases(model, hemisphere_grid(), inc)
        elif target.action in (Action.STEER, Action.FOCUS):
            ph = _phases(model, _target_direction(target, frame).as_tuple(), inc)
        else:
            raise ValueError(f"cannot synthesise {target.action.value}")
        self.e = np.exp(1j * ph)  # (directions, elements)

    def __call__(self, signs: np.ndarray) -> np.ndarray:
        """signs: (configs, elements) of +-1."""
        af = np.abs(signs @ self.e.T) ** 2
        return -af.max(axis=1) if self.absorb else af[:, 0]


def _signs(bits: np.ndarray) -> np.ndarray:
    return np.where(bits, 1.0, -1.0)


def exhaustive(target: TileFunction, model: ArrayModel, frame: Frame | None = None) -> tuple[SwitchConfig, float]:
    """Best configuration over all 2^(n*m) states; ties go to the lowest index."""
    if model.size > 20:
        raise ValueError("exhaustive search limited to 20 elements")
    obj = _Objective(target, model, frame or Frame())
    best_score, best_bits = -math.inf, None
    total = 1 << model.size
    chunk = 1 << 14
    shifts = np.arange(model.size - 1, -1, -1)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        bits = ((idx[:, None] >> shifts) & 1).astype(bool)
        scores = obj(_signs(bits))
        i = int(np.argmax(scores))
        if scores[i] > best_score:
            best_score, best_bits = float(scores[i]), bits[i]
    return SwitchConfig(best_bits.reshape(model.n, model.m)), best_score


def synthesize(
    target: TileFunction,
    model: ArrayModel,
    budget: int,
    seed: int = 0,
    frame: Frame | None = None,
) -> tuple[SwitchConfig, float]:
    """Seeded bit-flip hill climbing with random restarts.

    ``budget`` counts objective evaluations. The visited sequence depends
    only on ``seed``, so a larger budget never scores lower. When the budget
    covers the whole state space the search is exhaustive instead.
    Scores are "higher is better": array gain for STEER/FOCUS, minus the
    peak hemisphere gain for ABSORB.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    frame = frame or Frame()
    if model.size <= 20 and (1 << model.size) <= budget:
        return exhaustive(target, model, frame)
    obj = _Objective(target, model, frame)
    rng = np.random.default_rng(seed)
    nbits = model.size

    best_bits, best_score = None, -math.inf
    used = 0
    while used < budget:
        cur = rng.random(nbits) < 0.5
        cur_score = float(obj(_signs(cur)[None, :])[0])
        used += 1
        if cur_score > best_score:
            best_bits, best_score = cur.copy(), cur_score
        improved = True
        while improved and used < budget:
            improved = False
            for i in rng.permutation(nbits):
                if used >= budget:
                    break
                cand = cur.copy()
                cand[i] = not cand[i]
                s = float(obj(_signs(cand)[None, :])[0])
                used += 1
                if s > cur_score:
                    cur, cur_score = cand, s
                    improved = True
                    if s > best_score:
                        best_bits, best_score = cand.copy(), s
    return SwitchConfig(best_bits.reshape(model.n, model.m)), best_score


# -- lookup table -------------------------------------------------------------

def _dir_bin(d: Vec3 | None) -> str:
    if d is None:
        return "-"
    az, el = to_az_el(d)
    return f"{math.floor(az)},{math.floor(el)}"


def target_key(target: TileFunction) -> str:
    """Quantised key: directions in 1 degree az/el bins, focal point to the centimetre."""
    focal = "-" if target.focal is None else ",".join(str(math.floor(c * 100)) for c in target.focal)
    band = f"{target.band[0]:.0f},{target.band[1]:.0f}"
    alpha = f"{target.alpha:.3f}" if target.action is Action.ABSORB else "-"
    return "|".join(
        [target.action.value, f"in={_dir_bin(target.incident)}", f"out={_dir_bin(target.outgoing)}",
         f"focal={focal}", f"alpha={alpha}", f"band={band}"]
    )


@dataclass
class LookupTable:
    """Synthesised configurations for one array model, keyed by quantised target.

    File format: a header line, a ``model`` line, then one entry per line as
    ``<key>\\t<bits>\\t<score>`` with bits row-major ('1' = ON).
    """

    model: ArrayModel
    entries: dict[str, tuple[SwitchConfig, float]] = field(default_factory=dict)

    def lookup(self, target: TileFunction) -> SwitchConfig | None:
        hit = self.entries.get(target_key(target))
        return None if hit is None else hit[0]

    def score(self, target: TileFunction) -> float | None:
        hit = self.entries.get(target_key(target))
        return None if hit is None else hit[1]

    def store(self, target: TileFunction, config: SwitchConfig, score: float) -> None:
        config.check(self.model)
        self.entries[target_key(target)] = (config, float(score))

    def __len__(self):
        return len(self.entries)

    def dumps(self) -> str:
        m = self.model
        lines = [_TABLE_HEADER, f"model\t{m.n}\t{m.m}\t{m.spacing!r}\t{m.frequency!r}"]
        for key in sorted(self.entries):
            cfg, score = self.entries[key]
            lines.append(f"{key}\t{cfg.bits()}\t{score!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "LookupTable":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != _TABLE_HEADER:
            raise ValueError("not a switch lookup file")
        head = lines[1].split("\t")
        if head[0] != "model" or len(head) != 5:
            raise ValueError("line 2: expected model line")
        model = ArrayModel(int(head[1]), int(head[2]), float(head[3]), float(head[4]))
        table = cls(model)
        for no, ln in enumerate(lines[2:], start=3):
            parts = ln.split("\t")
            if len(parts) != 3:
                raise ValueError(f"line {no}: expected key, bits and score")
            key, bits, score = parts
            table.entries[key] = (SwitchConfig.from_bits(bits, model.n, model.m), float(score))
        return table

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "LookupTable":
        return cls.loads(Path(path).read_text())


def compile_function(
    table: LookupTable, target: TileFunction, budget: int = 5000, seed: int = 0, frame: Frame | None = None
) -> tuple[SwitchConfig, float]:
    """Cached synthesis: reuse the table entry for ``target`` or synthesise and store it."""
    hit = table.entries.get(target_key(target))
    if hit is not None:
        return hit
    cfg, score = synthesize(target, table.model, budget, seed, frame)
    table.store(target, cfg, score)
    return cfg, score

"""Environment configuration service.

Takes user objectives and global policies, plans air-routes and blocking
zones, turns them into per-tile commands and dispatches those to (simulated)
tile gateways. Device movement feeds a control loop that re-plans only the
objectives touching the moved device and emits the command delta.

Gateways live in-process as a :class:`TileRegistry`. The newline-delimited
wire format below keeps the service logic independent of any transport::

    SET <tile> STEER in=<az,el> out=<az,el> band=<lo>,<hi>
    SET <tile> FOCUS in=<az,el> focal=<x,y,z> band=<lo>,<hi>
    SET <tile> ABSORB alpha=<a> band=<lo>,<hi>
    RESET <tile>

Replies are ``OK <tile>`` or ``REJ <tile> <reason>``. Angles are degrees with
two decimals, frequencies are Hz.
"""

from __future__ import annotations

import logging
import socketserver
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence

from .geometry import Vec3, from_az_el, to_az_el
from .optimize import (
    EvalReport,
    TileAssignment,
    evaluate_assignment,
    greedy_assign,
    maxmin_search,
    route_delay_spread,
)
from .routing import Objective, ObjectiveKind, TileGraph, build_tile_graph, plan_routes
from .scene import Scenario
from .tiles import Action, HyperSurfaceTile, Outcome, Status, TileCommand, TileFunction

__all__ = [
    "CommandBatch",
    "ConfigurationService",
    "LocationEvent",
    "PolicySet",
    "ServiceState",
    "TileCommand",
    "TileRegistry",
    "apply_commands",
    "configure",
    "configure_state",
    "encode_command",
    "on_location_update",
    "parse_command",
]

log = logging.getLogger(__name__)

DEFAULT_SEED = 0
DEFAULT_BUDGET = 300


@dataclass(frozen=True)
class CommandBatch:
    commands: tuple[TileCommand, ...] = ()
    infeasible: Mapping[str, str] = field(default_factory=dict)  # objective id -> reason

    def __len__(self):
        return len(self.commands)

    def __iter__(self) -> Iterator[TileCommand]:
        return iter(self.commands)

    def tiles(self) -> set[str]:
        return {c.tile_id for c in self.commands}

    def to_wire(self) -> str:
        return "".join(encode_command(c) + "\n" for c in self.commands)


@dataclass(frozen=True)
class PolicySet:
    """``authorized=None`` trusts every device whose role is not ``unauthorized``."""

    authorized: frozenset[str] | None = None
    default_objective: ObjectiveKind | None = None  # applied to receivers with no objective
    max_tiles_per_objective: int | None = None

    def __post_init__(self):
        if self.authorized is not None:
            object.__setattr__(self, "authorized", frozenset(self.authorized))
        if self.default_objective is not None:
            object.__setattr__(self, "default_objective", ObjectiveKind(self.default_objective))
        if self.max_tiles_per_objective is not None and self.max_tiles_per_objective < 1:
            raise ValueError("max_tiles_per_objective must be >= 1")

    def is_authorized(self, device) -> bool:
        if device.role == "unauthorized":
            return False
        return self.authorized is None or device.id in self.authorized


@dataclass(frozen=True)
class LocationEvent:
    device: str
    position: Vec3
    timestamp: float = 0.0


class TileRegistry:
    """Simulated gateways: one controller per tile."""

    def __init__(self, tiles: Iterable[HyperSurfaceTile]):
        self.tiles = {t.id: t for t in tiles}

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "TileRegistry":
        return cls(HyperSurfaceTile(t) for t in scenario.tiles)

    def __contains__(self, tile_id: str) -> bool:
        return tile_id in self.tiles

    def state(self) -> dict[str, TileFunction]:
        """Active function per configured tile."""
        return {tid: t.active for tid, t in sorted(self.tiles.items()) if t.active is not None}

    def scenario_view(self, scenario: Scenario) -> Scenario:
        return scenario.with_functions(self.state())


def function_params(fn: TileFunction) -> dict:
    """Callback parameters that rebuild ``fn`` exactly."""
    params: dict = {"band": fn.band, "loss_db": fn.loss_db}
    if fn.incident is not None:
        params["incident"] = fn.incident
    if fn.outgoing is not None:
        params["outgoing"] = fn.outgoing
    if fn.focal is not None:
        params["focal"] = fn.focal
    if fn.action is Action.ABSORB:
        params["alpha"] = fn.alpha
    return params


def apply_commands(batch: CommandBatch | Sequence[TileCommand], registry: TileRegistry) -> list[Outcome]:
    """Send each command through its tile's callback, in order; failures stay local."""
    out = []
    for cmd in batch:
        tile = registry.tiles.get(cmd.tile_id)
        if tile is None:
            out.append(Outcome(Status.REJECTED, cmd.tile_id, "unknown tile"))
            continue
        if cmd.action is Action.RESET:
            out.append(tile.callback(Action.RESET))
        else:
            out.append(tile.callback(cmd.action, function_params(cmd.function)))
    return out


# -- planning -----------------------------------------------------------------


@dataclass(frozen=True)
class ServiceState:
    scenario: Scenario
    objectives: tuple[Objective, ...]  # expanded, in service order
    functions: Mapping[str, TileFunction]
    provenance: Mapping[str, str]  # tile id -> objective id
    infeasible: Mapping[str, str]

    def claims(self, objective_id: str) -> set[str]:
        return {t for t, o in self.provenance.items() if o == objective_id}


def expand_objectives(scenario: Scenario, objectives: Sequence[Objective], policies: PolicySet) -> list[Objective]:
    """Add policy-driven objectives and put BLOCK objectives first (stable)."""
    objs = list(objectives)
    ids = [o.id for o in objs]
    if len(set(ids)) != len(ids):
        raise ValueError("objective ids must be unique")
    blocked = {o.device for o in objs if o.kind is ObjectiveKind.BLOCK}
    covered = {o.device for o in objs}
    for d in scenario.devices:
        if d.role == "transmitter":
            continue
        if not policies.is_authorized(d):
            if d.id not in blocked:
                objs.append(Objective(f"block-{d.id}", ObjectiveKind.BLOCK, d.id))
        elif d.role == "receiver" and d.id not in covered and policies.default_objective is not None:
            kind = policies.default_objective
            if kind is ObjectiveKind.SECURE:
                raise ValueError("SECURE needs a radius and cannot be a default objective")
            objs.append(Objective(f"{kind.value.lower()}-{d.id}", kind, d.id))
    return sorted(objs, key=lambda o: o.kind is not ObjectiveKind.BLOCK)


def _by_optimizer(o: Objective) -> bool:
    return o.kind is ObjectiveKind.QOS and o.delay_cap is None


def _plan(
    scenario: Scenario,
    objectives: Sequence[Objective],
    policies: PolicySet,
    graph: TileGraph,
    fixed: Mapping[str, TileFunction],
    fixed_provenance: Mapping[str, str],
    seed: int,
    budget: int,
    K: int,
) -> tuple[dict[str, TileFunction], dict[str, str], dict[str, str]]:
    """Plan ``objectives`` around the already-held ``fixed`` tiles."""
    functions = dict(fixed)
    provenance = dict(fixed_provenance)
    infeasible: dict[str, str] = {}

    routed = [o for o in objectives if not _by_optimizer(o)]
    if routed:
        plan = plan_routes(
            routed, graph, scenario, K=K, claimed=set(functions),
            rms_spread=route_delay_spread, max_tiles=policies.max_tiles_per_objective,
        )
        for cmd in plan.commands:
            functions[cmd.tile_id] = cmd.function
            provenance[cmd.tile_id] = cmd.correlation_id
        infeasible.update(plan.infeasible)

    qos = [o for o in objectives if _by_optimizer(o)]
    groups: dict[str | None, list[Objective]] = {}
    for o in qos:
        groups.setdefault(o.source, []).append(o)
    for source, objs in groups.items():
        by_dev: dict[str, str] = {}
        for o in objs:
            if o.device in by_dev:
                infeasible[o.id] = f"device {o.device} already served by {by_dev[o.device]}"
                continue
            try:
                scenario.device(o.device)
            except KeyError:
                infeasible[o.id] = f"unknown device {o.device}"
                continue
            by_dev[o.device] = o.id
        if not by_dev:
            continue
        rxs = list(by_dev)
        initial = greedy_assign(scenario, source, rxs, graph, fixed=functions, fixed_provenance=provenance)
        best = maxmin_search(scenario, initial, budget=budget, seed=seed, tx=source, receivers=rxs, graph=graph, K=K)
        for tid, fn in best.functions.items():
            functions[tid] = fn
            owner = best.provenance.get(tid, "")
            provenance[tid] = by_dev.get(owner, owner)
        for rid in best.unserved:
            infeasible[by_dev[rid]] = "no route over free tiles"
    return functions, provenance, infeasible


def _commands(functions: Mapping[str, TileFunction], provenance: Mapping[str, str], order: Sequence[str]) -> list[TileCommand]:
    rank = {oid: i for i, oid in enumerate(order)}
    tids = sorted(functions, key=lambda t: (rank.get(provenance.get(t, ""), len(rank)), t))
    return [TileCommand(t, functions[t].action, functions[t], provenance.get(t, "")) for t in tids]


def _report(scenario: Scenario, functions: Mapping[str, TileFunction]) -> EvalReport:
    if not scenario.transmitters or not scenario.receivers:
        return EvalReport.from_powers([], scenario.disconnect_threshold_dbm)
    return evaluate_assignment(scenario, TileAssignment(dict(functions)))


def configure_state(
    scenario: Scenario,
    objectives: Sequence[Objective],
    policies: PolicySet = PolicySet(),
    seed: int = DEFAULT_SEED,
    budget: int = DEFAULT_BUDGET,
    K: int = 8,
    graph: TileGraph | None = None,
) -> tuple[CommandBatch, EvalReport, ServiceState]:
    base = scenario.with_functions({})
    objs = expand_objectives(base, objectives, policies)
    graph = graph or build_tile_graph(base)
    functions, provenance, infeasible = _plan(base, objs, policies, graph, {}, {}, seed, budget, K)
    batch = CommandBatch(tuple(_commands(functions, provenance, [o.id for o in objs])), infeasible)
    state = ServiceState(base, tuple(objs), functions, provenance, infeasible)
    return batch, _report(base, functions), state


def configure(
    scenario: Scenario,
    objectives: Sequence[Objective],
    policies: PolicySet = PolicySet(),
    seed: int = DEFAULT_SEED,
    budget: int = DEFAULT_BUDGET,
    K: int = 8,
    graph: TileGraph | None = None,
) -> tuple[CommandBatch, EvalReport]:
    """Full command batch for the objectives plus its predicted evaluation.

    BLOCK objectives are served first. QOS objectives without a delay cap go
    through greedy assignment and max-min search; everything else is routed by
    ``plan_routes`` in list order.
    """
    batch, report, _ = configure_state(scenario, objectives, policies, seed, budget, K, graph)
    return batch, report


def _involves(o: Objective, device_id: str, scenario: Scenario) -> bool:
    if o.device == device_id:
        return True
    source = o.source if o.source is not None else (scenario.transmitters[0].id if scenario.transmitters else None)
    if o.kind is not ObjectiveKind.BLOCK and source == device_id:
        return True
    if o.kind is ObjectiveKind.SECURE:
        return o.avoid is None or device_id in o.avoid
    return False


def on_location_update(
    event: LocationEvent,
    state: ServiceState,
    policies: PolicySet = PolicySet(),
    seed: int = DEFAULT_SEED,
    budget: int = DEFAULT_BUDGET,
    K: int = 8,
) -> tuple[CommandBatch, ServiceState]:
    """Re-plan the objectives touching the moved device; return the command delta and new state."""
    dev = state.scenario.device(event.device)
    if not state.scenario.inside(event.position):
        raise ValueError(f"position {event.position} outside the scenario bounds")
    if dev.position == event.position:
        return CommandBatch(), state

    scenario = state.scenario.with_device(event.device, event.position)
    affected = [o for o in state.objectives if _involves(o, event.device, scenario)]
    gone = {o.id for o in affected}
    keep_fn = {t: f for t, f in state.functions.items() if state.provenance.get(t) not in gone}
    keep_prov = {t: state.provenance[t] for t in keep_fn}
    graph = build_tile_graph(scenario)
    functions, provenance, infeasible = _plan(scenario, affected, policies, graph, keep_fn, keep_prov, seed, budget, K)
    infeasible = {**{k: v for k, v in state.infeasible.items() if k not in gone}, **infeasible}

    old = state.functions
    order = [o.id for o in state.objectives]
    delta = [TileCommand(t, Action.RESET, None, state.provenance.get(t, "")) for t in sorted(set(old) - set(functions))]
    changed = {t: f for t, f in functions.items() if old.get(t) != f}
    delta += _commands(changed, provenance, order)
    new_state = ServiceState(scenario, state.objectives, functions, provenance, infeasible)
    return CommandBatch(tuple(delta), infeasible), new_state


class ConfigurationService:
    """Single-writer service: owns the tile registry and the planned state."""

    def __init__(
        self,
        scenario: Scenario,
        objectives: Sequence[Objective] = (),
        policies: PolicySet = PolicySet(),
        seed: int = DEFAULT_SEED,
        budget: int = DEFAULT_BUDGET,
    ):
        self.policies = policies
        self.seed = seed
        self.budget = budget
        self.registry = TileRegistry.from_scenario(scenario.with_functions({}))
        batch, self.report, self.state = configure_state(scenario, objectives, policies, seed, budget)
        self.outcomes = apply_commands(batch, self.registry)

    @property
    def scenario(self) -> Scenario:
        return self.state.scenario

    def location_update(self, event: LocationEvent) -> tuple[CommandBatch, list[Outcome]]:
        delta, self.state = on_location_update(event, self.state, self.policies, self.seed, self.budget)
        return delta, apply_commands(delta, self.registry)

    def handle_line(self, line: str) -> list[str]:
        """Process one wire record; returns reply lines."""
        line = line.strip()
        if not line:
            return []
        head = line.split()[0].upper()
        if head == "LOCATION":
            parts = line.split()
            if len(parts) != 3:
                return ["REJ - expected LOCATION <device> <x,y,z>"]
            try:
                pos = Vec3.of(float(x) for x in parts[2].split(","))
                delta, outcomes = self.location_update(LocationEvent(parts[1], pos))
            except (KeyError, ValueError) as exc:
                return [f"REJ {parts[1]} {exc}"]
            return [encode_command(c) for c in delta] + [f"OK {parts[1]} {len(delta)}"]
        try:
            cmd = parse_command(line)
        except ValueError as exc:
            return [f"REJ - {exc}"]
        return [encode_reply(o) for o in apply_commands([cmd], self.registry)]


# -- wire format --------------------------------------------------------------


def _angles(d: Vec3) -> str:
    az, el = to_az_el(d)
    return f"{az:.2f},{el:.2f}"


def _band(b: tuple[float, float]) -> str:
    return f"{b[0]:.0f},{b[1]:.0f}"


def encode_command(cmd: TileCommand) -> str:
    if cmd.action is Action.RESET:
        return f"RESET {cmd.tile_id}"
    fn = cmd.function
    if fn.action is Action.STEER:
        body = f"STEER in={_angles(fn.incident)} out={_angles(fn.outgoing)}"
    elif fn.action is Action.FOCUS:
        fx, fy, fz = fn.focal
        body = f"FOCUS in={_angles(fn.incident)} focal={fx:.6f},{fy:.6f},{fz:.6f}"
    else:
        body = f"ABSORB alpha={fn.alpha:g}"
    return f"SET {cmd.tile_id} {body} band={_band(fn.band)}"


def _floats(text: str, n: int, name: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ValueError(f"bad number in {name}={text}") from None
    if len(vals) != n:
        raise ValueError(f"{name} needs {n} comma-separated values")
    return vals


def parse_command(line: str) -> TileCommand:
    parts = line.split()
    if len(parts) == 2 and parts[0] == "RESET":
        return TileCommand(parts[1], Action.RESET)
    if len(parts) < 4 or parts[0] != "SET":
        raise ValueError(f"unrecognised command: {line!r}")
    tile_id, action = parts[1], parts[2]
    try:
        action = Action(action)
    except ValueError:
        raise ValueError(f"unknown action {action}") from None
    kv = {}
    for p in parts[3:]:
        k, sep, v = p.partition("=")
        if not sep:
            raise ValueError(f"expected key=value, got {p!r}")
        kv[k] = v
    if "band" not in kv:
        raise ValueError("missing band")
    band = tuple(_floats(kv["band"], 2, "band"))
    if action is Action.STEER:
        fn = TileFunction(action, band, incident=from_az_el(*_floats(kv.get("in", ""), 2, "in")),
                          outgoing=from_az_el(*_floats(kv.get("out", ""), 2, "out")))
    elif action is Action.FOCUS:
        fn = TileFunction(action, band, incident=from_az_el(*_floats(kv.get("in", ""), 2, "in")),
                          focal=Vec3.of(_floats(kv.get("focal", ""), 3, "focal")))
    elif action is Action.ABSORB:
        fn = TileFunction(action, band, alpha=_floats(kv.get("alpha", "1"), 1, "alpha")[0])
    else:
        raise ValueError("RESET takes no parameters")
    return TileCommand(tile_id, action, fn)


def encode_reply(outcome: Outcome) -> str:
    if outcome.status is Status.OK:
        return f"OK {outcome.tile_id}"
    return f"REJ {outcome.tile_id} {outcome.reason}"


def parse_reply(line: str) -> Outcome:
    parts = line.strip().split(" ", 2)
    if parts[0] == "OK" and len(parts) == 2:
        return Outcome(Status.OK, parts[1])
    if parts[0] == "REJ" and len(parts) == 3:
        return Outcome(Status.REJECTED, parts[1], parts[2])
    raise ValueError(f"unrecognised reply: {line!r}")


def serve(service: ConfigurationService, host: str = "127.0.0.1", port: int = 0, ready=None) -> None:
    """Run a line-oriented TCP front end until interrupted.

    ``ready(address)`` is called once the socket is bound (useful with port 0).
    """

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for raw in self.rfile:
                line = raw.decode("utf-8", "replace")
                if line.strip().upper() == "QUIT":
                    break
                for reply in service.handle_line(line):
                    self.wfile.write((reply + "\n").encode())
                self.wfile.flush()

    with socketserver.TCPServer((host, port), Handler) as srv:
        log.info("configuration service listening on %s:%d", *srv.server_address[:2])
        if ready is not None:
            ready(srv.server_address)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass

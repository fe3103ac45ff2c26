import socket
import threading

import pytest

from conftest import small_room
from pwenv.confservice import (
    CommandBatch,
    ConfigurationService,
    LocationEvent,
    PolicySet,
    TileRegistry,
    apply_commands,
    configure,
    configure_state,
    encode_command,
    on_location_update,
    parse_command,
    serve,
)
from pwenv.geometry import Vec3
from pwenv.optimize import TileAssignment, evaluate_assignment
from pwenv.routing import Objective, entry_tiles
from pwenv.tiles import Action, Status, TileCommand, TileFunction


def room():
    return small_room([
        ("tx", "transmitter", (0.5, 0.5, 1.0)),
        ("r1", "receiver", (3.5, 2.5, 1.0)),
        ("r2", "receiver", (3.5, 0.5, 1.0)),
        ("spy", "unauthorized", (2.0, 1.5, 1.0)),
    ])


QOS = [Objective("q1", "QOS", "r1"), Objective("q2", "QOS", "r2")]


def test_empty_objectives_empty_batch():
    trusted = small_room([("tx", "transmitter", (0.5, 0.5, 1.0)), ("r1", "receiver", (3.5, 2.5, 1.0))])
    batch, _ = configure(trusted, [], PolicySet())
    assert len(batch) == 0


def test_only_block_gives_absorb():
    s = small_room([("tx", "transmitter", (0.5, 0.5, 1.0)), ("r1", "receiver", (3.5, 2.5, 1.0))])
    batch, _ = configure(s, [Objective("b", "BLOCK", "r1")])
    assert len(batch) > 0 and all(c.action is Action.ABSORB for c in batch)
    assert sorted(c.tile_id for c in batch) == sorted(entry_tiles("r1", s))


def test_unauthorized_device_gets_block_first():
    s = room()
    batch, _ = configure(s, QOS, budget=30)
    first = batch.commands[0]
    assert first.correlation_id == "block-spy" and first.action is Action.ABSORB
    tids = [c.tile_id for c in batch]
    assert len(tids) == len(set(tids))


def test_policy_authorized_list():
    s = room()
    _, _, st = configure_state(s, QOS, PolicySet(authorized=frozenset({"r1"})), budget=20)
    ids = [o.id for o in st.objectives]
    assert set(ids[:2]) == {"block-r2", "block-spy"}


def test_default_objective_policy():
    s = room()
    _, _, st = configure_state(s, [], PolicySet(default_objective="QOS"), budget=20)
    assert {o.id for o in st.objectives} == {"block-spy", "qos-r1", "qos-r2"}


def test_apply_state_sync_and_idempotence():
    s = room()
    batch, report, st = configure_state(s, QOS, budget=30)
    reg = TileRegistry.from_scenario(s)
    out1 = apply_commands(batch, reg)
    assert all(o.status is Status.OK for o in out1)
    state1 = reg.state()
    assert state1 == dict(st.functions)
    out2 = apply_commands(batch, reg)
    assert out2 == out1 and reg.state() == state1
    # predicted report equals evaluation of the applied registry state
    assert evaluate_assignment(s, TileAssignment(reg.state())) == report


def test_batch_isolation():
    s = room()
    batch, _ = configure(s, QOS, budget=20)
    cmds = list(batch.commands)
    bad = TileCommand("nope/9/9", Action.ABSORB, TileFunction(Action.ABSORB, s.wave.band))
    cmds.insert(1, bad)
    reg = TileRegistry.from_scenario(s)
    out = apply_commands(CommandBatch(tuple(cmds)), reg)
    rejected = [o for o in out if o.status is Status.REJECTED]
    assert len(rejected) == 1 and rejected[0].tile_id == "nope/9/9"
    assert sum(o.status is Status.OK for o in out) == len(cmds) - 1


def test_location_update_fixpoint_and_locality():
    s = room()
    _, _, st = configure_state(s, QOS, budget=30)
    same = on_location_update(LocationEvent("r1", s.device("r1").position), st)
    assert len(same[0]) == 0 and same[1] is st
    delta, st2 = on_location_update(LocationEvent("r1", Vec3(3.5, 2.0, 1.0)), st, budget=30)
    again, st3 = on_location_update(LocationEvent("r1", Vec3(3.5, 2.0, 1.0)), st2, budget=30)
    assert len(again) == 0
    touched = delta.tiles()
    q1_tiles = st.claims("q1") | st2.claims("q1")
    assert touched <= q1_tiles
    # other objectives keep their tiles exactly
    assert st2.claims("q2") == st.claims("q2") and st2.claims("block-spy") == st.claims("block-spy")


def test_unauthorized_move_retargets_block():
    s = room()
    _, _, st = configure_state(s, QOS, budget=20)
    new = Vec3(1.0, 2.5, 1.0)
    _, st2 = on_location_update(LocationEvent("spy", new), st, budget=20)
    want = [t for t in entry_tiles("spy", st2.scenario) if t not in set(st2.functions) - st2.claims("block-spy")]
    assert st2.claims("block-spy") == set(want)
    assert all(st2.functions[t].action is Action.ABSORB for t in st2.claims("block-spy"))


def test_location_errors():
    s = room()
    _, _, st = configure_state(s, [], budget=5)
    with pytest.raises(KeyError):
        on_location_update(LocationEvent("ghost", Vec3(1, 1, 1)), st)
    with pytest.raises(ValueError):
        on_location_update(LocationEvent("r1", Vec3(10, 1, 1)), st)


def test_service_registry_matches_state_after_updates():
    svc = ConfigurationService(room(), QOS, budget=20)
    assert svc.registry.state() == dict(svc.state.functions)
    svc.location_update(LocationEvent("r2", Vec3(3.0, 1.0, 1.0)))
    assert svc.registry.state() == dict(svc.state.functions)


def test_wire_roundtrip():
    s = room()
    batch, _ = configure(s, QOS, budget=20)
    for c in batch:
        line = encode_command(c)
        back = parse_command(line)
        assert back.tile_id == c.tile_id and back.action is c.action
        assert encode_command(back) == line
    assert parse_command("RESET n/0/1").action is Action.RESET
    for bad in ["SET x WIGGLE band=1,2", "SET x STEER in=1,2 band=1,2", "HELLO", "SET x ABSORB alpha=0.5"]:
        with pytest.raises(ValueError):
            parse_command(bad)


def test_wire_format_shape():
    fn = TileFunction(Action.STEER, (59.9e9, 60.1e9), incident=Vec3(0, 1, 0), outgoing=Vec3(1, 0, 0))
    assert encode_command(TileCommand("w/0/0", Action.STEER, fn)) == (
        "SET w/0/0 STEER in=90.00,0.00 out=0.00,0.00 band=59900000000,60100000000"
    )
    assert encode_command(TileCommand("w/0/0", Action.RESET)) == "RESET w/0/0"


def test_socket_server_roundtrip():
    svc = ConfigurationService(room(), [], budget=5)
    ready = threading.Event()
    addr = {}

    def on_ready(a):
        addr["a"] = a
        ready.set()

    t = threading.Thread(target=serve, args=(svc, "127.0.0.1", 0, on_ready), daemon=True)
    t.start()
    assert ready.wait(5)
    with socket.create_connection(addr["a"], timeout=5) as c:
        f = c.makefile("rw")
        f.write("SET n/0/1 ABSORB alpha=1 band=59987500000,60012500000\nSET zz/0/0 ABSORB alpha=1 band=1,2\nQUIT\n")
        f.flush()
        replies = [f.readline().strip(), f.readline().strip()]
    assert replies[0] == "OK n/0/1"
    assert replies[1].startswith("REJ zz/0/0")
    assert svc.registry.tiles["n/0/1"].active.action is Action.ABSORB

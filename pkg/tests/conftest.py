import pytest

from pwenv.emwave import WaveSpec
from pwenv.geometry import Vec3
from pwenv.scene import Device, Wall, build_paper_scenario, make_scenario

EX, EY, EZ = Vec3(1.0, 0.0, 0.0), Vec3(0.0, 1.0, 0.0), Vec3(0.0, 0.0, 1.0)


def box_walls(L, W, H, coated=True, thickness=0.2, loss=10.0):
    """Four vertical walls enclosing an L x W x H room."""
    return [
        Wall("s", Vec3(0, 0, 0), EX * L, EZ * H, EY, thickness, loss, coated),
        Wall("n", Vec3(0, W, 0), EX * L, EZ * H, -EY, thickness, loss, coated),
        Wall("w", Vec3(0, 0, 0), EY * W, EZ * H, EX, thickness, loss, coated),
        Wall("e", Vec3(L, 0, 0), EY * W, EZ * H, -EX, thickness, loss, coated),
    ]


def empty_room(devices, L=10.0, W=10.0, H=3.0, antenna="isotropic", f=60e9):
    """Room with no walls at all: only LoS propagation."""
    devs = [Device(i, role, Vec3.of(p), antenna, 0.0 if role == "transmitter" else None) for i, role, p in devices]
    return make_scenario((L, W, H), [], devs, WaveSpec(f, 25e6), tile_side=None, name="empty")


def small_room(devices, L=4.0, W=3.0, H=2.0, side=1.0, coated=True):
    devs = [Device(i, role, Vec3.of(p), "dipole", 30.0 if role == "transmitter" else None) for i, role, p in devices]
    return make_scenario((L, W, H), box_walls(L, W, H, coated), devs, WaveSpec(60e9, 25e6), tile_side=side, name="small")


def toy_scenario():
    """Two facing coated strips of two 1 m tiles each (4 tiles), one TX, two receivers."""
    walls = [
        Wall("a", Vec3(0, 2, 0), EY * 2, EZ * 1, EX, 0.2),
        Wall("b", Vec3(6, 2, 0), EY * 2, EZ * 1, -EX, 0.2),
    ]
    devs = [
        Device("tx", "transmitter", Vec3(1.5, 1.0, 0.5), "isotropic", 30.0),
        Device("r1", "receiver", Vec3(4.5, 1.0, 0.5), "isotropic"),
        Device("r2", "receiver", Vec3(4.5, 5.0, 0.5), "isotropic"),
    ]
    return make_scenario((7, 6, 1), walls, devs, WaveSpec(60e9, 25e6), tile_side=1.0, name="toy")


@pytest.fixture(scope="session")
def paper():
    return build_paper_scenario()

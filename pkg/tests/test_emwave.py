import math
import random

import pytest

import oracles as o
from pwenv.emwave import (
    Bounce,
    InteractionKind,
    PropagationPath,
    WaveSpec,
    aggregate_power,
    antenna_gain_dbi,
    dbm_to_watts,
    dipole_gain,
    fspl_db,
    path_power,
    pdp,
    rms_delay_spread,
    watts_to_dbm,
    wavelength,
)
from pwenv.geometry import Vec3

W60 = WaveSpec(60e9, 25e6)


def line(*pts, kinds=(), loss=0.0):
    verts = tuple(Vec3.of(p) for p in pts)
    return PropagationPath(verts, tuple(Bounce(k, loss) for k in kinds))


def test_wavelength():
    assert wavelength(60e9) == pytest.approx(4.997e-3, rel=1e-3)
    assert wavelength(5e9) == pytest.approx(59.96e-3, rel=1e-4)
    assert wavelength(60e9) == pytest.approx(o.WAVELENGTH_60GHZ, rel=1e-15)
    with pytest.raises(ValueError):
        wavelength(0)


def test_wavespec_validation():
    assert W60.band == (60e9 - 12.5e6, 60e9 + 12.5e6)
    with pytest.raises(ValueError):
        WaveSpec(-1, 0)
    with pytest.raises(ValueError):
        WaveSpec(1e9, -1)


def test_fspl():
    assert fspl_db(1.0, 60e9) == pytest.approx(68.0, abs=0.1)
    assert fspl_db(1.0, 60e9) == pytest.approx(o.FSPL_1M_60GHZ, abs=1e-9)
    assert fspl_db(2.0, 60e9) - fspl_db(1.0, 60e9) == pytest.approx(6.02, abs=0.01)
    assert fspl_db(wavelength(60e9) / (4 * math.pi), 60e9) == pytest.approx(0.0, abs=1e-9)
    rng = random.Random(1)
    for _ in range(50):
        d, f = rng.uniform(0.01, 100), rng.uniform(1e9, 100e9)
        assert fspl_db(d, f) == pytest.approx(o.fspl(d, f), abs=1e-9)
    with pytest.raises(ValueError):
        fspl_db(0.0, 60e9)


def test_dipole():
    assert dipole_gain(math.pi / 2) == pytest.approx(1.64)
    assert 10 * math.log10(dipole_gain(math.pi / 2)) == pytest.approx(2.15, abs=0.01)
    assert dipole_gain(0.0) == 0.0 and dipole_gain(math.pi) == 0.0
    assert dipole_gain(math.pi / 3) == pytest.approx(o.DIPOLE_PI_3, abs=1e-12)
    for k in range(1, 50):
        t = k * math.pi / 50
        assert dipole_gain(t) == pytest.approx(o.dipole(t), rel=1e-12)


def test_antenna_gain():
    assert antenna_gain_dbi("isotropic", Vec3(0, 0, 1)) == 0.0
    assert antenna_gain_dbi("dipole", Vec3(1, 0, 0)) == pytest.approx(o.DIPOLE_PEAK_DBI)
    with pytest.raises(ValueError):
        antenna_gain_dbi("horn", Vec3(1, 0, 0))


def test_dbm_watts():
    assert dbm_to_watts(100) == pytest.approx(1e7)
    assert dbm_to_watts(0) == pytest.approx(1e-3)
    for x in [-250, -100.5, -3, 0, 17.25, 100]:
        assert watts_to_dbm(dbm_to_watts(x)) == pytest.approx(x, abs=1e-9)


def test_path_validation():
    with pytest.raises(ValueError):
        PropagationPath((Vec3(0, 0, 0),), ())
    with pytest.raises(ValueError):
        line((0, 0, 0), (0, 0, 0))
    with pytest.raises(ValueError):
        line((0, 0, 0), (1, 0, 0), (2, 0, 0))  # missing bounce
    with pytest.raises(ValueError):
        line((0, 0, 0), (1, 0, 0), (2, 0, 0), kinds=[InteractionKind.STEER], loss=-1)


def test_path_power_direct():
    p = line((0, 0, 0), (1, 0, 0))
    assert path_power(p, W60, 0.0) == pytest.approx(-68.0, abs=0.1)
    assert path_power(p, W60, 0.0) == pytest.approx(-o.FSPL_1M_60GHZ, abs=1e-9)


def test_lens_rule():
    direct1 = path_power(line((0, 0, 0), (1, 0, 0)), W60, 0.0)
    direct2 = path_power(line((0, 0, 0), (2, 0, 0)), W60, 0.0)
    steer = path_power(line((0, 0, 0), (1, 0, 0), (1, 1, 0), kinds=[InteractionKind.STEER]), W60, 0.0)
    focus = path_power(line((0, 0, 0), (1, 0, 0), (1, 1, 0), kinds=[InteractionKind.FOCUS]), W60, 0.0)
    assert steer == pytest.approx(direct2, abs=1e-9)
    assert focus == pytest.approx(direct1, abs=1e-9)
    assert focus - steer == pytest.approx(6.02, abs=0.01)


def test_path_power_monotone_in_loss():
    a = path_power(line((0, 0, 0), (1, 0, 0), (1, 1, 0), kinds=[InteractionKind.STEER], loss=1.0), W60, 0.0)
    b = path_power(line((0, 0, 0), (1, 0, 0), (1, 1, 0), kinds=[InteractionKind.STEER], loss=3.0), W60, 0.0)
    assert b == pytest.approx(a - 2.0)


def test_dipole_endpoints():
    # vertical dipoles: a horizontal link is at the pattern peak on both ends
    p = line((0, 0, 1), (1, 0, 1))
    got = path_power(p, W60, 0.0, "dipole", "dipole")
    assert got == pytest.approx(-o.FSPL_1M_60GHZ + 2 * o.DIPOLE_PEAK_DBI, abs=1e-9)


def test_aggregate():
    p = line((0, 0, 0), (1, 0, 0))
    one = path_power(p, W60, 0.0)
    assert aggregate_power([p], W60, 0.0) == pytest.approx(one)
    assert aggregate_power([], W60, 0.0) == -250.0
    # two equal paths of -70 dBm: pick tx power so one path gives exactly -70
    tx = -70 + o.FSPL_1M_60GHZ
    assert aggregate_power([p, p], W60, tx) == pytest.approx(o.TWO_EQUAL_MINUS70_DBM, abs=0.01)
    assert aggregate_power([p, p], W60, tx) == pytest.approx(-66.99, abs=0.01)


def test_aggregate_coherent_two_equal_in_phase():
    p = line((0, 0, 0), (1, 0, 0))
    # identical paths add in phase: +6.02 dB
    got = aggregate_power([p, p], W60, 0.0, coherent=True)
    assert got - path_power(p, W60, 0.0) == pytest.approx(20 * math.log10(2), abs=1e-9)


def test_pdp_and_rms():
    lam = 299_792_458.0
    p1 = line((0, 0, 0), (lam * 1e-7, 0, 0))
    assert rms_delay_spread(pdp([p1], W60, 0.0)) == 0.0
    with pytest.raises(ValueError):
        rms_delay_spread(pdp([], W60, 0.0))


def test_rms_formula_oracle():
    from pwenv.emwave import Pdp

    rng = random.Random(7)
    for _ in range(20):
        taps = sorted((rng.uniform(0, 1e-6), rng.uniform(1e-9, 1)) for _ in range(3))
        assert rms_delay_spread(Pdp(tuple(taps))) == pytest.approx(o.rms_spread(taps), rel=1e-9)
    assert rms_delay_spread(Pdp(((0.0, 1.0), (100e-9, 1.0)))) == pytest.approx(50e-9)


def test_focus_does_not_reset_delay():
    p = line((0, 0, 0), (1, 0, 0), (1, 1, 0), kinds=[InteractionKind.FOCUS])
    assert p.delay == pytest.approx(2.0 / 299_792_458.0)

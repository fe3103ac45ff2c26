"""Oracles are recomputed from scratch and must match their frozen values."""

import math

import pytest

import oracles as o


def test_frozen_friis():
    assert o.fspl(1.0, 60e9) == pytest.approx(o.FSPL_1M_60GHZ, abs=1e-12)
    assert o.C / 60e9 == pytest.approx(o.WAVELENGTH_60GHZ, rel=1e-15)
    assert o.C / 5e9 == pytest.approx(o.WAVELENGTH_5GHZ, rel=1e-15)


def test_frozen_dipole():
    assert 10 * math.log10(o.dipole(math.pi / 2)) == pytest.approx(o.DIPOLE_PEAK_DBI, abs=1e-12)
    assert o.dipole(math.pi / 3) == pytest.approx(o.DIPOLE_PI_3, abs=1e-12)
    assert o.dipole(0.0) == 0.0


def test_frozen_meta_atoms():
    assert o.meta_atoms(5000, 3000, 8) == o.META_ATOMS_5X3_8MM == 625 * 375
    assert o.META_ATOMS_5X3_8MM * 8e-6 == pytest.approx(o.DRAIN_5X3_8MM_W)


def test_frozen_two_path_sum():
    w = 2 * 10 ** (-70 / 10) / 1000
    assert 10 * math.log10(w * 1000) == pytest.approx(o.TWO_EQUAL_MINUS70_DBM, abs=1e-12)


def test_brute_paths_triangle():
    adj = {"A": {"B": 1.0, "C": 1.5}, "B": {"A": 1.0, "C": 1.0}, "C": {"A": 1.5, "B": 1.0}}
    assert o.k_shortest_brute(adj, "A", "C", 5) == [(1.5, ("A", "C")), (2.0, ("A", "B", "C"))]


def test_rms_two_taps():
    assert o.rms_spread([(0.0, 1.0), (100e-9, 1.0)]) == pytest.approx(50e-9)


def test_segment_box_clip():
    box = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    assert o.segment_crosses_box((-1, 0.5, 0.5), (2, 0.5, 0.5), box)
    assert not o.segment_crosses_box((-1, 0.5, 0.5), (0, 0.5, 0.5), box)  # ends on the face
    assert not o.segment_crosses_box((-1, 1.0, 0.5), (2, 1.0, 0.5), box)  # grazes a face
    assert not o.segment_crosses_box((-1, 2, 0.5), (2, 2, 0.5), box)


def test_point_segment_dist():
    assert o.point_segment_dist((0, 1, 0), (-1, 0, 0), (1, 0, 0)) == 1.0
    assert o.point_segment_dist((3, 0, 0), (-1, 0, 0), (1, 0, 0)) == 2.0

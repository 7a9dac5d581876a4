import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coopsense.scenario import (C, SceneConfig, Target, derive_all, derive_truth, resolutions,
                                table_targets, validate_config)

import oracles


def test_active_delay_of_100m_target(cfg):
    t = derive_truth(cfg, Target.from_polar(100.0, 30.0))
    assert t.tau1 == pytest.approx(666.6667e-9, rel=1e-6)


def test_isosceles_triangle_gives_sixty_degrees(cfg):
    # R1 = R2 = baseline puts the target at the apex of an equilateral triangle
    t = derive_truth(cfg, Target.from_polar(cfg.baseline, 60.0))
    assert t.R2 == pytest.approx(cfg.baseline)
    assert math.degrees(t.theta) == pytest.approx(60.0)
    assert math.degrees(oracles.law_of_cosines_angle(t.R1, t.R2, cfg.baseline)) == pytest.approx(60.0)


def test_active_doppler_of_15mps(cfg):
    t = derive_truth(cfg, Target.from_polar(70.0, 25.0, 15.0))
    assert t.v1 == pytest.approx(15.0)
    assert t.fd1 == pytest.approx(400.0)


def test_passive_quantities_follow_geometry(cfg):
    tgt = Target.from_polar(100.0, 30.0, 25.0)
    t = derive_truth(cfg, tgt)
    r2 = oracles.geometry(100.0, 30.0, cfg.baseline)
    assert t.R2 == pytest.approx(r2)
    assert t.tau2 == pytest.approx((100.0 + r2) / C)
    p = np.array(tgt.position)
    u2 = (cfg.sbs2 - p) / np.linalg.norm(cfg.sbs2 - p)
    assert t.v2 == pytest.approx(float(np.array(tgt.velocity) @ u2))
    assert t.fd2 == pytest.approx((t.v1 - t.v2) * cfg.carrier_passive / C)
    assert t.delta_fd == pytest.approx(t.fd2 - t.fd1)
    assert t.bistatic_range == pytest.approx(t.R1 + t.R2)


def test_resolutions_match_table_numerology(cfg):
    dR, dV = resolutions(cfg)
    assert dR == pytest.approx(1.2195, abs=1e-4)
    assert dV == pytest.approx(13.44, abs=0.01)


def test_doubling_bandwidth_halves_range_resolution(cfg):
    dR, _ = resolutions(cfg)
    dR2, _ = resolutions(cfg.with_updates(bandwidth=2 * cfg.bandwidth))
    assert dR2 == pytest.approx(dR / 2)


def test_default_config_is_valid(cfg):
    rep = validate_config(cfg)
    assert rep.ok and rep.violations == []


def test_short_idft_is_reported(cfg):
    rep = validate_config(cfg.with_updates(idft_points=512))
    assert "idft_points below subcarrier count" in rep.violations


def test_full_wavelength_spacing_is_reported(cfg):
    rep = validate_config(cfg.with_updates(element_spacing=cfg.wavelength))
    assert "ambiguous array spacing" in rep.violations


def test_report_lists_every_violation(cfg):
    bad = cfg.with_updates(idft_points=10, dft_points=10, carrier_passive=cfg.carrier_active, aoa_window=4.0)
    rep = validate_config(bad)
    assert len(rep.violations) == 4
    assert not rep


@pytest.mark.parametrize("pos", [(0.0, 0.0), (200.0, 0.0)])
def test_target_on_a_station_is_rejected(cfg, pos):
    with pytest.raises(ValueError, match="degenerate"):
        derive_truth(cfg, Target(pos))


def test_target_on_baseline_axis_is_rejected(cfg):
    with pytest.raises(ValueError, match="collinear"):
        derive_truth(cfg, Target((50.0, 0.0)))


def test_table_targets(cfg):
    truths = derive_all(cfg, table_targets())
    assert [round(t.R1, 9) for t in truths] == [70.0, 100.0, 130.0]
    assert [round(math.degrees(t.theta), 9) for t in truths] == [25.0, 30.0, 35.0]
    assert [round(t.v1, 9) for t in truths] == [15.0, 25.0, 35.0]


positions = st.tuples(st.floats(-300, 300), st.floats(5, 300))
velocities = st.tuples(st.floats(-40, 40), st.floats(-40, 40))


@given(positions, velocities)
def test_delay_difference_is_path_difference(pos, vel):
    cfg = SceneConfig()
    t = derive_truth(cfg, Target(pos, vel))
    assert t.tau2 - t.tau1 == pytest.approx((t.R2 - t.R1) / C, rel=1e-12, abs=1e-20)
    assert (t.tau2 >= t.tau1) == (t.R2 >= t.R1) or math.isclose(t.R1, t.R2)


@given(positions, velocities, st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)))
def test_truth_invariant_under_translation(pos, vel, shift):
    a = derive_truth(SceneConfig(), Target(pos, vel))
    moved = (pos[0] + shift[0], pos[1] + shift[1])
    b = derive_truth(SceneConfig(sbs1_position=shift), Target(moved, vel))
    for name in ("R1", "R2", "v1", "v2", "theta", "omega", "tau1", "tau2", "fd1", "fd2"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), rel=1e-7, abs=1e-9)


@given(positions)
def test_angle_ranges(pos):
    cfg = SceneConfig()
    t = derive_truth(cfg, Target(pos))
    bound = 2 * math.pi * cfg.element_spacing / cfg.wavelength
    assert 0 < t.theta < math.pi
    assert -bound <= t.omega <= bound

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coopsense.axes import DOPPLER, RANGE
from coopsense.estimate import (doppler_profile, export_profile, fuse, range_profile, read_estimates,
                                to_physical)
from coopsense.scenario import C, SceneConfig

import oracles


def _range_vec(cfg, taus, amps=None):
    n = np.arange(cfg.n_subcarriers)
    amps = np.ones(len(taus)) if amps is None else amps
    return sum(a * np.exp(-2j * np.pi * n * cfg.subcarrier_spacing * t) for a, t in zip(amps, taus))


def _doppler_vec(cfg, fds):
    m = np.arange(cfg.n_symbols)
    return sum(np.exp(2j * np.pi * m * cfg.symbol_period * f) for f in fds)


def test_100m_target_peaks_at_bin_819(cfg):
    tau = 2 * 100.0 / C
    p = range_profile(_range_vec(cfg, [tau]), cfg.idft_points, cfg)
    assert math.floor(cfg.subcarrier_spacing * cfg.idft_points * tau) == 819
    assert int(np.argmax(p.values)) == 819
    assert len(p) == cfg.idft_points and np.all(p.values >= 0)


def test_zero_delay_peaks_at_bin_zero(cfg):
    p = range_profile(_range_vec(cfg, [0.0]), cfg.idft_points, cfg)
    assert int(np.argmax(p.values)) == 0
    es = read_estimates(p, 1, cfg)
    assert es.entries[0].value == pytest.approx(0.0, abs=1e-9)


def test_range_profile_matches_naive_transform(small_cfg):
    x = _range_vec(small_cfg, [300e-9, 900e-9], [1.0, 0.5j])
    p = range_profile(x, small_cfg.idft_points, small_cfg)
    # the inverse transform is the conjugate forward transform of the conjugate, scaled
    ref = np.conj(oracles.naive_dft(np.conj(x), small_cfg.idft_points)) / small_cfg.idft_points
    assert np.allclose(p.values, np.abs(ref), atol=1e-12)


def test_two_targets_three_bins_apart_resolve(cfg):
    bin_s = 1 / (cfg.subcarrier_spacing * cfg.n_subcarriers)
    taus = [500e-9, 500e-9 + 3 * bin_s]
    p = range_profile(_range_vec(cfg, taus), cfg.idft_points, cfg)
    es = read_estimates(p, 2, cfg)
    assert es.found == 2
    assert sorted(es.values()) == pytest.approx(sorted(C * np.array(taus) / 2), abs=0.13)


def test_400hz_doppler_bin(cfg):
    p = doppler_profile(_doppler_vec(cfg, [400.0]), cfg.dft_points, cfg)
    exact = cfg.symbol_period * cfg.dft_points * 400.0
    assert math.floor(exact) == 10
    # the sampled peak is the nearest bin to 10.63, one above the floor
    assert int(np.argmax(p.values)) in (10, 11)
    es = read_estimates(p, 1, cfg)
    assert es.entries[0].bin == pytest.approx(exact, abs=0.05)
    assert es.entries[0].value == pytest.approx(C * 400.0 / (2 * cfg.carrier_active), rel=5e-3)


def test_zero_doppler_bin(cfg):
    p = doppler_profile(_doppler_vec(cfg, [0.0]), cfg.dft_points, cfg)
    assert int(np.argmax(p.values)) == 0


def test_negative_doppler_wraps_and_unwraps(cfg):
    fd = -400.0
    p = doppler_profile(_doppler_vec(cfg, [fd]), cfg.dft_points, cfg)
    i = int(np.argmax(p.values))
    assert i > cfg.dft_points / 2
    assert float(p.physical(i)) == pytest.approx(fd, abs=1 / (cfg.symbol_period * cfg.dft_points))
    es = read_estimates(p, 1, cfg)
    assert es.entries[0].value < 0


def test_short_transform_rejected(cfg):
    with pytest.raises(ValueError):
        range_profile(np.ones(cfg.n_subcarriers), cfg.n_subcarriers - 1, cfg)


def test_fuse_with_zero_passive_is_active(cfg):
    a = range_profile(_range_vec(cfg, [400e-9]), cfg.idft_points, cfg)
    z = range_profile(np.zeros(cfg.n_subcarriers, complex), cfg.idft_points, cfg, "passive")
    f = fuse(a, z)
    assert np.allclose(f.values, a.values)
    assert f.source == "fused"


def test_fuse_equal_aligned_peaks_doubles(cfg):
    tau = 400e-9
    a = range_profile(_range_vec(cfg, [tau]), cfg.idft_points, cfg)
    b = range_profile(_range_vec(cfg, [tau], [np.exp(1.3j)]), cfg.idft_points, cfg, "passive")
    f = fuse(a, b)
    assert f.values.max() == pytest.approx(2 * a.values.max(), rel=1e-9)
    assert f.aligned


def test_fuse_misaligned_gives_two_peaks(cfg):
    a = range_profile(_range_vec(cfg, [400e-9]), cfg.idft_points, cfg)
    b = range_profile(_range_vec(cfg, [600e-9]), cfg.idft_points, cfg, "passive")
    f = fuse(a, b)
    assert f.aligned is False
    assert read_estimates(f, 2, cfg).found == 2


def test_noncoherent_fusion_adds_magnitudes(cfg):
    a = range_profile(_range_vec(cfg, [400e-9]), cfg.idft_points, cfg)
    b = range_profile(_range_vec(cfg, [400e-9], [-1.0]), cfg.idft_points, cfg, "passive")
    assert np.allclose(fuse(a, b, mode="noncoherent").values, 2 * a.values)
    with pytest.raises(ValueError):
        fuse(a, b, mode="sum")


def test_bin_819_reads_back_near_100m(cfg):
    p = range_profile(_range_vec(cfg, [2 * 100.0 / C]), cfg.idft_points, cfg)
    r = read_estimates(p, 1, cfg).entries[0].value
    assert 99.97 <= r <= 100.09
    assert r == pytest.approx(100.0, abs=0.13)


def test_passive_readout_is_bistatic_sum(cfg):
    tau = 1.5e-6
    assert to_physical(tau, RANGE, "passive", cfg) == pytest.approx(C * tau)
    assert to_physical(tau, RANGE, "active", cfg) == pytest.approx(C * tau / 2)
    assert to_physical(100.0, DOPPLER, "passive", cfg) == pytest.approx(C * 100 / cfg.carrier_passive)


def test_partial_set_when_too_few_peaks(cfg):
    p = range_profile(_range_vec(cfg, [400e-9]), cfg.idft_points, cfg)
    es = read_estimates(p, 3, cfg, floor_ratio=1e6)
    assert "partial" in es.flags and es.found < 3
    with pytest.raises(ValueError):
        read_estimates(p, 0, cfg)


def test_export_profile(tmp_path, small_cfg):
    p = doppler_profile(_doppler_vec(small_cfg, [1000.0]), small_cfg.dft_points, small_cfg)
    path = tmp_path / "p.csv"
    export_profile(p, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["doppler_hz", "magnitude"]
    assert len(rows) == small_cfg.dft_points + 1
    assert float(rows[2][0]) == pytest.approx(p.scale)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1279))
def test_on_grid_peak_is_floor_or_neighbour(b):
    cfg = SceneConfig(n_subcarriers=128, idft_points=1280, bandwidth=128 * 120e3)
    tau = b / (cfg.subcarrier_spacing * cfg.idft_points) * 0.999999
    p = range_profile(_range_vec(cfg, [tau]), cfg.idft_points, cfg)
    i = int(np.argmax(p.values))
    f = math.floor(cfg.subcarrier_spacing * cfg.idft_points * tau)
    assert min(abs(i - f), cfg.idft_points - abs(i - f)) <= 1


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.01, 100), st.floats(0, 8e-6))
def test_profile_invariant_to_global_phase(phase, scale, tau):
    cfg = SceneConfig(n_subcarriers=64, idft_points=640, bandwidth=64 * 120e3)
    x = _range_vec(cfg, [tau])
    a = range_profile(x, cfg.idft_points, cfg).values
    b = range_profile(x * np.exp(1j * phase), cfg.idft_points, cfg).values
    assert np.allclose(a, b, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(50e-9, 7e-6), st.sampled_from([1, 2, 4, 8, 16]))
def test_padding_does_not_move_physical_peak(tau, pad):
    cfg = SceneConfig(n_subcarriers=64, idft_points=64, bandwidth=64 * 120e3)
    x = _range_vec(cfg, [tau])
    p = range_profile(x, 64 * pad, cfg)
    phys = float(p.physical(np.argmax(p.values)))
    assert abs(phys - tau) <= 1 / (cfg.subcarrier_spacing * 64)

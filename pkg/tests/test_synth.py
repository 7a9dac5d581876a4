import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from coopsense.scenario import SceneConfig, Target, TruthParams, derive_truth, table_targets
from coopsense.synth import (QPSK, OffsetModel, OffsetTrack, SymbolGrid, add_noise, apply_active_channel,
                             apply_fd_leakage, apply_passive_channel, generate_tx, read_grid, sample_offsets,
                             stream_rng, write_grid, zero_offsets)

import oracles


def _truth(cfg, r=100.0, ang=30.0, v=15.0, a1=1.0, a2=1.0):
    return replace(derive_truth(cfg, Target.from_polar(r, ang, v)), alpha_active=a1, alpha_passive=a2)


def _ones(cfg, symbols=None):
    m = cfg.n_symbols if symbols is None else len(symbols)
    return SymbolGrid(np.ones((cfg.n_antennas, cfg.n_subcarriers, m), complex), symbols)


def test_tx_entries_are_qpsk(small_cfg):
    g = generate_tx(small_cfg, 1)
    ref = np.array([(1 + 1j), (1 - 1j), (-1 + 1j), (-1 - 1j)]) / math.sqrt(2)
    d = np.abs(g.data.reshape(-1, 1) - ref[None, :]).min(axis=1)
    assert d.max() < 1e-12
    assert g.shape == (small_cfg.n_antennas, small_cfg.n_subcarriers, small_cfg.n_symbols)


def test_tx_reproducible_and_stream_specific(small_cfg):
    a, b = generate_tx(small_cfg, 1), generate_tx(small_cfg, 1)
    c = generate_tx(small_cfg, 2)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_tx_symbol_subset_matches_full_frame(small_cfg):
    full = generate_tx(small_cfg, 1)
    part = generate_tx(small_cfg, 1, symbols=[3, 7])
    assert np.array_equal(part.data, full.data[:, :, [3, 7]])


def test_tx_symbols_uniform(cfg):
    g = generate_tx(cfg, 1).data[0]  # N*M = 262144 draws
    idx = np.argmin(np.abs(g.reshape(-1, 1) - QPSK[None, :]), axis=1)
    counts = np.bincount(idx, minlength=4)
    assert counts.sum() == 262144
    assert chisquare(counts).pvalue > 0.01


def test_constant_offsets(cfg):
    tr = sample_offsets(cfg, OffsetModel.from_units("constant", 100, 0, 0.2, 0))
    assert np.all(tr.to == tr.to[0]) and tr.to[0] == pytest.approx(100e-9, rel=1e-12)
    assert np.all(tr.cfo == pytest.approx(24e3))
    assert len(tr.to) == cfg.n_symbols


def test_gaussian_zero_spread_is_constant(cfg):
    tr = sample_offsets(cfg, OffsetModel.from_units("gaussian", 100, 0, 0.0, 0))
    assert np.all(tr.to == tr.to[0]) and tr.to[0] == pytest.approx(100e-9, rel=1e-12)


def test_gaussian_moments():
    cfg = SceneConfig(n_symbols=100_000)
    m = OffsetModel.from_units("gaussian", 100, 10, 0.2, 0.1)
    tr = sample_offsets(cfg, m, rng=np.random.default_rng(3))
    assert np.var(tr.cfo) == pytest.approx(m.cfo_spread ** 2, rel=0.05)
    assert np.var(tr.to) == pytest.approx(m.to_spread ** 2, rel=0.05)
    assert np.mean(tr.cfo) == pytest.approx(m.cfo_mean, rel=0.01)


def test_negative_spread_rejected():
    with pytest.raises(ValueError):
        OffsetModel("gaussian", 0, -1.0)


def test_identity_channel(small_cfg):
    t = TruthParams(R1=0, R2=0, v1=0, v2=0, theta=1.0, omega=0.0, tau1=0.0, tau2=0.0, fd1=0.0, fd2=0.0)
    tx = generate_tx(small_cfg, 1)
    out = apply_active_channel(tx, [t], small_cfg)
    assert np.allclose(out.data[0], tx.data[0], atol=1e-15)


def test_active_phase_slope(cfg):
    t = _truth(cfg)
    H = apply_active_channel(_ones(cfg, [0]), [t], cfg).data[0, :, 0]
    slope = np.angle(H[1:] / H[:-1])
    expect = math.remainder(-2 * math.pi * cfg.subcarrier_spacing * 666.6667e-9, 2 * math.pi)
    assert np.allclose(slope, expect, atol=1e-5)


def test_active_entries_match_phase_model(small_cfg):
    t = _truth(small_cfg, a1=0.5 * np.exp(0.3j))
    H = apply_active_channel(_ones(small_cfg), [t], small_cfg).data
    for k, n, m in [(0, 0, 0), (1, 5, 3), (3, 127, 31), (2, 64, 17)]:
        ref = oracles.steering_entry(t.alpha_active, t.omega, k, n, m, small_cfg.subcarrier_spacing,
                                     small_cfg.symbol_period, t.tau1, t.fd1)
        assert H[k, n, m] == pytest.approx(ref, abs=1e-12)


def test_channel_is_additive_over_targets(small_cfg):
    truths = [derive_truth(small_cfg, t) for t in table_targets()]
    tx = generate_tx(small_cfg, 1)
    whole = apply_active_channel(tx, truths, small_cfg).data
    parts = sum(apply_active_channel(tx, [t], small_cfg).data for t in truths)
    assert np.allclose(whole, parts, atol=1e-12)


def test_passive_without_offsets_reduces_to_active_form(small_cfg):
    t = _truth(small_cfg, a2=0.7j)
    tx = generate_tx(small_cfg, 2)
    p = apply_passive_channel(tx, [t], zero_offsets(small_cfg), small_cfg).data
    sub = replace(t, tau1=t.tau2, fd1=t.fd2, alpha_active=t.alpha_passive)
    a = apply_active_channel(tx, [sub], small_cfg).data
    assert np.allclose(p, a, atol=1e-12)


def test_timing_offset_adds_subcarrier_ramp(small_cfg):
    t = _truth(small_cfg)
    ones = _ones(small_cfg)
    base = apply_passive_channel(ones, [t], zero_offsets(small_cfg), small_cfg).data
    tr = sample_offsets(small_cfg, OffsetModel.from_units("constant", 100, 0, 0, 0))
    off = apply_passive_channel(ones, [t], tr, small_cfg).data
    ratio = off / base
    n = np.arange(small_cfg.n_subcarriers)
    expect = np.exp(-2j * np.pi * n * small_cfg.subcarrier_spacing * 100e-9)
    assert np.allclose(ratio[0, :, 5], expect, atol=1e-12)


def test_cfo_shifts_symbol_phase_increment(small_cfg):
    t = _truth(small_cfg)
    ones = _ones(small_cfg)
    base = apply_passive_channel(ones, [t], zero_offsets(small_cfg), small_cfg).data
    tr = sample_offsets(small_cfg, OffsetModel.from_units("constant", 0, 0, 0.1, 0, small_cfg.subcarrier_spacing))
    off = apply_passive_channel(ones, [t], tr, small_cfg).data
    ratio = off[0, 3, :] / base[0, 3, :]
    step = np.angle(ratio[1:] / ratio[:-1])
    assert np.allclose(step, 2 * np.pi * small_cfg.symbol_period * 0.1 * small_cfg.subcarrier_spacing, atol=1e-12)


def test_alias_guard(cfg):
    t = _truth(cfg)
    far = replace(t, tau1=1.2 / cfg.subcarrier_spacing)
    with pytest.raises(ValueError, match="unambiguous"):
        apply_active_channel(_ones(cfg, [0]), [far], cfg)
    tr = sample_offsets(cfg, OffsetModel("constant", to_mean=1.0 / cfg.subcarrier_spacing))
    with pytest.raises(ValueError, match="unambiguous"):
        apply_passive_channel(_ones(cfg, [0]), [t], tr, cfg)


def test_infinite_snr_leaves_grid_unchanged(small_cfg):
    g = generate_tx(small_cfg, 1)
    out = add_noise(g, math.inf, small_cfg)
    assert np.array_equal(out.data, g.data)
    assert out.data is not g.data


def test_noise_variance_at_zero_db():
    cfg = SceneConfig(n_subcarriers=1000, n_symbols=1000, n_antennas=1)
    g = SymbolGrid(np.ones((1, 1000, 1000), complex))
    out = add_noise(g, 0.0, cfg, rng=np.random.default_rng(1))
    assert np.var(out.data - g.data) == pytest.approx(1.0, rel=0.02)


def test_noise_differs_by_seed_and_subtracts_out(small_cfg):
    g = generate_tx(small_cfg, 1)
    a = add_noise(g, 0.0, rng=stream_rng(1, 4))
    b = add_noise(g, 0.0, rng=stream_rng(2, 4))
    assert not np.allclose(a.data, b.data)
    na, nb = a.data - g.data, b.data - g.data
    assert np.allclose(a.data - na, b.data - nb)


def test_noise_deterministic_under_seed(small_cfg):
    g = generate_tx(small_cfg, 1)
    assert np.array_equal(add_noise(g, 3.0, small_cfg).data, add_noise(g, 3.0, small_cfg).data)


def test_leakage_disabled_by_default(small_cfg):
    g = generate_tx(small_cfg, 1)
    a, p = apply_fd_leakage(g, g, -math.inf)
    assert a is g and p is g


def test_grid_dump_roundtrip(tmp_path, small_cfg):
    g = generate_tx(small_cfg, 1, symbols=[0, 4, 9])
    path = tmp_path / "g.bin"
    write_grid(g, path, note="roundtrip")
    back = read_grid(path)
    assert np.array_equal(back.data, g.data)
    assert list(back.symbols) == [0, 4, 9]
    raw = path.read_bytes()
    assert raw.startswith(b"COOPSENSE-GRID 1\n")
    # payload is little-endian float64 re/im pairs
    payload = raw[raw.index(b"end\n") + 4:]
    assert np.frombuffer(payload[:16], "<f8").tolist() == [g.data[0, 0, 0].real, g.data[0, 0, 0].imag]


@settings(max_examples=30, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_channel_linear_in_alpha(a, b):
    cfg = SceneConfig(n_subcarriers=16, n_symbols=4, n_antennas=2, idft_points=16, dft_points=4, bandwidth=16 * 120e3)
    t = _truth(cfg)
    ones = _ones(cfg)
    ha = apply_active_channel(ones, [replace(t, alpha_active=a)], cfg).data
    hb = apply_active_channel(ones, [replace(t, alpha_active=b)], cfg).data
    hab = apply_active_channel(ones, [replace(t, alpha_active=a + b)], cfg).data
    assert np.allclose(ha + hb, hab, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 31), st.floats(-500, 500), st.floats(-0.3, 0.3))
def test_symbol_column_depends_only_on_its_own_offsets(m, dto_ns, dcfo):
    cfg = SceneConfig(n_subcarriers=128, n_symbols=32, idft_points=1280, dft_points=320,
                      bandwidth=128 * 120e3, n_antennas=4)
    t = _truth(cfg)
    ones = _ones(cfg)
    base = OffsetTrack(np.full(32, 200e-9), np.full(32, 0.1 * 120e3), OffsetModel("gaussian", 200e-9, 1e-9, 12e3, 1.0))
    to, cfo = base.to.copy(), base.cfo.copy()
    to[m] += dto_ns * 1e-9
    cfo[m] += dcfo * 120e3
    changed = OffsetTrack(to, cfo, base.model)
    a = apply_passive_channel(ones, [t], base, cfg).data
    b = apply_passive_channel(ones, [t], changed, cfg).data
    others = [i for i in range(32) if i != m]
    assert np.array_equal(a[:, :, others], b[:, :, others])


def test_colocated_virtual_target_matches_active(small_cfg):
    cfg = small_cfg.with_updates(carrier_passive=small_cfg.carrier_active)
    t = _truth(cfg)
    # a virtual passive target with the same delay and Doppler as the active one
    virt = replace(t, tau2=t.tau1, fd2=t.fd1, alpha_passive=t.alpha_active)
    tx = generate_tx(cfg, 1)
    a = apply_active_channel(tx, [t], cfg).data
    p = apply_passive_channel(tx, [virt], zero_offsets(cfg), cfg).data
    assert np.allclose(a, p, atol=1e-12)

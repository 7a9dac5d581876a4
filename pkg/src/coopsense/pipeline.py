"""One Monte Carlo trial, end to end.

Variants:

* ``active-only``   monostatic estimates from SBS1's own echo
* ``passive-only``  bistatic estimates with no offset mitigation
* ``cooperative``   correlation-based offset estimation, matching,
                    compensation and fusion of both paths
* ``perfect-sync``  passive path without clock offsets, compensated with
                    the true geometric deviations (never estimates offsets)

Range quantities come from the reference symbol column, which the timing
offsets of other symbols cannot touch.  Doppler quantities come from the
slow-time signal of each target after least-squares range gating; on the
passive path the cooperative variant first re-aligns every symbol to the
reference symbol's timing.
"""

from __future__ import annotations

import math
from dataclasses import replace
import numpy as np

from . import cccs
from .aoa import estimate_aoa, full_aoa
from .axes import DOPPLER, RANGE
from .estimate import fuse, profile_for, read_estimates
from .extract import divide, gate_delays, remove_symbol_delay, track_symbol_delay
from .metrics import TargetEstimate, TrialRecord, ideal_direct_term, mse_direct_term
from .peaks import isolate_tone
from .scenario import C, TruthParams, derive_truth
from .scenefile import Scene
from .synth import (STREAM_NOISE_ACTIVE, STREAM_NOISE_PASSIVE, STREAM_OFFSETS, STREAM_PHASES,
                    STREAM_TX_ACTIVE, STREAM_TX_PASSIVE, apply_active_channel, apply_fd_leakage,
                    apply_passive_channel, awgn, generate_tx, sample_offsets, stream_rng, zero_offsets)

VARIANTS = ("active-only", "passive-only", "cooperative", "perfect-sync")


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


def _amp(snr_db: float) -> float:
    return 1.0 if math.isinf(snr_db) else 10 ** (snr_db / 20)


def trial_truths(scene: Scene, seed: int, present: bool = True) -> list[TruthParams]:
    """Ground truth with reflectivities scaled to the configured SNRs.

    With ``random_phases`` every target gets independent uniform phases on
    both paths, drawn from the trial's phase stream.
    """
    cfg = scene.config
    base = [derive_truth(cfg, t) for t in scene.targets]
    rng = stream_rng(seed, STREAM_PHASES)
    ph = rng.uniform(0, 2 * np.pi, size=(len(base), 2)) if cfg.random_phases else np.zeros((len(base), 2))
    a1, a2 = _amp(cfg.snr_active), _amp(cfg.snr_passive)
    if not present:
        a1 = a2 = 0.0
    return [replace(t,
                    alpha_active=a1 * t.alpha_active * np.exp(1j * ph[i, 0]),
                    alpha_passive=a2 * t.alpha_passive * np.exp(1j * ph[i, 1]))
            for i, t in enumerate(base)]


def synthesize(scene: Scene, seed: int, truths, symbols=None, need=("active", "passive"), sync: bool = False):
    """Divided (channel) grids for the requested paths plus the offset track."""
    cfg = replace(scene.config, seed=seed)
    track = zero_offsets(cfg) if sync else sample_offsets(cfg, scene.offsets, rng=stream_rng(seed, STREAM_OFFSETS))
    leak = not (math.isinf(cfg.fd_leakage_db) and cfg.fd_leakage_db < 0)
    want_a = "active" in need or leak
    want_p = "passive" in need or leak
    tx1 = generate_tx(cfg, STREAM_TX_ACTIVE, symbols) if want_a else None
    tx2 = generate_tx(cfg, STREAM_TX_PASSIVE, symbols) if want_p else None
    rx1 = apply_active_channel(tx1, truths, cfg) if want_a else None
    rx2 = apply_passive_channel(tx2, truths, track, cfg) if want_p else None
    if leak:
        rx1, rx2 = apply_fd_leakage(rx1, rx2, cfg.fd_leakage_db)
    out = {}
    for name, rx, tx, snr, stream in (("active", rx1, tx1, cfg.snr_active, STREAM_NOISE_ACTIVE),
                                      ("passive", rx2, tx2, cfg.snr_passive, STREAM_NOISE_PASSIVE)):
        if rx is None or name not in need:
            continue
        if not math.isinf(snr):
            rx = rx.like(rx.data + awgn(rx.data.shape, 1.0, stream_rng(seed, stream)))
        out[name] = divide(rx, tx)
    return out, track


def _col(grid, m0):
    return int(np.flatnonzero(grid.symbols == m0)[0])


def _read_one(vec, cfg, axis, source):
    prof = profile_for(vec, cfg, axis, source)
    es = read_estimates(prof, 1, cfg, floor_ratio=0.0)
    return es.entries[0].value if es.entries else float("nan")


def _fused_value(a_vec, p_vec, cfg, axis):
    pa = profile_for(a_vec, cfg, axis, "active")
    pp = profile_for(p_vec, cfg, axis, "compensated")
    fused = fuse(pa, pp, mode=cfg.fusion)
    es = read_estimates(fused, 1, cfg, floor_ratio=0.0)
    return (es.entries[0].value if es.entries else float("nan")), pp


def run_trial(scene: Scene, variant: str, seed: int, doppler: bool = True, aoa: bool = True) -> TrialRecord:
    """Run one trial of ``variant`` with per-trial ``seed``.

    ``doppler=False`` synthesizes only the reference symbol(s) and skips
    the velocity stage, which is all range-only experiments need.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    cfg = replace(scene.config, seed=seed)
    scene = replace(scene, config=cfg)
    L = len(scene.targets)
    m0 = cfg.ref_symbol
    stage = "synth"
    try:
        truths = trial_truths(scene, seed)
        symbols = None if doppler else np.arange(m0, m0 + cfg.offset_symbols)
        need = {"active-only": ("active",), "passive-only": ("passive",)}.get(variant, ("active", "passive"))
        grids, track = synthesize(scene, seed, truths, symbols, need, sync=(variant == "perfect-sync"))
        stage = "range"
        rec = TrialRecord(variant, seed, truths, {}, cfg.snr_active, cfg.snr_passive, scene.offsets.label(),
                          offsets={"to_ref": float(track.to[m0]), "cfo_ref": float(track.cfo[m0])})
        ctx = _RangeStage(cfg, grids, L, m0)
        if variant == "active-only":
            ctx.active_only(rec)
        elif variant == "passive-only":
            ctx.passive_only(rec)
        elif variant == "cooperative":
            ctx.cooperative(rec, truths, track)
        else:
            ctx.perfect_sync(rec, truths)
        if doppler:
            stage = "doppler"
            ctx.doppler(rec, variant, truths)
        if aoa and variant in ("cooperative", "perfect-sync"):
            stage = "aoa"
            ctx.aoa(rec, doppler)
        return rec
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
        raise StageError(stage, exc) from exc


class _RangeStage:
    """Per-trial working state shared by the range, Doppler and angle stages."""

    def __init__(self, cfg, grids, L, m0):
        self.cfg, self.grids, self.L, self.m0 = cfg, grids, L, m0
        self.Pm = self.Pb = None
        self.pairs = {}  # active index -> (passive index, range offset)
        self.truth_of = {}  # active index -> truth index (perfect-sync only)
        if "active" in grids:
            g = grids["active"]
            self.k1 = g.data[:, :, _col(g, m0)]
            self.Pm = cccs.steer_peaks(self.k1[0], cfg, RANGE, L, "P_m")
        if "passive" in grids:
            g = grids["passive"]
            self.k2 = g.data[:, :, _col(g, m0)]
            self.Pb = cccs.steer_peaks(self.k2[0], cfg, RANGE, L, "P_b")

    # -- range -----------------------------------------------------------
    def active_only(self, rec):
        rec.estimates["active"] = [TargetEstimate(range=C * e.refined_offset / 2) for e in self.Pm]

    def passive_only(self, rec):
        rec.estimates["passive"] = [TargetEstimate(range=C * e.refined_offset) for e in self.Pb]

    def _fuse_ranges(self, rec):
        cfg = self.cfg
        act = [TargetEstimate(range=C * e.refined_offset / 2) for e in self.Pm]
        comp, fused = [], []
        for i, e in enumerate(self.Pm):
            if i not in self.pairs:
                comp.append(TargetEstimate())
                fused.append(TargetEstimate(range=act[i].range))
                continue
            k, off = self.pairs[i]
            a_vec = isolate_tone(self.k1[0], self.Pm.freqs(), self.Pm.amplitudes(), i)
            p_vec = isolate_tone(self.k2[0], self.Pb.freqs(), self.Pb.amplitudes(), k)
            p_c = cccs.compensate(p_vec, off, cfg, RANGE)
            comp.append(TargetEstimate(range=_read_one(p_c, cfg, RANGE, "compensated")))
            fused.append(TargetEstimate(range=_fused_value(a_vec, p_c, cfg, RANGE)[0]))
        rec.estimates["active"] = act
        rec.estimates["passive"] = [TargetEstimate(range=C * e.refined_offset) for e in self.Pb]
        rec.estimates["compensated"] = comp
        rec.estimates["fused"] = fused

    def cooperative(self, rec, truths, track):
        cfg, m0 = self.cfg, self.m0
        ga, gp = self.grids["active"], self.grids["passive"]
        if cfg.offset_symbols > 1:
            rho = np.conj(gp.data) * ga.data
            cv = cccs.CorrelationVector(rho, RANGE)
            Pg = cccs.extract_offsets(cv, cfg, self.L, ref_col=_col(ga, m0))
        else:
            cv = cccs.cross_correlate(self.k1, self.k2, RANGE)
            Pg = cccs.extract_offsets(cv, cfg, self.L)
        C_R = cccs.match(self.Pm, self.Pb, Pg, cfg.eps2, cfg)
        self.Pg, self.C_R = Pg, C_R
        for t in C_R.triples:
            self.pairs[t.i] = (t.k, t.offset)
        rec.flags.extend(f"range_offsets:{f}" for f in sorted(Pg.flags))
        rec.flags.extend(f"range_match:{f}" for f in sorted(C_R.flags))
        rec.offsets["range_offset_estimates"] = [float(x) for x in Pg.offsets()]
        self._fuse_ranges(rec)
        # quality of the antenna-summed correlation against its ideal direct part
        measured = cccs.cross_correlate(self.k1, self.k2, RANGE).rho.sum(axis=0)
        ideal = ideal_direct_term(truths, cfg, track, m0)
        rec.mse_direct = mse_direct_term(measured, ideal, normalize=True)

    def perfect_sync(self, rec, truths):
        # true deviations; association of peaks to targets uses the truth too
        t1 = np.array([t.tau1 for t in truths])
        for i, e in enumerate(self.Pm):
            l = int(np.argmin(np.abs(t1 - e.refined_offset)))
            dtau = truths[l].delta_tau
            pred = e.refined_offset + dtau
            used = {k for k, _ in self.pairs.values()}
            opts = [(abs(p.refined_offset - pred), k) for k, p in enumerate(self.Pb) if k not in used]
            if opts:
                self.pairs[i] = (min(opts)[1], dtau)
            self.truth_of[i] = l
        self._fuse_ranges(rec)

    # -- Doppler ---------------------------------------------------------
    def doppler(self, rec, variant, truths):
        cfg = self.cfg
        if "active" in self.grids:
            g1 = gate_delays(self.grids["active"].data, cfg, self.Pm.offsets())
            self.g1 = g1
            f1 = [self._tone(g1[0, i]) for i in range(len(self.Pm))]
            v_act = [C * f / (2 * cfg.carrier_active) for f in f1]
            for est, v in zip(rec.estimates["active"], v_act):
                est.velocity = v
        if "passive" in self.grids:
            D2 = self.grids["passive"].data
            if variant == "cooperative":
                shifts = track_symbol_delay(D2[0], cfg, ref_col=_col(self.grids["passive"], self.m0))
                D2 = remove_symbol_delay(D2, cfg, shifts)
                rec.offsets["to_track_rms"] = float(np.sqrt(np.mean(shifts ** 2)))
            g2 = gate_delays(D2, cfg, self.Pb.offsets())
            self.g2 = g2
            fb = [self._tone(g2[0, k]) for k in range(len(self.Pb))]
            for est, f in zip(rec.estimates["passive"], fb):
                est.velocity = C * f / cfg.carrier_passive
        if variant not in ("cooperative", "perfect-sync"):
            return
        for i in range(len(self.Pm)):
            if i not in self.pairs:
                rec.estimates["fused"][i].velocity = rec.estimates["active"][i].velocity
                continue
            k, _ = self.pairs[i]
            a_vec, p_vec = self.g1[0, i], self.g2[0, k]
            if variant == "cooperative":
                cv = cccs.cross_correlate(self.g1[:, i, :], self.g2[:, k, :], DOPPLER)
                Pg = cccs.extract_doppler_offsets(cv, cfg, 1)
                Pm = cccs.steer_peaks(a_vec, cfg, DOPPLER, 1, "P_m")
                Pb = cccs.steer_peaks(p_vec, cfg, DOPPLER, 1, "P_b")
                C_D = cccs.match_doppler(Pm, Pb, Pg, cfg.eps2, cfg)
                if C_D.flags:
                    rec.flags.extend(f"doppler_match[{i}]:{f}" for f in sorted(C_D.flags))
                off = Pg.entries[0].refined_offset
            else:
                off = truths[self.truth_of[i]].delta_fd
            p_c = cccs.compensate(p_vec, off, cfg, DOPPLER)
            f_fused, pp = _fused_value(a_vec, p_c, cfg, DOPPLER)
            rec.estimates["compensated"][i].velocity = _read_one(p_c, cfg, DOPPLER, "compensated")
            rec.estimates["fused"][i].velocity = f_fused

    def _tone(self, vec):
        ps = cccs.steer_peaks(vec, self.cfg, DOPPLER, 1, "P")
        return ps.entries[0].refined_offset if ps.entries else float("nan")

    # -- angle -----------------------------------------------------------
    def aoa(self, rec, doppler):
        cfg = self.cfg
        if doppler:
            m = np.arange(cfg.n_symbols)
        for i in range(len(self.Pm)):
            fe = rec.estimates["fused"][i]
            if i not in self.pairs or not np.isfinite(fe.range):
                continue
            k, _ = self.pairs[i]
            if doppler and np.isfinite(fe.velocity):
                fd = 2 * fe.velocity * cfg.carrier_active / C
                snap = self.g1[:, i, :] @ np.exp(-2j * np.pi * m * cfg.symbol_period * fd)
            else:
                snap = gate_delays(self.k1[:, :, None], cfg, self.Pm.offsets())[:, i, 0]
            R1 = fe.range
            R2 = C * self.Pb.entries[k].refined_offset - R1
            est = None
            if cfg.aoa_gating:
                try:
                    est = estimate_aoa(snap, R1, R2, cfg)
                except ValueError:
                    rec.flags.append(f"aoa[{i}]:coarse_failed")
            if est is None or "window_miss" in est.flags:
                # the coarse angle is off (range errors), so search every bin instead
                if est is not None:
                    rec.flags.append(f"aoa[{i}]:window_miss")
                est = full_aoa(snap, cfg)
                if cfg.aoa_gating:
                    est.flags.add("full_fallback")
            fe.omega, fe.theta = est.omega, est.theta
            fe.theta_interval = (est.theta_lo, est.theta_hi)
            rec.flags.extend(f"aoa[{i}]:{f}" for f in sorted(est.flags))


# ---------------------------------------------------------------------------
# detection


def detection_trial(scene: Scene, seed: int, present: bool) -> dict:
    """Detector statistics for one trial under H1 (``present``) or H0.

    The statistic is the maximum of the range-profile magnitude over the
    whole profile at the reference symbol: active profile for the active
    detector, passive profile for the passive detector and the fused
    profile (compensated with the correlation offset estimate) for the
    cooperative detector.  The offset search integrates the correlation
    spectra of ``offset_symbols`` symbols non-coherently.
    """
    cfg = replace(scene.config, seed=seed)
    scene = replace(scene, config=cfg)
    m0 = cfg.ref_symbol
    truths = trial_truths(scene, seed, present)
    symbols = np.arange(m0, m0 + cfg.offset_symbols)
    grids, _ = synthesize(scene, seed, truths, symbols)
    ga, gp = grids["active"], grids["passive"]
    c0 = _col(ga, m0)
    k1, k2 = ga.data[0, :, c0], gp.data[0, :, c0]
    pa = profile_for(k1, cfg, RANGE, "active")
    pp = profile_for(k2, cfg, RANGE, "passive")
    cv = cccs.CorrelationVector(np.conj(gp.data) * ga.data, RANGE)
    Pg = cccs.extract_offsets(cv, cfg, 1, ref_col=c0)
    p_c = cccs.compensate(k2, Pg.entries[0].refined_offset, cfg, RANGE)
    fused = fuse(pa, profile_for(p_c, cfg, RANGE, "compensated"), mode=cfg.fusion)
    return {"active": float(pa.values.max()), "passive": float(pp.values.max()),
            "cooperative": float(fused.values.max())}


def noiseless(scene: Scene) -> Scene:
    return scene.with_config(snr_active=math.inf, snr_passive=math.inf)


def scene_with(scene: Scene, offsets=None, **cfg) -> Scene:
    s = scene.with_config(**cfg) if cfg else scene
    if offsets is not None:
        s = replace(s, offsets=offsets)
    return s


__all__ = ["VARIANTS", "StageError", "run_trial", "detection_trial", "trial_truths", "synthesize",
           "noiseless", "scene_with"]

"""Error and detection metrics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .scenario import SceneConfig, TruthParams, resolutions
from .synth import OffsetTrack, channel_grid

NAN = float("nan")


@dataclass
class TargetEstimate:
    range: float = NAN
    velocity: float = NAN
    omega: float = NAN
    theta: float = NAN
    theta_interval: tuple = (NAN, NAN)


@dataclass
class TrialRecord:
    """Outcome of one Monte Carlo trial.

    ``estimates`` maps a source name (``active``, ``passive``,
    ``compensated``, ``fused``) to one TargetEstimate per detected target.
    ``passive`` estimates are bistatic (R1+R2, v1-v2); all others are in
    monostatic coordinates (R1, v1).
    """

    variant: str
    seed: int
    truths: list
    estimates: dict
    snr_active: float
    snr_passive: float
    offset_model: str
    offsets: dict = field(default_factory=dict)
    mse_direct: float = NAN
    flags: list = field(default_factory=list)


def truth_value(t: TruthParams, source: str, kind: str) -> float:
    if kind == "range":
        return t.bistatic_range if source == "passive" else t.R1
    if kind == "velocity":
        return t.bistatic_velocity if source == "passive" else t.v1
    if kind == "omega":
        return t.omega
    if kind == "theta":
        return t.theta
    raise ValueError(f"unknown kind {kind!r}")


def associate(est, truth) -> list[tuple[int, int]]:
    """One-to-one pairing minimising total absolute error (non-finite estimates cost most)."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.size == 0 or truth.size == 0:
        return []
    cost = np.abs(est[:, None] - truth[None, :])
    big = np.nanmax(np.where(np.isfinite(cost), cost, np.nan)) if np.isfinite(cost).any() else 1.0
    cost = np.where(np.isfinite(cost), cost, 10 * (big + 1))
    r, c = linear_sum_assignment(cost)
    return list(zip(r.tolist(), c.tolist()))


def nmse(estimates, truths, kind: str = "range") -> float:
    """Mean of |est - true|^2 / true^2 over paired targets.

    ``estimates`` and ``truths`` are equal-length sequences of numbers that
    are already associated.  Targets with a zero true value are excluded
    with a warning.
    """
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.shape != t.shape:
        raise ValueError("estimate and truth counts differ")
    keep = t != 0
    if not keep.all():
        warnings.warn(f"{(~keep).sum()} zero-valued {kind} truth(s) excluded from NMSE", RuntimeWarning)
    if not keep.any():
        return NAN
    return float(np.mean((e[keep] - t[keep]) ** 2 / t[keep] ** 2))


def rmse_aoa(estimates, truths) -> float:
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.shape != t.shape:
        raise ValueError("estimate and truth counts differ")
    return float(np.sqrt(np.mean(np.abs(e - t) ** 2)))


def record_pairs(rec: TrialRecord, source: str, kind: str):
    """Associated (estimate, truth) arrays for one source of a trial record.

    Targets without an estimate count as misses and get NaN estimates.
    """
    ests = rec.estimates.get(source)
    if ests is None:
        raise KeyError(f"record has no {source!r} estimates")
    attr = {"range": "range", "velocity": "velocity", "omega": "omega", "theta": "theta"}[kind]
    ev = np.array([getattr(x, attr) for x in ests], dtype=float)
    tv = np.array([truth_value(t, source, kind) for t in rec.truths], dtype=float)
    # associate on range so every kind uses the same target labels
    er = np.array([x.range for x in ests], dtype=float)
    tr = np.array([truth_value(t, source, "range") for t in rec.truths], dtype=float)
    pairs = associate(er, tr) if np.isfinite(er).any() else associate(ev, tv)
    out_e = np.full(len(tv), np.nan)
    for i, j in pairs:
        out_e[j] = ev[i]
    return out_e, tv


def record_nmse(rec: TrialRecord, source: str, kind: str) -> float:
    e, t = record_pairs(rec, source, kind)
    if not np.isfinite(e).all():
        return NAN
    return nmse(e, t, kind)


def record_sq_errors(rec: TrialRecord, source: str, kind: str) -> np.ndarray:
    e, t = record_pairs(rec, source, kind)
    return (e - t) ** 2


def mse_direct_term(measured, ideal, normalize: bool = False) -> float:
    """Mean squared complex deviation; optionally divided by the ideal's mean power."""
    m = np.asarray(measured)
    i = np.asarray(ideal)
    mse = float(np.mean(np.abs(m - i) ** 2))
    if normalize:
        p = float(np.mean(np.abs(i) ** 2))
        return mse / p if p > 0 else NAN
    return mse


def ideal_direct_term(truths: Sequence[TruthParams], config: SceneConfig, offsets: Optional[OffsetTrack] = None,
                      symbol: int = 0) -> np.ndarray:
    """Antenna-summed direct part of the range correlation at one symbol.

    Built from clean single-target active and passive responses, so it
    holds only same-target products: N_t * sum_l alpha1 conj(alpha2)
    exp(j 2pi n df (dtau_l + dtau(m))) up to the symbol's Doppler and CFO
    phases.
    """
    out = np.zeros(config.n_subcarriers, dtype=complex)
    m = np.array([symbol])
    to = None if offsets is None else offsets.to[m]
    ph = None if offsets is None else offsets.cfo_phase(config.symbol_period)[m]
    for t in truths:
        a = channel_grid(config, [t.alpha_active], [t.omega], [t.tau1], [t.fd1], m)[:, :, 0]
        p = channel_grid(config, [t.alpha_passive], [t.omega], [t.tau2], [t.fd2], m, to, ph)[:, :, 0]
        out += (np.conj(p) * a).sum(axis=0)
    return out


def crlb_reference(config: SceneConfig, snr: float, db: bool = False) -> tuple[float, float]:
    """Reference standard deviations ΔR/sqrt(2 SNR) and ΔV/sqrt(2 SNR)."""
    s = 10 ** (snr / 10) if db else float(snr)
    if not s > 0:
        raise ValueError("SNR must be positive on the linear scale")
    dR, dV = resolutions(config)
    if math.isinf(s):
        return 0.0, 0.0
    return dR / math.sqrt(2 * s), dV / math.sqrt(2 * s)


@dataclass
class RocCurve:
    pfa: np.ndarray
    pd: np.ndarray
    thresholds: np.ndarray
    n_h0: int
    n_h1: int


def roc(h0, h1, pfa_grid, min_trials: int = 1000) -> RocCurve:
    """Neyman-Pearson ROC from empirical detector statistics.

    The threshold for each PFA is the empirical (1 - PFA) quantile of the
    noise-only statistics; PD is the fraction of signal trials above it.
    """
    h0 = np.sort(np.asarray(h0, dtype=float))
    h1 = np.asarray(h1, dtype=float)
    pfa = np.sort(np.asarray(pfa_grid, dtype=float))
    if np.any((pfa <= 0) | (pfa >= 1)):
        raise ValueError("PFA values must lie in (0, 1)")
    need = max(min_trials, int(math.ceil(10 / pfa.min())))
    if len(h0) < need or len(h1) < min_trials:
        raise ValueError(f"insufficient trials: need at least {need} noise-only and "
                         f"{min_trials} signal trials, got {len(h0)} and {len(h1)}")
    n0 = len(h0)
    thr = np.empty(len(pfa))
    pd = np.empty(len(pfa))
    for i, p in enumerate(pfa):
        # smallest threshold whose empirical false-alarm rate does not exceed p
        k = int(math.floor(p * n0))
        thr[i] = h0[n0 - 1 - k] if k < n0 else -np.inf
        pd[i] = float(np.mean(h1 > thr[i]))
    return RocCurve(pfa, pd, thr, n0, len(h1))


def bootstrap_fraction(samples: dict, predicate: Callable[[dict], bool], n_boot: int = 1000,
                       rng: Optional[np.random.Generator] = None) -> float:
    """Fraction of paired bootstrap resamples on which ``predicate`` holds.

    ``samples`` maps names to equal-length arrays indexed by trial; each
    resample draws trial indices with replacement and applies them to every
    array, so paired structure is kept.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    arrays = {k: np.asarray(v) for k, v in samples.items()}
    n = len(next(iter(arrays.values())))
    hits = 0
    for _ in range(n_boot):
        idx = rng.integers(0, n, n)
        if predicate({k: v[idx] for k, v in arrays.items()}):
            hits += 1
    return hits / n_boot

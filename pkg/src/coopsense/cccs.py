"""Cross-correlation cooperative sensing.

The conjugate product of passive and active steering vectors cancels the
target phase common to both and leaves, for every target, a tone at the
common offset plus the geometric deviation (Δτ+δτ on the range axis,
Δf_D+δf on the Doppler axis).  With several targets the product also
contains cross terms between different targets; those rotate across the
array while the direct terms do not, which is what ``extract_offsets``
exploits.  ``match`` then pairs every offset with one active and one
passive peak.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import axes
from .axes import DOPPLER, RANGE
from .peaks import fit_amplitudes, parabolic_offset, pick_peaks, refine_tones
from .scenario import SceneConfig


class NoStableOffsetError(RuntimeError):
    pass


@dataclass
class CorrelationVector:
    """Per-antenna correlation vectors, shape (n_antennas, length[, n_symbols])."""

    rho: np.ndarray
    axis: str = RANGE

    def __post_init__(self):
        axes.check_axis(self.axis)
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.ndim == 1:
            self.rho = self.rho[None, :]

    @property
    def length(self) -> int:
        return self.rho.shape[1]


@dataclass(frozen=True)
class PeakEntry:
    bin: int
    value: float
    refined_offset: float
    freq: float = 0.0
    amplitude: complex = 0j
    variation: float = 0.0


@dataclass
class PeakSet:
    entries: list
    axis: str
    origin: str
    flags: set = field(default_factory=set)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def offsets(self) -> np.ndarray:
        return np.array([e.refined_offset for e in self.entries])

    def freqs(self) -> np.ndarray:
        return np.array([e.freq for e in self.entries])

    def amplitudes(self) -> np.ndarray:
        return np.array([e.amplitude for e in self.entries])

    def sorted(self) -> "PeakSet":
        ent = sorted(self.entries, key=lambda e: -abs(e.value))
        return PeakSet(ent, self.axis, self.origin, set(self.flags))


@dataclass(frozen=True)
class Triple:
    i: int  # index into P_m
    j: int  # index into P_g
    k: int  # index into P_b
    active: float
    offset: float
    passive: float
    residual: float


@dataclass
class MatchedSet:
    triples: list
    axis: str = RANGE
    unmatched: dict = field(default_factory=dict)
    flags: set = field(default_factory=set)

    def by_active(self) -> dict:
        return {t.i: t for t in self.triples}


# ---------------------------------------------------------------------------


def cross_correlate(k1, k2, axis: str = RANGE) -> CorrelationVector:
    """Element-wise conj(passive) * active, per antenna.

    ``k1``/``k2`` are SteerVectors or plain arrays of equal shape.
    """
    a = _vec(k1, axis)
    b = _vec(k2, axis)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return CorrelationVector(np.conj(b) * a, axis)


def _vec(k, axis):
    if hasattr(k, "k_R"):
        return np.asarray(k.k_R if axis == RANGE else k.k_D)
    return np.asarray(k)


def antenna_vector_sum(cv: CorrelationVector) -> CorrelationVector:
    return CorrelationVector(cv.rho.sum(axis=0, keepdims=True), cv.axis)


def cross_term_gain(delta_omega, n_antennas: int) -> float:
    """|sum_k exp(j k dOmega)|: the array gain a cross term receives in the antenna sum."""
    k = np.arange(n_antennas)
    return float(np.abs(np.exp(1j * k * delta_omega).sum()))


def _spectrum(x, n_fft):
    return np.fft.fft(x, n_fft, axis=0)


def extract_offsets(cv: CorrelationVector, config: SceneConfig, n_targets: int,
                    eps1: Optional[float] = None, relax: bool = True, ref_col: int = 0,
                    n_iter: int = 3) -> PeakSet:
    """Direct-term offsets from per-antenna correlation vectors.

    Candidates are the ``n_targets**2`` strongest peaks of the antenna-summed power
    spectrum, refined jointly.  A candidate is kept only while its
    per-antenna real part stays within ``eps1`` (relative to the largest
    reference real part) of its value at antenna 0, for every antenna.

    ``cv.rho`` may carry a trailing symbol axis; the candidate search then
    integrates spectra non-coherently over symbols while the stability test
    uses column ``ref_col``.

    Flags: ``ambiguous`` when more than ``n_targets`` survive, ``relaxed``
    when fewer survive and the set is filled with the least-varying
    remaining candidates.  With ``relax=False`` an empty survivor set
    raises NoStableOffsetError.
    """
    eps1 = config.eps1 if eps1 is None else eps1
    axis = cv.axis
    n_fft = axes.transform_length(config, axis)
    rho = cv.rho
    n = rho.shape[1]
    pad = max(n_fft // n, 1)
    summed = rho.sum(axis=0)
    multi = summed.ndim == 2
    # candidates come from the per-antenna power spectra: cross terms partly
    # cancel in the antenna sum and would otherwise hide behind sidelobes
    if multi:
        mag = np.sqrt((np.abs(np.fft.fft(rho, n_fft, axis=1)) ** 2).sum(axis=(0, 2)))
        ref_rho = rho[:, :, ref_col]
    else:
        mag = np.sqrt((np.abs(np.fft.fft(rho, n_fft, axis=1)) ** 2).sum(axis=0))
        ref_rho = rho
    ref_sum = ref_rho.sum(axis=0)
    cand = pick_peaks(mag, n_targets ** 2, min_separation=pad)
    if not cand:
        raise NoStableOffsetError("no offset peaks in correlation spectrum")
    freqs0 = np.array([(c + parabolic_offset(mag, c)) / n_fft for c in cand])
    if multi or n_iter == 0:
        freqs = freqs0
    else:
        freqs, _ = refine_tones(ref_rho, freqs0, pad, n_iter=n_iter)
    amps = fit_amplitudes(ref_rho, freqs) * n  # (n_antennas, C), DFT-value scale
    re = amps.real
    scale = np.max(np.abs(re[0])) if re.size else 1.0
    scale = scale if scale > 0 else 1.0
    alive = np.ones(len(freqs), dtype=bool)
    variation = np.zeros(len(freqs))
    for k in range(1, amps.shape[0]):
        change = np.abs(re[0] - re[k]) / scale
        variation = np.maximum(variation, change)
        alive &= change < eps1
    spread = np.std(amps, axis=0) / np.maximum(np.abs(amps.mean(axis=0)), 1e-300)
    strength = np.abs(amps.mean(axis=0))
    flags = set()
    idx = list(np.flatnonzero(alive))
    if len(idx) > n_targets:
        flags.add("ambiguous")
        idx = sorted(idx, key=lambda c: -strength[c])[:n_targets]
    elif len(idx) < n_targets:
        if not idx and not relax:
            raise NoStableOffsetError("no stable offset peaks")
        flags.add("relaxed")
        if not idx:
            flags.add("no_stable")
        rest = [c for c in np.argsort(spread, kind="stable") if c not in idx]
        idx = idx + rest[: n_targets - len(idx)]
    summed_spec = _spectrum(ref_sum, n_fft)
    entries = []
    for c in idx:
        b = int(round(freqs[c] * n_fft)) % n_fft
        entries.append(PeakEntry(
            bin=b,
            value=float(summed_spec[b].real),
            refined_offset=float(axes.from_freq(freqs[c], config, axis, "offset")),
            freq=float(freqs[c]),
            amplitude=complex(amps[:, c].mean() / n),
            variation=float(variation[c]),
        ))
    return PeakSet(entries, axis, "P_g", flags).sorted()


def extract_doppler_offsets(cv: CorrelationVector, config: SceneConfig, n_targets: int = 1, **kw) -> PeakSet:
    if cv.axis != DOPPLER:
        raise ValueError("expected a Doppler-axis correlation vector")
    return extract_offsets(cv, config, n_targets, **kw)


def steer_peaks(vec, config: SceneConfig, axis: str, n_targets: int, origin: str,
                n_iter: int = 3, floor_ratio: float = 0.0) -> PeakSet:
    """The strongest tones of a single steering vector (P_m or P_b), jointly refined.

    ``refined_offset`` holds the physical delay (s) or Doppler shift (Hz);
    ``amplitude`` is the least-squares tone amplitude.
    """
    vec = np.asarray(vec, dtype=complex)
    n = len(vec)
    n_fft = axes.transform_length(config, axis)
    pad = max(n_fft // n, 1)
    spec = np.fft.fft(vec, n_fft)
    mag = np.abs(spec)
    floor = floor_ratio * float(np.median(mag))
    cand = pick_peaks(mag, n_targets, min_separation=pad, floor=floor)
    flags = set()
    if len(cand) < n_targets:
        flags.add("partial")
    freqs0 = np.array([(c + parabolic_offset(mag, c)) / n_fft for c in cand])
    freqs, amps = refine_tones(vec, freqs0, pad, n_iter=n_iter) if len(cand) else (freqs0, np.zeros(0, complex))
    entries = []
    for f, a in zip(freqs, amps):
        b = int(round(f * n_fft)) % n_fft
        # range profiles are inverse transforms, so report the inverse-transform bin
        shown = (-b) % n_fft if axis == RANGE else b
        entries.append(PeakEntry(shown, float(spec[b].real), float(axes.from_freq(f, config, axis, "steer")),
                                 float(f), complex(a)))
    return PeakSet(entries, axis, origin, flags).sorted()


def _wrap(x, w):
    return (x + w / 2) % w - w / 2


def match(P_m: PeakSet, P_b: PeakSet, P_g: PeakSet, eps2: float, config: Optional[SceneConfig] = None,
          span: Optional[float] = None) -> MatchedSet:
    """Pair active, offset and passive peaks with |active + offset - passive| <= tolerance.

    The tolerance is ``eps2 * span`` where ``span`` defaults to the
    unambiguous window of the axis (1/Δf or 1/T); pass ``span=1`` to use
    ``eps2`` in physical units directly.  All index combinations are
    searched and resolved greedily by ascending residual, one-to-one.
    """
    axis = P_m.axis
    if span is None:
        if config is None:
            raise ValueError("either config or span is required")
        span = axes.window(config, axis)
    w = axes.window(config, axis) if config is not None else np.inf
    tol = eps2 * span
    cands = []
    for i, j, k in itertools.product(range(len(P_m)), range(len(P_g)), range(len(P_b))):
        a, o, p = P_m.entries[i].refined_offset, P_g.entries[j].refined_offset, P_b.entries[k].refined_offset
        r = a + o - p
        if np.isfinite(w):
            r = _wrap(r, w)
        if abs(r) <= tol:
            cands.append((abs(r), i, j, k, a, o, p))
    cands.sort()
    flags = set()
    counts_i = {}
    for c in cands:
        counts_i[c[1]] = counts_i.get(c[1], 0) + 1
    if any(v > 1 for v in counts_i.values()):
        flags.add("ambiguous")
    used_i, used_j, used_k = set(), set(), set()
    triples = []
    for r, i, j, k, a, o, p in cands:
        if i in used_i or j in used_j or k in used_k:
            continue
        used_i.add(i)
        used_j.add(j)
        used_k.add(k)
        triples.append(Triple(i, j, k, a, o, p, r))
    unmatched = {
        "P_m": [i for i in range(len(P_m)) if i not in used_i],
        "P_g": [j for j in range(len(P_g)) if j not in used_j],
        "P_b": [k for k in range(len(P_b)) if k not in used_k],
    }
    if any(unmatched.values()):
        flags.add("unmatched")
    return MatchedSet(sorted(triples, key=lambda t: t.i), axis, unmatched, flags)


def match_doppler(P_m: PeakSet, P_b: PeakSet, P_g: PeakSet, eps2: float, config: SceneConfig) -> MatchedSet:
    if P_m.axis != DOPPLER:
        raise ValueError("expected Doppler-axis peak sets")
    return match(P_m, P_b, P_g, eps2, config)


def compensate(vec, offset: float, config: SceneConfig, axis: str = RANGE) -> np.ndarray:
    """Move a passive steering vector by ``-offset`` so it lines up with the active one.

    Works on 1-D vectors or arrays whose last axis is the sample axis.
    """
    vec = np.asarray(vec, dtype=complex)
    r = axes.ramp(-offset, vec.shape[-1], config, axis, "steer")
    return vec * r


def dump_peaks(path, peaksets, matched: Optional[MatchedSet] = None) -> None:
    """CSV debug dump with columns axis, origin, bin, value, refined_offset."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "origin", "bin", "value", "refined_offset"])
        for ps in peaksets:
            for e in ps.entries:
                w.writerow([ps.axis, ps.origin, e.bin, repr(e.value), repr(e.refined_offset)])
        if matched is not None:
            tag = "C_R" if matched.axis == RANGE else "C_D"
            for t in matched.triples:
                w.writerow([matched.axis, tag, t.i, repr(t.residual), repr(t.offset)])

"""Delay and Doppler profiles, active/passive fusion and parameter readout."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .axes import DOPPLER, RANGE
from .peaks import parabolic_offset, pick_peaks
from .scenario import C, SceneConfig


@dataclass
class Profile:
    """Magnitude profile on a zero-padded transform grid.

    ``spectrum`` keeps the complex transform when available so profiles can
    be fused coherently.  ``scale`` converts a bin index to seconds (range)
    or Hz (Doppler); Doppler bins above half the length are negative.
    """

    values: np.ndarray
    axis: str
    scale: float
    spectrum: Optional[np.ndarray] = None
    source: str = "active"
    pad: int = 1
    aligned: Optional[bool] = None

    def __len__(self):
        return len(self.values)

    def physical(self, bins):
        b = np.asarray(bins, dtype=float)
        if self.axis == DOPPLER:
            n = len(self.values)
            b = np.where(b >= n / 2, b - n, b)
        return b * self.scale

    def coordinates(self):
        return self.physical(np.arange(len(self.values)))


def range_profile(k_R, n_points: int, config: Optional[SceneConfig] = None, source: str = "active") -> Profile:
    """|IDFT| of the range steering vector, zero padded to ``n_points``.

    A target at delay tau peaks at bin ``df * n_points * tau``.
    """
    k_R = np.asarray(k_R)
    if n_points < len(k_R):
        raise ValueError("transform length below vector length")
    spec = np.fft.ifft(k_R, n_points)
    df = config.subcarrier_spacing if config is not None else 1.0
    return Profile(np.abs(spec), RANGE, 1.0 / (df * n_points), spec, source, n_points // len(k_R))


def doppler_profile(k_D, n_points: int, config: Optional[SceneConfig] = None, source: str = "active") -> Profile:
    """|DFT| of the Doppler steering vector; peak at ``T * n_points * fD``."""
    k_D = np.asarray(k_D)
    if n_points < len(k_D):
        raise ValueError("transform length below vector length")
    spec = np.fft.fft(k_D, n_points)
    T = config.symbol_period if config is not None else 1.0
    return Profile(np.abs(spec), DOPPLER, 1.0 / (T * n_points), spec, source, n_points // len(k_D))


def profile_for(vec, config: SceneConfig, axis: str, source: str = "active") -> Profile:
    if axis == RANGE:
        return range_profile(vec, config.idft_points, config, source)
    return doppler_profile(vec, config.dft_points, config, source)


def fuse(active: Profile, passive: Profile, weights=(1.0, 1.0), mode: str = "coherent",
         align: bool = True) -> Profile:
    """Combine an active profile with an offset-compensated passive profile.

    Coherent mode adds the complex transforms after rotating the passive one
    so both agree in phase at the active peak (the target phases of the two
    paths are unrelated).  Noncoherent mode adds magnitudes.  ``aligned`` on
    the result records whether the two peaks fall within one resolution
    cell of each other.
    """
    if len(active) != len(passive):
        raise ValueError("profiles differ in length")
    w1, w2 = weights
    ia = int(np.argmax(active.values))
    ip = int(np.argmax(passive.values))
    n = len(active)
    d = abs(ia - ip)
    aligned = min(d, n - d) <= max(active.pad, 1)
    if mode == "coherent":
        if active.spectrum is None or passive.spectrum is None:
            raise ValueError("coherent fusion needs complex spectra")
        p = passive.spectrum
        if align and abs(p[ia]) > 0 and abs(active.spectrum[ia]) > 0:
            p = p * np.exp(1j * (np.angle(active.spectrum[ia]) - np.angle(p[ia])))
        spec = w1 * active.spectrum + w2 * p
        vals = np.abs(spec)
    elif mode == "noncoherent":
        spec = None
        vals = w1 * active.values + w2 * passive.values
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    return Profile(vals, active.axis, active.scale, spec, "fused", active.pad, aligned)


@dataclass(frozen=True)
class Estimate:
    value: float  # m for range, m/s for velocity
    amplitude: float
    bin: float  # interpolated bin
    axis: str
    source: str


@dataclass
class EstimateSet:
    entries: list
    axis: str
    source: str
    requested: int
    flags: set = field(default_factory=set)

    @property
    def found(self) -> int:
        return len(self.entries)

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries])


def to_physical(x, axis: str, source: str, config: SceneConfig):
    """Delay/Doppler to range/velocity.

    Active, compensated and fused estimates live in monostatic coordinates
    (R = c tau / 2, V = c fD / (2 f_c1)); raw passive estimates are the
    bistatic sum R1+R2 = c tau and the bistatic velocity v1-v2 = c fD / f_c2.
    """
    x = np.asarray(x, dtype=float)
    if axis == RANGE:
        return C * x if source == "passive" else C * x / 2
    if source == "passive":
        return C * x / config.carrier_passive
    return C * x / (2 * config.carrier_active)


def read_estimates(profile: Profile, L: int, config: SceneConfig, floor_ratio: float = 3.0) -> EstimateSet:
    """Top-L parabolically interpolated peaks converted to physical units.

    Peaks below ``floor_ratio`` times the profile median are treated as
    noise; fewer than ``L`` entries are then returned and the set is
    flagged ``partial``.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    mag = profile.values
    floor = floor_ratio * float(np.median(mag))
    idx = pick_peaks(mag, L, min_separation=max(profile.pad, 1), floor=floor)
    out = []
    for i in idx:
        b = i + parabolic_offset(mag, i)
        x = float(profile.physical(b))
        out.append(Estimate(float(to_physical(x, profile.axis, profile.source, config)),
                            float(mag[i]), float(b), profile.axis, profile.source))
    es = EstimateSet(out, profile.axis, profile.source, L)
    if len(out) < L:
        es.flags.add("partial")
    return es


def export_profile(profile: Profile, path) -> None:
    """Two-column CSV: physical coordinate (s or Hz), magnitude."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_s" if profile.axis == RANGE else "doppler_hz", "magnitude"])
        for x, v in zip(profile.coordinates(), profile.values):
            w.writerow([repr(float(x)), repr(float(v))])

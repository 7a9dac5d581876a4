"""Two-stage angle-of-arrival estimation.

Stage one turns the monostatic range R1 and the bistatic range R1+R2 into
an angle with the law of cosines.  Stage two evaluates the zero-padded
spatial DFT of length K = N_t * N_f, but only on the bins within +-window
of the coarse spatial frequency, and reads the angle from the strongest
of those bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .scenario import SceneConfig


class MultiplyCounter:
    """Counts complex multiplies performed by the spatial transforms."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


def coarse_aoa(R1: float, R2: float, baseline: float, config: SceneConfig, tol: float = 0.05,
               return_flag: bool = False):
    """Angle at SBS1 between the baseline and the target from the triangle sides.

    A cosine argument outside [-1, 1] by more than ``tol`` raises
    ValueError; smaller excursions are clamped (and flagged when
    ``return_flag`` is set).
    """
    if R1 <= 0 or baseline <= 0:
        raise ValueError("inconsistent ranging inputs: non-positive range")
    c = (R1 ** 2 + baseline ** 2 - R2 ** 2) / (2 * baseline * R1)
    clamped = False
    if abs(c) > 1:
        if abs(c) > 1 + tol:
            raise ValueError("inconsistent ranging inputs: cosine argument %.4f" % c)
        c = float(np.clip(c, -1.0, 1.0))
        clamped = True
    theta = math.acos(c)
    omega = 2 * math.pi * config.element_spacing * math.cos(theta) / config.wavelength
    if return_flag:
        return theta, omega, clamped
    return theta, omega


def _dft_direct(x, bins, K, counter):
    x = np.asarray(x, dtype=complex)
    k = np.arange(len(x))
    # reduce k*i modulo K before scaling so large indices keep full precision
    phase = np.outer(np.asarray(bins) % K, k) % K
    out = np.exp(-2j * np.pi * phase / K) @ x
    if counter is not None:
        counter.add(len(bins) * len(x))
    return out


def full_spatial_spectrum(snapshot, n_f: int, counter: Optional[MultiplyCounter] = None) -> np.ndarray:
    """All K = N_t * N_f bins of the zero-padded spatial DFT (direct evaluation)."""
    snapshot = np.asarray(snapshot)
    K = len(snapshot) * n_f
    return _dft_direct(snapshot, np.arange(K), K, counter)


@dataclass
class WindowSpectrum:
    values: np.ndarray
    indices: np.ndarray  # wrapped bin indices in [0, K)
    i_s: int
    i_e: int
    K: int


def window_bounds(omega_c: float, omega: float, K: int) -> tuple[int, int]:
    i_s = math.floor(K * (omega_c - omega) / (2 * math.pi))
    i_e = math.floor(K * (omega_c + omega) / (2 * math.pi))
    if i_e - i_s + 1 > K:
        i_e = i_s + K - 1
    return i_s, i_e


def restricted_spatial_spectrum(snapshot, omega_c: float, omega: float, n_f: int,
                                counter: Optional[MultiplyCounter] = None) -> WindowSpectrum:
    """Spatial DFT evaluated only on bins floor(K(Omega_c -+ Omega)/2pi), wrapped modulo K."""
    snapshot = np.asarray(snapshot)
    K = len(snapshot) * n_f
    if omega <= 0 or omega * K / (2 * math.pi) < 1:
        raise ValueError("empty spatial window: half-width below one bin")
    i_s, i_e = window_bounds(omega_c, omega, K)
    idx = np.arange(i_s, i_e + 1) % K
    return WindowSpectrum(_dft_direct(snapshot, idx, K, counter), idx, i_s, i_e, K)


@dataclass
class AoaEstimate:
    theta_c: float
    omega_c: float
    theta_lo: float
    theta_hi: float
    omega_lo: float
    omega_hi: float
    peak_index: int
    window: tuple
    flags: set = field(default_factory=set)

    @property
    def omega(self) -> float:
        return 0.5 * (self.omega_lo + self.omega_hi)

    @property
    def theta(self) -> float:
        return 0.5 * (self.theta_lo + self.theta_hi)

    def contains(self, theta: float) -> bool:
        return self.theta_lo <= theta < self.theta_hi


def _theta_of(omega, config):
    arg = omega * config.wavelength / (2 * math.pi * config.element_spacing)
    return math.acos(float(np.clip(arg, -1.0, 1.0)))


def fine_aoa(spectrum: WindowSpectrum, config: SceneConfig, omega_c: float = float("nan"),
             theta_c: float = float("nan"), reference: float = float("nan")) -> AoaEstimate:
    """Angle interval from the strongest bin of a restricted spectrum.

    The strongest bin is the nearest grid point to the true spatial
    frequency, so the interval is the bin's cell
    [(i - 1/2), (i + 1/2)) * 2 pi / K, mapped to angle through acos.

    The window is flagged ``window_miss`` when its peak sits on an edge or,
    given ``reference`` (the sum of element magnitudes, which a main lobe
    nearly reaches), when the peak is below half of it and so can only be
    a sidelobe.
    """
    if len(spectrum.values) == 0:
        raise ValueError("empty spectrum window")
    mag = np.abs(spectrum.values)
    j = int(np.argmax(mag))
    K = spectrum.K
    i_lin = spectrum.i_s + j  # unwrapped index, continuous across the window
    flags = set()
    if 1 < len(mag) < K and (j == 0 or j == len(mag) - 1):
        flags.add("window_miss")
    if len(mag) < K and mag[j] < 0.5 * reference:
        flags.add("window_miss")
    w = 2 * math.pi / K
    o_lo, o_hi = (i_lin - 0.5) * w, (i_lin + 0.5) * w
    # bring the cell centre into (-pi, pi]
    shift = 2 * math.pi * math.floor((i_lin * w + math.pi) / (2 * math.pi))
    o_lo, o_hi = o_lo - shift, o_hi - shift
    th_a, th_b = _theta_of(o_hi, config), _theta_of(o_lo, config)
    return AoaEstimate(theta_c, omega_c, min(th_a, th_b), max(th_a, th_b), o_lo, o_hi,
                       int(spectrum.indices[j]), (spectrum.i_s, spectrum.i_e), flags)


def estimate_aoa(snapshot, R1: float, R2: float, config: SceneConfig,
                 counter: Optional[MultiplyCounter] = None) -> AoaEstimate:
    """Coarse angle from ranges, then the restricted spatial transform around it."""
    theta_c, omega_c, clamped = coarse_aoa(R1, R2, config.baseline, config, return_flag=True)
    spec = restricted_spatial_spectrum(snapshot, omega_c, config.aoa_window, config.frft_index, counter)
    est = fine_aoa(spec, config, omega_c, theta_c, float(np.abs(snapshot).sum()))
    if clamped:
        est.flags.add("coarse_clamped")
    return est


def full_aoa(snapshot, config: SceneConfig, counter: Optional[MultiplyCounter] = None) -> AoaEstimate:
    """Angle from the full spatial transform, with no coarse stage."""
    snapshot = np.asarray(snapshot)
    K = len(snapshot) * config.frft_index
    vals = full_spatial_spectrum(snapshot, config.frft_index, counter)
    spec = WindowSpectrum(vals, np.arange(K), 0, K - 1, K)
    est = fine_aoa(spec, config)
    est.flags.discard("window_miss")
    return est

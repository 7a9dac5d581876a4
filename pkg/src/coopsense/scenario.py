"""Scene configuration, two-station geometry and ground-truth parameters.

SBS1 (the cooperative receiver) sits at ``config.sbs1_position`` and SBS2
(the passive-path transmitter) at ``sbs1_position + (baseline, 0)``.  The
uniform linear array of SBS1 lies along the baseline, so the angle of
arrival of a target is the angle between the SBS1->SBS2 axis and the
SBS1->target direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np

C = 3e8  # propagation speed used throughout (m/s)


@dataclass(frozen=True)
class SceneConfig:
    """OFDM numerology, array geometry, station geometry and processing knobs.

    Defaults reproduce the standard simulation setting (N=256 symbols of
    1024 subcarriers at 120 kHz, 8 antennas, 10x zero padding).
    ``element_spacing`` and ``wavelength`` default to half a wavelength of
    the active carrier.
    """

    n_subcarriers: int = 1024
    n_symbols: int = 256
    subcarrier_spacing: float = 120e3
    symbol_period: float = 10.38e-6
    carrier_active: float = 4.0e9
    carrier_passive: float = 4.2e9
    bandwidth: float = 123e6
    n_antennas: int = 8
    element_spacing: Optional[float] = None
    wavelength: Optional[float] = None
    baseline: float = 200.0
    idft_points: int = 10240
    dft_points: int = 2560
    frft_index: int = 10
    aoa_window: float = math.pi / 3
    eps1: float = 0.01
    eps2: float = 0.01
    snr_active: float = 0.0
    snr_passive: float = 0.0
    seed: int = 0
    # processing knobs (not part of the physical scene)
    ref_symbol: int = 0
    ref_subcarrier: int = 0
    fusion: str = "coherent"
    fd_leakage_db: float = -math.inf
    offset_symbols: int = 1
    random_phases: bool = True
    aoa_gating: bool = True
    sbs1_position: tuple = (0.0, 0.0)

    def __post_init__(self):
        lam = self.wavelength if self.wavelength is not None else C / self.carrier_active
        object.__setattr__(self, "wavelength", float(lam))
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", lam / 2)
        object.__setattr__(self, "sbs1_position", tuple(float(v) for v in self.sbs1_position))

    @property
    def sbs1(self) -> np.ndarray:
        return np.asarray(self.sbs1_position, dtype=float)

    @property
    def sbs2(self) -> np.ndarray:
        return self.sbs1 + np.array([self.baseline, 0.0])

    @property
    def max_delay(self) -> float:
        """Unambiguous delay window 1/Δf."""
        return 1.0 / self.subcarrier_spacing

    def with_updates(self, **kw) -> "SceneConfig":
        return replace(self, **kw)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class Target:
    position: tuple
    velocity: tuple = (0.0, 0.0)
    alpha_active: complex = 1.0 + 0j
    alpha_passive: complex = 1.0 + 0j

    @classmethod
    def from_polar(cls, range_m, angle_deg, radial_velocity=0.0, origin=(0.0, 0.0),
                   alpha_active=1.0 + 0j, alpha_passive=1.0 + 0j):
        """Place a target at ``range_m`` from SBS1 at ``angle_deg`` from the baseline.

        The velocity vector points away from SBS1 with magnitude
        ``radial_velocity``, so the monostatic radial speed equals it.
        """
        th = math.radians(angle_deg)
        u = np.array([math.cos(th), math.sin(th)])
        pos = np.asarray(origin, dtype=float) + range_m * u
        vel = radial_velocity * u
        return cls(tuple(pos), tuple(vel), complex(alpha_active), complex(alpha_passive))


@dataclass(frozen=True)
class TruthParams:
    R1: float
    R2: float
    v1: float
    v2: float
    theta: float
    omega: float
    tau1: float
    tau2: float
    fd1: float
    fd2: float
    alpha_active: complex = 1.0 + 0j
    alpha_passive: complex = 1.0 + 0j
    # the alternative expansion (v1 + v2) f_c2 / c - 2 v1 f_c1 / c, kept for debug output only
    delta_fd_alt: float = field(default=0.0, compare=False)

    @property
    def delta_tau(self) -> float:
        return self.tau2 - self.tau1

    @property
    def delta_fd(self) -> float:
        return self.fd2 - self.fd1

    @property
    def bistatic_range(self) -> float:
        return self.R1 + self.R2

    @property
    def bistatic_velocity(self) -> float:
        return self.v1 - self.v2


def derive_truth(config: SceneConfig, target: Target) -> TruthParams:
    """Geometric ground truth for one target.

    Raises ValueError when the target coincides with a station or lies on
    the baseline axis (the angle of arrival would be 0 or pi).
    """
    p = np.asarray(target.position, dtype=float)
    v = np.asarray(target.velocity, dtype=float)
    s1, s2 = config.sbs1, config.sbs2
    d1 = p - s1
    d2 = s2 - p
    R1 = float(np.hypot(*d1))
    R2 = float(np.hypot(*d2))
    scale = max(config.baseline, 1.0)
    if R1 <= 1e-9 * scale or R2 <= 1e-9 * scale:
        raise ValueError("degenerate geometry: target coincides with a station")
    if abs(d1[1]) <= 1e-12 * scale:
        raise ValueError("degenerate geometry: target collinear with the baseline")
    u1 = d1 / R1
    u2 = d2 / R2
    v1 = float(v @ u1)
    v2 = float(v @ u2)
    theta = float(math.acos(np.clip(u1[0], -1.0, 1.0)))
    omega = 2 * math.pi * config.element_spacing * math.cos(theta) / config.wavelength
    fd1 = 2 * v1 * config.carrier_active / C
    fd2 = (v1 - v2) * config.carrier_passive / C
    alt = (v1 + v2) * config.carrier_passive / C - fd1
    return TruthParams(
        R1=R1, R2=R2, v1=v1, v2=v2, theta=theta, omega=omega,
        tau1=2 * R1 / C, tau2=(R1 + R2) / C, fd1=fd1, fd2=fd2,
        alpha_active=complex(target.alpha_active),
        alpha_passive=complex(target.alpha_passive),
        delta_fd_alt=alt,
    )


def resolutions(config: SceneConfig) -> tuple[float, float]:
    """Range and velocity resolution: c/(2B) and c/(2 T M f_c2)."""
    dR = C / (2 * config.bandwidth)
    dV = C / (2 * config.symbol_period * config.n_symbols * config.carrier_passive)
    return dR, dV


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.violations)


def validate_config(config: SceneConfig) -> ValidationReport:
    rep = ValidationReport()
    add = rep.violations.append
    counts = dict(n_subcarriers=config.n_subcarriers, n_symbols=config.n_symbols,
                  n_antennas=config.n_antennas, idft_points=config.idft_points,
                  dft_points=config.dft_points, frft_index=config.frft_index)
    for name, val in counts.items():
        if int(val) != val or val < 1:
            add(f"{name} must be a positive integer")
    if config.idft_points < config.n_subcarriers:
        add("idft_points below subcarrier count")
    if config.dft_points < config.n_symbols:
        add("dft_points below symbol count")
    for name in ("subcarrier_spacing", "symbol_period", "carrier_active",
                 "carrier_passive", "bandwidth", "wavelength", "element_spacing", "baseline"):
        val = getattr(config, name)
        if not (np.isfinite(val) and val > 0):
            add(f"{name} must be positive")
    if config.carrier_active == config.carrier_passive:
        add("carriers must differ for frequency-division separation")
    if config.element_spacing > config.wavelength / 2 * (1 + 1e-12):
        add("ambiguous array spacing")
    if not (0 < config.aoa_window <= math.pi):
        add("aoa_window must lie in (0, pi]")
    for name in ("eps1", "eps2"):
        if not getattr(config, name) > 0:
            add(f"{name} must be positive")
    if not 0 <= config.ref_symbol < max(config.n_symbols, 1):
        add("ref_symbol outside the symbol range")
    if not 0 <= config.ref_subcarrier < max(config.n_subcarriers, 1):
        add("ref_subcarrier outside the subcarrier range")
    if config.fusion not in ("coherent", "noncoherent"):
        add("fusion must be 'coherent' or 'noncoherent'")
    if config.offset_symbols < 1 or config.offset_symbols > config.n_symbols:
        add("offset_symbols must lie in [1, n_symbols]")
    if config.fd_leakage_db > 0:
        add("fd_leakage_db must not exceed 0 dB")
    return rep


def table_targets(origin=(0.0, 0.0)) -> list[Target]:
    """The three-target reference scene (70/100/130 m, 25/30/35 deg, 15/25/35 m/s)."""
    return [
        Target.from_polar(r, a, v, origin=origin)
        for r, a, v in zip((70.0, 100.0, 130.0), (25.0, 30.0, 35.0), (15.0, 25.0, 35.0))
    ]


def derive_all(config: SceneConfig, targets: Sequence[Target]) -> list[TruthParams]:
    return [derive_truth(config, t) for t in targets]

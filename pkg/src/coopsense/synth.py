"""Symbol-grid synthesis: QPSK payloads, active/passive channels, offsets, noise.

Everything is modelled on the post-FFT modulation-symbol grid, indexed
(antenna k, subcarrier n, symbol m).  A grid may carry only a subset of
the symbols (``SymbolGrid.symbols``) so range-only experiments do not pay
for the full frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .scenario import SceneConfig, TruthParams

QPSK = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))

# stream identifiers for the independent random draws of one trial
STREAM_TX_ACTIVE = 1
STREAM_TX_PASSIVE = 2
STREAM_OFFSETS = 3
STREAM_NOISE_ACTIVE = 4
STREAM_NOISE_PASSIVE = 5
STREAM_PHASES = 6


def stream_rng(seed: int, stream_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream_id)]))


@dataclass
class SymbolGrid:
    """Complex grid of shape (n_antennas, n_subcarriers, len(symbols))."""

    data: np.ndarray
    symbols: Optional[np.ndarray] = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 3:
            raise ValueError("grid data must be 3-D (antenna, subcarrier, symbol)")
        if self.symbols is None:
            self.symbols = np.arange(self.data.shape[2])
        self.symbols = np.asarray(self.symbols, dtype=int)
        if len(self.symbols) != self.data.shape[2]:
            raise ValueError("symbol index length does not match grid")

    @property
    def antennas(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def like(self, data) -> "SymbolGrid":
        return SymbolGrid(data, self.symbols.copy())


def _symbol_index(config: SceneConfig, symbols) -> np.ndarray:
    if symbols is None:
        return np.arange(config.n_symbols)
    idx = np.atleast_1d(np.asarray(symbols, dtype=int))
    if idx.size and (idx.min() < 0 or idx.max() >= config.n_symbols):
        raise ValueError("symbol index outside the frame")
    return idx


def generate_tx(config: SceneConfig, stream_id: int, symbols=None) -> SymbolGrid:
    """I.i.d. uniform QPSK grid, reproducible from ``(config.seed, stream_id)``."""
    idx = _symbol_index(config, symbols)
    rng = stream_rng(config.seed, stream_id)
    # draw the whole frame so a symbol subset sees the same payload as the full grid
    full = rng.integers(0, 4, size=(config.n_antennas, config.n_subcarriers, config.n_symbols), dtype=np.int8)
    return SymbolGrid(QPSK[full[:, :, idx]], idx)


@dataclass(frozen=True)
class OffsetModel:
    """Statistical model of the timing and carrier frequency offsets.

    ``to_spread`` and ``cfo_spread`` are standard deviations (s and Hz).
    ``kind`` is ``"constant"`` (every symbol equals the mean) or
    ``"gaussian"`` (i.i.d. normal per symbol).

    ``cfo_phase`` selects how a per-symbol CFO enters the symbol phase:
    ``"jitter"`` accumulates the mean CFO as a linear ramp and applies each
    symbol's deviation from the mean as a local phase error; ``"ramp"``
    uses 2*pi*m*T*df(m) literally.
    """

    kind: str = "constant"
    to_mean: float = 0.0
    to_spread: float = 0.0
    cfo_mean: float = 0.0
    cfo_spread: float = 0.0
    cfo_phase: str = "jitter"

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian"):
            raise ValueError(f"unknown offset model {self.kind!r}")
        if self.cfo_phase not in ("jitter", "ramp"):
            raise ValueError(f"unknown cfo phase model {self.cfo_phase!r}")
        if self.to_spread < 0 or self.cfo_spread < 0:
            raise ValueError("offset spreads must be non-negative")

    @classmethod
    def from_units(cls, kind="constant", to_mean_ns=0.0, to_spread_ns=0.0,
                   cfo_mean_df=0.0, cfo_spread_df=0.0, subcarrier_spacing=120e3, cfo_phase="jitter"):
        """Build from nanoseconds and fractions of the subcarrier spacing."""
        return cls(kind, to_mean_ns * 1e-9, to_spread_ns * 1e-9,
                   cfo_mean_df * subcarrier_spacing, cfo_spread_df * subcarrier_spacing, cfo_phase)

    def label(self) -> str:
        return (f"{self.kind}(to={self.to_mean * 1e9:g}+-{self.to_spread * 1e9:g}ns,"
                f"cfo={self.cfo_mean:g}+-{self.cfo_spread:g}Hz,{self.cfo_phase})")


ZERO_OFFSETS = OffsetModel()


@dataclass
class OffsetTrack:
    to: np.ndarray
    cfo: np.ndarray
    model: OffsetModel = ZERO_OFFSETS

    def cfo_phase(self, symbol_period: float) -> np.ndarray:
        """Per-symbol phase (rad) contributed by the CFO."""
        m = np.arange(len(self.cfo))
        if self.model.cfo_phase == "ramp":
            return 2 * np.pi * m * symbol_period * self.cfo
        mean = self.model.cfo_mean
        return 2 * np.pi * symbol_period * (m * mean + (self.cfo - mean))


def sample_offsets(config: SceneConfig, model: OffsetModel, rng=None) -> OffsetTrack:
    M = config.n_symbols
    if model.kind == "constant":
        to = np.full(M, model.to_mean)
        cfo = np.full(M, model.cfo_mean)
    else:
        if rng is None:
            rng = stream_rng(config.seed, STREAM_OFFSETS)
        to = model.to_mean + model.to_spread * rng.standard_normal(M)
        cfo = model.cfo_mean + model.cfo_spread * rng.standard_normal(M)
    return OffsetTrack(to, cfo, model)


def zero_offsets(config: SceneConfig) -> OffsetTrack:
    return OffsetTrack(np.zeros(config.n_symbols), np.zeros(config.n_symbols), ZERO_OFFSETS)


def channel_grid(config: SceneConfig, alphas, omegas, delays, dopplers, symbols,
                 common_delay=None, common_phase=None) -> np.ndarray:
    """Sum of target responses  alpha e^{j Omega k} e^{-j 2pi n df tau} e^{j 2pi m T fD}.

    ``common_delay`` (per listed symbol, seconds) and ``common_phase`` (per
    listed symbol, rad) are applied identically to all targets.
    """
    Nt, N = config.n_antennas, config.n_subcarriers
    m = np.asarray(symbols)
    n = np.arange(N)
    k = np.arange(Nt)
    H = np.zeros((Nt, N, len(m)), dtype=complex)
    for a, om, tau, fd in zip(alphas, omegas, delays, dopplers):
        rng_ph = np.exp(-2j * np.pi * n * config.subcarrier_spacing * tau)
        dop_ph = np.exp(2j * np.pi * m * config.symbol_period * fd)
        H += (a * np.exp(1j * om * k))[:, None, None] * np.outer(rng_ph, dop_ph)[None]
    if common_delay is not None:
        H *= np.exp(-2j * np.pi * np.outer(n * config.subcarrier_spacing, common_delay))[None]
    if common_phase is not None:
        H *= np.exp(1j * np.asarray(common_phase))[None, None, :]
    return H


def _alias_guard(config: SceneConfig, delays, what):
    for d in np.atleast_1d(delays):
        if not (0 <= d < config.max_delay):
            raise ValueError(f"{what} {d:.4g} s outside the unambiguous window [0, {config.max_delay:.4g}) s")


def apply_active_channel(tx: SymbolGrid, truths: Sequence[TruthParams], config: SceneConfig) -> SymbolGrid:
    _check_dims(tx, config)
    _alias_guard(config, [t.tau1 for t in truths], "active delay")
    H = channel_grid(config, [t.alpha_active for t in truths], [t.omega for t in truths],
                     [t.tau1 for t in truths], [t.fd1 for t in truths], tx.symbols)
    return tx.like(tx.data * H)


def apply_passive_channel(tx: SymbolGrid, truths: Sequence[TruthParams], offsets: OffsetTrack,
                          config: SceneConfig) -> SymbolGrid:
    _check_dims(tx, config)
    m = tx.symbols
    to = offsets.to[m]
    worst = [t.tau2 + d for t in truths for d in (to.min(), to.max())] if len(m) else []
    _alias_guard(config, worst, "passive delay plus timing offset")
    H = channel_grid(config, [t.alpha_passive for t in truths], [t.omega for t in truths],
                     [t.tau2 for t in truths], [t.fd2 for t in truths], m,
                     common_delay=to, common_phase=offsets.cfo_phase(config.symbol_period)[m])
    return tx.like(tx.data * H)


def _check_dims(tx: SymbolGrid, config: SceneConfig):
    if tx.data.shape[:2] != (config.n_antennas, config.n_subcarriers):
        raise ValueError("grid dimensions do not match the configuration")


def awgn(shape, variance, rng) -> np.ndarray:
    """Circular complex Gaussian noise with the given per-entry variance."""
    w = rng.standard_normal(tuple(shape) + (2,))
    out = w.view(complex)[..., 0]
    out *= math.sqrt(variance / 2)
    return out


def add_noise(grid: SymbolGrid, snr_db: float, config: Optional[SceneConfig] = None, rng=None,
              signal_power: Optional[float] = None) -> SymbolGrid:
    """Add noise so the per-entry SNR equals ``snr_db``.

    Signal power is measured from the clean grid unless ``signal_power``
    is given.  ``snr_db=inf`` returns an unchanged copy.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return grid.like(grid.data.copy())
    if rng is None:
        seed = config.seed if config is not None else 0
        rng = stream_rng(seed, STREAM_NOISE_ACTIVE)
    p = float(np.mean(np.abs(grid.data) ** 2)) if signal_power is None else float(signal_power)
    var = p / 10 ** (snr_db / 10)
    return grid.like(grid.data + awgn(grid.data.shape, var, rng))


def apply_fd_leakage(active: SymbolGrid, passive: SymbolGrid, leakage_db: float):
    """Imperfect band separation: each receiver picks up the other band's echo."""
    if math.isinf(leakage_db) and leakage_db < 0:
        return active, passive
    b = 10 ** (leakage_db / 20)
    return active.like(active.data + b * passive.data), passive.like(passive.data + b * active.data)


# ---------------------------------------------------------------------------
# binary grid dump

_MAGIC = "COOPSENSE-GRID 1"


def write_grid(grid: SymbolGrid, path, note: str = "") -> None:
    """Text header followed by little-endian float64 re/im pairs, row-major (antenna, subcarrier, symbol)."""
    k, n, m = grid.data.shape
    header = [
        _MAGIC,
        f"shape {k} {n} {m}",
        "dtype float64-le interleaved re,im",
        "order antenna,subcarrier,symbol",
        "symbols " + " ".join(str(int(s)) for s in grid.symbols),
    ]
    if note:
        header.append("note " + note.replace("\n", " "))
    header.append("end")
    payload = np.ascontiguousarray(grid.data, dtype="<c16").tobytes()
    with open(Path(path), "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(payload)


def read_grid(path) -> SymbolGrid:
    with open(Path(path), "rb") as fh:
        first = fh.readline().decode("ascii").strip()
        if first != _MAGIC:
            raise ValueError("not a grid dump")
        shape, symbols = None, None
        while True:
            line = fh.readline().decode("ascii").strip()
            if line == "end":
                break
            if not line:
                raise ValueError("truncated grid header")
            key, _, rest = line.partition(" ")
            if key == "shape":
                shape = tuple(int(v) for v in rest.split())
            elif key == "symbols":
                symbols = np.array([int(v) for v in rest.split()], dtype=int)
        raw = fh.read()
    data = np.frombuffer(raw, dtype="<c16").reshape(shape)
    return SymbolGrid(data.astype(complex), symbols)

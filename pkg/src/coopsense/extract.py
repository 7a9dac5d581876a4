"""Steering-vector extraction from received grids.

Point-wise division by the known payload turns a received grid into the
channel grid.  Column ``m0`` of it is the range steering vector and row
``n0`` the Doppler steering vector.  For several targets the Doppler row
superimposes all of them, so this module also offers per-target range
gating (a least-squares fit of the known target delays in every symbol)
and per-symbol timing-offset tracking for the passive path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .peaks import parabolic_offset
from .scenario import SceneConfig
from .synth import SymbolGrid


def divide(rx: SymbolGrid, tx: SymbolGrid) -> SymbolGrid:
    if rx.data.shape != tx.data.shape:
        raise ValueError("rx and tx grids differ in shape")
    if np.any(tx.data == 0):
        raise ValueError("zero transmit symbol: constellation contract violated")
    return rx.like(rx.data / tx.data)


@dataclass
class SteerVectors:
    k_R: np.ndarray  # (n_antennas, N)
    k_D: np.ndarray  # (n_antennas, M)
    source: str = "active"
    ref_symbol: int = 0
    ref_subcarrier: int = 0


def steer_from_grid(div: SymbolGrid, m0: int = 0, n0: int = 0, source: str = "active") -> SteerVectors:
    """Slice column ``m0`` (a frame symbol index) and row ``n0`` of the divided grid."""
    where = np.flatnonzero(div.symbols == m0)
    if where.size == 0:
        raise ValueError(f"reference symbol {m0} not present in grid")
    if not 0 <= n0 < div.data.shape[1]:
        raise ValueError("reference subcarrier out of range")
    return SteerVectors(div.data[:, :, where[0]].copy(), div.data[:, n0, :].copy(), source, m0, n0)


def coherent_average_range(div: SymbolGrid) -> np.ndarray:
    """Range steering vector averaged over all symbols with Doppler ignored.

    Only meaningful when offsets are constant and Doppler phase rotation
    over the frame is small; not used by the default pipeline.
    """
    return div.data.mean(axis=2)


def delay_matrix(config: SceneConfig, delays) -> np.ndarray:
    n = np.arange(config.n_subcarriers)
    return np.exp(-2j * np.pi * np.outer(n * config.subcarrier_spacing, np.atleast_1d(delays)))


def gate_delays(div: np.ndarray, config: SceneConfig, delays) -> np.ndarray:
    """Per-target slow-time signals by least squares on the known delays.

    ``div`` has shape (n_antennas, N, M_sel); returns (n_antennas, L, M_sel).
    Each symbol column is decomposed onto the delay steering vectors, so a
    target's slow-time signal carries no leakage from the others.
    """
    A = delay_matrix(config, delays)
    P = np.linalg.pinv(A)
    return np.einsum("ln,knm->klm", P, div)


def track_symbol_delay(div_antenna: np.ndarray, config: SceneConfig, ref_col: int = 0, pad: int = 4) -> np.ndarray:
    """Per-symbol common delay shift relative to column ``ref_col``.

    The magnitude delay profile of every symbol is circularly
    cross-correlated with the reference symbol's profile; the correlation
    peak (parabolically refined) gives the common timing shift.  Returns
    seconds, one value per column of ``div_antenna`` (shape (N, M_sel)).
    """
    N = div_antenna.shape[0]
    P = N * pad
    prof = np.abs(np.fft.ifft(div_antenna, P, axis=0))
    ref = prof[:, ref_col]
    xc = np.fft.ifft(np.fft.fft(prof, axis=0) * np.conj(np.fft.fft(ref))[:, None], axis=0).real
    shifts = np.empty(prof.shape[1])
    for m in range(prof.shape[1]):
        i = int(np.argmax(xc[:, m]))
        s = i + parabolic_offset(xc[:, m], i)
        if s >= P / 2:
            s -= P
        shifts[m] = s
    shifts -= shifts[ref_col]
    return shifts / (P * config.subcarrier_spacing)


def remove_symbol_delay(div: np.ndarray, config: SceneConfig, shifts) -> np.ndarray:
    """Undo a per-symbol common delay (shape (..., N, M_sel))."""
    n = np.arange(div.shape[-2])
    ramp = np.exp(2j * np.pi * np.outer(n * config.subcarrier_spacing, shifts))
    return div * ramp

"""Mapping between tone frequencies (cycles/sample) and physical quantities.

Two families of vectors appear in the pipeline:

* steering vectors: range ``exp(-j 2pi n df tau)``, Doppler ``exp(+j 2pi m T fD)``
* correlation vectors: range ``exp(+j 2pi n df x)``, Doppler ``exp(-j 2pi m T y)``

where ``x`` and ``y`` are the offset-plus-deviation terms.  A tone at
``f`` cycles/sample appears at forward-DFT bin ``f * n_fft``.
"""

from __future__ import annotations

import numpy as np

from .scenario import SceneConfig

RANGE, DOPPLER = "range", "doppler"
_SIGN = {("steer", RANGE): -1.0, ("steer", DOPPLER): 1.0,
         ("offset", RANGE): 1.0, ("offset", DOPPLER): -1.0}


def check_axis(axis: str) -> str:
    if axis not in (RANGE, DOPPLER):
        raise ValueError(f"unknown axis {axis!r}")
    return axis


def sample_spacing(config: SceneConfig, axis: str) -> float:
    """Δf for the range axis, T for the Doppler axis."""
    return config.subcarrier_spacing if check_axis(axis) == RANGE else config.symbol_period


def window(config: SceneConfig, axis: str) -> float:
    """Unambiguous span of the physical quantity: 1/Δf (s) or 1/T (Hz)."""
    return 1.0 / sample_spacing(config, axis)


def transform_length(config: SceneConfig, axis: str) -> int:
    return config.idft_points if check_axis(axis) == RANGE else config.dft_points


def vector_length(config: SceneConfig, axis: str) -> int:
    return config.n_subcarriers if check_axis(axis) == RANGE else config.n_symbols


def to_freq(value, config: SceneConfig, axis: str, kind: str = "steer"):
    return _SIGN[(kind, axis)] * sample_spacing(config, axis) * np.asarray(value)


def from_freq(f, config: SceneConfig, axis: str, kind: str = "steer"):
    """Physical value of a tone.  Range delays wrap into [0, 1/Δf); everything else is signed."""
    s = _SIGN[(kind, axis)] * np.asarray(f, dtype=float)
    if kind == "steer" and axis == RANGE:
        u = s % 1.0
    else:
        u = (s + 0.5) % 1.0 - 0.5
    return u / sample_spacing(config, axis)


def ramp(value, n: int, config: SceneConfig, axis: str, kind: str = "steer") -> np.ndarray:
    """The unit-amplitude vector of length n carrying ``value``."""
    f = to_freq(value, config, axis, kind)
    return np.exp(2j * np.pi * f * np.arange(n))

"""Peak picking, parabolic interpolation and joint tone refinement.

All tone frequencies here are in cycles per sample using the forward
convention: a component ``a * exp(+j 2 pi f n)`` produces a DFT peak at
``f * n_fft``.  Callers translate to delays or Doppler shifts.
"""

from __future__ import annotations

import numpy as np


def parabolic_offset(mag, i):
    """Fractional vertex offset in [-0.5, 0.5] from three samples around ``i`` (circular)."""
    n = len(mag)
    y0, y1, y2 = mag[(i - 1) % n], mag[i], mag[(i + 1) % n]
    den = y0 - 2 * y1 + y2
    if den >= 0 or not np.isfinite(den):
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / den, -0.5, 0.5))


def local_maxima(mag, circular=True):
    m = np.asarray(mag)
    if circular:
        left, right = np.roll(m, 1), np.roll(m, -1)
    else:
        left = np.concatenate(([-np.inf], m[:-1]))
        right = np.concatenate((m[1:], [-np.inf]))
    return np.flatnonzero((m >= left) & (m > right))


def pick_peaks(mag, count, min_separation=1, floor=0.0, circular=True):
    """Indices of the ``count`` strongest local maxima at least ``min_separation`` apart.

    Peaks at or below ``floor`` are ignored, so fewer than ``count`` may be
    returned.
    """
    mag = np.asarray(mag, dtype=float)
    n = len(mag)
    cand = local_maxima(mag, circular)
    cand = cand[mag[cand] > floor]
    cand = cand[np.argsort(-mag[cand], kind="stable")]
    chosen = []
    for c in cand:
        if len(chosen) >= count:
            break
        ok = True
        for p in chosen:
            d = abs(int(c) - int(p))
            if circular:
                d = min(d, n - d)
            if d < min_separation:
                ok = False
                break
        if ok:
            chosen.append(int(c))
    return chosen


def signed_frequency(f):
    """Map a cycles/sample frequency into [-0.5, 0.5)."""
    return (np.asarray(f) + 0.5) % 1.0 - 0.5


def tone_matrix(freqs, n):
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, np.atleast_1d(freqs)))


def dtft(x, freqs):
    """Sum_n x[n] exp(-j 2 pi f n) for each f."""
    x = np.asarray(x)
    return tone_matrix(freqs, len(x)).conj().T @ x


def fit_amplitudes(x, freqs):
    """Least-squares complex amplitudes of the tones at ``freqs`` in ``x``.

    ``x`` may be 1-D (length n) or 2-D with the sample axis last; the
    returned array has the tone axis last.
    """
    x = np.asarray(x)
    if len(freqs) == 0:
        return np.zeros(x.shape[:-1] + (0,), dtype=complex)
    A = tone_matrix(freqs, x.shape[-1])
    sol, *_ = np.linalg.lstsq(A, x.reshape(-1, x.shape[-1]).T, rcond=None)
    return sol.T.reshape(x.shape[:-1] + (len(freqs),))


def refine_tones(x, freqs, pad, n_iter=3):
    """Jointly refine tone frequencies by successive cancellation.

    Each tone is re-located on the residual left after subtracting the
    least-squares fit of all other tones, by a local search on a grid of
    spacing ``1/(n*pad)`` followed by a 3-point parabolic vertex.  This
    removes the sidelobe pull that neighbouring tones exert on a plain
    peak readout.  A 2-D ``x`` (channels, samples) is refined with
    frequencies shared across channels and power summed over channels.

    Returns ``(freqs, amplitudes)``.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    f = np.array(freqs, dtype=float)
    if f.size == 0:
        return f, np.zeros(x.shape[:-1] + (0,), dtype=complex)
    step = 1.0 / (n * pad)
    offs = np.arange(-pad, pad + 1)
    for _ in range(n_iter):
        for i in range(len(f)):
            amps = fit_amplitudes(x, f)
            others = np.delete(np.arange(len(f)), i)
            resid = x - amps[..., others] @ tone_matrix(f[others], n).T if others.size else x
            grid = f[i] + offs * step
            spec = np.atleast_2d(resid) @ tone_matrix(grid, n).conj()
            mag = np.sqrt((np.abs(spec) ** 2).sum(axis=0))
            j = int(np.argmax(mag))
            if 0 < j < len(offs) - 1:
                delta = parabolic_offset(mag, j)
            else:
                delta = 0.0
            f[i] = f[i] + (offs[j] + delta) * step
    return f, fit_amplitudes(x, f)


def isolate_tone(x, freqs, amps, keep):
    """Remove every fitted tone except index ``keep`` from ``x``."""
    x = np.asarray(x, dtype=complex)
    others = [i for i in range(len(freqs)) if i != keep]
    if not others:
        return x.copy()
    return x - tone_matrix(np.asarray(freqs)[others], len(x)) @ np.asarray(amps)[others]

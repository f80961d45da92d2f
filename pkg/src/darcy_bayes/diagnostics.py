"""Effective sample sizes for MCMC traces and importance weights."""

from __future__ import annotations

import numpy as np


def autocorrelation(x: np.ndarray) -> np.ndarray:
    """Normalized autocorrelation function of a 1-d series (FFT, zero padded)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:n]
    if acf[0] == 0.0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acf / acf[0]


def integrated_autocorr_time(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time with Sokal's automatic window.

    The window ``M`` is the smallest lag with ``M >= c * tau(M)``, where
    ``tau(M) = 1 + 2 sum_{t=1}^{M} rho_t``. A constant series returns 1.
    """
    rho = autocorrelation(x)
    taus = 2.0 * np.cumsum(rho) - 1.0
    lags = np.arange(rho.size)
    ok = lags >= c * taus
    window = int(np.argmax(ok)) if ok.any() else rho.size - 1
    return max(float(taus[window]), 1.0 / max(rho.size, 1))


def mcmc_ess(x: np.ndarray) -> float:
    x = np.asarray(x)
    return x.size / integrated_autocorr_time(x)


def weights_ess(log_weights: np.ndarray) -> float:
    """``(sum w)^2 / sum w^2`` for unnormalized log-weights."""
    lw = np.asarray(log_weights, dtype=np.float64)
    w = np.exp(lw - lw.max())
    return float(w.sum() ** 2 / np.sum(w**2))


def mean_standard_error(x: np.ndarray) -> float:
    """Standard error of the mean of a correlated trace, ``sqrt(var * tau / n)``."""
    x = np.asarray(x, dtype=np.float64)
    return float(np.sqrt(x.var(ddof=1) * integrated_autocorr_time(x) / x.size))

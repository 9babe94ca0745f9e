"""Chain diagnostics."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["autocorrelation", "effective_sample_size", "mean_and_se"]


def autocorrelation(x) -> np.ndarray:
    """Normalised sample autocorrelation at lags 0..n-1 (FFT, biased estimator)."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acov = np.fft.irfft(f * np.conj(f), 2 * n)[:n] / n
    if acov[0] == 0.0:
        out = np.zeros(n)
        out[0] = 1.0
        return out
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """Effective sample size with Geyer's initial monotone positive sequence.

    A constant trace carries no autocorrelation information; its ESS is
    reported as the trace length.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4 or np.ptp(x) == 0.0:
        return float(n)
    rho = autocorrelation(x)
    m = (n - 1) // 2
    pairs = rho[0 : 2 * m : 2] + rho[1 : 2 * m : 2]
    neg = np.flatnonzero(pairs <= 0.0)
    pairs = pairs[: neg[0]] if neg.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * float(np.sum(pairs))
    tau = max(tau, 1.0 / math.log10(n))
    return n / tau


def mean_and_se(x, iid: bool = False) -> tuple[float, float]:
    """Sample mean with an ESS-based standard error (or sd/sqrt(n) when ``iid``)."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("need at least two values")
    sd = float(np.std(x, ddof=1))
    n_eff = float(n) if iid else effective_sample_size(x)
    # fsum keeps the mean invariant under permutation of the values
    return math.fsum(x) / n, sd / math.sqrt(n_eff)

"""Empirical CDFs, Kolmogorov-Smirnov uniformity tests and mean intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogi

from .errors import ParameterError, StructuralError

# asymptotic Kolmogorov critical values c(alpha); other levels use kolmogi
KS_CRITICAL = {0.01: 1.628, 0.05: 1.358}


def _vector(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise StructuralError("empty sample")
    if np.isnan(x).any():
        raise ParameterError("sample contains NaN")
    return x


@dataclass(frozen=True)
class Ecdf:
    """Right-continuous step function: ``F(t) = #{x_i <= t} / n``.

    ``x`` holds the distinct sample values in increasing order and ``p`` the
    value of ``F`` at each of them.
    """

    x: np.ndarray
    p: np.ndarray
    n: int

    def __call__(self, t):
        idx = np.searchsorted(self.x, t, side="right")
        p = np.concatenate([[0.0], self.p])
        return p[idx]


def ecdf(samples) -> Ecdf:
    x = np.sort(_vector(samples))
    n = x.size
    last = np.flatnonzero(np.append(x[1:] != x[:-1], True))
    return Ecdf(x[last], (last + 1) / n, n)


def ks_threshold(alpha: float, n: int) -> float:
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")
    c = KS_CRITICAL.get(alpha)
    if c is None:
        c = float(kolmogi(alpha))
    return c / math.sqrt(n)


@dataclass(frozen=True)
class KsVerdict:
    n: int
    d_stat: float
    threshold: float
    alpha: float
    passed: bool


def ks_statistics(samples) -> tuple[float, float]:
    """``(D+, D-)`` of a sample against Uniform(0, 1)."""
    u = np.sort(_vector(samples))
    if u[0] < 0 or u[-1] > 1:
        raise ParameterError("uniformity test needs values in [0, 1]")
    n = u.size
    i = np.arange(1, n + 1)
    return float(np.max(i / n - u)), float(np.max(u - (i - 1) / n))


def ks_uniform(samples, alpha: float = 0.01, slack: float = 0.0) -> KsVerdict:
    """Two-sided KS test against Uniform(0, 1).

    ``slack`` is added to the critical value, e.g. to absorb a known bias.
    """
    d_plus, d_minus = ks_statistics(samples)
    n = int(np.size(samples))
    d = max(d_plus, d_minus)
    threshold = ks_threshold(alpha, n) + slack
    return KsVerdict(n, d, threshold, alpha, d < threshold)


def mean_ci(samples, k_sigma: float = 3.0) -> tuple[float, float]:
    """Sample mean and ``k_sigma`` times its standard error."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < 2:
        raise ParameterError(f"need at least 2 samples, got {x.size}")
    return float(x.mean()), float(k_sigma * x.std(ddof=1) / math.sqrt(x.size))


def proportion_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)

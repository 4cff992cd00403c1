"""The multiplicative pair ``(L, D)`` with ``D = 1/L*`` and the projection ``a``.

``a_t = -int_{[0,t]} L_{s-} dD_s`` only charges the increase set of ``L*``.
On that set ``L = L* = 1/D``, so on an exponential segment with rate ``r``
the increment is ``r dt`` and on a grid step it is ``int 1/D dD`` between the
step's sup values, evaluated by Gauss-Legendre quadrature in ``D``.  A jump
of the sup contributes ``L_{t-} (D_{t-} - D_t)``.  For class-M0 paths the
result equals ``log L*_t``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ParameterError, StructuralError
from .maxtime import MaxRecord
from .paths import CONSTANT, EXPONENTIAL, GRID, CadlagPath, running_sup, value_at

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)

DECOMPOSITION_COLUMNS = ["t", "L", "Lstar", "D", "a_stieltjes", "a_closed_form"]


class FunctionTable(NamedTuple):
    """Values of a right-continuous process at sample times."""

    times: np.ndarray
    values: np.ndarray

    def at(self, t: float) -> float:
        """Value at ``t``, linear between samples (increments are continuous for M0)."""
        return float(np.interp(t, self.times, self.values))


def d_process(path: CadlagPath) -> CadlagPath:
    """``D_t = 1 / L*_t`` on the sample grid of the running sup."""
    sup = running_sup(path)
    kinds = sup.kinds
    rates = np.where(np.array([k == EXPONENTIAL for k in kinds], dtype=bool), -sup.rates, 0.0)
    meta = dict(path.meta, process="D")
    return CadlagPath(sup.times, 1.0 / sup.left, 1.0 / sup.right, kinds, rates, None,
                      1.0 / sup.terminal_value if sup.terminal_value > 0 else math.inf, meta)


def _log_quadrature(d_hi: float, d_lo: float) -> float:
    """``int_{d_lo}^{d_hi} dD / D`` by 8-point Gauss-Legendre."""
    half = 0.5 * (d_hi - d_lo)
    mid = 0.5 * (d_hi + d_lo)
    return float(half * np.sum(_GL_WEIGHTS / (mid + half * _GL_NODES)))


def stieltjes_a(path: CadlagPath) -> FunctionTable:
    """``a_t = -int_{[0,t]} L_{s-} dD_s`` at the sample times of the running sup."""
    sup = running_sup(path)
    n = sup.n_samples
    a = np.zeros(n)
    acc = 0.0
    for i in range(n - 1):
        t0, t1 = float(sup.times[i]), float(sup.times[i + 1])
        kind = sup.kinds[i]
        lo, hi = float(sup.right[i]), float(sup.left[i + 1])
        if hi > lo:
            if kind == EXPONENTIAL:
                acc += float(sup.rates[i]) * (t1 - t0)
            elif kind == GRID:
                acc += _log_quadrature(1.0 / lo, 1.0 / hi)
            elif kind != CONSTANT:
                raise StructuralError(f"unknown segment kind {kind!r}")
        jump_to = float(sup.right[i + 1])
        if jump_to > hi:
            # only a jump of L can move the sup; its left limit is the path's
            l_minus = _left_value(path, t1)
            acc += l_minus * (1.0 / hi - 1.0 / jump_to)
        a[i + 1] = acc
    return FunctionTable(sup.times.copy(), a)


def _left_value(path: CadlagPath, t: float) -> float:
    i = int(np.searchsorted(path.times, t))
    if i < path.n_samples and path.times[i] == t:
        return float(path.left[i])
    return value_at(path, t)


@dataclass(frozen=True)
class PoissonDeathCompensator:
    """``a_t = lam (t ^ tau)``, ``Y_t = -a_t`` and the check ``L_t = exp(-Y_t) 1{t < tau}``.

    The dual optional projection ``A_t = 1{t >= tau}`` has a unit jump at
    ``tau``; it is noted here as ``jump_time`` and not computed further.
    """

    times: np.ndarray
    a: np.ndarray
    y: np.ndarray
    max_rel_error: float
    jump_time: float

    @property
    def table(self) -> FunctionTable:
        return FunctionTable(self.times, self.a)


def compensator_poisson_death(path: CadlagPath, lam: float, times=None) -> PoissonDeathCompensator:
    if path.model != "PoissonDeath":
        raise TypeError(f"compensator_poisson_death needs a PoissonDeath path, got {path.model!r}")
    tau = path.horizon
    if times is None:
        times = np.concatenate([np.linspace(0.0, tau, 9), [1.5 * tau, 3.0 * tau]])
    t = np.asarray(times, dtype=float)
    a = lam * np.minimum(t, tau)
    y = -a
    implied = np.exp(-y) * (t < tau)
    err = 0.0
    for ti, li in zip(t, implied):
        actual = value_at(path, ti) if ti <= tau else path.terminal_value
        err = max(err, abs(actual - li) / max(abs(li), 1.0))
    return PoissonDeathCompensator(t, a, y, err, tau)


def _l_star_inf(records) -> np.ndarray:
    if hasattr(records, "l_star_inf") and hasattr(records, "truncated_before_jump"):
        keep = ~np.asarray(records.truncated_before_jump)
        return np.asarray(records.l_star_inf)[keep]
    recs = [r for r in records if not r.truncated_before_jump]
    return np.array([r.l_star_inf for r in recs], dtype=float)


def d_at_rho_samples(records: Iterable[MaxRecord]) -> np.ndarray:
    """``D_rho = 1 / L*_inf`` for each (non-truncated) record or batch row."""
    x = _l_star_inf(records)
    if x.size == 0:
        raise StructuralError("no records")
    return 1.0 / x


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    halfwidth: float
    n: int
    target: float

    @property
    def covers_target(self) -> bool:
        return abs(self.mean - self.target) <= self.halfwidth


def log_lstar_mean(records, k_sigma: float = 3.0, min_n: int = 1000) -> MeanEstimate:
    """Mean of ``log L*_inf`` with a ``k_sigma`` standard-error halfwidth; target 1."""
    x = np.log(_l_star_inf(records))
    if x.size < min_n or x.size == 0:
        raise ParameterError(f"need at least {max(min_n, 1)} records, got {x.size}")
    half = k_sigma * x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else math.inf
    return MeanEstimate(float(x.mean()), float(half), int(x.size), 1.0)


def write_decomposition(path: CadlagPath, fh, lam: float | None = None) -> None:
    """One row per sample of the running sup; ``a_closed_form`` only for PoissonDeath."""
    sup = running_sup(path)
    a = stieltjes_a(path)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DECOMPOSITION_COLUMNS)
    closed = path.model == "PoissonDeath" and lam is not None
    for t, s, av in zip(sup.times, sup.right, a.values):
        t = float(t)
        lv = value_at(path, t)
        cf = repr(lam * min(t, path.horizon)) if closed else ""
        w.writerow([repr(t), repr(lv), repr(float(s)), repr(1.0 / float(s)), repr(float(av)), cf])

"""Pathwise super-replication of the digital payoff ``1{L*_inf >= x}``.

Buying ``1/x`` shares at time 0 and selling at ``tau_x = inf{t > 0 : L_t > x}``
ends with ``L_{tau_x} / x`` if ``tau_x`` is finite and ``L_inf / x = 0``
otherwise; this dominates ``1{L*_inf > x}`` on every path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .maxtime import max_record
from .models import ModelSpec, batch_records
from .paths import EXPONENTIAL, GRID, CadlagPath
from .stats import proportion_se

HEDGE_COLUMNS = ["x", "tau_x", "payoff_ge", "payoff_gt", "portfolio", "gap"]
GAP_TOL = 1e-9


def _strike(x: float) -> float:
    x = float(x)
    if not x > 1 or not math.isfinite(x):
        raise ParameterError(f"strike must be a finite number > 1, got {x}")
    return x


def _passage(path: CadlagPath, x: float) -> tuple[float, float]:
    """``(tau_x, L_{tau_x})``; ``(inf, terminal_value)`` if ``L`` never exceeds ``x``.

    Continuous crossings are solved in closed form, so the value there is
    exactly ``x``.  On grid paths a crossing inside a step (seen through the
    bridge maximum) is reported at the step's end, again with value ``x``.
    """
    t, lv, rv = path.times, path.left, path.right
    if rv[0] > x:
        return 0.0, float(rv[0])
    bridge = path.bridge
    for i in range(path.n_samples - 1):
        a, b = float(rv[i]), float(lv[i + 1])
        kind = path.kinds[i]
        if kind == EXPONENTIAL and b > x:
            return float(t[i]) + math.log(x / a) / float(path.rates[i]), x
        if kind == GRID:
            if bridge is not None and not math.isnan(bridge[i]) and bridge[i] > x:
                return float(t[i + 1]), x
            if b > x:
                return float(t[i]) + (x - a) / (b - a) * float(t[i + 1] - t[i]), x
        if rv[i + 1] > x:
            # a jump across x: the strategy sells at the post-jump value
            return float(t[i + 1]), float(rv[i + 1])
    return math.inf, path.terminal_value


def first_passage(path: CadlagPath, x: float) -> float:
    return _passage(path, _strike(x))[0]


@dataclass(frozen=True)
class HedgeResult:
    """Outcome of the ``1/x``-share strategy on one path.

    ``payoff`` is ``1{L*_inf > x}``, the payoff the strategy dominates
    pathwise; ``payoff_ge`` is the ``>=`` variant.  ``gap`` is
    ``portfolio_terminal - payoff``.
    """

    x: float
    tau_x: float
    payoff: int
    payoff_ge: int
    portfolio_terminal: float
    gap: float

    @property
    def payoff_gt(self) -> int:
        return self.payoff


def super_replicate(path: CadlagPath, x: float) -> HedgeResult:
    x = _strike(x)
    tau, value = _passage(path, x)
    sup = max_record(path).l_star_inf
    portfolio = value / x
    payoff = int(sup > x)
    return HedgeResult(x, tau, payoff, int(sup >= x), portfolio, portfolio - payoff)


@dataclass(frozen=True)
class HedgeTable:
    """Strategy outcomes for a batch: arrays of shape ``(n_paths, n_strikes)``."""

    strikes: np.ndarray
    tau_x: np.ndarray
    payoff_ge: np.ndarray
    payoff_gt: np.ndarray
    portfolio: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.portfolio - self.payoff_gt

    def min_gap(self) -> float:
        return float(self.gap.min())

    def max_abs_gap(self) -> float:
        return float(np.abs(self.gap).max())

    def violations(self, tol: float = GAP_TOL) -> int:
        return int(np.count_nonzero(self.gap < -tol))


def hedge_batch(batch) -> HedgeTable:
    """Hedge outcomes from a :class:`maxmart.models.BatchRecords` with strikes."""
    strikes = batch.strikes
    sup = batch.l_star_inf[:, None]
    return HedgeTable(strikes, batch.tau_x, (sup >= strikes).astype(np.int8),
                      (sup > strikes).astype(np.int8), batch.value_tau_x / strikes)


def hedge_paths(paths: Iterable[CadlagPath], strikes: Sequence[float]) -> list[HedgeResult]:
    return [super_replicate(p, x) for p in paths for x in strikes]


def write_hedge(results: Iterable[HedgeResult], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEDGE_COLUMNS)
    for r in results:
        w.writerow([repr(r.x), repr(r.tau_x), r.payoff_ge, r.payoff, repr(r.portfolio_terminal),
                    repr(r.gap)])


def write_hedge_table(table: HedgeTable, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(HEDGE_COLUMNS)
    gap = table.gap
    for i in range(table.tau_x.shape[0]):
        for j, x in enumerate(table.strikes):
            w.writerow([repr(float(x)), repr(float(table.tau_x[i, j])), int(table.payoff_ge[i, j]),
                        int(table.payoff_gt[i, j]), repr(float(table.portfolio[i, j])),
                        repr(float(gap[i, j]))])


@dataclass(frozen=True)
class DigitalEstimate:
    x: float
    estimate: float
    stderr: float
    n: int
    estimate_gt: float

    @property
    def target(self) -> float:
        return 1.0 / self.x

    @property
    def deficiency(self) -> float:
        """``1/x`` minus the estimated price; 0 in law for class-M0 models."""
        return self.target - self.estimate


def digital_from_batch(batch, x: float) -> DigitalEstimate:
    x = _strike(x)
    sup = batch.l_star_inf
    p = float(np.mean(sup >= x))
    return DigitalEstimate(x, p, proportion_se(p, sup.size), int(sup.size), float(np.mean(sup > x)))


def digital_price(model: ModelSpec, x: float, n: int, seed: int,
                  jobs: int | None = None) -> DigitalEstimate:
    """Monte Carlo price of ``1{L*_inf >= x}`` over ``n`` paths."""
    x = _strike(x)
    if n < 1000:
        raise ParameterError(f"n must be >= 1000, got {n}")
    return digital_from_batch(batch_records(model, n, seed, jobs=jobs), x)

"""Times of maximum: ``rho_left`` (left limits) and ``rho_right`` (values).

On exact segments equality with the running sup is decided structurally;
on pure grid paths the comparison is made on the log scale with a relative
tolerance of 1e-12, and a bridge maximum inside a step is reported at the
grid time closing that step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from ._kernels import GRID_REL_TOL
from .errors import StructuralError
from .paths import CONSTANT, EXPONENTIAL, GRID, CadlagPath


@dataclass(frozen=True)
class MaxRecord:
    """Summary of where and how a path reaches its overall maximum.

    ``left_at_rho``/``right_at_rho`` are taken at ``rho_left`` (at
    ``rho_right`` for PoissonUp, where ``rho_left`` is NaN).  On grid paths
    they hold the refined value at the maximum, i.e. the bridge maximum when
    one exceeds the grid samples.  ``max_at_zero`` marks paths that never
    exceed their initial value, for which both times are reported as 0.
    """

    rho_left: float
    rho_right: float
    l_star_inf: float
    left_at_rho: float
    right_at_rho: float
    jumped_at_max: bool
    truncated_before_jump: bool
    sup_before_rho: float = math.nan
    max_at_zero: bool = False


CSV_FIELDS = [f.name for f in fields(MaxRecord)]


def _grid_knots(path: CadlagPath) -> tuple[np.ndarray, np.ndarray]:
    """Samples interleaved with bridge maxima; a bridge knot sits at the step's end."""
    n = path.n_samples
    knots = np.empty(2 * n - 1)
    knots[0::2] = path.left
    if path.bridge is not None:
        knots[1::2] = np.where(np.isnan(path.bridge), 0.0, path.bridge)
    else:
        knots[1::2] = 0.0
    return knots, np.repeat(path.times, 2)[1:]


def _scan_grid(path: CadlagPath):
    knots, ktimes = _grid_knots(path)
    with np.errstate(divide="ignore"):
        logs = np.log(knots)
    runmax = np.maximum.accumulate(logs)
    last = int(np.flatnonzero(logs >= runmax - GRID_REL_TOL)[-1])
    sup = float(knots.max())
    if last == 0:
        return None, None, sup
    v = float(knots[last])
    cand = (float(ktimes[last]), v, v, float(np.max(knots[:last])))
    return cand, cand, sup


def _scan_exact(path: CadlagPath):
    t, lv, rv = path.times, path.left, path.right
    bridge = path.bridge
    sup = float(rv[0])
    cand_l = None
    cand_r = None
    for i in range(path.n_samples - 1):
        a, b, t1 = float(rv[i]), float(lv[i + 1]), float(t[i + 1])
        kind = path.kinds[i]
        increasing = (kind == EXPONENTIAL and path.rates[i] > 0) or (kind == GRID and b > a)
        if increasing and (a >= sup or b > sup):
            # L = L* on an open interval ending at t1
            cand_l = cand_r = (t1, b, float(rv[i + 1]), max(sup, b))
        elif kind == CONSTANT and a >= sup:
            cand_l = cand_r = (t1, a, float(rv[i + 1]), sup)
        if increasing:
            sup = max(sup, b)
        if bridge is not None and not np.isnan(bridge[i]):
            m = float(bridge[i])
            if m >= sup:
                cand_l = cand_r = (t1, m, m, sup)
                sup = m
        sup_left = sup
        if b >= sup_left:
            cand_l = (t1, b, float(rv[i + 1]), sup_left)
        sup = max(sup, float(rv[i + 1]))
        if float(rv[i + 1]) >= sup:
            cand_r = (t1, b, float(rv[i + 1]), sup_left)
    return cand_l, cand_r, max(sup, path.terminal_value)


def _is_grid(path: CadlagPath) -> bool:
    return all(k == GRID for k in path.kinds) and not path.is_jump.any()


def _scan(path: CadlagPath):
    """``(cand_left, cand_right, sup)``; a candidate is ``(time, L_{t-}, L_t, L*_{t-})``."""
    if path.n_samples < 2:
        raise StructuralError("path has no samples beyond time 0")
    if _is_grid(path):
        return _scan_grid(path)
    return _scan_exact(path)


def rho_left(path: CadlagPath) -> float:
    """``sup{t > 0 : L_{t-} = L*_{t-}}`` (0 if the set is empty)."""
    cand = _scan(path)[0]
    return 0.0 if cand is None else cand[0]


def rho_right(path: CadlagPath) -> float:
    """``sup{t > 0 : L_t = L*_t}`` (0 if the set is empty)."""
    cand = _scan(path)[1]
    return 0.0 if cand is None else cand[0]


def max_record(path: CadlagPath) -> MaxRecord:
    cand_l, cand_r, sup = _scan(path)
    v0 = float(path.right[0])
    poisson_up = path.model == "PoissonUp"
    at_zero = (cand_r if poisson_up else cand_l) is None
    cand_l = cand_l or (0.0, v0, v0, v0)
    cand_r = cand_r or (0.0, v0, v0, v0)
    rho_l = math.nan if poisson_up else cand_l[0]
    _, left, right, before = cand_r if poisson_up else cand_l
    truncated = poisson_up and bool(path.meta.get("stopped")) and not path.is_jump.any()
    return MaxRecord(rho_l, cand_r[0], sup, left, right, left != right, truncated, before,
                     at_zero)


def uniqueness_components(path: CadlagPath, rel_tol: float = 0.0) -> int:
    """Number of separate runs of (refined) sample points at which ``L_{t-} = L*_inf``."""
    sup = _scan(path)[2]
    if _is_grid(path):
        knots, _ = _grid_knots(path)
    else:
        knots = path.left
    hit = np.concatenate([[False], knots >= sup * (1.0 - rel_tol)])
    return int(np.sum(hit[1:] & ~hit[:-1]))


def check_rho_identity(record: MaxRecord, tol: float = 0.0) -> bool:
    return abs(record.rho_left - record.rho_right) <= tol


def max_attained(record: MaxRecord) -> bool:
    return record.right_at_rho == record.l_star_inf


def write_records(records: Iterable[MaxRecord], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow([repr(v) if isinstance(v, float) else int(v) for v in asdict(r).values()])


def records_from_batch(batch) -> list[MaxRecord]:
    """``MaxRecord`` rows of a :class:`maxmart.models.BatchRecords`."""
    tb = batch.truncated_before_jump
    return [
        MaxRecord(float(batch.rho_left[i]), float(batch.rho_right[i]), float(batch.l_star_inf[i]),
                  float(batch.left_at_rho[i]), float(batch.right_at_rho[i]),
                  bool(batch.left_at_rho[i] != batch.right_at_rho[i]), bool(tb[i]),
                  float(batch.sup_before_rho[i]), bool(batch.rho_right[i] == 0.0))
        for i in range(len(batch))
    ]


def grid_tolerance(path_or_spec) -> float:
    """Tolerance for comparing times of maximum: ``dt`` on grid models, else 0."""
    dt = getattr(path_or_spec, "dt", None)
    if dt is None and isinstance(path_or_spec, CadlagPath):
        dt = path_or_spec.meta.get("dt")
    return float(dt or 0.0)


__all__: Sequence[str] = [
    "MaxRecord", "rho_left", "rho_right", "max_record", "check_rho_identity", "max_attained",
    "write_records", "records_from_batch", "grid_tolerance", "uniqueness_components",
]

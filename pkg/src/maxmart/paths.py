"""Immutable cadlag paths with explicit jumps and exact segment evaluation.

A path is a strictly increasing list of sample times, each carrying a left
limit and a (right-continuous) value.  Between two samples the path follows
the segment's interpolation rule:

``exponential``
    ``right[i] * exp(rate[i] * (t - t[i]))``; exact for the Poisson models.
``constant``
    ``right[i]``.
``grid``
    linear between ``right[i]`` and ``left[i + 1]``; used for simulated
    diffusion samples, optionally with a bridge maximum stored per segment
    that refines the running sup.

Beyond the last sample the path is only known at ``t = inf`` through
``terminal_value``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, StructuralError

EXPONENTIAL = "exponential"
CONSTANT = "constant"
GRID = "grid"
_KINDS = (EXPONENTIAL, CONSTANT, GRID)


@dataclass(frozen=True, eq=False)
class CadlagPath:
    times: np.ndarray
    left: np.ndarray
    right: np.ndarray
    kinds: tuple[str, ...]
    rates: np.ndarray
    bridge: np.ndarray | None = None
    terminal_value: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        lv = np.ascontiguousarray(self.left, dtype=float)
        rv = np.ascontiguousarray(self.right, dtype=float)
        rates = np.ascontiguousarray(self.rates, dtype=float)
        n = t.shape[0]
        if n == 0:
            raise StructuralError("a path needs at least the sample at time 0")
        if lv.shape != (n,) or rv.shape != (n,):
            raise StructuralError("times, left and right must have equal length")
        if len(self.kinds) != n - 1 or rates.shape != (n - 1,):
            raise StructuralError("need one interpolation tag and rate per segment")
        if t[0] != 0.0 or lv[0] != rv[0]:
            raise StructuralError("paths start at time 0 without a jump")
        if n > 1 and not np.all(np.diff(t) > 0):
            raise StructuralError("sample times must be strictly increasing")
        if np.any(lv < 0) or np.any(rv < 0) or self.terminal_value < 0:
            raise StructuralError("path values must be nonnegative")
        bad = set(self.kinds) - set(_KINDS)
        if bad:
            raise StructuralError(f"unknown interpolation tags {sorted(bad)}")
        bridge = self.bridge
        if bridge is not None:
            bridge = np.ascontiguousarray(bridge, dtype=float)
            if bridge.shape != (n - 1,):
                raise StructuralError("bridge maxima are stored one per segment")
        for name, arr in (("times", t), ("left", lv), ("right", rv), ("rates", rates)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if bridge is not None:
            bridge.flags.writeable = False
        object.__setattr__(self, "bridge", bridge)
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "terminal_value", float(self.terminal_value))

    # -- construction -------------------------------------------------------

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[tuple[float, float, float]],
        kinds: str | Sequence[str] = GRID,
        rates: float | Sequence[float] = 0.0,
        *,
        bridge: Sequence[float] | None = None,
        terminal_value: float = 0.0,
        meta: dict | None = None,
    ) -> "CadlagPath":
        arr = np.asarray(samples, dtype=float).reshape(-1, 3)
        nseg = max(arr.shape[0] - 1, 0)
        if isinstance(kinds, str):
            kinds = (kinds,) * nseg
        rates = np.broadcast_to(np.asarray(rates, dtype=float), (nseg,)).copy()
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], tuple(kinds), rates,
                   None if bridge is None else np.asarray(bridge, dtype=float),
                   terminal_value, dict(meta or {}))

    @classmethod
    def constant(cls, value: float = 1.0, horizon: float = 1.0, terminal_value: float = 0.0):
        return cls.from_samples([(0.0, value, value), (horizon, value, value)], CONSTANT,
                                terminal_value=terminal_value)

    # -- basic attributes ---------------------------------------------------

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n_samples(self) -> int:
        return int(self.times.shape[0])

    @property
    def is_jump(self) -> np.ndarray:
        return self.left != self.right

    @property
    def model(self) -> str | None:
        return self.meta.get("model")

    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.left.tolist(), self.right.tolist()))

    def _segment_value(self, i: int, t: float) -> float:
        kind = self.kinds[i]
        a = self.right[i]
        if kind == EXPONENTIAL:
            return float(a * np.exp(self.rates[i] * (t - self.times[i])))
        if kind == CONSTANT:
            return float(a)
        w = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return float((1.0 - w) * a + w * self.left[i + 1])

    def _locate(self, t: float) -> int:
        return int(np.searchsorted(self.times, t, side="right")) - 1


def value_at(path: CadlagPath, t: float) -> float:
    """Right-continuous value; ``terminal_value`` at ``t = inf``."""
    t = float(t)
    if t < 0 or np.isnan(t):
        raise DomainError(f"time must be nonnegative, got {t}")
    if t == np.inf:
        return path.terminal_value
    if t > path.horizon:
        raise DomainError(f"time {t} lies beyond the path horizon {path.horizon}")
    i = path._locate(t)
    if path.times[i] == t:
        return float(path.right[i])
    return path._segment_value(i, t)


def left_limit_at(path: CadlagPath, t: float) -> float:
    """``L_{t-}``; undefined at 0 (the ``L_{0-} := 1`` convention lives elsewhere)."""
    t = float(t)
    if not t > 0:
        raise DomainError("left limits are taken at t > 0 only")
    if t > path.horizon:
        raise DomainError(f"time {t} lies beyond the path horizon {path.horizon}")
    i = int(np.searchsorted(path.times, t, side="left"))
    if i < path.n_samples and path.times[i] == t:
        return float(path.left[i])
    return path._segment_value(i - 1, t)


def jump_list(path: CadlagPath) -> list[tuple[float, float, float]]:
    idx = np.flatnonzero(path.is_jump)
    return [(float(path.times[i]), float(path.left[i]), float(path.right[i])) for i in idx]


class SupPath(CadlagPath):
    """Running supremum of a path; nondecreasing by construction."""

    def __post_init__(self):
        super().__post_init__()
        seq = np.empty(2 * self.n_samples)
        seq[0::2] = self.left
        seq[1::2] = self.right
        if np.any(np.diff(seq) < 0) or np.any((self.rates < 0)):
            raise StructuralError("a running supremum cannot decrease")


def running_sup(path: CadlagPath) -> SupPath:
    """Pointwise ``sup_{s <= t} L_s`` as a path on the same (refined) time grid.

    Increasing exponential segments that cross the previous sup get an extra
    sample at the crossing time so that every segment of the result is exact.
    Grid segments are interpolated linearly between refined sup values.
    """
    t, lv, rv = path.times, path.left, path.right
    out_t = [0.0]
    out_l = [float(rv[0])]
    out_r = [float(rv[0])]
    kinds: list[str] = []
    rates: list[float] = []
    sup = float(rv[0])
    bridge = path.bridge
    for i in range(path.n_samples - 1):
        a, b, t0, t1 = float(rv[i]), float(lv[i + 1]), float(t[i]), float(t[i + 1])
        kind = path.kinds[i]
        if kind == EXPONENTIAL and path.rates[i] > 0 and b > sup:
            rate = float(path.rates[i])
            if a < sup:
                tc = t0 + float(np.log(sup / a)) / rate
                if t0 < tc < t1:
                    kinds.append(CONSTANT)
                    rates.append(0.0)
                    out_t.append(tc)
                    out_l.append(sup)
                    out_r.append(sup)
                    # the crossing sample restarts the exponential from sup
                    a = sup
            kinds.append(EXPONENTIAL)
            rates.append(rate)
            sup = b
        elif kind == GRID:
            top = max(a, b)
            if bridge is not None and not np.isnan(bridge[i]):
                top = max(top, float(bridge[i]))
            kinds.append(GRID)
            rates.append(0.0)
            sup = max(sup, top)
        else:
            kinds.append(CONSTANT)
            rates.append(0.0)
        out_t.append(t1)
        out_l.append(sup)
        sup = max(sup, float(rv[i + 1]))
        out_r.append(sup)
    return SupPath(np.array(out_t), np.array(out_l), np.array(out_r), tuple(kinds),
                   np.array(rates), None, max(sup, path.terminal_value), dict(path.meta))


def sup_is_continuous(path: CadlagPath) -> bool:
    """No jump lands strictly above the running sup of the left limits."""
    jumps = np.flatnonzero(path.is_jump)
    if jumps.size == 0:
        return True
    sup = running_sup(path)
    # left limits of the sup at the jump times of the base path
    st = sup.times
    for i in jumps:
        j = int(np.searchsorted(st, path.times[i]))
        if path.right[i] > sup.left[j]:
            return False
    return True


def max_record(path: CadlagPath):
    """Per-path maximum summary; see :func:`maxmart.maxtime.max_record`."""
    from .maxtime import max_record as _max_record

    return _max_record(path)


# -- serialization ------------------------------------------------------------

CSV_COLUMNS = "time,left_value,right_value,is_jump"


def _rle(kinds: Sequence[str], rates: np.ndarray) -> list[list]:
    runs: list[list] = []
    for k, r in zip(kinds, rates.tolist()):
        if runs and runs[-1][0] == k and runs[-1][1] == r:
            runs[-1][2] += 1
        else:
            runs.append([k, r, 1])
    return runs


def _header(path: CadlagPath) -> dict:
    bridge = None
    if path.bridge is not None:
        bridge = [None if np.isnan(v) else v for v in path.bridge.tolist()]
    return {
        "horizon": path.horizon,
        "terminal_value": path.terminal_value,
        "interpolation": _rle(path.kinds, path.rates),
        "bridge_max": bridge,
        "meta": path.meta,
    }


def write_paths(paths: Iterable[CadlagPath], fh) -> None:
    """Stream paths as blocks of: JSON header line, CSV column line, sample rows.

    Floats use Python's shortest round-trip repr, so decoding is bit-exact.
    """
    for p in paths:
        fh.write(json.dumps(_header(p), sort_keys=True) + "\n")
        fh.write(CSV_COLUMNS + "\n")
        for t, lv, rv in zip(p.times.tolist(), p.left.tolist(), p.right.tolist()):
            fh.write(f"{t!r},{lv!r},{rv!r},{int(lv != rv)}\n")


def read_paths(fh) -> list[CadlagPath]:
    out: list[CadlagPath] = []
    header = None
    rows: list[tuple[float, float, float]] = []

    def flush():
        if header is None:
            return
        kinds: list[str] = []
        rates: list[float] = []
        for k, r, c in header["interpolation"]:
            kinds += [k] * c
            rates += [r] * c
        bridge = header.get("bridge_max")
        if bridge is not None:
            bridge = [np.nan if v is None else v for v in bridge]
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        p = CadlagPath(arr[:, 0], arr[:, 1], arr[:, 2], tuple(kinds), np.array(rates, dtype=float),
                       None if bridge is None else np.array(bridge, dtype=float),
                       header["terminal_value"], header.get("meta") or {})
        if p.horizon != header["horizon"]:
            raise StructuralError("path horizon does not match its header")
        out.append(p)

    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            flush()
            header = json.loads(line)
            rows = []
        elif line == CSV_COLUMNS:
            continue
        else:
            if header is None:
                raise StructuralError("sample row before any path header")
            t, lv, rv, jump = line.split(",")
            lv_f, rv_f = float(lv), float(rv)
            if int(jump) != int(lv_f != rv_f):
                raise StructuralError(f"is_jump flag inconsistent at t={t}")
            rows.append((float(t), lv_f, rv_f))
    flush()
    return out


def dumps(path: CadlagPath) -> str:
    buf = io.StringIO()
    write_paths([path], buf)
    return buf.getvalue()


def loads(text: str) -> CadlagPath:
    paths = read_paths(io.StringIO(text))
    if len(paths) != 1:
        raise StructuralError(f"expected one path, found {len(paths)}")
    return paths[0]

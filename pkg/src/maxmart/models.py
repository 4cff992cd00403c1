"""Generators for the three canonical processes.

* ``PoissonDeath``: ``L_t = exp(lam t)`` until an Exponential(lam) death time
  ``tau``, then 0.  Exact, no truncation.
* ``ContinuousExp``: ``log L = sigma W - sigma^2 t / 2`` sampled on a grid
  with exact Gaussian increments and optional Brownian-bridge maxima.
* ``PoissonUp``: ``S_t = exp(-lam t) 2^{N_t}`` with exact Poisson jump times.

The two open-ended models stop once ``L <= exp(-C) L*``.  By the conditional
maximal inequality, the chance that the stopped path would still have set a
new maximum is at most ``exp(-C)``; the bound is attached to the path as a
stop certificate in ``path.meta``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import multiprocessing as mp
from typing import Sequence, Union

import numpy as np

from . import _kernels as K
from .errors import ParameterError
from .paths import CONSTANT, EXPONENTIAL, GRID, CadlagPath, left_limit_at, running_sup
from .rng import Seed

MIN_STOP_GAP = 5.0
DEFAULT_STOP_GAP = 9.0
MAX_STEPS = 10**9
MAX_JUMPS = 10**7


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise ParameterError(f"{name} must be a finite positive number, got {value}")
    return value


def _stop_gap(value: float) -> float:
    value = _positive("stop_gap_C", value)
    if value < MIN_STOP_GAP:
        raise ParameterError(f"stop_gap_C must be >= {MIN_STOP_GAP}, got {value}")
    return value


@dataclass(frozen=True)
class PoissonDeath:
    lam: float = 1.0
    name = "PoissonDeath"

    def __post_init__(self):
        object.__setattr__(self, "lam", _positive("lambda", self.lam))


@dataclass(frozen=True)
class ContinuousExp:
    sigma: float = 1.0
    dt: float = 1e-3
    stop_gap_C: float = DEFAULT_STOP_GAP
    bridge_max: bool = True
    name = "ContinuousExp"

    def __post_init__(self):
        object.__setattr__(self, "sigma", _positive("sigma", self.sigma))
        object.__setattr__(self, "dt", _positive("dt", self.dt))
        object.__setattr__(self, "stop_gap_C", _stop_gap(self.stop_gap_C))
        object.__setattr__(self, "bridge_max", bool(self.bridge_max))


@dataclass(frozen=True)
class PoissonUp:
    lam: float = 1.0
    stop_gap_C: float = DEFAULT_STOP_GAP
    name = "PoissonUp"

    def __post_init__(self):
        object.__setattr__(self, "lam", _positive("lambda", self.lam))
        object.__setattr__(self, "stop_gap_C", _stop_gap(self.stop_gap_C))


ModelSpec = Union[PoissonDeath, ContinuousExp, PoissonUp]
MODELS = {cls.name: cls for cls in (PoissonDeath, ContinuousExp, PoissonUp)}
# class M0: continuous running sup and L_inf = 0
M0_MODELS = (PoissonDeath, ContinuousExp)


def is_m0(spec: ModelSpec) -> bool:
    return isinstance(spec, M0_MODELS)


def model_from_dict(d: dict) -> ModelSpec:
    """``{"variant": "PoissonDeath", "lambda": 1.0}`` and friends."""
    d = dict(d)
    variant = d.pop("variant", None)
    if variant not in MODELS:
        raise ParameterError(f"unknown model variant {variant!r}; expected one of {sorted(MODELS)}")
    if "lambda" in d:
        d["lam"] = d.pop("lambda")
    if "C" in d:
        d["stop_gap_C"] = d.pop("C")
    if "bridge" in d:
        d["bridge_max"] = d.pop("bridge")
    try:
        return MODELS[variant](**d)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {variant}: {exc}") from None


def model_to_dict(spec: ModelSpec) -> dict:
    d = asdict(spec)
    if "lam" in d:
        d["lambda"] = d.pop("lam")
    return {"variant": spec.name, **d}


def _as_seed(seed) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(int(seed))


def _certificate(gap: float, stopped: bool) -> dict:
    return {"stopped": bool(stopped), "stop_gap_C": gap, "bias_bound": math.exp(-gap)}


# -- single paths -------------------------------------------------------------


def simulate_poisson_death(lam: float, seed) -> CadlagPath:
    lam = _positive("lambda", lam)
    k0, k1 = _as_seed(seed).key
    tau = K.exp_clock(k0, k1, 0, lam)
    return poisson_death_path(lam, tau)


def poisson_death_path(lam: float, tau: float) -> CadlagPath:
    """The Poisson-death path with a given death time."""
    peak = math.exp(lam * tau)
    return CadlagPath.from_samples([(0.0, 1.0, 1.0), (tau, peak, 0.0)], EXPONENTIAL, lam,
                                   meta={"model": PoissonDeath.name, "lambda": lam})


def simulate_continuous_exp(sigma: float, dt: float, C: float = DEFAULT_STOP_GAP,
                            bridge: bool = True, seed=0) -> CadlagPath:
    spec = ContinuousExp(sigma, dt, C, bridge)
    k0, k1 = _as_seed(seed).key
    xs, bm, stopped = K.contexp_record(k0, k1, 0.0, 0.0, spec.sigma, spec.dt, spec.stop_gap_C,
                                       spec.bridge_max, np.inf, MAX_STEPS)
    return _grid_path(spec, xs, bm, stopped)


def _grid_path(spec: ContinuousExp, xs: np.ndarray, bm: np.ndarray, stopped: bool,
               t0: float = 0.0) -> CadlagPath:
    n = xs.shape[0]
    times = t0 + np.arange(n) * spec.dt
    vals = np.exp(xs)
    meta = {"model": ContinuousExp.name, "sigma": spec.sigma, "dt": spec.dt,
            **_certificate(spec.stop_gap_C, stopped)}
    return CadlagPath(times, vals, vals, (GRID,) * (n - 1), np.zeros(n - 1),
                      np.exp(bm) if spec.bridge_max else None, 0.0, meta)


def simulate_poisson_up(lam: float, C: float = DEFAULT_STOP_GAP, seed=0) -> CadlagPath:
    spec = PoissonUp(lam, C)
    k0, k1 = _as_seed(seed).key
    jumps, t_stop, stopped = K.poisson_up_record(k0, k1, spec.lam, spec.stop_gap_C, np.inf,
                                                 MAX_JUMPS)
    return poisson_up_path(spec.lam, jumps, t_stop, stopped, spec.stop_gap_C)


def poisson_up_path(lam: float, jumps: Sequence[float], t_stop: float, stopped: bool = True,
                    gap: float = DEFAULT_STOP_GAP) -> CadlagPath:
    """``exp(-lam t) 2^{N_t}`` with the given jump times, sampled up to ``t_stop``."""
    samples = [(0.0, 1.0, 1.0)]
    for n, t in enumerate(jumps):
        base = math.exp(-lam * t)
        samples.append((t, math.ldexp(base, n), math.ldexp(base, n + 1)))
    if not len(jumps) or t_stop > jumps[-1]:
        v = math.ldexp(math.exp(-lam * t_stop), len(jumps))
        samples.append((t_stop, v, v))
    meta = {"model": PoissonUp.name, "lambda": lam, **_certificate(gap, stopped)}
    return CadlagPath.from_samples(samples, EXPONENTIAL, -lam, meta=meta)


def simulate(spec: ModelSpec, seed) -> CadlagPath:
    if isinstance(spec, PoissonDeath):
        return simulate_poisson_death(spec.lam, seed)
    if isinstance(spec, ContinuousExp):
        return simulate_continuous_exp(spec.sigma, spec.dt, spec.stop_gap_C, spec.bridge_max, seed)
    if isinstance(spec, PoissonUp):
        return simulate_poisson_up(spec.lam, spec.stop_gap_C, seed)
    raise ParameterError(f"not a model spec: {spec!r}")


def kardaras_condition(path: CadlagPath, tol: float = 0.0) -> bool:
    """No jump happens while the path sits at its running sup (``L_- = L*_-``)."""
    jumps = np.flatnonzero(path.is_jump)
    if jumps.size == 0:
        return True
    sup = running_sup(path)
    for i in jumps:
        t = float(path.times[i])
        if abs(left_limit_at(path, t) - left_limit_at(sup, t)) <= tol:
            return False
    return True


# -- batches ------------------------------------------------------------------


def resolve_jobs(jobs: int | None = None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("MAXMART_JOBS", "1") or 1)
    if jobs < 1:
        raise ParameterError(f"jobs must be >= 1, got {jobs}")
    return int(jobs)


def batch_simulate(spec: ModelSpec, n: int, master_seed: int) -> list[CadlagPath]:
    """``n`` full paths; path ``i`` uses ``Seed(master_seed, i)``."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    return [simulate(spec, Seed(master_seed, i)) for i in range(n)]


@dataclass
class BatchRecords:
    """Column-wise per-path summaries of a batch, in stream order.

    ``rho_left`` is NaN for PoissonUp, whose time of maximum is only defined
    through right values.  ``tau_x``/``value_tau_x`` are indexed by strike and
    ``checkpoint_values`` by checkpoint time.
    """

    spec: ModelSpec
    master_seed: int
    rho_left: np.ndarray
    rho_right: np.ndarray
    l_star_inf: np.ndarray
    left_at_rho: np.ndarray
    right_at_rho: np.ndarray
    sup_before_rho: np.ndarray
    n_jumps: np.ndarray
    jumps_at_sup: np.ndarray
    jumps_below_sup: np.ndarray
    horizon: np.ndarray
    stopped: np.ndarray
    strikes: np.ndarray
    tau_x: np.ndarray
    value_tau_x: np.ndarray
    checkpoints: np.ndarray
    checkpoint_values: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.l_star_inf.shape[0])

    @property
    def jumped_at_max(self) -> np.ndarray:
        return self.left_at_rho != self.right_at_rho

    @property
    def max_at_zero(self) -> np.ndarray:
        return self.rho_right == 0.0

    @property
    def truncated_before_jump(self) -> np.ndarray:
        return self.stopped & (self.n_jumps == 0) & isinstance(self.spec, PoissonUp)

    @property
    def kardaras(self) -> np.ndarray:
        return self.jumps_at_sup == 0


def _chunk(spec: ModelSpec, master: int, start: int, stop: int, strikes: np.ndarray,
           checkpoints: np.ndarray) -> dict:
    m = np.uint64(master)
    n = stop - start
    nk, nc = strikes.shape[0], checkpoints.shape[0]
    if isinstance(spec, PoissonDeath):
        tau = K.poisson_death_taus(m, start, stop, spec.lam)
        # scalar exp so batch rows equal the single-path values bit for bit
        peak = np.fromiter((math.exp(v) for v in spec.lam * tau), float, n)
        tau_x = np.full((n, nk), np.inf)
        val = np.zeros((n, nk))
        for j, x in enumerate(strikes):
            hit = peak > x
            tx = np.log(x) / spec.lam
            tau_x[hit, j] = tx
            val[hit, j] = np.exp(spec.lam * tx)
        ck = np.where(checkpoints[None, :] < tau[:, None],
                      np.exp(spec.lam * np.minimum(checkpoints[None, :], tau[:, None])), 0.0)
        return dict(rho_left=tau, rho_right=tau.copy(), l_star_inf=peak, left_at_rho=peak.copy(),
                    right_at_rho=np.zeros(n), sup_before_rho=peak.copy(),
                    n_jumps=np.ones(n, dtype=np.int64), jumps_at_sup=np.ones(n, dtype=np.int64),
                    jumps_below_sup=np.zeros(n, dtype=np.int64), horizon=tau.copy(),
                    stopped=np.zeros(n, dtype=bool), tau_x=tau_x, value_tau_x=val,
                    checkpoint_values=ck)
    if isinstance(spec, ContinuousExp):
        rho, xs, xr, xb, hz, st, tau_x, ck = K.contexp_batch(
            m, start, stop, spec.sigma, spec.dt, spec.stop_gap_C, spec.bridge_max,
            np.log(strikes), checkpoints, MAX_STEPS)
        val = np.where(np.isfinite(tau_x), strikes[None, :], 0.0)
        peak = np.exp(xs)
        at = np.exp(xr)
        return dict(rho_left=rho, rho_right=rho.copy(), l_star_inf=peak, left_at_rho=at,
                    right_at_rho=at.copy(), sup_before_rho=np.exp(xb),
                    n_jumps=np.zeros(n, dtype=np.int64), jumps_at_sup=np.zeros(n, dtype=np.int64),
                    jumps_below_sup=np.zeros(n, dtype=np.int64), horizon=hz, stopped=st,
                    tau_x=tau_x, value_tau_x=val, checkpoint_values=ck)
    if isinstance(spec, PoissonUp):
        rho, sup, left, sb, nj, ats, below, hz, tau_x, val, ck = K.poisson_up_batch(
            m, start, stop, spec.lam, spec.stop_gap_C, strikes, checkpoints, MAX_JUMPS)
        return dict(rho_left=np.full(n, np.nan), rho_right=rho, l_star_inf=sup, left_at_rho=left,
                    right_at_rho=sup.copy(), sup_before_rho=sb, n_jumps=nj, jumps_at_sup=ats,
                    jumps_below_sup=below, horizon=hz, stopped=np.ones(n, dtype=bool),
                    tau_x=tau_x, value_tau_x=val, checkpoint_values=ck)
    raise ParameterError(f"not a model spec: {spec!r}")


def _chunk_star(args):
    return _chunk(*args)


def batch_records(spec: ModelSpec, n: int, master_seed: int, *, strikes: Sequence[float] = (),
                  checkpoints: Sequence[float] = (), jobs: int | None = None) -> BatchRecords:
    """Per-path summaries of ``n`` paths without materializing them.

    Stream ``i`` is simulated identically whatever ``jobs`` is; chunks are
    concatenated in stream order.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    jobs = resolve_jobs(jobs)
    strikes = np.sort(np.asarray(strikes, dtype=float).reshape(-1))
    checkpoints = np.sort(np.asarray(checkpoints, dtype=float).reshape(-1))
    if np.any(strikes <= 1):
        raise ParameterError("strikes must be > 1")
    master = int(master_seed) & ((1 << 64) - 1)
    if jobs == 1 or n < 2 * jobs:
        parts = [_chunk(spec, master, 0, n, strikes, checkpoints)]
    else:
        bounds = np.linspace(0, n, jobs + 1).astype(int)
        tasks = [(spec, master, int(a), int(b), strikes, checkpoints)
                 for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(jobs, mp_context=mp.get_context("fork")) as ex:
            parts = list(ex.map(_chunk_star, tasks))
    cols = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    return BatchRecords(spec=spec, master_seed=master, strikes=strikes, checkpoints=checkpoints,
                        **cols)

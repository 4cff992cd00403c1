"""Nested Monte Carlo estimates of ``Z_t = P[rho > t | F_t]``.

All three models are Markov in ``(current, runsup, alive)``, so conditioning
on the past reduces to restarting the model from that state.  A state's
continuation ``j`` uses stream ``j`` of a master derived from the state's own
seed, which keeps every estimate reproducible in isolation.

The event ``{rho > t}`` is ``{sup_{s >= t} L_s >= L*_t}``; the strict version
with ``>`` is estimated alongside.
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import ParameterError, StructuralError
from .maxtime import max_record
from .models import (MAX_JUMPS, MAX_STEPS, ContinuousExp, ModelSpec, PoissonDeath, PoissonUp,
                     is_m0, resolve_jobs)
from .paths import CadlagPath, running_sup, value_at
from .rng import Seed, derive_master
from .stats import proportion_se

MIN_INNER = 100
# label of the inner-continuation family in derive_master
_INNER = 1
_ADDITIVE = 2

REPORT_COLUMNS = ["t", "current", "runsup", "z_hat", "stderr", "z_ratio", "violation_flag"]


@dataclass(frozen=True)
class MarkovState:
    model: ModelSpec
    t: float
    current: float
    runsup: float
    alive: bool = True

    def __post_init__(self):
        if not self.t >= 0:
            raise ParameterError(f"state time must be >= 0, got {self.t}")
        if not (self.current >= 0 and math.isfinite(self.runsup)):
            raise ParameterError("state values must be finite and nonnegative")
        if self.runsup < 1:
            raise ParameterError(f"runsup must be >= 1, got {self.runsup}")
        if self.current > self.runsup:
            raise ParameterError(f"current {self.current} exceeds runsup {self.runsup}")
        if isinstance(self.model, PoissonDeath):
            if (self.current == 0) == self.alive:
                raise ParameterError("PoissonDeath state: current = 0 exactly when dead")
        elif self.current == 0:
            raise ParameterError(f"{self.model.name} never reaches 0 in finite time")


@dataclass(frozen=True)
class AzemaEstimate:
    state: MarkovState
    z_hat: float
    stderr: float
    n_inner: int
    z_ratio: float
    z_hat_strict: float = math.nan


def z_ratio(state: MarkovState) -> float:
    if state.current == 0:
        return 0.0
    return state.current / state.runsup


def _check_inner(n_inner: int) -> int:
    if n_inner < MIN_INNER:
        raise ParameterError(f"n_inner must be >= {MIN_INNER}, got {n_inner}")
    return int(n_inner)


def _inner_master(seed: Seed, label: int = _INNER) -> np.uint64:
    return np.uint64(derive_master(seed.master, seed.stream, label))


def hit_counts(state: MarkovState, n_inner: int, seed: Seed) -> tuple[int, int]:
    """Continuations whose future sup is ``>=`` / ``>`` the state's runsup."""
    spec = state.model
    m = _inner_master(seed)
    if isinstance(spec, PoissonDeath):
        if not state.alive:
            return 0, 0
        # every continuation keeps growing until its death clock rings
        taus = K.poisson_death_taus(m, 0, n_inner, spec.lam)
        return n_inner, int(np.count_nonzero(taus > 0))
    if isinstance(spec, ContinuousExp):
        # scale invariance: restart from current / runsup below level 1
        x0 = math.log(state.current / state.runsup)
        ge, gt = K.contexp_hit_counts(m, n_inner, x0, 0.0, spec.sigma, spec.dt, spec.stop_gap_C,
                                      spec.bridge_max, MAX_STEPS)
        return int(ge), int(gt)
    if isinstance(spec, PoissonUp):
        ge, gt = K.poisson_up_hit_counts(m, n_inner, state.current, state.runsup, spec.lam,
                                         spec.stop_gap_C, MAX_JUMPS)
        return int(ge), int(gt)
    raise ParameterError(f"not a model spec: {spec!r}")


def nested_z_estimate(state: MarkovState, n_inner: int, seed: Seed) -> AzemaEstimate:
    n_inner = _check_inner(n_inner)
    ge, gt = hit_counts(state, n_inner, seed)
    z = ge / n_inner
    return AzemaEstimate(state, z, proportion_se(z, n_inner), n_inner, z_ratio(state),
                         gt / n_inner)


# -- outer states ---------------------------------------------------------------


def simulate_state(spec: ModelSpec, t: float, seed: Seed) -> MarkovState:
    """State at time ``t`` of the path driven by ``seed`` (no stop rule before ``t``).

    Grid models report the state at the first grid time ``>= t``.
    """
    if not t > 0:
        raise ParameterError(f"t must be > 0, got {t}")
    k0, k1 = seed.key
    if isinstance(spec, PoissonDeath):
        tau = K.exp_clock(k0, k1, 0, spec.lam)
        if tau > t:
            v = math.exp(spec.lam * t)
            return MarkovState(spec, t, v, v, True)
        return MarkovState(spec, t, 0.0, math.exp(spec.lam * tau), False)
    if isinstance(spec, ContinuousExp):
        steps = max(1, math.ceil(t / spec.dt - 1e-9))
        xs, bm, _ = K.contexp_record(k0, k1, 0.0, 0.0, spec.sigma, spec.dt, np.inf,
                                     spec.bridge_max, steps * spec.dt - 0.5 * spec.dt, MAX_STEPS)
        top = float(xs.max())
        if spec.bridge_max and bm.size:
            top = max(top, float(np.nanmax(bm)))
        return MarkovState(spec, (xs.size - 1) * spec.dt, math.exp(xs[-1]), math.exp(top))
    if isinstance(spec, PoissonUp):
        jumps, _, _ = K.poisson_up_record(k0, k1, spec.lam, np.inf, t, MAX_JUMPS)
        runsup = 1.0
        for n, s in enumerate(jumps, start=1):
            runsup = max(runsup, K.up_value(n, s, spec.lam))
        current = K.up_value(len(jumps), t, spec.lam)
        return MarkovState(spec, t, current, max(runsup, current))
    raise ParameterError(f"not a model spec: {spec!r}")


def sample_states(spec: ModelSpec, t: float, n: int, master_seed: int) -> list[MarkovState]:
    return [simulate_state(spec, t, Seed(master_seed, i)) for i in range(n)]


def _estimate_task(args):
    state, n_inner, seed = args
    return nested_z_estimate(state, n_inner, seed)


def estimate_states(states: Sequence[MarkovState], n_inner: int, master_seed: int,
                    jobs: int | None = None) -> list[AzemaEstimate]:
    """Nested estimates for ``states``; state ``i`` uses ``Seed(master_seed, i)``."""
    _check_inner(n_inner)
    tasks = [(s, n_inner, Seed(master_seed, i)) for i, s in enumerate(states)]
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(tasks) < 2:
        return [_estimate_task(a) for a in tasks]
    with ProcessPoolExecutor(jobs, mp_context=mp.get_context("fork")) as ex:
        return list(ex.map(_estimate_task, tasks))


def tolerance(est: AzemaEstimate, k_sigma: float = 3.0) -> float:
    """``k_sigma`` binomial errors plus the stop-rule bias of the continuations.

    The error uses the larger of the plug-in standard error and the one
    implied by ``z_ratio``, so a degenerate estimate of 0 or 1 is not
    treated as error-free.
    """
    n = est.n_inner
    se = max(est.stderr, proportion_se(est.z_ratio, n))
    gap = getattr(est.state.model, "stop_gap_C", None)
    bias = 2 * math.exp(-gap) if gap is not None else 0.0
    return k_sigma * se + bias


def violates_upper(est: AzemaEstimate, k_sigma: float = 3.0) -> bool:
    """``z_hat`` exceeds ``z_ratio`` by more than the tolerance."""
    return est.z_hat > est.z_ratio + tolerance(est, k_sigma)


def matches_ratio(est: AzemaEstimate, k_sigma: float = 3.0, strict: bool = False) -> bool:
    z = est.z_hat_strict if strict else est.z_hat
    return abs(z - est.z_ratio) <= tolerance(est, k_sigma)


def write_report(estimates: Sequence[AzemaEstimate], fh, k_sigma: float = 3.0) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for e in estimates:
        s = e.state
        w.writerow([repr(s.t), repr(s.current), repr(s.runsup), repr(e.z_hat), repr(e.stderr),
                    repr(e.z_ratio), int(violates_upper(e, k_sigma))])


# -- checks -----------------------------------------------------------------------


@dataclass
class ConditionalDoobReport:
    model: ModelSpec
    t: float
    estimates: list[AzemaEstimate]
    violations: int
    equality_fraction: float
    strict_equality_fraction: float
    m0: bool

    @property
    def n_states(self) -> int:
        return len(self.estimates)


def conditional_doob_check(model: ModelSpec, t: float, n_outer: int, n_inner: int, seed: Seed,
                           k_sigma: float = 3.0, jobs: int | None = None) -> ConditionalDoobReport:
    """Conditional maximal inequality at the deterministic time ``t``.

    Counts states where ``P[sup_{s>=t} L_s >= L*_t | state]`` exceeds
    ``L_t / L*_t`` beyond tolerance; for class-M0 models also reports the
    fraction of states where equality holds, for ``>=`` and for ``>``.
    """
    if n_outer < MIN_INNER:
        raise ParameterError(f"n_outer must be >= {MIN_INNER}, got {n_outer}")
    _check_inner(n_inner)
    outer = derive_master(seed.master, seed.stream, _INNER)
    states = sample_states(model, t, n_outer, outer)
    est = estimate_states(states, n_inner, outer, jobs)
    viol = sum(violates_upper(e, k_sigma) for e in est)
    m0 = is_m0(model)
    eq = float(np.mean([matches_ratio(e, k_sigma) for e in est])) if m0 else math.nan
    eq_strict = (float(np.mean([matches_ratio(e, k_sigma, strict=True) for e in est]))
                 if m0 else math.nan)
    return ConditionalDoobReport(model, t, est, int(viol), eq, eq_strict, m0)


@dataclass
class ZBeforeRho:
    eps: float
    n_paths: int
    skipped: np.ndarray
    ratios: np.ndarray
    z_hats: np.ndarray
    jump_ratios: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def mean_ratio(self) -> float:
        r = self.ratios[~self.skipped]
        return float(r.mean()) if r.size else math.nan

    @property
    def mean_z_hat(self) -> float:
        z = self.z_hats[~self.skipped]
        return float(z.mean()) if z.size and not np.isnan(z).all() else math.nan

    @property
    def fraction_below_one(self) -> float:
        """Share of paths (with a jump setting the max) where ``S_{rho-} < S*_{rho-}``."""
        r = self.jump_ratios
        return float(np.mean(r < 1.0)) if r.size else math.nan


def _state_at(path: CadlagPath, model: ModelSpec, t: float) -> MarkovState:
    cur = value_at(path, t)
    sup = value_at(running_sup(path), t)
    return MarkovState(model, t, cur, max(sup, cur), cur > 0)


def z_before_rho(paths: Sequence[CadlagPath], model: ModelSpec, eps: float, n_inner: int,
                 seed: Seed) -> ZBeforeRho:
    """Probe ``Z`` just before the time of maximum, at ``rho - eps`` on each path.

    Paths with ``rho < eps`` are skipped and flagged.  ``n_inner = 0`` skips
    the nested estimates and keeps only the pathwise ratios.  ``jump_ratios``
    holds ``L_{rho-} / L*_{rho-}`` on paths whose maximum is set by a jump.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be > 0, got {eps}")
    if n_inner:
        _check_inner(n_inner)
    if not paths:
        raise StructuralError("no paths")
    n = len(paths)
    skipped = np.zeros(n, dtype=bool)
    ratios = np.full(n, np.nan)
    z_hats = np.full(n, np.nan)
    jump_ratios = []
    inner = derive_master(seed.master, seed.stream, _INNER)
    for i, path in enumerate(paths):
        rec = max_record(path)
        if rec.jumped_at_max and rec.right_at_rho >= rec.sup_before_rho and not rec.max_at_zero:
            jump_ratios.append(rec.left_at_rho / rec.sup_before_rho)
        rho = rec.rho_right if isinstance(model, PoissonUp) else rec.rho_left
        t = rho - eps
        if rec.max_at_zero or t < 0:
            skipped[i] = True
            continue
        state = _state_at(path, model, t)
        ratios[i] = z_ratio(state)
        if n_inner:
            z_hats[i] = nested_z_estimate(state, n_inner, Seed(inner, i)).z_hat
    return ZBeforeRho(eps, n, skipped, ratios, z_hats, np.asarray(jump_ratios))


@dataclass
class AdditiveEstimate:
    state: MarkovState
    estimate: float
    stderr: float
    z_ratio: float
    closed_form: float = math.nan

    @property
    def agrees(self) -> bool:
        return abs(self.estimate - self.z_ratio) <= 3 * self.stderr + 1e-12


def _future_log_sups(state: MarkovState, n: int, master: np.uint64) -> np.ndarray:
    """Samples of ``log L*_inf - log L*_t`` given the state."""
    spec = state.model
    if isinstance(spec, PoissonDeath):
        if not state.alive:
            return np.zeros(n)
        return spec.lam * K.poisson_death_taus(master, 0, n, spec.lam)
    if isinstance(spec, ContinuousExp):
        x0 = math.log(state.current / state.runsup)
        return K.contexp_future_logsups(master, n, x0, 0.0, spec.sigma, spec.dt, spec.stop_gap_C,
                                        spec.bridge_max, MAX_STEPS)
    if isinstance(spec, PoissonUp):
        return K.poisson_up_future_logsups(master, n, state.current, state.runsup, spec.lam,
                                           spec.stop_gap_C, MAX_JUMPS) - math.log(state.runsup)
    raise ParameterError(f"not a model spec: {spec!r}")


def additive_estimate(state: MarkovState, n: int, seed: Seed) -> AdditiveEstimate:
    """``E[log L*_inf | state] - log L*_t`` by inner simulation."""
    if n < 1000:
        raise ParameterError(f"n must be >= 1000, got {n}")
    x = _future_log_sups(state, n, _inner_master(seed, _ADDITIVE))
    se = float(x.std(ddof=1) / math.sqrt(n))
    closed = math.nan
    if isinstance(state.model, PoissonDeath):
        # memorylessness: E[lam tau | tau > t] - lam t = 1
        closed = 1.0 if state.alive else 0.0
    return AdditiveEstimate(state, float(x.mean()), se, z_ratio(state), closed)


def additive_check(model: ModelSpec, t: float, n: int, seed: Seed,
                   n_states: int = 5) -> list[AdditiveEstimate]:
    """Compare ``E[log L*_inf | F_t] - log L*_t`` with ``L_t / L*_t`` at random states."""
    outer = derive_master(seed.master, seed.stream, _ADDITIVE)
    states = sample_states(model, t, n_states, outer)
    return [additive_estimate(s, n, Seed(outer, i)) for i, s in enumerate(states)]

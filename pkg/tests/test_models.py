import math

import numpy as np
import pytest

from maxmart import _kernels as K
from maxmart.errors import ParameterError
from maxmart.maxtime import max_record, records_from_batch
from maxmart.models import (ContinuousExp, PoissonDeath, PoissonUp, batch_records,
                            batch_simulate, kardaras_condition, model_from_dict, model_to_dict,
                            poisson_up_path, simulate, simulate_continuous_exp,
                            simulate_poisson_death, simulate_poisson_up)
from maxmart.paths import jump_list, left_limit_at, running_sup, sup_is_continuous
from maxmart.rng import Seed
from maxmart.stats import mean_ci

SPECS = [PoissonDeath(1.0), ContinuousExp(1.0, 1e-2), ContinuousExp(0.7, 1e-2, bridge_max=False),
         PoissonUp(1.0)]


def test_poisson_death_path_shape():
    p = simulate_poisson_death(1.0, Seed(1, 0))
    tau = p.horizon
    assert p.samples() == [(0.0, 1.0, 1.0), (tau, math.exp(tau), 0.0)]
    assert p.terminal_value == 0.0


def test_poisson_up_closed_form_samples():
    p = poisson_up_path(1.0, [0.3], 1.0)
    s = p.samples()
    assert s[0] == (0.0, 1.0, 1.0)
    assert s[1][0] == 0.3
    assert s[1][1] == pytest.approx(math.exp(-0.3), rel=1e-15)
    assert s[1][2] == pytest.approx(2 * math.exp(-0.3), rel=1e-15)


def test_poisson_up_stop_rule():
    p = simulate_poisson_up(1.0, 9.0, Seed(8, 3))
    sup = running_sup(p)
    assert p.left[-1] == pytest.approx(math.exp(-9.0) * sup.left[-1], rel=1e-12)
    assert p.meta["stopped"] and p.meta["bias_bound"] == math.exp(-9.0)


def test_bridge_max_degenerate_uniform():
    assert K.bridge_max(0.0, 0.0, 1e-3, 1.0) == 0.0


def test_bridge_max_matches_fine_grid_oracle():
    # brute force: maxima of finely discretized Brownian bridges from a to b
    rng = np.random.default_rng(12345)
    a, b, h = 0.0, 0.05, 0.01
    m, n = 4000, 4000
    incr = rng.normal(0.0, math.sqrt(h / m), size=(n, m))
    w = np.cumsum(incr, axis=1)
    s = np.linspace(1.0 / m, 1.0, m)
    bridge = a + w - s * (w[:, -1:] - (b - a))
    fine = np.maximum(bridge.max(axis=1), a)
    u = rng.random(n)
    sampled = np.array([K.bridge_max(a, b, h, x) for x in 1.0 - u])
    # exact law P[M >= y] = exp(-2 (y - a)(y - b) / h); fine grid misses O(sqrt(h / m))
    for y in (0.06, 0.08, 0.1, 0.12):
        exact = math.exp(-2 * (y - a) * (y - b) / h)
        se = math.sqrt(exact * (1 - exact) / n)
        assert abs(np.mean(sampled >= y) - exact) < 4 * se
        assert abs(np.mean(fine >= y) - exact) < 4 * se + 0.02


def test_continuous_exp_increments_are_exact_gaussians():
    p = simulate_continuous_exp(1.0, 1e-2, C=30.0, seed=Seed(11, 0))
    inc = np.diff(np.log(p.left))
    assert inc.size > 1000
    assert abs(inc.mean() + 0.5e-2) < 4 * 0.1 / math.sqrt(inc.size)
    assert inc.std() == pytest.approx(0.1, rel=0.05)


def test_continuous_exp_stop_rule():
    p = simulate_continuous_exp(1.0, 1e-2, C=5.0, seed=Seed(2, 2))
    sup = running_sup(p)
    assert math.log(p.left[-1]) <= math.log(sup.left[-1]) - 5.0
    assert math.log(p.left[-2]) > math.log(sup.left[-2]) - 5.0


@pytest.mark.parametrize("bad", [
    lambda: PoissonDeath(0.0), lambda: ContinuousExp(-1.0), lambda: ContinuousExp(1.0, 0.0),
    lambda: ContinuousExp(1.0, 1e-3, 4.0), lambda: PoissonUp(1.0, 1.0),
    lambda: PoissonUp(float("nan")),
])
def test_parameter_errors(bad):
    with pytest.raises(ParameterError):
        bad()


def test_model_dict_round_trip():
    for spec in SPECS:
        assert model_from_dict(model_to_dict(spec)) == spec
    assert model_from_dict({"variant": "PoissonUp", "lambda": 2.0, "C": 7}) == PoissonUp(2.0, 7.0)
    with pytest.raises(ParameterError):
        model_from_dict({"variant": "Brownian"})
    with pytest.raises(ParameterError):
        model_from_dict({"variant": "PoissonDeath", "rate": 1.0})


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_batch_rows_equal_single_paths(spec):
    batch = batch_records(spec, 60, 77)
    rows = records_from_batch(batch)
    for i in range(60):
        assert repr(max_record(simulate(spec, Seed(77, i)))) == repr(rows[i])


@pytest.mark.parametrize("spec", SPECS, ids=str)
def test_batch_independent_of_jobs(spec):
    a = batch_records(spec, 400, 5, strikes=[2.0, 4.0], checkpoints=[0.5], jobs=1)
    b = batch_records(spec, 400, 5, strikes=[2.0, 4.0], checkpoints=[0.5], jobs=3)
    for name in ("rho_left", "rho_right", "l_star_inf", "left_at_rho", "tau_x", "value_tau_x",
                 "checkpoint_values", "n_jumps"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_batch_simulate_is_deterministic():
    a = batch_simulate(PoissonUp(1.0), 2, 9)
    b = batch_simulate(PoissonUp(1.0), 2, 9)
    for p, q in zip(a, b):
        assert p.samples() == q.samples()
    with pytest.raises(ParameterError):
        batch_simulate(PoissonUp(1.0), 0, 9)


def test_poisson_death_tau_mean():
    b = batch_records(PoissonDeath(1.0), 200_000, 1)
    mean, half = mean_ci(b.rho_left, 3.0)
    assert abs(mean - 1.0) <= half


@pytest.mark.parametrize("spec", [PoissonDeath(1.0), ContinuousExp(1.0, 1e-2), PoissonUp(1.0)],
                         ids=str)
def test_martingale_property_at_fixed_time(spec):
    b = batch_records(spec, 100_000, 3, checkpoints=[0.5])
    mean, half = mean_ci(b.checkpoint_values[:, 0], 3.0)
    assert abs(mean - 1.0) <= half


def test_checkpoint_values_match_path_values():
    from maxmart.paths import value_at
    spec = PoissonUp(1.0)
    b = batch_records(spec, 50, 21, checkpoints=[0.25, 1.0])
    for i in range(50):
        p = simulate(spec, Seed(21, i))
        for j, t in enumerate([0.25, 1.0]):
            v = value_at(p, t) if t <= p.horizon else 0.0
            assert b.checkpoint_values[i, j] == pytest.approx(v, rel=1e-12)


def test_kardaras_condition_per_model():
    assert not kardaras_condition(simulate_poisson_death(1.0, Seed(0, 1)))
    assert kardaras_condition(simulate_continuous_exp(1.0, 1e-2, seed=Seed(0, 1)))
    for i in range(20):
        assert kardaras_condition(simulate_poisson_up(1.0, seed=Seed(0, i)))


def test_poisson_up_jumps_below_running_sup():
    for i in range(50):
        p = simulate_poisson_up(1.0, seed=Seed(6, i))
        sup = running_sup(p)
        for t, lv, rv in jump_list(p):
            assert lv < left_limit_at(sup, t)
        # the sup moves continuously only if no jump ever lifts it above 1
        assert sup_is_continuous(p) == (max_record(p).l_star_inf == 1.0)

import io
import math

import numpy as np
import pytest

from maxmart.decomposition import (compensator_poisson_death, d_at_rho_samples, d_process,
                                   log_lstar_mean, stieltjes_a, write_decomposition)
from maxmart.errors import ParameterError, StructuralError
from maxmart.maxtime import MaxRecord, max_record
from maxmart.models import (PoissonDeath, batch_records, poisson_death_path,
                            simulate_continuous_exp, simulate_poisson_up)
from maxmart.paths import CadlagPath, running_sup, value_at
from maxmart.rng import Seed
from maxmart.stats import ks_uniform


def test_d_process_poisson_death():
    d = d_process(poisson_death_path(1.0, 0.7))
    for t in (0.0, 0.3, 0.7):
        assert value_at(d, t) == pytest.approx(math.exp(-min(t, 0.7)), rel=1e-14)
    assert d.right[0] == 1.0


def test_d_process_constant_and_grid():
    d = d_process(CadlagPath.constant(1.0, 2.0))
    assert np.all(d.left == 1.0) and np.all(d.right == 1.0)
    p = simulate_continuous_exp(1.0, 1e-3, seed=Seed(1, 1))
    d = d_process(p)
    sup = running_sup(p)
    assert np.all(np.abs(d.right * sup.right - 1.0) <= 2.3e-16)
    assert np.all(np.diff(d.right) <= 0) and not d.is_jump.any()


def test_stieltjes_a_poisson_death_is_log_sup():
    a = stieltjes_a(poisson_death_path(1.0, 0.7))
    assert a.values[-1] == 0.7
    assert a.at(0.5) == pytest.approx(0.5, rel=1e-15)


def test_stieltjes_a_constant_path():
    a = stieltjes_a(CadlagPath.constant(1.0, 1.0))
    assert np.all(a.values == 0.0)


def _riemann_oracle(path, m=2000):
    # left-point Riemann-Stieltjes sums on a refinement of each sup increment,
    # with the integrand L_{s-} = L*_s on the increase set
    sup = running_sup(path)
    out = [0.0]
    for i in range(sup.n_samples - 1):
        lo, hi = sup.right[i], sup.left[i + 1]
        acc = out[-1]
        if hi > lo:
            levels = np.linspace(lo, hi, m + 1)
            acc += float(np.sum(levels[:-1] * (1 / levels[:-1] - 1 / levels[1:])))
        out.append(acc)
    return np.array(out)


def test_stieltjes_a_continuous_exp_against_riemann_oracle():
    for i in range(5):
        p = simulate_continuous_exp(1.0, 1e-3, seed=Seed(17, i))
        a = stieltjes_a(p)
        logsup = np.log(running_sup(p).left)
        assert np.all(np.abs(a.values - logsup) <= 1e-6 * (1 + np.abs(logsup)))
        oracle = _riemann_oracle(p)
        assert np.all(np.abs(a.values - oracle) <= 1e-5 * (1 + np.abs(logsup)))


def test_stieltjes_a_charges_sup_jumps():
    p = simulate_poisson_up(1.0, seed=Seed(2, 5))
    a = stieltjes_a(p)
    assert np.all(np.diff(a.values) >= 0)


def test_compensator_poisson_death():
    c = compensator_poisson_death(poisson_death_path(1.0, 0.7), 1.0, [0.5, 0.7, 2.0])
    assert c.a.tolist() == [0.5, 0.7, 0.7]
    assert c.y[0] == -0.5
    assert c.max_rel_error <= 1e-15
    assert c.jump_time == 0.7
    with pytest.raises(TypeError):
        compensator_poisson_death(simulate_poisson_up(1.0, seed=Seed(0, 0)), 1.0)


def test_compensator_mean_is_one():
    b = batch_records(PoissonDeath(1.0), 200_000, 8)
    a_inf = 1.0 * b.rho_left
    m, h = np.mean(a_inf), 3 * np.std(a_inf, ddof=1) / math.sqrt(a_inf.size)
    assert abs(m - 1) <= h


def test_d_at_rho_samples():
    rec = MaxRecord(1.0, 1.0, 2.0, 2.0, 2.0, False, False)
    assert d_at_rho_samples([rec]).tolist() == [0.5]
    with pytest.raises(StructuralError):
        d_at_rho_samples([])
    b = batch_records(PoissonDeath(1.0), 50_000, 4)
    d = d_at_rho_samples(b)
    np.testing.assert_allclose(d, np.exp(-b.rho_left), rtol=1e-15)
    assert ks_uniform(d).passed


def test_log_lstar_mean():
    rec = MaxRecord(1.0, 1.0, math.e, math.e, math.e, False, False)
    assert log_lstar_mean([rec], min_n=1).mean == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        log_lstar_mean([rec])
    est = log_lstar_mean(batch_records(PoissonDeath(1.0), 100_000, 6))
    assert est.covers_target


def test_records_route_matches_batch_route():
    recs = [max_record(poisson_death_path(1.0, t)) for t in (0.1, 0.5, 2.0)]
    assert d_at_rho_samples(recs) == pytest.approx(np.exp(-np.array([0.1, 0.5, 2.0])))


def test_decomposition_csv():
    buf = io.StringIO()
    write_decomposition(poisson_death_path(1.0, 0.7), buf, 1.0)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,L,Lstar,D,a_stieltjes,a_closed_form"
    assert lines[-1].split(",")[-2:] == ["0.7", "0.7"]

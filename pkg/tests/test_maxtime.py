import io
import math

import numpy as np
import pytest

from maxmart.errors import StructuralError
from maxmart.maxtime import (CSV_FIELDS, check_rho_identity, grid_tolerance, max_attained,
                             max_record, rho_left, rho_right, uniqueness_components, write_records)
from maxmart.models import (poisson_death_path, poisson_up_path, simulate_continuous_exp,
                            simulate_poisson_death)
from maxmart.paths import CONSTANT, GRID, CadlagPath
from maxmart.rng import Seed


def tent():
    return CadlagPath.from_samples([(0.0, 1.0, 1.0), (1.0, 2.0, 2.0), (2.0, 0.0, 0.0)], GRID)


def test_poisson_death_record():
    r = max_record(poisson_death_path(1.0, 0.7))
    assert r.rho_left == 0.7 and r.rho_right == 0.7
    assert r.l_star_inf == math.exp(0.7) == r.left_at_rho
    assert r.right_at_rho == 0.0 and r.jumped_at_max
    assert check_rho_identity(r, 0.0)
    assert not max_attained(r)


def test_tent_path():
    p = tent()
    assert rho_left(p) == 1.0 and rho_right(p) == 1.0
    r = max_record(p)
    assert max_attained(r) and not r.jumped_at_max


def test_constant_then_decay_path():
    p = CadlagPath.from_samples([(0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (2.0, 0.5, 0.5)],
                                (CONSTANT, GRID))
    assert rho_left(p) == 1.0 and rho_right(p) == 1.0


def test_adversarial_jump_back_to_prior_max():
    p = CadlagPath.from_samples([(0.0, 1.0, 1.0), (1.0, 2.0, 2.0), (1.5, 1.0, 1.0),
                                 (2.0, 1.0, 2.0), (3.0, 0.5, 0.5)], GRID)
    r = max_record(p)
    assert (r.rho_left, r.rho_right) == (1.0, 2.0)
    assert not check_rho_identity(r, 0.0)


def test_poisson_up_record_uses_right_values():
    # jumps at 0.1 (new max) and 2.0 (below the max)
    p = poisson_up_path(1.0, [0.1, 2.0], 3.0)
    r = max_record(p)
    assert math.isnan(r.rho_left)
    assert r.rho_right == 0.1
    assert r.right_at_rho == r.l_star_inf == pytest.approx(2 * math.exp(-0.1))
    assert r.left_at_rho < r.sup_before_rho == 1.0


def test_poisson_up_without_new_max_flags_zero():
    p = poisson_up_path(1.0, [], 9.0, stopped=True)
    r = max_record(p)
    assert r.max_at_zero and r.rho_right == 0.0 and r.truncated_before_jump


def test_degenerate_path_errors():
    p = CadlagPath(np.array([0.0]), np.array([1.0]), np.array([1.0]), (), np.empty(0))
    with pytest.raises(StructuralError):
        rho_left(p)


def _oracle_rho(p):
    # brute force over refined steps: the step with the largest refined max, last on ties
    x = p.left
    b = p.bridge if p.bridge is not None else np.full(x.size - 1, -np.inf)
    step_max = np.maximum(np.maximum(x[:-1], x[1:]), b)
    top = max(step_max.max(), x[0])
    if x[0] >= top and step_max.max() < top * (1 - 1e-12):
        return 0.0
    k = int(np.flatnonzero(step_max >= top * (1 - 1e-12))[-1])
    if max(x[k + 1], b[k]) >= top * (1 - 1e-12):
        return float(p.times[k + 1])
    return float(p.times[k])


@pytest.mark.parametrize("bridge", [True, False])
def test_grid_rho_matches_brute_force(bridge):
    for i in range(40):
        p = simulate_continuous_exp(1.0, 1e-2, 9.0, bridge, Seed(31, i))
        r = max_record(p)
        assert abs(r.rho_left - _oracle_rho(p)) <= grid_tolerance(p)
        assert r.left_at_rho == pytest.approx(r.l_star_inf, rel=1e-12)
        assert check_rho_identity(r, grid_tolerance(p))
        assert max_attained(r)


def test_time_of_maximum_is_unique_on_m0_paths():
    for i in range(30):
        assert uniqueness_components(simulate_continuous_exp(1.0, 1e-2, seed=Seed(4, i))) == 1
        assert uniqueness_components(simulate_poisson_death(1.0, Seed(4, i))) == 1


def test_poisson_death_rho_is_clock_time():
    for i in range(30):
        p = simulate_poisson_death(2.0, Seed(9, i))
        assert max_record(p).rho_left == p.horizon


def test_write_records_csv():
    buf = io.StringIO()
    write_records([max_record(poisson_death_path(1.0, 0.7))], buf)
    head, row = buf.getvalue().splitlines()
    assert head.split(",") == CSV_FIELDS
    assert row.split(",")[0] == "0.7"

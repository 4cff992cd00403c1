import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxmart.errors import DomainError, StructuralError
from maxmart.models import (poisson_death_path, poisson_up_path, simulate_continuous_exp,
                            simulate_poisson_up)
from maxmart.paths import (CONSTANT, EXPONENTIAL, GRID, CadlagPath, dumps, jump_list,
                           left_limit_at, loads, read_paths, running_sup, sup_is_continuous,
                           value_at, write_paths)
from maxmart.rng import Seed


@pytest.fixture
def death():
    return poisson_death_path(1.0, 0.7)


@pytest.fixture
def up():
    # first jump at 0.3, then decay until the stop time
    return poisson_up_path(1.0, [0.3], 2.0)


def test_constant_path_values():
    p = CadlagPath.constant(1.0, 1.0)
    assert value_at(p, 0.5) == 1.0
    assert left_limit_at(p, 0.25) == 1.0
    assert jump_list(p) == []
    assert sup_is_continuous(p)
    sup = running_sup(p)
    np.testing.assert_array_equal(sup.right, p.right)


def test_poisson_death_values(death):
    assert value_at(death, 0.5) == pytest.approx(math.exp(0.5), rel=1e-15)
    assert value_at(death, 0.7) == 0.0
    assert left_limit_at(death, 0.7) == pytest.approx(math.exp(0.7), rel=1e-15)
    assert value_at(death, math.inf) == 0.0
    assert jump_list(death) == [(0.7, math.exp(0.7), 0.0)]
    assert sup_is_continuous(death)


def test_poisson_death_running_sup(death):
    sup = running_sup(death)
    for t in [0.0, 0.2, 0.5, 0.7]:
        assert value_at(sup, t) == pytest.approx(math.exp(min(t, 0.7)), rel=1e-14)
    assert sup.terminal_value == pytest.approx(math.exp(0.7))
    assert not sup.is_jump.any()


def test_poisson_up_left_limit_and_sup(up):
    assert left_limit_at(up, 0.3) == pytest.approx(math.exp(-0.3), rel=1e-15)
    assert value_at(up, 0.3) == pytest.approx(2 * math.exp(-0.3), rel=1e-15)
    sup = running_sup(up)
    assert left_limit_at(sup, 0.3) == 1.0
    assert value_at(sup, 0.3) == pytest.approx(1.48164, abs=1e-5)
    assert not sup_is_continuous(up)
    (t, lv, rv), = jump_list(up)
    assert t == 0.3 and rv == 2 * lv


def test_domain_errors(death):
    with pytest.raises(DomainError):
        value_at(death, -0.1)
    with pytest.raises(DomainError):
        value_at(death, 1.0)
    with pytest.raises(DomainError):
        left_limit_at(death, 0.0)


@pytest.mark.parametrize("samples", [
    [(0.5, 1.0, 1.0), (1.0, 1.0, 1.0)],
    [(0.0, 1.0, 1.0), (0.0, 1.0, 1.0)],
    [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0)],
    [(0.0, 1.0, 2.0), (1.0, 1.0, 1.0)],
])
def test_invalid_paths_rejected(samples):
    with pytest.raises(StructuralError):
        CadlagPath.from_samples(samples, CONSTANT)


def test_continuous_exp_has_no_jumps():
    p = simulate_continuous_exp(1.0, 1e-3, seed=Seed(3, 0))
    assert jump_list(p) == []
    assert sup_is_continuous(p)
    assert p.terminal_value == 0.0


def _grid_paths():
    values = st.floats(0.0, 10.0, allow_nan=False)
    return st.lists(st.tuples(st.floats(1e-3, 1.0), values, values), min_size=1, max_size=12)


def _build(rows, jumps):
    t, samples = 0.0, [(0.0, 1.0, 1.0)]
    for dt, lv, rv in rows:
        t += dt
        samples.append((t, lv, rv if jumps else lv))
    return CadlagPath.from_samples(samples, GRID)


@settings(max_examples=60, deadline=None)
@given(_grid_paths(), st.booleans())
def test_sup_dominates_values(rows, jumps):
    p = _build(rows, jumps)
    sup = running_sup(p)
    for t in p.times:
        assert value_at(p, float(t)) <= value_at(sup, float(t))
    seq = np.ravel(np.column_stack([sup.left, sup.right]))
    assert np.all(np.diff(seq) >= 0)
    assert sup.right[-1] == max(p.left.max(), p.right.max())


@settings(max_examples=60, deadline=None)
@given(_grid_paths(), st.booleans())
def test_left_limit_equals_value_off_jumps(rows, jumps):
    p = _build(rows, jumps)
    for i in range(1, p.n_samples):
        if not p.is_jump[i]:
            assert left_limit_at(p, float(p.times[i])) == value_at(p, float(p.times[i]))


@settings(max_examples=60, deadline=None)
@given(_grid_paths(), st.booleans(), st.floats(0.0, 5.0))
def test_serialization_round_trip_property(rows, jumps, terminal):
    p = _build(rows, jumps)
    p = CadlagPath(p.times, p.left, p.right, p.kinds, p.rates, None, terminal, {"k": 1})
    q = loads(dumps(p))
    for name in ("times", "left", "right", "rates"):
        np.testing.assert_array_equal(getattr(q, name), getattr(p, name))
    assert q.kinds == p.kinds and q.terminal_value == p.terminal_value and q.meta == p.meta


def test_serialization_of_model_paths():
    paths = [poisson_death_path(1.3, 0.123456789),
             simulate_poisson_up(1.0, seed=Seed(4, 1)),
             simulate_continuous_exp(0.8, 1e-2, seed=Seed(4, 2))]
    buf = io.StringIO()
    write_paths(paths, buf)
    back = read_paths(io.StringIO(buf.getvalue()))
    assert len(back) == 3
    for p, q in zip(paths, back):
        np.testing.assert_array_equal(q.times, p.times)
        np.testing.assert_array_equal(q.left, p.left)
        np.testing.assert_array_equal(q.right, p.right)
        assert q.kinds == p.kinds
        np.testing.assert_array_equal(q.rates, p.rates)
        if p.bridge is None:
            assert q.bridge is None
        else:
            np.testing.assert_array_equal(q.bridge, p.bridge)
    header = buf.getvalue().splitlines()[1]
    assert header == "time,left_value,right_value,is_jump"


def test_exponential_segment_evaluation():
    p = CadlagPath.from_samples([(0.0, 1.0, 1.0), (2.0, math.exp(-1.0), math.exp(-1.0))],
                                EXPONENTIAL, -0.5)
    assert value_at(p, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-15)

import math

import pytest
from hypothesis import given, settings, strategies as st

from furstlab.dyadic import covering_number
from furstlab.generators import (
    branching_number, cantor_1d, cantor_configuration, cantor_product, check_nice, grid_example,
    interval_cantor_configuration, interval_cross_cantor, random_nice_configuration, spread_digits,
    tube_meets_cube, well_spaced,
)
from furstlab.dyadic import DyadicCube, DyadicTube


def test_cantor_counts():
    C = cantor_product(8, 0.5, 1.0)
    # 4 columns and 2 rows per 4x4 block
    assert len(C) == (4 * 2) ** 4
    assert len(interval_cross_cantor(6, 0.5)) == 64 * 8
    assert len(cantor_1d(8, 0.5)) == 16


def test_block_size_enforced():
    with pytest.raises(ValueError):
        cantor_product(5, 0.5, 0.5)


@given(st.integers(1, 16), st.integers(2, 16))
def test_spread_digits(k, base):
    if k > base:
        return
    d = spread_digits(k, base)
    assert len(set(d)) == k and min(d) == 0 and max(d) <= base - 1


@given(st.floats(0, 1), st.integers(1, 4))
def test_branching_number_range(u, T):
    assert 1 <= branching_number(u, T) <= 2**T


@given(st.integers(0, 2**20))
@settings(max_examples=10)
def test_random_config_deterministic(seed):
    a = random_nice_configuration(4, 0.5, 1.0, seed)
    b = random_nice_configuration(4, 0.5, 1.0, seed)
    assert a.P.cells == b.P.cells and a.families == b.families


@pytest.mark.parametrize("make", [
    lambda: grid_example(6, 0.5, 1.0),
    lambda: grid_example(6, 1.0, 1.0),
    lambda: random_nice_configuration(6, 0.5, 1.0, 1),
    lambda: cantor_configuration(6, 0.5, 0.5),
    lambda: interval_cantor_configuration(6, 0.5),
])
def test_configurations_are_nice(make):
    cfg = make()
    assert check_nice(cfg, sample=40) == []


def test_grid_sizes():
    cfg = grid_example(8, 1.0, 1.0)
    assert len(cfg.P) == 256 and cfg.M == 256
    cfg = grid_example(8, 0.5, 1.0)
    assert (cfg.meta["A"], cfg.meta["B"], cfg.M) == (4, 64, 16)
    assert len(cfg.P) == 256


def test_random_exponents():
    cfg = random_nice_configuration(6, 1.0, 2.0, seed=0)
    assert len(cfg.P) == 4096 and cfg.M == 64
    assert math.isclose(cfg.meta["achieved_t"], 2.0)


def test_well_spaced_structure():
    P = well_spaced(6, 3, 4)
    assert len(P) == 64
    assert covering_number(P, 3) == 16


def test_tube_meets_cube():
    T = DyadicTube(4, 0, 3)  # horizontal-ish tube at height ~ 3/16
    assert tube_meets_cube(T, DyadicCube(4, 7, 3))
    assert not tube_meets_cube(T, DyadicCube(4, 7, 9))

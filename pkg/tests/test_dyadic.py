from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from furstlab.dyadic import (
    CubeSet, DyadicCube, DyadicTube, InvalidScale, TubeSet, column_bounds, covering_number, cube_in_fat_tube,
    duality_line, dumps_cubeset, dumps_tubeset, full_grid, loads_set, parent_tube, point_in_fat_tube,
    rescale_cubeset, thicken_containment_check, tube_containing,
)
from furstlab.generators import cantor_product


def test_duality_line_examples():
    assert duality_line(0, 0)(Fraction(7, 3)) == 0
    L = duality_line(1, 0)
    assert L(Fraction(1, 2)) == Fraction(1, 2)
    L = duality_line(Fraction(1, 2), Fraction(1, 4))
    assert L(0) == Fraction(1, 4) and L(1) == Fraction(3, 4)


def test_covering_examples():
    P = CubeSet.from_indices(5, [(3, 17)])
    assert all(covering_number(P, m) == 1 for m in range(6))
    G = full_grid(4)
    assert [covering_number(G, k) for k in range(5)] == [4**k for k in range(5)]
    # middle-half Cantor squared, delta = 4^-3, Delta = 4^-1
    C = cantor_product(6, 0.5, 0.5)
    assert covering_number(C, 2) == 4
    with pytest.raises(InvalidScale):
        covering_number(C, 7)


def test_parent_tube():
    T = DyadicTube(6, -13, 40)
    assert parent_tube(T, 6) == T
    assert parent_tube(T, 3) == DyadicTube(3, -2, 5)
    with pytest.raises(InvalidScale):
        parent_tube(T, 7)


def test_cube_on_core_line_is_inside():
    n = 5
    T = tube_containing(0, Fraction(9, 32), n)
    p = DyadicCube(n, 0, 9)
    assert cube_in_fat_tube(p, T, 6)


def test_far_cube_is_outside():
    T = DyadicTube(4, 0, 0)  # slopes [0, 1/16), intercepts [0, 1/16)
    p = DyadicCube(4, 0, 15)  # y in [15/16, 1): more than 8 Delta above every line
    assert not cube_in_fat_tube(p, T, 6)


@given(st.integers(0, 63), st.integers(0, 63), st.integers(-64, 63), st.integers(-128, 127))
def test_fat_tube_vs_point_sampling(ix, iy, ia, ib):
    # dense sampling at delta/32 of the cube must agree with the corner test
    n = 6
    p = DyadicCube(n, ix, iy)
    T = DyadicTube(n, ia, ib)
    got = cube_in_fat_tube(p, T, 6)
    step = Fraction(1, 2 ** (n + 5))
    xs = [Fraction(ix, 2**n) + k * step for k in range(0, 33, 8)]
    ys = [Fraction(iy, 2**n) + k * step for k in range(0, 33, 8)]
    sampled = all(point_in_fat_tube(T, 6, x, y) for x in xs for y in ys)
    assert got == sampled


@given(st.integers(-16, 15), st.integers(-32, 31), st.integers(0, 2), st.sampled_from([2, 4, 6, Fraction(3, 2)]))
def test_column_bounds_match_corner_test(ia, ib, k, c):
    n = 4
    m = n - k
    ia, ib = ia >> k, ib >> k
    cols = np.arange(0, 2**n)
    lo, hi = (a.reshape(-1) for a in column_bounds(ia, ib, m, c, n, cols))
    T = DyadicTube(m, ia, ib)
    for x in range(0, 2**n, 5):
        for y in range(2**n):
            assert (lo[x] <= y <= hi[x]) == cube_in_fat_tube(DyadicCube(n, x, y), T, c)


def test_thicken_examples():
    rng = np.random.default_rng(7)
    for _ in range(20):
        ia = int(rng.integers(-1024, 1024))
        ib = int(rng.integers(-2048, 2048))
        assert thicken_containment_check(DyadicTube(10, ia, ib), 4)
    for _ in range(50):
        ia = int(rng.integers(-256, 256))
        ib = int(rng.integers(-512, 512))
        assert thicken_containment_check(DyadicTube(8, ia, ib), 3)
    with pytest.raises(InvalidScale):
        thicken_containment_check(DyadicTube(8, 0, 0), 8)


def test_rescale_examples():
    G = full_grid(5)
    R = rescale_cubeset(G, DyadicCube(2, 1, 3))
    assert R.n == 3 and len(R) == 64
    P = CubeSet.from_indices(5, [(13, 6)])
    R = rescale_cubeset(P, DyadicCube(2, 1, 0))
    assert list(R.cells) == [(5, 6)]
    C = cantor_product(6, 0.5, 0.5)
    q = sorted({(x >> 4, y >> 4) for x, y in C.cells})[0]
    R = rescale_cubeset(C, DyadicCube(2, *q))
    assert R.cells.keys() == cantor_product(4, 0.5, 0.5).cells.keys()
    assert len(rescale_cubeset(P, DyadicCube(1, 1, 1))) == 0


@st.composite
def cube_sets(draw, max_n=6):
    n = draw(st.integers(1, max_n))
    pts = draw(st.lists(st.tuples(st.integers(0, 2**n - 1), st.integers(0, 2**n - 1)), min_size=1, max_size=40))
    return CubeSet.from_indices(n, pts)


@given(cube_sets(), st.data())
def test_covering_monotone_and_parent_coherent(P, data):
    m1 = data.draw(st.integers(0, P.n))
    m0 = data.draw(st.integers(0, m1))
    a, b = covering_number(P, m0), covering_number(P, m1)
    assert a <= b <= a * 4 ** (m1 - m0)
    assert b == oracles.covering(P, m1)


@given(cube_sets(), st.data())
def test_rescale_reproduces_branch_counts(P, data):
    k = data.draw(st.integers(0, P.n))
    q = data.draw(st.sampled_from(sorted({(x >> (P.n - k), y >> (P.n - k)) for x, y in P.cells})))
    R = rescale_cubeset(P, DyadicCube(k, *q))
    for rho in range(0, R.n + 1):
        inside = {(x >> (P.n - k - rho), y >> (P.n - k - rho)) for x, y in P.cells
                  if (x >> (P.n - k), y >> (P.n - k)) == q}
        assert covering_number(R, rho) == len(inside)


@given(cube_sets())
def test_serialization_roundtrip(P):
    text = dumps_cubeset(P)
    Q = loads_set(text)
    assert Q.cells == P.cells and Q.n == P.n
    assert dumps_cubeset(Q) == text


def test_tubeset_roundtrip_and_thicken_multiplicity():
    T = TubeSet.from_indices(4, [(0, 0), (1, 0), (3, 5)])
    U = T.thicken(3)
    assert U.mode == "multi" and U.total_multiplicity() == 3
    assert U.tubes[(0, 0)] == 2
    V = loads_set(dumps_tubeset(U))
    assert V.tubes == U.tubes and V.mode == "multi"


def test_bad_records_rejected():
    with pytest.raises(ValueError):
        loads_set("CUBESET v1 n=3\n4 1 1 1 1.0\n")
    with pytest.raises(ValueError):
        loads_set("CUBESET v1 n=3\n3 1 1 1 1.0\n3 1 1 1 1.0\n")

"""Extremal sets and nice configurations.

All constructions are deterministic given their parameters (and seed, for
the random ones). Non-integer branching numbers 2^(u T) are rounded to the
nearest integer and the achieved exponent is reported alongside.
"""
from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dyadic import CubeSet, TubeSet, DyadicCube, DyadicTube, exponent, fat_tube_y_bounds, tube_containing


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def branching_number(u: float, T: int, dim: int = 1) -> int:
    """Children per block for a u-dimensional pattern in base 2^T, clamped to [1, 2^(dim T)]."""
    return min(max(round_half_up(2.0 ** (u * T)), 1), 2 ** (dim * T))


def spread_digits(k: int, base: int) -> list[int]:
    """k digits in [0, base) spread as evenly as possible, endpoints included."""
    if k == 1:
        return [0]
    return [(i * (base - 1)) // (k - 1) for i in range(k)]


def cantor_indices(m: int, T: int, u: float) -> tuple[np.ndarray, float]:
    """Integer positions of the level-m Cantor iterate at scale 2^-(mT)."""
    base = 2**T
    k = branching_number(u, T)
    digits = np.array(spread_digits(k, base), dtype=np.int64)
    pos = np.zeros(1, dtype=np.int64)
    for _ in range(m):
        pos = (pos[:, None] * base + digits[None, :]).reshape(-1)
    return np.sort(pos), math.log2(k) / T


def _blocks(n: int, T: int) -> int:
    if T <= 0 or n % T:
        raise ValueError(f"scale exponent {n} is not a multiple of the block size {T}")
    return n // T


def cantor_product(delta, s: float, t: float, T: int = 2) -> CubeSet:
    """C_t x C_s at delta = 2^-(mT), x-coordinate from C_t."""
    n = exponent(delta)
    if not (0 <= s <= 1 and 0 <= t <= 1):
        raise ValueError("need s, t in [0, 1]")
    m = _blocks(n, T)
    xs, _ = cantor_indices(m, T, t)
    ys, _ = cantor_indices(m, T, s)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return CubeSet.from_array(n, np.stack([X.ravel(), Y.ravel()], axis=1))


def cantor_product_exponents(s: float, t: float, T: int = 2) -> dict:
    return {"s": math.log2(branching_number(s, T)) / T, "t": math.log2(branching_number(t, T)) / T}


def interval_cross_cantor(delta, s: float, T: int = 2) -> CubeSet:
    """[0,1] x C_s at delta = 2^-(mT)."""
    n = exponent(delta)
    if not 0 <= s <= 1:
        raise ValueError("need s in [0, 1]")
    m = _blocks(n, T)
    ys, _ = cantor_indices(m, T, s)
    xs = np.arange(2**n, dtype=np.int64)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return CubeSet.from_array(n, np.stack([X.ravel(), Y.ravel()], axis=1))


def cantor_1d(delta, s: float, T: int = 2) -> CubeSet:
    """Cantor iterate inside [1, 2) as a one-dimensional cube set."""
    n = exponent(delta)
    m = _blocks(n, T)
    xs, _ = cantor_indices(m, T, s)
    idx = np.stack([xs + 2**n, np.zeros_like(xs)], axis=1)
    return CubeSet.from_array(n, idx, dim=1)


def _spread_cells(k: int, T: int) -> np.ndarray:
    """k sub-squares of a 2^T x 2^T block, chosen in bit-reversed Morton order."""
    bits = 2 * T
    out = []
    for z in range(k):
        r = int(format(z, f"0{bits}b")[::-1], 2)
        x = y = 0
        for b in range(T):
            x |= ((r >> (2 * b)) & 1) << b
            y |= ((r >> (2 * b + 1)) & 1) << b
        out.append((x, y))
    return np.array(out, dtype=np.int64)


def branching_set(T: int, children: Sequence[int]) -> CubeSet:
    """Planar set with exactly children[j] sub-squares kept in every block at level j+1.

    Gives a uniform set whose branching function has increments
    log2(children[j]) / T; the kept sub-squares are spread out.
    """
    pts = np.zeros((1, 2), dtype=np.int64)
    for k in children:
        if not 1 <= k <= 4**T:
            raise ValueError(f"children per block must lie in [1, {4**T}]")
        cells = _spread_cells(k, T)
        pts = (pts[:, None, :] * 2**T + cells[None, :, :]).reshape(-1, 2)
    return CubeSet.from_array(T * len(children), pts)


def well_spaced(delta, Delta, per_cell: int) -> CubeSet:
    """Every other Delta-cell in each direction, each holding per_cell delta-cubes.

    Inside a cell the cubes sit on a spread sub-lattice, so distinct cubes are
    delta-separated and the cell looks like a Katz-Tao set at the small scales.
    """
    n, m = exponent(delta), exponent(Delta)
    if m > n:
        raise ValueError("need Delta >= delta")
    side = 2 ** (n - m)
    if per_cell < 1 or per_cell > side * side:
        raise ValueError(f"per_cell must lie in [1, {side * side}]")
    q = math.isqrt(per_cell - 1) + 1
    step = max(side // q, 1)
    local = [(i * step, j * step) for i in range(q) for j in range(q)][:per_cell]
    local = np.array(local, dtype=np.int64)
    ncell = max(2 ** m // 2, 1)
    I, J = np.meshgrid(np.arange(ncell) * 2, np.arange(ncell) * 2, indexing="ij")
    base = np.stack([I.ravel(), J.ravel()], axis=1) * side
    pts = (base[:, None, :] + local[None, :, :]).reshape(-1, 2)
    return CubeSet.from_array(n, pts)


# ------------------------------------------------------ nice configurations


@dataclass
class NiceConfiguration:
    P: CubeSet
    families: Mapping[tuple[int, int], tuple[tuple[int, int], ...]]
    s: float
    t: float
    M: int
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.P.n

    def union(self) -> TubeSet:
        keys = set()
        for fam in self.families.values():
            keys.update(fam)
        return TubeSet.from_indices(self.n, keys)

    def family(self, p) -> TubeSet:
        return TubeSet.from_indices(self.n, self.families[p])

    def family_duals(self, p) -> CubeSet:
        return CubeSet.from_indices(self.n, self.families[p])


def check_nice(config: NiceConfiguration, sample: int | None = None) -> list[str]:
    """Return a list of violated invariants (empty when all hold)."""
    problems = []
    keys = sorted(config.families)
    if sample is not None and sample < len(keys):
        keys = keys[:: max(len(keys) // sample, 1)][:sample]
    for p in keys:
        fam = config.families[p]
        if not config.M / 2 <= len(fam) <= 2 * config.M:
            problems.append(f"family size {len(fam)} at {p} outside [M/2, 2M]")
        cube = DyadicCube(config.n, *p)
        for ia, ib in fam:
            if not tube_meets_cube(DyadicTube(config.n, ia, ib), cube):
                problems.append(f"tube {(ia, ib)} misses cube {p}")
    return problems


def tube_meets_cube(T: DyadicTube, p: DyadicCube) -> bool:
    """Exact test that the closed tube meets the closed cube.

    Over the cube's x-range the tube's column interval [L(x), U(x)] has
    affine ends, so the feasible x for L(x) <= y1 and U(x) >= y0 are two
    intervals and the cube is met iff they overlap inside [x0, x1].
    """
    d = 2**p.n
    x0, x1 = Fraction(p.ix, d), Fraction(p.ix + 1, d)
    y0, y1 = Fraction(p.iy, d), Fraction(p.iy + 1, d)
    L0, U0 = fat_tube_y_bounds(T, 0, x0)
    L1, U1 = fat_tube_y_bounds(T, 0, x1)
    lo, hi = Fraction(0), Fraction(1)  # feasible parameter lam with x = x0 + lam (x1 - x0)
    for v0, v1 in ((L0 - y1, L1 - y1), (y0 - U0, y0 - U1)):
        # need v0 + lam (v1 - v0) <= 0
        slope = v1 - v0
        if slope == 0:
            if v0 > 0:
                return False
            continue
        root = -v0 / slope
        if slope > 0:
            hi = min(hi, root)
        else:
            lo = max(lo, root)
    return lo <= hi


def grid_example(delta, s: float, t: float) -> NiceConfiguration:
    """Szemeredi-Trotter type grid configuration.

    Points (i/A, j/B) with A = B/C, lines y = (k/C) x + l/B with C slopes in
    [0, 1). One concrete choice of parameters for general (s, t):
    C = 2^round(s n) and B = 2^round((s+t) n / 2), so that
    |P| ~ delta^-t, each point carries C ~ delta^-s tubes (one per slope,
    slopes 1/C apart) and |T| / M ~ 1.5 B ~ delta^-(s+t)/2.
    """
    n = exponent(delta)
    if not (0 < s <= 1 and s <= t <= 2 - s):
        raise ValueError("need 0 < s <= 1 and s <= t <= 2 - s")
    c_exp = round_half_up(s * n)
    b_exp = min(round_half_up((s + t) * n / 2), n)
    c_exp = min(c_exp, b_exp)
    a_exp = b_exp - c_exp
    A, B, C = 2**a_exp, 2**b_exp, 2**c_exp
    d = 2**n
    families = {}
    for i in range(A):
        for j in range(B):
            p = (i * (d // A), j * (d // B))
            fam = []
            for k in range(C):
                # line through (i/A, j/B) with slope k/C has intercept (j - k i)/B
                fam.append((k * (d // C), (j - k * i) * (d // B)))
            families[p] = tuple(sorted(fam))
    P = CubeSet.from_indices(n, families.keys())
    meta = {
        "construction": "grid (points i/A, j/B; slopes k/C); exponents rounded to powers of two",
        "A": A, "B": B, "C": C,
        "achieved_s": c_exp / n if n else 0.0,
        "achieved_t": (a_exp + b_exp) / n if n else 0.0,
        "predicted_tube_exponent": b_exp / n if n else 0.0,
    }
    return NiceConfiguration(P, dict(sorted(families.items())), s, t, C, meta)


def _level_counts(levels: int, dim_exp: float, per_level_max: int) -> list[int]:
    """Per-binary-level child counts whose log2 partial sums track dim_exp * level."""
    out = []
    acc = 0.0
    for lv in range(1, levels + 1):
        target = dim_exp * lv - acc
        k = min(max(round_half_up(2.0**target), 1), per_level_max)
        out.append(k)
        acc += math.log2(k)
    return out


def random_nice_configuration(delta, s: float, t: float, seed: int) -> NiceConfiguration:
    """Seeded random configuration.

    P: at every binary level each parent keeps the same number of children
    (chosen to track 2^(t level)), at random positions. T(p): slopes drawn
    from a random s-dimensional dyadic pattern in [-1, 1), one tube per slope
    through the centre of p.
    """
    n = exponent(delta)
    if not (0 < s <= 1 and 0 < t <= 2):
        raise ValueError("need 0 < s <= 1 and 0 < t <= 2")
    rng = np.random.Generator(np.random.PCG64(seed))
    counts = _level_counts(n, t, 4)
    pts = np.zeros((1, 2), dtype=np.int64)
    kids = np.array([(0, 0), (0, 1), (1, 0), (1, 1)], dtype=np.int64)
    for k in counts:
        new = []
        for q in pts:
            pick = np.sort(rng.permutation(4)[:k])
            new.append(q[None, :] * 2 + kids[pick])
        pts = np.concatenate(new, axis=0)
    P = CubeSet.from_array(n, pts)
    # slopes live on the 2^(n+1) grid of [-1, 1): one extra binary level on top
    slope_counts = _level_counts(n + 1, s * n / (n + 1), 2)
    M = int(np.prod(slope_counts))
    d = 2**n
    families = {}
    for ix, iy in sorted(P.cells):
        sl = np.zeros(1, dtype=np.int64)
        for k in slope_counts:
            new = []
            for q in sl:
                pick = np.sort(rng.permutation(2)[:k])
                new.append(q * 2 + pick)
            sl = np.concatenate(new)
        fam = set()
        cx = (2 * ix + 1) / (2 * d)
        cy = (2 * iy + 1) / (2 * d)
        for q in sl.tolist():
            a = (q - d) / d
            T = tube_containing(a, cy - a * cx, n)
            fam.add((T.ia, T.ib))
        families[(ix, iy)] = tuple(sorted(fam))
    meta = {"seed": seed, "point_level_counts": counts, "slope_level_counts": slope_counts,
            "achieved_t": sum(math.log2(k) for k in counts) / n,
            "achieved_s": sum(math.log2(k) for k in slope_counts) / n}
    return NiceConfiguration(P, families, s, t, M, meta)


def slope_families(P: CubeSet, slopes: Sequence[int]) -> dict:
    """For every cube of P, the tubes through its centre with slopes q / 2^n."""
    n = P.n
    d = 2**n
    families = {}
    for ix, iy in sorted(P.cells):
        fam = set()
        cx = (2 * ix + 1) / (2 * d)
        cy = (2 * iy + 1) / (2 * d)
        for q in slopes:
            a = q / d
            Tb = tube_containing(a, cy - a * cx, n)
            fam.add((Tb.ia, Tb.ib))
        families[(ix, iy)] = tuple(sorted(fam))
    return families


def cantor_configuration(delta, s: float, t: float, T: int = 2) -> NiceConfiguration:
    """Cantor-product points C_t x C_s with every point carrying M ~ delta^-s tubes
    whose slopes come from an s-dimensional Cantor pattern in [0, 1)."""
    n = exponent(delta)
    P = cantor_product(n, min(s, 1.0), min(t, 1.0), T)
    slopes, _ = cantor_indices(_blocks(n, T), T, s)
    families = slope_families(P, slopes.tolist())
    return NiceConfiguration(P, families, s, t, len(slopes), {"construction": "cantor product"})


def interval_cantor_configuration(delta, s: float, T: int = 2) -> NiceConfiguration:
    """[0,1) x C_s points, |P| ~ delta^-(1+s), each carrying an s-dimensional
    Cantor pattern of slopes."""
    n = exponent(delta)
    P = interval_cross_cantor(n, s, T)
    slopes, _ = cantor_indices(_blocks(n, T), T, s)
    families = slope_families(P, slopes.tolist())
    return NiceConfiguration(P, families, s, 1.0 + s, len(slopes), {"construction": "interval x cantor"})

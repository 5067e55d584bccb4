"""Dyadic cubes, dyadic tubes and the set containers built on them.

A scale is stored by its exponent n (delta = 2**-n). A cube at scale n with
indices (ix, iy) is [ix/2**n, (ix+1)/2**n) x [iy/2**n, (iy+1)/2**n). A tube
at scale n is identified with its parameter cube (ia, ib): the union of the
lines y = a*x + b with (a, b) in that cube.

Fattening convention: cT at tube scale Delta is the set of points (x, y)
with |y - (a*x + b)| <= c*Delta for some (a, b) in the closed parameter cube.
This vertical margin sits between the Euclidean c*Delta and sqrt(2)*c*Delta
neighbourhoods for slopes in [-1, 1), and it makes the corner test exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping, NamedTuple

import numpy as np


class InvalidScale(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Scale:
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise InvalidScale(f"scale exponent must be >= 0, got {self.n}")

    @property
    def value(self) -> Fraction:
        return Fraction(1, 2**self.n)

    def __float__(self):
        return 2.0**-self.n


def exponent(scale) -> int:
    """Accept a Scale or a bare integer exponent."""
    if isinstance(scale, Scale):
        return scale.n
    n = int(scale)
    if n < 0:
        raise InvalidScale(f"scale exponent must be >= 0, got {n}")
    return n


class DyadicCube(NamedTuple):
    n: int
    ix: int
    iy: int

    def parent(self, m: int) -> "DyadicCube":
        if m > self.n:
            raise InvalidScale(f"cannot take parent at finer scale {m} > {self.n}")
        k = self.n - m
        return DyadicCube(m, self.ix >> k, self.iy >> k)

    def corners(self) -> list[tuple[Fraction, Fraction]]:
        d = 2**self.n
        xs = (Fraction(self.ix, d), Fraction(self.ix + 1, d))
        ys = (Fraction(self.iy, d), Fraction(self.iy + 1, d))
        return [(x, y) for x in xs for y in ys]

    def center(self) -> tuple[Fraction, Fraction]:
        d = 2 ** (self.n + 1)
        return Fraction(2 * self.ix + 1, d), Fraction(2 * self.iy + 1, d)


class DyadicTube(NamedTuple):
    """Tube dual to the parameter cube [ia/2^n,(ia+1)/2^n) x [ib/2^n,(ib+1)/2^n)."""

    n: int
    ia: int
    ib: int

    @property
    def param(self) -> DyadicCube:
        return DyadicCube(self.n, self.ia, self.ib)

    def slope_range(self) -> tuple[Fraction, Fraction]:
        d = 2**self.n
        return Fraction(self.ia, d), Fraction(self.ia + 1, d)

    def intercept_range(self) -> tuple[Fraction, Fraction]:
        d = 2**self.n
        return Fraction(self.ib, d), Fraction(self.ib + 1, d)


class Line(NamedTuple):
    slope: Fraction
    intercept: Fraction

    def __call__(self, x):
        return self.slope * x + self.intercept


def duality_line(a, b) -> Line:
    """The line y = a x + b dual to the parameter point (a, b)."""
    return Line(Fraction(a), Fraction(b))


def tube_index_bounds(n: int) -> tuple[range, range]:
    """Admissible (ia, ib) index ranges: slopes in [-1,1), intercepts in [-2,2)."""
    d = 2**n
    return range(-d, d), range(-2 * d, 2 * d)


def tube_containing(a, b, n: int) -> DyadicTube:
    """Dyadic n-tube whose parameter cube contains (a, b)."""
    d = 2**n
    a, b = Fraction(a), Fraction(b)
    return DyadicTube(n, (a * d).__floor__(), (b * d).__floor__())


@dataclass(frozen=True)
class CubeSet:
    """Multiset of dyadic cubes at one scale.

    cells maps (ix, iy) to (multiplicity, weight). One-dimensional sets use
    dim=1 and keep iy = 0.
    """

    n: int
    cells: Mapping[tuple[int, int], tuple[int, float]] = field(default_factory=dict)
    dim: int = 2

    def __post_init__(self):
        if self.n < 0:
            raise InvalidScale(f"scale exponent must be >= 0, got {self.n}")
        for key, (mult, w) in self.cells.items():
            if mult <= 0:
                raise ValueError(f"multiplicity must be positive at {key}")
            if w < 0:
                raise ValueError(f"weight must be nonnegative at {key}")

    @classmethod
    def from_indices(cls, n: int, indices: Iterable, dim: int = 2, weight: float = 1.0):
        cells: dict[tuple[int, int], tuple[int, float]] = {}
        for ix, iy in indices:
            key = (int(ix), int(iy))
            mult, w = cells.get(key, (0, weight))
            cells[key] = (mult + 1, w)
        return cls(n, dict(sorted(cells.items())), dim)

    @classmethod
    def from_array(cls, n: int, idx: np.ndarray, dim: int = 2):
        """Distinct cubes from an (k, 2) integer array, multiplicity 1."""
        idx = np.unique(np.asarray(idx, dtype=np.int64).reshape(-1, 2), axis=0)
        return cls(n, {(int(x), int(y)): (1, 1.0) for x, y in idx}, dim)

    @property
    def scale(self) -> Scale:
        return Scale(self.n)

    def __len__(self):
        return len(self.cells)

    def __iter__(self) -> Iterator[DyadicCube]:
        for ix, iy in self.cells:
            yield DyadicCube(self.n, ix, iy)

    def total_multiplicity(self) -> int:
        return sum(m for m, _ in self.cells.values())

    def index_array(self) -> np.ndarray:
        if not self.cells:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(sorted(self.cells), dtype=np.int64)

    def subset(self, keys: Iterable[tuple[int, int]]) -> "CubeSet":
        keep = {k: self.cells[k] for k in sorted(set(keys))}
        return CubeSet(self.n, keep, self.dim)

    def with_weights(self, weights: Mapping[tuple[int, int], float]) -> "CubeSet":
        cells = {k: (m, float(weights.get(k, w))) for k, (m, w) in self.cells.items()}
        return CubeSet(self.n, cells, self.dim)


@dataclass(frozen=True)
class TubeSet:
    """Dyadic tubes at one scale; multiplicity per tube in 'multi' mode."""

    n: int
    tubes: Mapping[tuple[int, int], int] = field(default_factory=dict)
    mode: str = "distinct"

    def __post_init__(self):
        if self.mode not in ("distinct", "multi"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "distinct" and any(m != 1 for m in self.tubes.values()):
            raise ValueError("distinct tube sets carry multiplicity 1")

    @classmethod
    def from_indices(cls, n: int, indices: Iterable) -> "TubeSet":
        keys = sorted({(int(a), int(b)) for a, b in indices})
        return cls(n, {k: 1 for k in keys}, "distinct")

    @property
    def scale(self) -> Scale:
        return Scale(self.n)

    def __len__(self):
        return len(self.tubes)

    def __iter__(self) -> Iterator[DyadicTube]:
        for ia, ib in self.tubes:
            yield DyadicTube(self.n, ia, ib)

    def total_multiplicity(self) -> int:
        return sum(self.tubes.values())

    def thicken(self, m: int) -> "TubeSet":
        """T -> T^Delta for every tube, kept as a multiset."""
        if m > self.n:
            raise InvalidScale(f"cannot thicken to finer scale {m} > {self.n}")
        k = self.n - m
        out: dict[tuple[int, int], int] = {}
        for (ia, ib), mult in self.tubes.items():
            key = (ia >> k, ib >> k)
            out[key] = out.get(key, 0) + mult
        return TubeSet(m, dict(sorted(out.items())), "multi")


# ---------------------------------------------------------------- covering


def parent_counts(P: CubeSet, m) -> dict[tuple[int, int], int]:
    """Number of distinct cubes of P below each Delta-cube (Delta = 2^-m)."""
    m = exponent(m)
    if m > P.n:
        raise InvalidScale(f"scale 2^-{m} is finer than the set scale 2^-{P.n}")
    k = P.n - m
    out: dict[tuple[int, int], int] = {}
    for ix, iy in P.cells:
        key = (ix >> k, iy >> k)
        out[key] = out.get(key, 0) + 1
    return out


def covering_number(P: CubeSet, m) -> int:
    """|P|_Delta: distinct dyadic Delta-cubes meeting P, multiplicity ignored."""
    m = exponent(m)
    if m > P.n:
        raise InvalidScale(f"scale 2^-{m} is finer than the set scale 2^-{P.n}")
    if not P.cells:
        return 0
    idx = P.index_array() >> (P.n - m)
    return int(np.unique(pack(idx)).size)


def pack(idx: np.ndarray) -> np.ndarray:
    """One int64 key per (ix, iy) row; order-preserving for nonnegative indices."""
    idx = np.asarray(idx, dtype=np.int64)
    return (idx[:, 0] << 32) | (idx[:, 1] & 0xFFFFFFFF)


def parent_tube(T: DyadicTube, m) -> DyadicTube:
    m = exponent(m)
    if m > T.n:
        raise InvalidScale(f"scale 2^-{m} is finer than the tube scale 2^-{T.n}")
    k = T.n - m
    return DyadicTube(m, T.ia >> k, T.ib >> k)


# ------------------------------------------------------------- fat tubes


def fat_tube_y_bounds(T: DyadicTube, c, x) -> tuple[Fraction, Fraction]:
    """Closed y-interval of cT over the vertical line at abscissa x."""
    a0, a1 = T.slope_range()
    b0, b1 = T.intercept_range()
    margin = Fraction(c) / 2**T.n
    x = Fraction(x)
    lo = min(a0 * x, a1 * x) + b0 - margin
    hi = max(a0 * x, a1 * x) + b1 + margin
    return lo, hi


def point_in_fat_tube(T: DyadicTube, c, x, y) -> bool:
    lo, hi = fat_tube_y_bounds(T, c, x)
    return lo <= Fraction(y) <= hi


def cube_in_fat_tube(p: DyadicCube, T: DyadicTube, c) -> bool:
    """True iff the closed cube p lies in cT.

    Dyadic cubes never straddle x = 0, so over the cube's x-range the lower
    and upper envelopes of cT are affine and the four corners decide.
    """
    return all(point_in_fat_tube(T, c, x, y) for x, y in p.corners())


def column_bounds(ia, ib, k: int, c, n: int, ix) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised cell ranges of fat tubes over grid columns.

    ia, ib: tube indices at scale 2^-k (broadcastable arrays); ix: column
    indices of the 2^-n grid. Returns integer arrays (lo, hi) with the
    broadcast shape of ia[..., None] and ix: the cell (ix, iy) lies in cT
    iff lo <= iy <= hi. Exact integer arithmetic on dyadic rationals.
    """
    c = Fraction(c)
    q = c.denominator
    ia0 = np.asarray(ia, dtype=np.int64)[..., None]
    ib0 = np.asarray(ib, dtype=np.int64)[..., None]
    ia1 = ia0 + 1
    x0 = np.asarray(ix, dtype=np.int64)
    x1 = x0 + 1
    # all quantities are integer multiples of 1 / (2^(n+k) q)
    sn = 2**n
    b0 = ib0 * sn * q
    b1 = (ib0 + 1) * sn * q
    marg = c.numerator * sn
    lo0 = np.minimum(ia0 * x0, ia1 * x0) * q + b0 - marg
    lo1 = np.minimum(ia0 * x1, ia1 * x1) * q + b0 - marg
    hi0 = np.maximum(ia0 * x0, ia1 * x0) * q + b1 + marg
    hi1 = np.maximum(ia0 * x1, ia1 * x1) * q + b1 + marg
    unit = 2**k * q
    lo = -((-np.maximum(lo0, lo1)) // unit)
    hi = np.minimum(hi0, hi1) // unit - 1
    return lo, hi


def fat_tube_columns(T: DyadicTube, c, n: int, ix_range: range) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """For each column ix of the 2^-n grid, the iy-range of cells inside cT."""
    ix = np.arange(ix_range.start, ix_range.stop, dtype=np.int64)
    lo, hi = column_bounds(T.ia, T.ib, T.n, c, n, ix)
    return ix, lo.reshape(-1), hi.reshape(-1)


def fat_tube_cells(T: DyadicTube, c, n: int, ix_range: range) -> Iterator[tuple[int, int]]:
    ix, lo, hi = fat_tube_columns(T, c, n, ix_range)
    for x, a, b in zip(ix.tolist(), lo.tolist(), hi.tolist()):
        for y in range(a, b + 1):
            yield x, y


# ------------------------------------------------------ thickening check


def thicken_containment_check(T: DyadicTube, m) -> bool:
    """Check (6T)^(Delta) intersected with [-1,2)^2 lies inside 6(T^Delta).

    Every point of the (delta/4)-grid of the window that lies in the
    Delta-neighbourhood of 6T is tested. The neighbourhood is
    over-approximated by shifting each envelope line by Delta*(1 + a^2/2),
    an exact rational upper bound for Delta*sqrt(1 + a^2), so the check
    can only err on the strict side.
    """
    m = exponent(m)
    n = T.n
    if not 2**n > 30 * 2**m:
        raise InvalidScale(f"need Delta > 30 delta, got delta=2^-{n}, Delta=2^-{m}")
    big = parent_tube(T, m)
    # grid step u = 2^-(n+2); common denominator D = 2^(2n+m+3)
    g = n + 2
    e = 2 * n + m + 3
    kx = np.arange(-(2**g), 2 * 2**g, dtype=np.int64)
    ylo_grid, yhi_grid = -(2**g), 2 * 2**g - 1

    def lin(ia, ib, na, nb):
        # (ia/2^na) * (kx/2^g) + ib/2^nb, in units of 2^-e
        return ia * kx * 2 ** (e - na - g) + ib * 2 ** (e - nb)

    a_idx = (T.ia, T.ia + 1)
    upper = None
    lower = None
    for ia in a_idx:
        grow = 2 ** (e - m) + ia * ia * 2 ** (e - m - 2 * n - 1)  # Delta (1 + a^2/2)
        up = lin(ia, T.ib + 1, n, n) + 6 * 2 ** (e - n) + grow
        dn = lin(ia, T.ib, n, n) - 6 * 2 ** (e - n) - grow
        upper = up if upper is None else np.maximum(upper, up)
        lower = dn if lower is None else np.minimum(lower, dn)
    step = 2 ** (e - g)
    top = np.minimum(upper // step, yhi_grid)
    bot = np.maximum(-((-lower) // step), ylo_grid)
    live = bot <= top
    if not live.any():
        return True
    # membership of the extreme grid points in 6(T^Delta)
    cand_hi = None
    cand_lo = None
    for ia in (big.ia, big.ia + 1):
        up = lin(ia, big.ib + 1, m, m) + 6 * 2 ** (e - m)
        dn = lin(ia, big.ib, m, m) - 6 * 2 ** (e - m)
        cand_hi = up if cand_hi is None else np.maximum(cand_hi, up)
        cand_lo = dn if cand_lo is None else np.minimum(cand_lo, dn)
    ok = (top * step <= cand_hi) & (bot * step >= cand_lo)
    return bool(np.all(ok[live]))


# -------------------------------------------------------------- rescaling


def rescale_cubeset(P: CubeSet, Q: DyadicCube) -> CubeSet:
    """phi_Q(P cap Q): the part of P inside Q, blown up so Q becomes [0,1)^2."""
    if Q.n > P.n:
        raise InvalidScale(f"cube scale 2^-{Q.n} is finer than the set scale 2^-{P.n}")
    k = P.n - Q.n
    ox, oy = Q.ix << k, Q.iy << k
    cells = {}
    for (ix, iy), val in P.cells.items():
        if ix >> k == Q.ix and (P.dim == 1 or iy >> k == Q.iy):
            cells[(ix - ox, iy - oy if P.dim == 2 else 0)] = val
    return CubeSet(k, cells, P.dim)


# -------------------------------------------------------------------- I/O


def dumps_cubeset(P: CubeSet) -> str:
    head = f"CUBESET v1 n={P.n}" + (" dim=1" if P.dim == 1 else "")
    lines = [head]
    for (ix, iy), (mult, w) in sorted(P.cells.items()):
        lines.append(f"{P.n} {ix} {iy} {mult} {w!r}")
    return "\n".join(lines) + "\n"


def dumps_tubeset(T: TubeSet) -> str:
    lines = [f"TUBESET v1 n={T.n} mode={T.mode}"]
    for (ia, ib), mult in sorted(T.tubes.items()):
        lines.append(f"{T.n} {ia} {ib} {mult} 1.0")
    return "\n".join(lines) + "\n"


def _header(line: str) -> tuple[str, dict[str, str]]:
    parts = line.split()
    if len(parts) < 3 or parts[1] != "v1":
        raise ValueError(f"bad header: {line!r}")
    kv = dict(p.split("=", 1) for p in parts[2:])
    return parts[0], kv


def loads_set(text: str):
    """Parse either a CUBESET or a TUBESET document."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise ValueError("empty set file")
    kind, kv = _header(rows[0])
    n = int(kv["n"])
    recs = []
    for ln in rows[1:]:
        f = ln.split()
        if len(f) != 5:
            raise ValueError(f"bad record: {ln!r}")
        if int(f[0]) != n:
            raise ValueError(f"record scale {f[0]} differs from header n={n}")
        recs.append((int(f[1]), int(f[2]), int(f[3]), float(f[4])))
    if kind == "CUBESET":
        cells = {}
        for ix, iy, mult, w in recs:
            if (ix, iy) in cells:
                raise ValueError(f"duplicate cube record {(ix, iy)}")
            cells[(ix, iy)] = (mult, w)
        return CubeSet(n, dict(sorted(cells.items())), int(kv.get("dim", 2)))
    if kind == "TUBESET":
        tubes = {}
        for ia, ib, mult, _ in recs:
            tubes[(ia, ib)] = tubes.get((ia, ib), 0) + mult
        return TubeSet(n, dict(sorted(tubes.items())), kv.get("mode", "distinct"))
    raise ValueError(f"unknown set kind {kind!r}")


def write_set(path, S) -> None:
    text = dumps_cubeset(S) if isinstance(S, CubeSet) else dumps_tubeset(S)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def read_set(path):
    with open(path) as fh:
        return loads_set(fh.read())


def full_grid(n: int, dim: int = 2) -> CubeSet:
    d = 2**n
    if dim == 1:
        return CubeSet(n, {(i, 0): (1, 1.0) for i in range(d)}, 1)
    return CubeSet(n, {(i, j): (1, 1.0) for i in range(d) for j in range(d)})


__all__ = [
    "Scale", "InvalidScale", "DyadicCube", "DyadicTube", "Line", "CubeSet", "TubeSet",
    "duality_line", "covering_number", "parent_counts", "parent_tube", "cube_in_fat_tube",
    "point_in_fat_tube", "fat_tube_y_bounds", "fat_tube_columns", "column_bounds",
    "pack", "fat_tube_cells",
    "thicken_containment_check", "rescale_cubeset", "tube_containing", "tube_index_bounds",
    "dumps_cubeset", "dumps_tubeset", "loads_set", "write_set", "read_set", "full_grid",
    "exponent",
]

"""Regularity checkers (Frostman, Katz-Tao, Ahlfors-David), uniformity and
branching functions.

Ball family: for every dyadic r in [delta, 1] the balls of radius r*sqrt(2)
circumscribing dyadic r-cubes, centred at the r-cube centres. The lower
Ahlfors-David bound uses balls of radius r centred at cube centres of P.
A delta-cube meets an open ball iff the distance from the centre to the
closed cube is smaller than the radius; all of this is integer arithmetic in
half-cell units.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import CubeSet, exponent, covering_number, pack


@dataclass(frozen=True)
class Witness:
    cx: float
    cy: float
    r: float


@dataclass(frozen=True)
class RegularityReport:
    cls: str
    s: float
    best_constant: float
    witness: Witness
    count: int = 0  # ball count at the witness, for re-evaluation

    def to_json(self) -> str:
        return json.dumps(
            {
                "class": self.cls,
                "s": self.s,
                "best_constant": self.best_constant,
                "witness": {"cx": self.witness.cx, "cy": self.witness.cy, "r": self.witness.r},
            },
            sort_keys=True,
        )


class _Occupancy:
    """Dense 0/1 grid of the distinct cubes of a set, with row prefix sums."""

    def __init__(self, P: CubeSet):
        idx = P.index_array()
        self.idx = idx
        self.x0 = int(idx[:, 0].min())
        self.y0 = int(idx[:, 1].min())
        w = int(idx[:, 0].max()) - self.x0 + 1
        h = int(idx[:, 1].max()) - self.y0 + 1
        occ = np.zeros((h, w), dtype=np.int64)
        occ[idx[:, 1] - self.y0, idx[:, 0] - self.x0] = 1
        self.w, self.h = w, h
        # cum[row, i] = number of occupied cells with x-offset < i in that row
        self.cum = np.zeros((h, w + 1), dtype=np.int64)
        np.cumsum(occ, axis=1, out=self.cum[:, 1:])

    def ball_counts(self, hx: np.ndarray, hy: np.ndarray, r2: int) -> np.ndarray:
        """Cells meeting the open ball |z - c| < sqrt(r2), everything in half-cell units.

        Centres (hx, hy) are integers in half-cell units; the cell (i, j)
        spans [2i, 2i+2] x [2j, 2j+2].
        """
        hx = np.asarray(hx, dtype=np.int64)
        hy = np.asarray(hy, dtype=np.int64)
        out = np.zeros(hx.shape, dtype=np.int64)
        reach = math.isqrt(r2) + 2  # rows further than this in half units are out
        jmin = (hy - reach) // 2
        jmax = (hy + reach) // 2 + 1
        span = int((jmax - jmin).max()) + 1 if hx.size else 0
        for d in range(span):
            j = jmin + d
            dy = np.maximum(np.maximum(2 * j - hy, 0), hy - 2 * j - 2)
            rem = r2 - dy * dy
            ok = (rem > 0) & (j <= jmax)
            if not ok.any():
                continue
            # largest w with w^2 < rem
            w = np.zeros_like(rem)
            w[ok] = _isqrt_vec(rem[ok] - 1)
            ilo = -((-(hx - w - 2)) // 2)
            ihi = (hx + w) // 2
            row = j - self.y0
            ok &= (row >= 0) & (row < self.h)
            lo = np.clip(ilo - self.x0, 0, self.w)
            hi = np.clip(ihi - self.x0 + 1, 0, self.w)
            sel = ok & (hi > lo)
            if sel.any():
                rr = row[sel]
                out[sel] += self.cum[rr, hi[sel]] - self.cum[rr, lo[sel]]
        return out


def _isqrt_vec(v: np.ndarray) -> np.ndarray:
    """Exact floor square root for nonnegative int64 arrays."""
    r = np.floor(np.sqrt(v.astype(np.float64))).astype(np.int64)
    r = np.where(r * r > v, r - 1, r)
    r = np.where((r + 1) * (r + 1) <= v, r + 1, r)
    return r


def _cube_ball_scan(P: CubeSet, ks: Sequence[int]):
    """Yield (k, I, J, counts) for circumscribed balls of dyadic 2^-k cubes."""
    occ = _Occupancy(P)
    idx = occ.idx
    n = P.n
    for k in ks:
        L = 2 ** (n - k)
        par = np.unique(idx >> (n - k), axis=0)
        cand = np.unique(
            (par[:, None, :] + np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)])[None]).reshape(-1, 2),
            axis=0,
        )
        hx = cand[:, 0] * 2 * L + L
        hy = cand[:, 1] * 2 * L + L
        counts = occ.ball_counts(hx, hy, 8 * L * L)
        yield k, cand[:, 0], cand[:, 1], counts


def _scan_constant(P: CubeSet, s: float, ball_scales, norm_kind: str, cls: str) -> RegularityReport:
    if len(P) == 0:
        raise ValueError("regularity checks need a nonempty set")
    n = P.n
    ks = sorted({exponent(r) for r in ball_scales}) if ball_scales is not None else list(range(n + 1))
    if any(k > n for k in ks):
        raise ValueError("ball scales must lie in [delta, 1]")
    total = len(P)
    best = None
    for k, I, J, counts in _cube_ball_scan(P, ks):
        norm = _norm(norm_kind, k, n, s, total)
        ratio = counts / norm
        top = ratio.max()
        hit = np.flatnonzero(ratio == top)
        # smallest centre lexicographically among ties at this scale
        order = np.lexsort((J[hit], I[hit]))
        h = hit[order[0]]
        cx = Fraction(2 * int(I[h]) + 1, 2 ** (k + 1))
        cy = Fraction(2 * int(J[h]) + 1, 2 ** (k + 1))
        cand = (float(top), cx, cy, k, int(counts[h]))
        if best is None or cand[0] > best[0] or (cand[0] == best[0] and (cx, cy, -k) < (best[1], best[2], -best[3])):
            best = cand
    val, cx, cy, k, cnt = best
    return RegularityReport(cls, float(s), val, Witness(float(cx), float(cy), 2.0**-k), cnt)


def _norm(kind: str, k: int, n: int, s: float, total: int) -> float:
    if kind == "frostman":
        return (2.0**-k) ** s * total
    if kind == "katz_tao":
        return (2.0 ** (n - k)) ** s
    raise ValueError(kind)


def frostman_constant(P: CubeSet, s: float, ball_scales=None) -> RegularityReport:
    """Smallest C with |P cap B(x, r sqrt 2)|_delta <= C r^s |P|_delta over the ball family."""
    return _scan_constant(P, s, ball_scales, "frostman", "frostman")


def katz_tao_constant(P: CubeSet, s: float, ball_scales=None) -> RegularityReport:
    """Smallest C with |P cap B(x, r sqrt 2)|_delta <= C (r/delta)^s."""
    return _scan_constant(P, s, ball_scales, "katz_tao", "katz_tao")


def ratio_at(P: CubeSet, report: RegularityReport) -> float:
    """Re-evaluate a report's ratio at its witness."""
    n = P.n
    k = round(-math.log2(report.witness.r))
    L = 2 ** (n - k)
    occ = _Occupancy(P)
    hx = round(report.witness.cx * 2 ** (n + 1))
    hy = round(report.witness.cy * 2 ** (n + 1))
    if report.cls == "ad_regular_lower":
        cnt = int(occ.ball_counts(np.array([hx]), np.array([hy]), 4 * L * L)[0])
        return (2.0**-k) ** report.s * len(P) / cnt
    cnt = int(occ.ball_counts(np.array([hx]), np.array([hy]), 8 * L * L)[0])
    kind = "katz_tao" if report.cls == "katz_tao" else "frostman"
    return cnt / _norm(kind, k, n, report.s, len(P))


def ad_regular_constants(P: CubeSet, s: float, ball_scales=None) -> tuple[RegularityReport, RegularityReport]:
    """(upper, lower) Ahlfors-David constants.

    upper is the Frostman constant; lower is the sup over centres of cubes
    of P and dyadic r of r^s |P|_delta / |P cap B(x, r)|_delta.
    """
    upper = _scan_constant(P, s, ball_scales, "frostman", "ad_regular_upper")
    n = P.n
    ks = sorted({exponent(r) for r in ball_scales}) if ball_scales is not None else list(range(n + 1))
    occ = _Occupancy(P)
    idx = occ.idx
    hx = 2 * idx[:, 0] + 1
    hy = 2 * idx[:, 1] + 1
    total = len(P)
    best = None
    for k in ks:
        L = 2 ** (n - k)
        counts = occ.ball_counts(hx, hy, 4 * L * L)
        ratio = (2.0**-k) ** s * total / counts
        top = ratio.max()
        hit = np.flatnonzero(ratio == top)
        h = hit[np.lexsort((idx[hit, 1], idx[hit, 0]))[0]]
        cx = Fraction(int(hx[h]), 2 ** (n + 1))
        cy = Fraction(int(hy[h]), 2 ** (n + 1))
        cand = (float(top), cx, cy, k, int(counts[h]))
        if best is None or cand[0] > best[0] or (cand[0] == best[0] and (cx, cy, -k) < (best[1], best[2], -best[3])):
            best = cand
    val, cx, cy, k, cnt = best
    lower = RegularityReport("ad_regular_lower", float(s), val, Witness(float(cx), float(cy), 2.0**-k), cnt)
    return upper, lower


# ---------------------------------------------------------- uniform sets


def _ladder(scales) -> list[int]:
    ex = [exponent(x) for x in scales]
    if any(b <= a for a, b in zip(ex, ex[1:])):
        raise ValueError("scales must be strictly decreasing")
    return ex


def next_pow2_above(c: int) -> int:
    """Smallest power of two N with c < N."""
    return 1 << int(c).bit_length()


def child_counts(P: CubeSet, coarse: int, fine: int) -> np.ndarray:
    """For each coarse cube meeting P, the number of fine cubes of P inside it."""
    f = np.unique(pack(P.index_array() >> (P.n - fine)))
    sh = fine - coarse
    par = ((f >> 32) >> sh << 32) | ((f & 0xFFFFFFFF) >> sh)
    _, cnt = np.unique(par, return_counts=True)
    return cnt


def is_uniform(P: CubeSet, scales) -> tuple[bool, list[int] | None]:
    """Check {Delta_j}-uniformity; scales run from 1 (exponent 0) down to P's scale.

    N_j is the smallest power of two above the largest child count, and the
    window [N_j/2, N_j) is then verified for every parent cube.
    """
    ex = _ladder(scales)
    if ex[0] != 0 or ex[-1] != P.n:
        raise ValueError("scale ladder must run from 1 to the set scale")
    if len(P) == 0:
        return False, None
    Ns = []
    for a, b in zip(ex, ex[1:]):
        cnt = child_counts(P, a, b)
        N = next_pow2_above(int(cnt.max()))
        if int(cnt.min()) < N // 2:
            return False, None
        Ns.append(N)
    return True, Ns


@dataclass(frozen=True)
class BranchingFunction:
    """Piecewise-affine f on [0, m] with values at the integers.

    values are Fractions when exact; floats are converted to the exact
    rational they represent before any slope logic runs.
    """

    m: int
    T: int
    values: tuple

    def __post_init__(self):
        if len(self.values) != self.m + 1:
            raise ValueError("need m+1 values")
        if self.values[0] != 0:
            raise ValueError("f(0) must be 0")

    @property
    def exact(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(v) for v in self.values)

    def __call__(self, x) -> Fraction:
        x = Fraction(x)
        if not 0 <= x <= self.m:
            raise ValueError(f"x={x} outside [0, {self.m}]")
        v = self.exact
        j = min(int(x), self.m - 1) if self.m > 0 else 0
        if x == j:
            return v[j]
        return v[j] + (v[j + 1] - v[j]) * (x - j)

    def increments(self) -> list[Fraction]:
        v = self.exact
        return [v[j + 1] - v[j] for j in range(self.m)]


def branching_function(P: CubeSet, T: int) -> BranchingFunction:
    """f(j) = log2 |P|_{2^{-jT}} / T, exact when the counts are powers of two."""
    if T <= 0 or P.n % T:
        raise ValueError(f"set scale 2^-{P.n} is not of the form 2^-(mT) for T={T}")
    m = P.n // T
    ok, _ = is_uniform(P, [j * T for j in range(m + 1)])
    if not ok:
        raise ValueError("set is not uniform on the 2^-jT ladder; uniformize it first")
    vals = []
    for j in range(m + 1):
        c = covering_number(P, j * T)
        if c & (c - 1) == 0:
            vals.append(Fraction(c.bit_length() - 1, T))
        else:
            vals.append(math.log2(c) / T)
    return BranchingFunction(m, T, tuple(vals))

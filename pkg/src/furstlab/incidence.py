"""Weighted incidence counts, rich-tube censuses, energy triples and the
high-low split of a sum of tube bumps.

Tubes are walked column by column: for each grid column the exact iy-range
of cells inside the fattened tube comes from `column_bounds`, and cell sums
over that range come from per-column prefix sums. Work is O(|T| / Delta).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import CubeSet, TubeSet, InvalidScale, column_bounds, exponent

CHUNK = 2048


@dataclass
class IncidenceResult:
    total: float
    per_tube: dict = field(default_factory=dict)  # tube -> (count, weighted count)
    per_cube: dict = field(default_factory=dict)  # cube -> incidences contributed

    def to_dict(self):
        return {
            "total": self.total,
            "tubes": len(self.per_tube),
            "cubes": len(self.per_cube),
        }


class _ColumnGrid:
    """Dense per-column prefix sums of a function on grid cells."""

    def __init__(self, keys: np.ndarray, values: np.ndarray, pad: int = 0):
        self.x0 = int(keys[:, 0].min())
        self.y0 = int(keys[:, 1].min())
        self.w = int(keys[:, 0].max()) - self.x0 + 1
        self.h = int(keys[:, 1].max()) - self.y0 + 1
        vals = np.zeros((self.w, self.h), dtype=values.dtype)
        np.add.at(vals, (keys[:, 0] - self.x0, keys[:, 1] - self.y0), values)
        self.cum = np.zeros((self.w, self.h + 1), dtype=values.dtype)
        np.cumsum(vals, axis=1, out=self.cum[:, 1:])
        self.cols = np.arange(self.x0, self.x0 + self.w, dtype=np.int64)

    def range_sums(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Sum over iy in [lo, hi] for every (row of lo, column) pair."""
        a = np.clip(lo - self.y0, 0, self.h)
        b = np.clip(hi - self.y0 + 1, 0, self.h)
        b = np.maximum(a, b)
        col = np.arange(self.w)[None, :]
        return self.cum[col, b] - self.cum[col, a]


def _tube_arrays(T: TubeSet):
    keys = np.array(sorted(T.tubes), dtype=np.int64).reshape(-1, 2)
    mult = np.array([T.tubes[tuple(k)] for k in keys.tolist()], dtype=np.int64)
    return keys, mult


def incidence_exact(P: CubeSet, T: TubeSet, Delta, fat=6) -> IncidenceResult:
    """I_w(P, T) = sum over p and T with p^Delta inside fat*T of w(p).

    Multiplicities of cubes and tubes both count. per_cube[p] is the number
    of incidences p contributes (its multiplicity times the tubes holding
    p^Delta).
    """
    m = exponent(Delta)
    if T.n != m:
        raise InvalidScale(f"tubes live at scale 2^-{T.n}, expected 2^-{m}")
    if P.n < m:
        raise InvalidScale(f"cube scale 2^-{P.n} is coarser than Delta = 2^-{m}")
    if len(P) == 0 or len(T) == 0:
        return IncidenceResult(0.0, {}, {})
    k = P.n - m
    idx = P.index_array()
    mult = np.array([P.cells[tuple(c)][0] for c in idx.tolist()], dtype=np.int64)
    wts = np.array([P.cells[tuple(c)][1] for c in idx.tolist()], dtype=np.float64)
    par = idx >> k
    cnt_grid = _ColumnGrid(par, mult)
    w_grid = _ColumnGrid(par, mult * wts)
    keys, tmult = _tube_arrays(T)
    per_tube = {}
    # tubes holding each parent cell, via difference arrays per column
    hold = np.zeros((cnt_grid.w, cnt_grid.h + 1), dtype=np.int64)
    total = 0.0
    for s in range(0, len(keys), CHUNK):
        ka = keys[s : s + CHUNK]
        lo, hi = column_bounds(ka[:, 0], ka[:, 1], m, fat, m, cnt_grid.cols)
        c = cnt_grid.range_sums(lo, hi).sum(axis=1)
        wsum = w_grid.range_sums(lo, hi).sum(axis=1)
        tm = tmult[s : s + CHUNK]
        for key, ci, wi in zip(ka.tolist(), c.tolist(), wsum.tolist()):
            per_tube[tuple(key)] = (int(ci), float(wi))
        total += float(np.dot(tm.astype(np.float64), wsum))
        a = np.clip(lo - cnt_grid.y0, 0, cnt_grid.h)
        b = np.clip(hi - cnt_grid.y0 + 1, 0, cnt_grid.h)
        ok = b > a
        colix = np.broadcast_to(np.arange(cnt_grid.w)[None, :], a.shape)
        tmb = np.broadcast_to(tm[:, None], a.shape)
        np.add.at(hold, (colix[ok], a[ok]), tmb[ok])
        np.add.at(hold, (colix[ok], b[ok]), -tmb[ok])
    hold = np.cumsum(hold, axis=1)
    per_cube = {}
    for (ix, iy), mu, (px, py) in zip(idx.tolist(), mult.tolist(), par.tolist()):
        per_cube[(ix, iy)] = int(hold[px - cnt_grid.x0, py - cnt_grid.y0]) * mu
    return IncidenceResult(total, per_tube, per_cube)


def _tube_cell_counts(P: CubeSet, keys: np.ndarray, fat, m_coarse: int):
    """Per (tube, coarse cube) counts of cubes of P (with multiplicity) inside fat*T.

    Tubes live at P's scale. Yields (tube_index, Qx, Qy, count) arrays chunk by chunk.
    """
    n = P.n
    L = 2 ** (n - m_coarse)
    idx = P.index_array()
    mult = np.array([P.cells[tuple(c)][0] for c in idx.tolist()], dtype=np.int64)
    grid = _ColumnGrid(idx, mult)
    # pad the column range to whole coarse cubes so the reshape below is aligned
    cx0 = (grid.x0 // L) * L
    cx1 = ((grid.x0 + grid.w + L - 1) // L) * L
    cols = np.arange(cx0, cx1, dtype=np.int64)
    inside = (cols >= grid.x0) & (cols < grid.x0 + grid.w)
    colpos = np.clip(cols - grid.x0, 0, grid.w - 1)
    for s in range(0, len(keys), CHUNK // 4):
        ka = keys[s : s + CHUNK // 4]
        lo, hi = column_bounds(ka[:, 0], ka[:, 1], n, fat, n, cols)
        lo = np.maximum(lo, grid.y0)
        hi = np.minimum(hi, grid.y0 + grid.h - 1)
        r0 = np.floor_divide(lo, L)
        r1 = np.floor_divide(hi, L)
        span = int(np.max(np.where(hi >= lo, r1 - r0, 0))) + 1
        nt, nc = lo.shape
        tix, qx, qy, cc = [], [], [], []
        for d in range(span):
            r = r0 + d
            a = np.maximum(lo, r * L)
            b = np.minimum(hi, r * L + L - 1)
            ok = (b >= a) & inside[None, :]
            aa = np.clip(a - grid.y0, 0, grid.h)
            bb = np.clip(b - grid.y0 + 1, 0, grid.h)
            bb = np.maximum(aa, bb)
            val = grid.cum[colpos[None, :], bb] - grid.cum[colpos[None, :], aa]
            val = np.where(ok, val, 0)
            # sum columns within each coarse cube; rows r vary per column so key on (t, col-block, r)
            t_i = np.broadcast_to(np.arange(nt)[:, None], lo.shape)
            c_b = np.broadcast_to((cols // L)[None, :], lo.shape)
            sel = val > 0
            tix.append(t_i[sel] + s)
            qx.append(c_b[sel])
            qy.append(r[sel])
            cc.append(val[sel])
        if not tix:
            continue
        tix = np.concatenate(tix)
        qx = np.concatenate(qx)
        qy = np.concatenate(qy)
        cc = np.concatenate(cc)
        if tix.size == 0:
            continue
        packed = np.stack([tix, qx, qy], axis=1)
        uniq, inv = np.unique(packed, axis=0, return_inverse=True)
        sums = np.bincount(inv.reshape(-1), weights=cc, minlength=len(uniq)).astype(np.int64)
        yield uniq[:, 0], uniq[:, 1], uniq[:, 2], sums


def rich_tube_census(P: CubeSet, tubes: TubeSet, Delta, b: int, fat=4) -> dict:
    """N_{Delta,b}(T): number of Delta-cubes Q with |fat*T cap Q cap P| >= b.

    Tubes are at P's scale delta; cubes of P count with multiplicity and each
    Delta-cube Q counts once.
    """
    m = exponent(Delta)
    if b <= 0:
        raise ValueError("b must be positive")
    if tubes.n != P.n:
        raise InvalidScale("census tubes must live at the cube scale")
    if not m < P.n:
        raise InvalidScale("need delta < Delta")
    keys, _ = _tube_arrays(tubes)
    out = {tuple(k): 0 for k in keys.tolist()}
    if len(P) == 0:
        return out
    for tix, _, _, sums in _tube_cell_counts(P, keys, fat, m):
        hit = np.bincount(tix[sums >= b], minlength=len(keys))
        for i in np.flatnonzero(hit):
            out[tuple(keys[i].tolist())] += int(hit[i])
    return out


def delta_separated(P: CubeSet, Delta) -> bool:
    """True iff distinct Delta-cubes meeting P are at distance >= Delta."""
    m = exponent(Delta)
    par = np.unique(P.index_array() >> (P.n - m), axis=0)
    occupied = {tuple(q) for q in par.tolist()}
    for x, y in occupied:
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if (dx or dy) and (x + dx, y + dy) in occupied:
                    return False
    return True


@dataclass
class EnergyReport:
    J: int
    estimate: float
    fitted_constant: float
    pairs: int


def all_tubes(n: int) -> TubeSet:
    d = 2**n
    keys = [(a, b) for a in range(-d, d) for b in range(-2 * d, 2 * d)]
    return TubeSet(n, {k: 1 for k in keys}, "distinct")


def energy_triples(P: CubeSet, Delta, fat=6) -> EnergyReport:
    """J = #{(p1, p2, T)}: p1, p2 in different Delta-cubes, both inside fat*T.

    T ranges over every dyadic delta-tube (slopes [-1,1), intercepts [-2,2));
    pairs are ordered and cubes count with multiplicity. Also returns the
    pair estimate sum 1/dist(p1, p2) and J / (log2(1/Delta) |P|^2).
    """
    m = exponent(Delta)
    if not delta_separated(P, m):
        raise ValueError("Delta-cubes of P are not Delta-separated")
    n = P.n
    keys, _ = _tube_arrays(all_tubes(n))
    J = 0
    for tix, _, _, sums in _tube_cell_counts(P, keys, fat, m):
        tot = np.bincount(tix, weights=sums, minlength=len(keys))
        sq = np.bincount(tix, weights=sums.astype(np.float64) ** 2, minlength=len(keys))
        J += int(round(float((tot**2 - sq).sum())))
    idx = P.index_array()
    mult = np.array([P.cells[tuple(c)][0] for c in idx.tolist()], dtype=np.float64)
    cen = (idx + 0.5) * 2.0**-n
    par = idx >> (n - m)
    est = 0.0
    pairs = 0
    for i in range(len(idx)):
        diff = np.any(par != par[i], axis=1)
        d = np.hypot(*(cen[diff] - cen[i]).T)
        est += float(mult[i] * np.sum(mult[diff] / d))
        pairs += int(mult[i] * mult[diff].sum())
    size = float(mult.sum())
    logd = max(m, 1)
    return EnergyReport(J, est, J / (logd * size * size), pairs)


def tubes_through_pair(p1: tuple[int, int], p2: tuple[int, int], n: int, fat=6) -> int:
    """Number of dyadic n-tubes T with both cubes inside fat*T."""
    P = CubeSet.from_indices(n, [p1, p2])
    keys, _ = _tube_arrays(all_tubes(n))
    total = 0
    for tix, _, _, sums in _tube_cell_counts(P, keys, fat, n):
        per = np.bincount(tix, weights=sums, minlength=len(keys))
        total += int(np.sum(per == 2))
    return total


# ------------------------------------------------------------- high-low


def _ramp(tau):
    """C^2 ramp from 0 to 1 on [0, 1]: tau - sin(2 pi tau) / (2 pi)."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau - np.sin(2 * np.pi * tau) / (2 * np.pi)


def bump_1d(v):
    """1 on [-3, 3], 0 outside (-4, 4), C^2 in between."""
    return 1.0 - _ramp(np.abs(v) - 3.0)


@dataclass
class HighLowReport:
    S: float
    eps: float
    incidences: float
    high_energy: float
    total_energy: float
    high_ratio: float  # high_energy / (S delta |T|)
    bound_high: float
    low_term: float
    fitted_constant: float
    parseval_error: float
    single_tube_energy: float

    def to_dict(self):
        return dict(self.__dict__)


def tube_bump_field(T: TubeSet, n: int, oversample: int = 1):
    """f = sum of f_T on the grid of [-2, 3)^2 with step delta / oversample.

    f_T(x, y) = bump(6 (x - 1/2)) * bump((y - a x - b) / delta) with (a, b)
    the centre of T's parameter cube: 1 on the 3 delta-core of the tube over
    [0, 1], vanishing outside the 4 delta-core over (-1/6, 7/6).
    """
    d = 2.0**-n
    h = d / oversample
    N = 5 * 2**n * oversample
    xs = -2.0 + (np.arange(N) + 0.5) * h
    along = bump_1d(6.0 * (xs - 0.5))
    cols = np.flatnonzero(along > 0)
    xa = xs[cols]
    f = np.zeros(N * N, dtype=np.float64)
    keys, mult = _tube_arrays(T)
    ac = (keys[:, 0] + 0.5) * d
    bc = (keys[:, 1] + 0.5) * d
    reach = 4 * oversample + 2
    for s in range(0, len(keys), CHUNK):
        a = ac[s : s + CHUNK, None]
        b = bc[s : s + CHUNK, None]
        mu = mult[s : s + CHUNK, None, None].astype(np.float64)
        yc = a * xa[None, :] + b
        r0 = np.floor((yc + 2.0) / h - 0.5).astype(np.int64) - reach + 1
        rows = r0[:, :, None] + np.arange(2 * reach)[None, None, :]
        yv = -2.0 + (rows + 0.5) * h
        val = bump_1d((yv - yc[:, :, None]) / d) * along[cols][None, :, None] * mu
        ok = (rows >= 0) & (rows < N) & (val != 0)
        flat = rows * N + cols[None, :, None]
        f += np.bincount(flat[ok], weights=val[ok], minlength=N * N)
    return f.reshape(N, N), h  # f[row = y, col = x]


def high_energy(field_: np.ndarray, h: float, radius: float):
    """(high, total, parseval_error) for the split at frequency radius."""
    N = field_.shape[0]
    F = np.fft.fft2(field_)
    fr = np.fft.fftfreq(N, d=h)
    rad = np.hypot(fr[:, None], fr[None, :])
    cell = 1.0 / (N * h)
    # sharp radial mask with a one-cell cosine taper
    low = np.clip((radius + cell - rad) / cell, 0.0, 1.0)
    low = 0.5 - 0.5 * np.cos(np.pi * low)
    spec = np.abs(F) ** 2
    total_space = float(np.sum(field_**2)) * h * h
    total_freq = float(np.sum(spec)) * h * h / (N * N)
    high = float(np.sum(spec * (1.0 - low) ** 2)) * h * h / (N * N)
    err = abs(total_space - total_freq) / max(total_space, 1e-300)
    return high, total_space, err


def highlow_decompose(P: CubeSet, T: TubeSet, S, eps: float, oversample: int = 1) -> HighLowReport:
    """Measure the pieces of the high-low incidence inequality.

    S must be a power of two with delta^(-eps/100) <= S <= 1/delta so that
    T^(S delta) is a dyadic tube family.
    """
    n = P.n
    if T.n != n:
        raise InvalidScale("tubes and cubes must share the scale delta")
    S = float(S)
    k = round(math.log2(S)) if S > 0 else -1
    if S <= 0 or 2.0**k != S:
        raise ValueError(f"S must be a power of two, got {S}")
    if not (2.0 ** (n * eps / 100) <= S <= 2.0**n):
        raise ValueError(f"S={S} outside [delta^(-eps/100), 1/delta]")
    d = 2.0**-n
    inc = incidence_exact(P, T, n, 6).total
    low_inc = incidence_exact(P, T.thicken(n - k), n - k, 6).total
    low_term = S ** (-1 + eps) * low_inc
    ntubes = T.total_multiplicity()
    w2 = sum(mu * w * w for mu, w in P.cells.values())
    bound_high = math.sqrt(S / d * ntubes * w2)
    fld, h = tube_bump_field(T, n, oversample)
    radius = S ** (-1 + eps / 2) / d
    hi, tot, err = high_energy(fld, h, radius)
    one = TubeSet(n, {(0, 0): 1})
    single = float(np.sum(tube_bump_field(one, n, oversample)[0] ** 2)) * h * h
    denom = bound_high + low_term
    return HighLowReport(
        S=S, eps=eps, incidences=inc, high_energy=hi, total_energy=tot,
        high_ratio=hi / (S * d * ntubes) if ntubes else 0.0,
        bound_high=bound_high, low_term=low_term,
        fitted_constant=inc / denom if denom > 0 else 0.0,
        parseval_error=err, single_tube_energy=single,
    )

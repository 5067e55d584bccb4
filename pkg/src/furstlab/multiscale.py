"""Uniformization, slope analysis of branching functions, the interval
decomposition into linear / two-slope pieces, and per-interval verification
of the rescaled sets.

All slope logic runs on Fractions. Since f is affine between integers,
f minus any affine function attains its extremes on [a, b] at a, b or an
interior integer, so every "for all x" condition reduces to a finite check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
import numpy as np

from .dyadic import CubeSet, DyadicCube, InvalidScale, parent_counts, rescale_cubeset
from .regularity import BranchingFunction, ad_regular_constants


class PreconditionError(ValueError):
    pass


class NonTermination(RuntimeError):
    pass


# ------------------------------------------------------------ uniformize


def uniformize(P: CubeSet, T: int) -> CubeSet:
    """Largest-class pigeonhole, finest level first.

    For each level j = N..2 the surviving cubes at 2^-(j-1)T are grouped by
    their child count class [2^i, 2^(i+1)); the class holding the most cubes
    of P survives (ties: larger class). Removing whole subtrees never
    changes counts further down, so the result is uniform. The top level has
    a single parent and loses nothing, which gives |P'| >= (2T+1)^-(N-1) |P|.
    """
    if T <= 0 or P.n % T:
        raise InvalidScale(f"set scale 2^-{P.n} is not of the form 2^-(NT) for T={T}")
    N = P.n // T
    if len(P) == 0 or N == 0:
        return P
    idx = P.index_array()
    alive = np.ones(len(idx), dtype=bool)
    for j in range(N, 1, -1):
        kids = idx >> (P.n - j * T)
        # one integer key per cube keeps the set logic in numpy
        kid_key = (kids[:, 0] << 32) | kids[:, 1]
        par_key = ((kids[:, 0] >> T) << 32) | (kids[:, 1] >> T)
        uk = np.unique(kid_key[alive])
        uk_par = ((uk >> 32) >> T << 32) | ((uk & 0xFFFFFFFF) >> T)
        up, cnt = np.unique(uk_par, return_counts=True)
        cls = np.array([int(c).bit_length() - 1 for c in cnt])
        # delta-mass per parent
        mass = np.bincount(np.searchsorted(up, par_key[alive]), minlength=len(up))
        per_class = np.bincount(cls, weights=mass)
        best = max(range(len(per_class)), key=lambda i: (per_class[i], i))
        alive &= np.isin(par_key, up[cls == best])
    keys = [tuple(k) for k in idx[alive].tolist()]
    return P.subset(keys)


def uniformize_bound(N: int, T: int) -> Fraction:
    """Guaranteed retained fraction of the pigeonhole above."""
    return Fraction(1, (2 * T + 1) ** max(N - 1, 0))


# ----------------------------------------------------------------- slopes


def _vals(f) -> tuple:
    if isinstance(f, BranchingFunction):
        return f.exact
    return tuple(Fraction(v) for v in f)


def _at(v, x) -> Fraction:
    x = Fraction(x)
    m = len(v) - 1
    j = min(math.floor(x), m - 1)
    if x == j:
        return v[j]
    return v[j] + (v[j + 1] - v[j]) * (x - j)


def _points(a, b) -> list[Fraction]:
    a, b = Fraction(a), Fraction(b)
    pts = [a] + [Fraction(x) for x in range(math.floor(a) + 1, math.ceil(b))] + [b]
    return pts


def slope(f, a, b) -> Fraction:
    v = _vals(f)
    a, b = Fraction(a), Fraction(b)
    if not 0 <= a < b <= len(v) - 1:
        raise ValueError(f"need 0 <= a < b <= m, got [{a}, {b}]")
    return (_at(v, b) - _at(v, a)) / (b - a)


def is_eps_superlinear(f, a, b, sigma, eps) -> bool:
    """f(x) >= f(a) + sigma (x - a) - eps (b - a) on [a, b]."""
    v = _vals(f)
    a, b = Fraction(a), Fraction(b)
    fa = _at(v, a)
    floor_ = Fraction(eps) * (b - a)
    sigma = Fraction(sigma)
    return all(_at(v, x) >= fa + sigma * (x - a) - floor_ for x in _points(a, b))


def is_eps_linear(f, a, b, eps) -> bool:
    v = _vals(f)
    a, b = Fraction(a), Fraction(b)
    fa = _at(v, a)
    sl = (_at(v, b) - fa) / (b - a)
    tol = Fraction(eps) * (b - a)
    return all(abs(_at(v, x) - fa - sl * (x - a)) <= tol for x in _points(a, b))


def crossover(f, c, d, s, u) -> Fraction:
    """Point where the slope-u line from (c, f(c)) meets the slope-s line into (d, f(d))."""
    v = _vals(f)
    s, u = Fraction(s), Fraction(u)
    return (_at(v, d) - _at(v, c) - s * d + u * c) / (u - s)


def two_slope_ok(f, c, d, s, u, eps) -> bool:
    """f >= min(u-line from c, s-line into d) - eps (d - c) on [c, d]."""
    v = _vals(f)
    c, d = Fraction(c), Fraction(d)
    fc, fd = _at(v, c), _at(v, d)
    s, u = Fraction(s), Fraction(u)
    pts = _points(c, d)
    x0 = crossover(v, c, d, s, u)
    if c < x0 < d:
        pts.append(x0)
    slack = Fraction(eps) * (d - c)
    return all(_at(v, x) >= min(fc + u * (x - c), fd - s * (d - x)) - slack for x in pts)


# ---------------------------------------------------------- decomposition


@dataclass
class Interval:
    c: Fraction
    d: Fraction
    kind: str  # "a" or "b"
    slope: Fraction
    crossover: Fraction | None = None

    def length(self) -> Fraction:
        return self.d - self.c

    def to_dict(self):
        out = {"c": str(self.c), "d": str(self.d), "type": self.kind, "slope": str(self.slope)}
        if self.crossover is not None:
            out["crossover"] = str(self.crossover)
        return out


@dataclass
class IntervalDecomposition:
    m: int
    intervals: list[Interval]
    uncovered_length: Fraction
    s: Fraction
    t: Fraction
    u: Fraction
    eps: Fraction
    tau: Fraction  # min interval length / m
    tau_initial: Fraction  # same for the starting decomposition
    C: Fraction  # uncovered_length <= C eps m
    steps: int = 0
    log: list[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "m": self.m,
            "params": {k: str(getattr(self, k)) for k in ("s", "t", "u", "eps")},
            "tau": str(self.tau),
            "tau_initial": str(self.tau_initial),
            "C": str(self.C),
            "uncovered_length": str(self.uncovered_length),
            "steps": self.steps,
            "intervals": [iv.to_dict() for iv in self.intervals],
        }


def uncovered_constant(s, t, u) -> Fraction:
    """Lost length per unit eps m: early stop, discarded pieces, uncovered tail."""
    return 2 + 1 / (Fraction(t) - Fraction(s)) + 1 / (Fraction(u) - Fraction(t))


def check_preconditions(v, s, t, u, eps) -> None:
    m = len(v) - 1
    if m < 1:
        raise PreconditionError("need m >= 1")
    if not 0 < s < t < u:
        raise PreconditionError("need 0 < s < t < u")
    if not 0 < eps < min(u - s, Fraction(1, 2)):
        raise PreconditionError("need 0 < eps < min(u - s, 1/2)")
    inc = [v[j + 1] - v[j] for j in range(m)]
    if any(not 0 <= g <= 2 for g in inc):
        raise PreconditionError("f must be nondecreasing and 2-Lipschitz")
    e2m = eps * eps * m
    if any(v[j] < t * j - e2m for j in range(m + 1)):
        raise PreconditionError("f(x) >= t x - eps^2 m fails")
    if v[m] > (t + eps * eps) * m:
        raise PreconditionError("f(m) <= (t + eps^2) m fails")


def _chord_exit(v, pos: Fraction, u: Fraction):
    """Largest x* such that s_f(pos, y) >= u for all y in (pos, x*]; None if that is m
    with a strict chord (the interval cannot close with slope exactly u)."""
    m = len(v) - 1
    fp = _at(v, pos)
    # g(y) = f(y) - f(pos) - u (y - pos) >= 0 on (pos, x*]
    a = pos
    ga = Fraction(0)
    for b in range(math.floor(pos) + 1, m + 1):
        b = Fraction(b)
        gb = _at(v, b) - fp - u * (b - pos)
        if gb < 0:
            # root in (a, b]; g is affine here
            return a + ga * (b - a) / (ga - gb)
        a, ga = b, gb
    return a if ga == 0 else None


def initial_decomposition(v, u, eps2):
    """Greedy split into pieces that are eps2-linear with slope in [0, u] ("i")
    or eps2-superlinear with slope exactly u ("ii")."""
    m = len(v) - 1
    out = []
    pos = Fraction(0)
    while pos < m:
        nxt = Fraction(math.floor(pos) + 1)
        if (_at(v, nxt) - _at(v, pos)) / (nxt - pos) >= u:
            x = _chord_exit(v, pos, u)
            if x is None:
                break  # tail stays strictly above slope u: left uncovered
            out.append([pos, x, "ii"])
            pos = x
            continue
        best = nxt
        for d in range(m, int(nxt), -1):
            d = Fraction(d)
            if slope(v, pos, d) <= u and is_eps_linear(v, pos, d, eps2):
                best = d
                break
        out.append([pos, best, "i"])
        pos = best
    return out


def _find_cprime(v, ck: Fraction, dk: Fraction, s: Fraction) -> Fraction:
    """Largest c' in (0, ck) with s_f(c', dk) = s."""
    target = _at(v, dk) - s * dk

    def g(x):
        return _at(v, x) - s * x - target

    b = ck
    gb = g(b)
    while b > 0:
        a = Fraction(math.ceil(b) - 1)
        ga = g(a)
        if ga <= 0:
            return b - gb * (b - a) / (gb - ga)
        b, gb = a, ga
    raise AssertionError("no crossing found")


def decompose_branching(f, s, t, u, eps) -> IntervalDecomposition:
    s, t, u, eps = (Fraction(x) for x in (s, t, u, eps))
    v = _vals(f)
    m = len(v) - 1
    check_preconditions(v, s, t, u, eps)
    work = initial_decomposition(v, u, eps * eps)
    if not work:
        # f climbs faster than u all the way: everything is uncovered tail
        return IntervalDecomposition(m, [], Fraction(m), s, t, u, eps, Fraction(0), Fraction(0),
                                     uncovered_constant(s, t, u), 0, ["empty initial decomposition"])
    tau0 = min(d - c for c, d, _ in work) / m
    guard = math.floor(1 / tau0) + 1
    log = []
    final: list[Interval] = []
    k = len(work) - 1
    steps = 0
    while k >= 0:
        steps += 1
        if steps > guard:
            raise NonTermination(f"more than {guard} steps")
        c, d, kind = work[k]
        if kind == "ii":
            final.append(Interval(c, d, "b", slope(v, c, d), crossover(v, c, d, s, u)))
            k -= 1
            continue
        tk = slope(v, c, d)
        if tk >= s:
            final.append(Interval(c, d, "a", tk))
            k -= 1
            continue
        if d <= eps * m / (t - s):
            log.append(f"stop at [{c}, {d}]: slope {tk} < s near the origin")
            break
        cp = _find_cprime(v, c, d, s)
        ell = next((i for i in range(k) if work[i][0] <= cp <= work[i][1]), None)
        if ell is None:
            final.append(Interval(cp, d, "b", slope(v, cp, d), crossover(v, cp, d, s, u)))
            log.append(f"c'={cp} uncovered")
            below = [i for i in range(k) if work[i][1] < cp]
            k = below[-1] if below else -1
            continue
        cl, dl, kl = work[ell]
        if cp - cl <= 2 * eps * (dl - cl):
            final.append(Interval(cp, d, "b", slope(v, cp, d), crossover(v, cp, d, s, u)))
            log.append(f"c'={cp} near start of [{cl}, {dl}]: discard [{cl}, {cp}]")
            k = ell - 1
        elif kl == "i" and slope(v, cl, cp) <= u:
            final.append(Interval(cp, d, "b", slope(v, cp, d), crossover(v, cp, d, s, u)))
            work[ell] = [cl, cp, "i'"]
            log.append(f"c'={cp} splits [{cl}, {dl}]")
            k = ell
        else:
            # a type ii piece, or a linear piece whose left part [cl, c'] is
            # steeper than u: either way f stays above the u-line from cl up
            # to eps (c' - cl), which is all the merge needs
            final.append(Interval(cl, d, "b", slope(v, cl, d), crossover(v, cl, d, s, u)))
            log.append(f"c'={cp} merges with [{cl}, {dl}]")
            k = ell - 1
    final.sort(key=lambda iv: iv.c)
    covered = sum((iv.length() for iv in final), Fraction(0))
    tau = min((iv.length() for iv in final), default=Fraction(0)) / m
    return IntervalDecomposition(
        m=m, intervals=final, uncovered_length=m - covered, s=s, t=t, u=u, eps=eps,
        tau=tau, tau_initial=tau0, C=uncovered_constant(s, t, u), steps=steps, log=log,
    )


def check_decomposition(f, dec: IntervalDecomposition) -> list[str]:
    """Every violated output condition, as readable strings (empty = all good)."""
    v = _vals(f)
    bad = []
    s, u, eps, m = dec.s, dec.u, dec.eps, dec.m
    ivs = dec.intervals
    for a, b in zip(ivs, ivs[1:]):
        if a.d > b.c:
            bad.append(f"overlap [{a.c},{a.d}] [{b.c},{b.d}]")
    for iv in ivs:
        c, d = iv.c, iv.d
        if not 0 <= c < d <= m:
            bad.append(f"[{c},{d}] not inside [0,{m}]")
            continue
        if d - c < dec.tau * m:
            bad.append(f"[{c},{d}] shorter than tau m")
        if d - c < 2 * eps * dec.tau_initial * m:
            bad.append(f"[{c},{d}] shorter than 2 eps tau0 m")
        sl = slope(v, c, d)
        if sl != iv.slope or not s <= sl <= u:
            bad.append(f"[{c},{d}] slope {sl} not in [{s},{u}]")
        if iv.kind == "a":
            if not is_eps_linear(v, c, d, eps):
                bad.append(f"[{c},{d}] not eps-linear")
        elif iv.kind == "b":
            if not is_eps_superlinear(v, c, d, sl, eps):
                bad.append(f"[{c},{d}] not eps-superlinear")
            if not two_slope_ok(v, c, d, s, u, eps):
                bad.append(f"[{c},{d}] two-slope bound fails")
        else:
            bad.append(f"[{c},{d}] unknown type {iv.kind}")
    covered = sum((iv.length() for iv in ivs), Fraction(0))
    if m - covered != dec.uncovered_length:
        bad.append("uncovered length misreported")
    if dec.uncovered_length > dec.C * eps * m:
        bad.append(f"uncovered {dec.uncovered_length} > C eps m = {dec.C * eps * m}")
    return bad


# ---------------------------------------------------- per-interval checks


@dataclass
class IntervalCheck:
    c: int
    d: int
    kind: str
    slope: Fraction
    bound: float
    passed: bool
    cubes_checked: int
    worst: float  # largest ratio (observed / allowed); <= 1 means pass
    witness: dict | None = None
    note: str = ""

    def to_dict(self):
        out = dict(self.__dict__)
        out["slope"] = str(self.slope)
        return out


def _coarsen(P: CubeSet, k: int) -> CubeSet:
    idx = np.unique(P.index_array() >> (P.n - k), axis=0)
    return CubeSet.from_array(k, idx)


def classify_scales(P: CubeSet, decomposition: IntervalDecomposition, T: int, eps=None, sample: int | None = None):
    """Check every interval against the rescaled pieces of P.

    Type a: both AD constants of phi_p(P cap p) at exponent t_j are at most
    Delta^(-(d-c) eps - 3). Type b: |P_j| = Delta^(-(d-c) t_j) and, for every
    dyadic r and r-cube Q, |P_j cap Q| <= Delta^(-(d-c) eps - 3) max(r^u |P_j|, (r / Delta^(d-c))^s).
    Delta = 2^-T. Non-integer endpoints are rounded inwards.
    """
    eps = Fraction(eps) if eps is not None else decomposition.eps
    if P.n != decomposition.m * T:
        raise InvalidScale(f"set scale 2^-{P.n} does not match m={decomposition.m}, T={T}")
    s, u = decomposition.s, decomposition.u
    out = []
    for iv in decomposition.intervals:
        c, d = math.ceil(iv.c), math.floor(iv.d)
        note = "" if (c, d) == (iv.c, iv.d) else f"rounded [{iv.c}, {iv.d}] inwards"
        if d <= c:
            out.append(IntervalCheck(c, d, iv.kind, iv.slope, 0.0, True, 0, 0.0, None, note + "; empty after rounding"))
            continue
        span = d - c
        bound_log2 = T * (float(span * eps) + 3)
        bound = 2.0**bound_log2
        tj = iv.slope
        roots = sorted(parent_counts(P, c * T))
        if sample is not None and len(roots) > sample:
            roots = roots[:: max(1, len(roots) // sample)][:sample]
        worst, wit, ok = 0.0, None, True
        for rx, ry in roots:
            Pj = _coarsen(rescale_cubeset(P, DyadicCube(c * T, rx, ry)), span * T)
            if note:
                # slope of the piece actually checked
                tj = Fraction(math.log2(len(Pj)) / (span * T))
            if iv.kind == "a":
                up, lo = ad_regular_constants(Pj, float(tj))
                for rep in (up, lo):
                    r = rep.best_constant / bound
                    if r > worst:
                        worst = r
                        wit = {"cube": [rx, ry], "class": rep.cls, "constant": rep.best_constant,
                               "center": [rep.witness.cx, rep.witness.cy], "r": rep.witness.r}
            else:
                size = len(Pj)
                expect = 2.0 ** (float(tj) * span * T)
                if note == "" and abs(size - expect) > 1e-9 * expect:
                    ok = False
                    wit = wit or {"cube": [rx, ry], "size": size, "expected": expect}
                    worst = max(worst, math.inf)
                for i in range(span * T + 1):
                    r = 2.0**-i
                    allow = bound * max(r ** float(u) * size, (r * 2.0 ** (span * T)) ** float(s))
                    counts = parent_counts(Pj, i)
                    q, cnt = max(counts.items(), key=lambda kv: (kv[1], -kv[0][0], -kv[0][1]))
                    ratio = cnt / allow
                    if ratio > worst:
                        worst = ratio
                        wit = {"cube": [rx, ry], "r": r, "Q": list(q), "count": cnt, "allowed": allow}
        ok = ok and worst <= 1.0
        out.append(IntervalCheck(c, d, iv.kind, tj, bound, ok, len(roots), worst, None if ok else wit, note))
    return out

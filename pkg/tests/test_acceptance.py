"""End-to-end acceptance criteria, one test each.

Every test records a line "ACCEPTANCE k: PASS|FAIL ..." in RESULTS; the
conftest hook prints them at the end of the run. Also runnable directly:
python3 tests/test_acceptance.py
"""
import json
import math
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

import oracles
from branching_gen import PARAMS, random_admissible
from furstlab.dyadic import CubeSet, DyadicTube, TubeSet, covering_number, thicken_containment_check, tube_containing
from furstlab.generators import branching_set, cantor_1d, cantor_product
from furstlab.harness import (HIGH_ENERGY_CONSTANT, ExperimentSpec, full_interval, run_furstenberg, run_highlow,
                              run_sumproduct)
from furstlab.incidence import incidence_exact, rich_tube_census
from furstlab.multiscale import check_decomposition, classify_scales, decompose_branching, uniformize
from furstlab.regularity import branching_function, frostman_constant, is_uniform

pytestmark = pytest.mark.acceptance

RESULTS: dict[int, str] = {}
ROOT = Path(__file__).resolve().parents[1]
F = Fraction


def _record(k: int, ok: bool, elapsed: float, limit: float | None, detail: str) -> None:
    within = limit is None or elapsed < limit
    status = "PASS" if ok and within else "FAIL"
    lim = f" (limit {limit:.0f}s)" if limit else ""
    RESULTS[k] = f"ACCEPTANCE {k}: {status} [{elapsed:.1f}s{lim}] {detail}"
    print(RESULTS[k])
    assert ok, detail
    assert within, f"took {elapsed:.1f}s, limit {limit}s"


# ------------------------------------------------------------------ 1


def _oracle_instance(rng, n):
    d = 2**n
    m = int(rng.integers(1, n))
    cells = {}
    for _ in range(int(rng.integers(4, 20))):
        cells[(int(rng.integers(0, d)), int(rng.integers(0, d)))] = (int(rng.integers(1, 3)), float(rng.integers(1, 4)))
    P = CubeSet(n, cells)
    keys = sorted(P.cells)

    def tubes(k, count):
        D = 2**k
        out = {}
        for i in range(count):
            if i % 2:
                x, y = keys[int(rng.integers(0, len(keys)))]
                a = float(rng.uniform(-1, 1))
                T = tube_containing(a, (y + 0.5) / d - a * (x + 0.5) / d, k)
                key = (T.ia, T.ib)
            else:
                key = (int(rng.integers(-D, D)), int(rng.integers(-2 * D, 2 * D)))
            out[key] = int(rng.integers(1, 3))
        return out

    return P, m, TubeSet(m, tubes(m, 16), "multi"), TubeSet(n, {k: 1 for k in tubes(n, 12)})


def test_1_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    bad = []
    for i in range(200):
        n = (3, 4, 5)[i % 3]
        P, m, T, Tn = _oracle_instance(rng, n)
        if incidence_exact(P, T, m).total != oracles.incidences(P, T, m):
            bad.append((i, "incidence_exact"))
        b = int(rng.integers(1, 4))
        if rich_tube_census(P, Tn, m, b) != oracles.census(P, Tn, m, b):
            bad.append((i, "rich_tube_census"))
        s = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
        if frostman_constant(P, s).best_constant != oracles.frostman(P, s):
            bad.append((i, "frostman_constant"))
        for k in range(n + 1):
            if covering_number(P, k) != oracles.covering(P, k):
                bad.append((i, "covering_number"))
    _record(1, not bad, time.perf_counter() - t0, 30,
            f"200 instances x 4 operations vs brute force, mismatches={len(bad)} {bad[:3]}")


# ------------------------------------------------------------------ 2


def test_2_thickening_containment():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    pairs = [(8, m) for m in range(0, 4)] + [(10, m) for m in range(0, 6)]
    failures = []
    for n, m in pairs:
        assert 2 ** (n - m) > 30
        d = 2**n
        for _ in range(500):
            T = DyadicTube(n, int(rng.integers(-d, d)), int(rng.integers(-2 * d, 2 * d)))
            if not thicken_containment_check(T, m):
                failures.append((n, m, T))
    _record(2, not failures, time.perf_counter() - t0, 60,
            f"{len(pairs)} (delta, Delta) pairs x 500 tubes, failures={len(failures)}")


# ------------------------------------------------------------------ 3


def _random_cube_set(rng, n):
    kind = rng.integers(0, 3)
    d = 2**n
    if kind == 0:  # uniform scatter
        pts = rng.integers(0, d, size=(int(rng.integers(1, 600)), 2))
    elif kind == 1:  # a few dense clusters
        centres = rng.integers(0, d, size=(int(rng.integers(1, 6)), 2))
        pts = np.concatenate([c + rng.integers(-12, 12, size=(int(rng.integers(5, 200)), 2)) for c in centres])
        pts = np.clip(pts, 0, d - 1)
    else:  # sparse grid with noise
        step = int(rng.choice([2, 4, 8]))
        g = np.arange(0, d, step)
        X, Y = np.meshgrid(g, g)
        pts = np.stack([X.ravel(), Y.ravel()], 1)
        pts = pts[rng.random(len(pts)) < rng.uniform(0.2, 1.0)]
        pts = np.concatenate([pts, rng.integers(0, d, size=(int(rng.integers(0, 50)), 2)), [[0, 0]]])
    return CubeSet.from_array(n, pts)


def test_3_uniformization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    N, T = 4, 2
    bad = []
    worst = math.inf
    for i in range(100):
        P = _random_cube_set(rng, N * T)
        Q = uniformize(P, T)
        ok, _ = is_uniform(Q, list(range(0, N * T + 1, T)))
        frac = Fraction(len(Q), len(P))
        worst = min(worst, frac)
        if not ok or frac < Fraction(1, (2 * T) ** N) or not set(Q.cells) <= set(P.cells):
            bad.append(i)
    _record(3, not bad, time.perf_counter() - t0, 30,
            f"100 random sets, N=4, T=2: failures={len(bad)}, worst kept fraction {float(worst):.4f} >= 1/256")


# ------------------------------------------------------------------ 4


def test_4_decomposition_postconditions():
    t0 = time.perf_counter()
    rng = np.random.default_rng(64)
    bad = []
    worst_unc = 0.0
    for i in range(1000):
        s, t, u, eps = PARAMS[i % len(PARAMS)]
        m = int(rng.integers(1, 41))
        v = random_admissible(rng, m, s, t, u, eps)
        try:
            dec = decompose_branching(v, s, t, u, eps)
            problems = check_decomposition(v, dec)
            worst_unc = max(worst_unc, float(dec.uncovered_length / (dec.C * eps * m)))
        except Exception as exc:  # any raise is a failure here
            problems = [repr(exc)]
        if problems:
            bad.append((i, problems[:2]))
    _record(4, not bad, time.perf_counter() - t0, 60,
            f"1000 admissible f, m<=40: failures={len(bad)}, max uncovered/(C eps m)={worst_unc:.3f} {bad[:2]}")


# ------------------------------------------------------------------ 5


def test_5_scale_dictionary():
    t0 = time.perf_counter()
    # type a: Cantor product, exactly linear branching
    C = cantor_product(10, 0.5, 0.5)
    dec_a = decompose_branching(branching_function(C, 2), F(1, 2), F(1), F(3, 2), F(1, 8))
    res_a = classify_scales(C, dec_a, 2)
    ok_a = [r.kind for r in res_a] == ["a"] and all(r.passed for r in res_a)
    # type b: slope u = 3/2 for two blocks, then slope 1/2
    W = branching_set(2, [8, 8, 2, 2, 2])
    dec_b = decompose_branching(branching_function(W, 2), F(3, 5), F(9, 10), F(3, 2), F(1, 4))
    res_b = classify_scales(W, dec_b, 2)
    ok_b = [r.kind for r in res_b] == ["b"] and all(r.passed for r in res_b)
    # negative control: hollow out one top-level subtree of the Cantor product
    keep = [k for k in C.cells if (k[0] >> 8, k[1] >> 8) != (0, 0)]
    keep.append(min(k for k in C.cells if (k[0] >> 8, k[1] >> 8) == (0, 0)))
    res_n = classify_scales(CubeSet.from_indices(10, keep), dec_a, 2)
    failed = [r for r in res_n if not r.passed]
    ok_n = bool(failed) and failed[0].witness is not None
    wit = json.dumps(failed[0].witness, sort_keys=True) if failed else "none"
    _record(5, ok_a and ok_b and ok_n, time.perf_counter() - t0, 120,
            f"cantor type a pass={ok_a} (worst {max(r.worst for r in res_a):.3f}); "
            f"u-then-s type b pass={ok_b} (worst {max(r.worst for r in res_b):.3f}); "
            f"corrupted control fails={ok_n} witness={wit}")


# ------------------------------------------------------------------ 6


def test_6_highlow_calibration():
    t0 = time.perf_counter()
    parts = []
    ok = True
    for gen_name in ("grid", "random"):
        spec = ExperimentSpec("highlow-calibration", gen_name, {"s": "0.5", "t": "1", "S": "2,4", "eps": "0.5"},
                              [5, 6, 7, 8], seed=1)
        res = run_highlow(spec)
        within = res.worst_ratio <= 2 * HIGH_ENERGY_CONSTANT
        ok = ok and within and res.growth_ok
        fc = [round(r["fitted_constant"], 3) for r in res.rows if r["S"] == 2]
        parts.append(f"{gen_name}: max high/(S delta |T|)={res.worst_ratio:.4f} "
                     f"fitted(S=2)={fc} growth<=log^2 {res.growth_ok}")
    _record(6, ok, time.perf_counter() - t0, 300,
            f"C_cal={HIGH_ENERGY_CONSTANT}, bound 2 C_cal; " + "; ".join(parts))


# ------------------------------------------------------------------ 7


def test_7_sharp_exponents():
    t0 = time.perf_counter()
    ok = True
    parts = []
    for s, t in ((1.0, 1.0), (0.5, 1.0), (0.5, 0.5)):
        res = run_furstenberg(ExperimentSpec("furstenberg", "grid", {"s": str(s), "t": str(t)}, [4, 5, 6, 7, 8]))
        target = min(t, (s + t) / 2, 1.0)
        good = abs(res.fit.slope - target) <= 0.25
        ok = ok and good
        parts.append(f"(s,t)=({s},{t}) fit {res.fit.slope:.3f} vs {target:.3f}")
    _record(7, ok, time.perf_counter() - t0, 600, "grid example, ladder 2^-4..2^-8: " + "; ".join(parts))


# ------------------------------------------------------------------ 8


def test_8_sum_product():
    t0 = time.perf_counter()
    full = run_sumproduct(full_interval(10), [6, 7, 8, 9, 10])
    ok_full = abs(full.fit.slope - 1.0) <= 0.02
    cant = run_sumproduct(cantor_1d(10, 0.5), [4, 6, 8, 10])
    s = cant.size_fit.slope
    fin = cant.rows[-1]["max_exponent"]
    ok_c = cant.fit.slope >= s + 0.05 and fin >= s + 0.05
    _record(8, ok_full and ok_c, time.perf_counter() - t0, 120,
            f"full interval max exponent {full.fit.slope:.4f}; Cantor s={s:.3f}: fitted {cant.fit.slope:.3f}, "
            f"at 2^-10 {fin:.3f} (need >= {s + 0.05:.3f}); 5s/4 = {1.25 * s:.3f} reported only")


# ------------------------------------------------------------------ 9


def _cli(args, cwd):
    r = subprocess.run([sys.executable, "-m", "furstlab.cli", *args], cwd=cwd, capture_output=True, check=True)
    return r.stdout


def _snapshot(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_9_determinism(tmp_path):
    t0 = time.perf_counter()
    specs = ROOT / "scripts" / "specs"
    runs = []
    for rep in range(2):
        out = tmp_path / f"run{rep}"
        stdout = []
        stdout.append(_cli(["generate", "--set", "generator=random", "--set", "n=6", "--set", "seed=11",
                            "--out", str(out / "gen")], tmp_path))
        stdout.append(_cli(["check", "--cubes", str(out / "gen" / "cubes.txt"), "--s", "1", "--out", str(out)],
                           tmp_path))
        stdout.append(_cli(["incidence", "--cubes", str(out / "gen" / "cubes.txt"), "--tubes",
                            str(out / "gen" / "tubes.txt"), "--delta-exp", "6", "--out", str(out)], tmp_path))
        stdout.append(_cli(["generate", "--spec", str(specs / "generate_cantor.spec"), "--out", str(out / "c")],
                           tmp_path))
        stdout.append(_cli(["decompose", "--input", str(out / "c" / "cubes.txt"), "--s", "1", "--t", "3/2",
                            "--u", "7/4", "--eps", "1/8", "--out", str(out)], tmp_path))
        for name in ("random_s05_t1", "sumproduct_cantor", "projection_cantor"):
            stdout.append(_cli(["experiment", "--spec", str(specs / f"{name}.spec"), "--out", str(out)], tmp_path))
        runs.append((stdout, _snapshot(out)))
    (o1, f1), (o2, f2) = runs
    diff = [k for k in f1 if f1[k] != f2.get(k)] + sorted(set(f2) - set(f1))
    ok = o1 == o2 and not diff and len(f1) > 0
    _record(9, ok, time.perf_counter() - t0, None,
            f"8 CLI runs twice: {len(f1)} files (CSV/JSON/JSONL/SVG/sets) byte-identical={not diff}, "
            f"stdout identical={o1 == o2} {diff[:3]}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))

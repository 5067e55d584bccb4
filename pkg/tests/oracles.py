"""Brute-force reference implementations. Slow on purpose: every one of
them loops over the obvious candidates with exact arithmetic."""
import numpy as np

from furstlab.dyadic import CubeSet, DyadicCube, DyadicTube, TubeSet, cube_in_fat_tube


def covering(P: CubeSet, m: int) -> int:
    k = P.n - m
    return len({(ix >> k, iy >> k) for ix, iy in P.cells})


def incidences(P: CubeSet, T: TubeSet, m: int, fat=6) -> float:
    total = 0.0
    for (ix, iy), (mult, w) in P.cells.items():
        par = DyadicCube(P.n, ix, iy).parent(m)
        for (ia, ib), tm in T.tubes.items():
            if cube_in_fat_tube(par, DyadicTube(m, ia, ib), fat):
                total += mult * w * tm
    return total


def census(P: CubeSet, T: TubeSet, m: int, b: int, fat=4) -> dict:
    out = {}
    k = P.n - m
    for key in T.tubes:
        tube = DyadicTube(T.n, *key)
        per_q = {}
        for (ix, iy), (mult, _) in P.cells.items():
            if cube_in_fat_tube(DyadicCube(P.n, ix, iy), tube, fat):
                q = (ix >> k, iy >> k)
                per_q[q] = per_q.get(q, 0) + mult
        out[key] = sum(1 for c in per_q.values() if c >= b)
    return out


def frostman(P: CubeSet, s: float, katz_tao: bool = False) -> float:
    """max over dyadic r and every r-cube centre c in [-1, 2)^2 of
    #{cubes meeting the open ball B(c, r sqrt 2)} / normaliser."""
    n = P.n
    cubes = np.array(sorted(P.cells), dtype=np.int64)
    best = 0.0
    for k in range(n + 1):
        L = 2 ** (n - k)
        ii = np.arange(-(2**k), 2 * 2**k)
        cx, cy = np.meshgrid(ii, ii, indexing="ij")
        # centres and cube boxes in half-cell units
        hx = (2 * L * cx + L).reshape(-1, 1)
        hy = (2 * L * cy + L).reshape(-1, 1)
        x0, y0 = 2 * cubes[:, 0][None, :], 2 * cubes[:, 1][None, :]
        dx = np.maximum(np.maximum(x0 - hx, 0), hx - x0 - 2)
        dy = np.maximum(np.maximum(y0 - hy, 0), hy - y0 - 2)
        counts = ((dx * dx + dy * dy) < 8 * L * L).sum(axis=1)
        if katz_tao:
            norm = (2.0 ** (n - k)) ** s
        else:
            norm = (2.0**-k) ** s * len(P)
        best = max(best, float((counts / norm).max()))
    return best


"""Experiment runner: exponent fits over delta ladders, projections,
sum-product counts, high-low calibration, and CSV / JSONL / SVG output.

Per-scale "dimension" is log2(count) / log2(1/delta); ladder fits are least
squares in log2-log2 coordinates. Agreement at these scales is heuristic
support for asymptotic statements, not evidence of them.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generators as gen
from .dyadic import CubeSet, full_grid
from .incidence import highlow_decompose

# measured once: max of high_energy / (S delta |T|) over the calibration
# inputs in HIGHLOW_CALIBRATION (0.0969), rounded up
HIGH_ENERGY_CONSTANT = 0.1
HIGHLOW_CALIBRATION = {"generator": "grid", "s": 0.5, "t": 1.0, "n": 5, "S": (2, 4), "eps": 0.5}


@dataclass(frozen=True)
class Conjectured:
    dimension: float  # min(s + t, (3s + t) / 2, s + 1)
    tube: float  # min(t, (s + t) / 2, 1)


def conjectured_exponent(s: float, t: float) -> Conjectured:
    if not (0 < s <= 1 and 0 < t <= 2):
        raise ValueError("need s in (0, 1] and t in (0, 2]")
    return Conjectured(min(s + t, (3 * s + t) / 2, s + 1), min(t, (s + t) / 2, 1.0))


@dataclass
class ExponentFit:
    slope: float
    intercept: float
    residual: float
    points: list[tuple[float, float]]

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual,
                "points": [list(p) for p in self.points]}


def ols(points) -> tuple[float, float]:
    """Closed-form simple regression, used to cross-check lstsq."""
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    xm, ym = x.mean(), y.mean()
    sl = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    return sl, float(ym - sl * xm)


def fit_exponent(points) -> ExponentFit:
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2 or len({x for x, _ in pts}) < 2:
        raise ValueError("need at least two distinct x values")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (sl, ic), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.max(np.abs(y - (sl * x + ic))))
    return ExponentFit(float(sl), float(ic), res, pts)


# ------------------------------------------------------------------ specs

KINDS = ("furstenberg", "projection", "sumproduct", "highlow-calibration")


@dataclass
class ExperimentSpec:
    kind: str
    generator: str = "grid"
    params: dict = field(default_factory=dict)
    ladder: list[int] = field(default_factory=lambda: [4, 5, 6, 7, 8])
    seed: int = 0
    tolerance: float = 0.1
    theta_grid: int = 64
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if len(self.ladder) < 3:
            raise ValueError("a fit needs at least 3 scales")
        if any(b <= a for a, b in zip(self.ladder, self.ladder[1:])):
            raise ValueError("ladder must be strictly decreasing in delta")
        if not self.name:
            self.name = self.kind

    def param(self, key, default=None):
        return float(self.params.get(key, default))


def parse_spec(text: str) -> ExperimentSpec:
    """key = value lines (# comments); unknown keys become generator params."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (S and s differ)
    cp.read_string("[experiment]\n" + text)
    kv = dict(cp["experiment"])
    kw = {"kind": kv.pop("kind", "furstenberg")}
    if "generator" in kv:
        kw["generator"] = kv.pop("generator")
    if "ladder" in kv:
        kw["ladder"] = [int(x) for x in kv.pop("ladder").replace(",", " ").split()]
    for key, typ in (("seed", int), ("tolerance", float), ("theta_grid", int), ("name", str)):
        if key in kv:
            kw[key] = typ(kv.pop(key))
    kw["params"] = kv
    return ExperimentSpec(**kw)


def load_spec(path) -> ExperimentSpec:
    return parse_spec(Path(path).read_text())


# ------------------------------------------------------------ furstenberg


def build_configuration(name: str, n: int, s: float, t: float, seed: int = 0):
    if name == "grid":
        return gen.grid_example(n, s, t)
    if name == "random":
        return gen.random_nice_configuration(n, s, t, seed)
    if name == "cantor":
        return gen.cantor_configuration(n, s, t)
    if name == "interval-cantor":
        return gen.interval_cantor_configuration(n, s)
    raise ValueError(f"unknown configuration generator {name!r}")


@dataclass
class FurstenbergResult:
    fit: ExponentFit
    size_fit: ExponentFit  # log2 |P| against log2 (1 / delta)
    predicted: Conjectured
    rows: list[dict]

    def summary(self):
        return {"fit": self.fit.to_dict(), "size_fit": self.size_fit.to_dict(),
                "predicted_tube_exponent": self.predicted.tube,
                "predicted_dimension": self.predicted.dimension}


def run_furstenberg(spec: ExperimentSpec) -> FurstenbergResult:
    s, t = spec.param("s", 1.0), spec.param("t", 1.0)
    rows = []
    for n in spec.ladder:
        cfg = build_configuration(spec.generator, n, s, t, spec.seed)
        ntubes = len(cfg.union())
        rows.append({"n": n, "delta": 2.0**-n, "P": len(cfg.P), "M": cfg.M, "T": ntubes,
                     "ratio": ntubes / cfg.M})
    fit = fit_exponent([(r["n"], math.log2(r["ratio"])) for r in rows])
    size_fit = fit_exponent([(r["n"], math.log2(r["P"])) for r in rows])
    return FurstenbergResult(fit, size_fit, conjectured_exponent(s, t), rows)


# ------------------------------------------------------------- projection


def projection_count(K: CubeSet, theta: float) -> int:
    """|pi_theta(K)|_delta for pi_theta(x, y) = x cos(theta) + y sin(theta)."""
    idx = K.index_array().astype(np.float64)
    c, s = math.cos(theta), math.sin(theta)
    base = idx[:, 0] * c + idx[:, 1] * s  # in units of delta
    lo = np.floor(base + min(0.0, c) + min(0.0, s) + 1e-9).astype(np.int64)
    hi = np.ceil(base + max(0.0, c) + max(0.0, s) - 1e-9).astype(np.int64) - 1
    hi = np.maximum(hi, lo)
    off = lo.min()
    diff = np.zeros(int(hi.max() - off) + 2, dtype=np.int64)
    np.add.at(diff, lo - off, 1)
    np.add.at(diff, hi - off + 1, -1)
    return int(np.count_nonzero(np.cumsum(diff)[:-1]))


def _coarsen(K: CubeSet, k: int) -> CubeSet:
    return CubeSet.from_array(k, K.index_array() >> (K.n - k), K.dim)


@dataclass
class ProjectionReport:
    u: float
    tolerance: float
    thetas: list[float]
    rows: list[dict]  # per scale: n, |K|, exceptional count, exceptional covering
    size_fit: ExponentFit
    exceptional_exponent: float
    predicted_bound: float  # max(2u - t_K, 0)

    def summary(self):
        return {"u": self.u, "tolerance": self.tolerance, "size_fit": self.size_fit.to_dict(),
                "exceptional_exponent": self.exceptional_exponent,
                "predicted_bound": self.predicted_bound}


def run_projection(K: CubeSet, u: float, theta_grid: int, ladder=None, tolerance: float = 0.1) -> ProjectionReport:
    """Directions theta_i = pi i / theta_grid whose projection exponent falls below u - tolerance."""
    if len(K) == 0:
        raise ValueError("empty set")
    ladder = list(ladder) if ladder is not None else list(range(max(1, K.n - 4), K.n + 1))
    thetas = [math.pi * i / theta_grid for i in range(theta_grid)]
    rows = []
    for n in ladder:
        Kn = _coarsen(K, n)
        exc = []
        for i, th in enumerate(thetas):
            cnt = projection_count(Kn, th)
            if math.log2(cnt) / n < u - tolerance:
                exc.append(i)
        # delta-covering of the exceptional directions, theta / pi in [0, 1)
        cover = len({(i * 2**n) // theta_grid for i in exc})
        rows.append({"n": n, "K": len(Kn), "exceptional": len(exc), "cover": cover,
                     "directions": exc})
    size_fit = fit_exponent([(r["n"], math.log2(r["K"])) for r in rows])
    if all(r["cover"] > 0 for r in rows) and len(rows) >= 2:
        ex = max(0.0, fit_exponent([(r["n"], math.log2(r["cover"])) for r in rows]).slope)
    else:
        ex = 0.0
    return ProjectionReport(u, tolerance, thetas, rows, size_fit, ex, max(2 * u - size_fit.slope, 0.0))


# ------------------------------------------------------------ sum-product


def _check_1d(A: CubeSet):
    if A.dim != 1:
        raise ValueError("need a 1D set")
    ix = A.index_array()[:, 0]
    if len(ix) == 0 or ix.min() < 2**A.n or ix.max() >= 2 ** (A.n + 1):
        raise ValueError("A must lie in [1, 2)")
    return ix


def _ranges_count(lo: np.ndarray, hi: np.ndarray) -> int:
    """Number of integers covered by the union of [lo_i, hi_i]."""
    off = int(lo.min())
    diff = np.zeros(int(hi.max()) - off + 2, dtype=np.int64)
    np.add.at(diff, lo - off, 1)
    np.add.at(diff, hi - off + 1, -1)
    return int(np.count_nonzero(np.cumsum(diff)[:-1]))


def sum_product_counts(A: CubeSet) -> tuple[int, int]:
    """(|A + A|_delta, |A . A|_delta) with A the union of its delta-intervals."""
    ix = _check_1d(A)
    n = A.n
    i = ix[:, None].astype(np.int64)
    j = ix[None, :].astype(np.int64)
    sums = np.unique(np.concatenate([(i + j).ravel(), (i + j + 1).ravel()])).size
    lo = (i * j) >> n
    hi = -((-(i + 1) * (j + 1)) >> n) - 1
    prods = _ranges_count(lo.ravel(), hi.ravel())
    return int(sums), prods


@dataclass
class SumProductResult:
    fit: ExponentFit  # exponent of max(|A+A|, |A.A|)
    sum_fit: ExponentFit
    product_fit: ExponentFit
    size_fit: ExponentFit
    rows: list[dict]
    target: float  # 5/4 s, reported only

    def summary(self):
        return {"fit": self.fit.to_dict(), "sum_fit": self.sum_fit.to_dict(),
                "product_fit": self.product_fit.to_dict(), "size_fit": self.size_fit.to_dict(),
                "target_5s_over_4": self.target,
                "finest_scale_exponent": self.rows[-1]["max_exponent"]}


def run_sumproduct(A: CubeSet, ladder) -> SumProductResult:
    _check_1d(A)
    ladder = list(ladder)
    if len(ladder) < 3:
        raise ValueError("a fit needs at least 3 scales")
    rows = []
    for n in ladder:
        if n > A.n:
            raise ValueError(f"ladder scale 2^-{n} finer than A")
        An = _coarsen(A, n)
        ss, pp = sum_product_counts(An)
        mx = max(ss, pp)
        rows.append({"n": n, "A": len(An), "sum": ss, "product": pp, "max": mx,
                     "max_exponent": math.log2(mx) / n})
    pts = lambda key: [(r["n"], math.log2(r[key])) for r in rows]
    size = fit_exponent(pts("A"))
    return SumProductResult(fit_exponent(pts("max")), fit_exponent(pts("sum")), fit_exponent(pts("product")),
                            size, rows, 1.25 * size.slope)


def full_interval(n: int) -> CubeSet:
    """[1, 2) at scale 2^-n as a 1D set."""
    return CubeSet.from_indices(n, [(2**n + i, 0) for i in range(2**n)], dim=1)


# ---------------------------------------------------------------- high-low


@dataclass
class HighLowCalibration:
    constant: float
    rows: list[dict]
    worst_ratio: float
    growth_ok: bool

    def summary(self):
        return {"constant": self.constant, "worst_ratio": self.worst_ratio, "growth_ok": self.growth_ok}


def run_highlow(spec: ExperimentSpec, constant: float = HIGH_ENERGY_CONSTANT) -> HighLowCalibration:
    """Measure high energy / (S delta |T|) and the fitted constant across the ladder.

    Passes when every ratio is within 2x of the frozen constant and the fitted
    constant at each scale is at most (n / n0)^2 times the one at the first scale.
    """
    s, t = spec.param("s", 0.5), spec.param("t", 1.0)
    eps = spec.param("eps", 0.5)
    Ss = [int(x) for x in str(spec.params.get("S", "2,4")).replace(",", " ").split()]
    rows = []
    for n in spec.ladder:
        cfg = build_configuration(spec.generator, n, s, t, spec.seed)
        T = cfg.union()
        for S in Ss:
            r = highlow_decompose(cfg.P, T, S, eps)
            rows.append({"n": n, "S": S, "T": len(T), "high_energy": r.high_energy,
                         "high_ratio": r.high_ratio, "incidences": r.incidences,
                         "bound_high": r.bound_high, "low_term": r.low_term,
                         "fitted_constant": r.fitted_constant, "parseval_error": r.parseval_error})
    worst = max(r["high_ratio"] for r in rows)
    n0 = spec.ladder[0]
    ok = True
    for S in Ss:
        base = next(r["fitted_constant"] for r in rows if r["S"] == S and r["n"] == n0)
        for r in rows:
            if r["S"] == S and r["fitted_constant"] > base * (r["n"] / n0) ** 2:
                ok = False
    return HighLowCalibration(constant, rows, worst, ok)


# ------------------------------------------------------------------ output


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = [k for k in rows[0] if not isinstance(rows[0][k], (list, dict))]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items() if k in keys})
    Path(path).write_text(buf.getvalue())


def write_jsonl(path, records: list[dict]) -> None:
    with open(path, "w", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_svg(path, fit: ExponentFit, title: str, xlabel="log2(1/delta)", ylabel="log2 count") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "furstlab"
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    x = [p[0] for p in fit.points]
    y = [p[1] for p in fit.points]
    ax.plot(x, y, "o", color="k")
    xs = np.linspace(min(x), max(x), 2)
    ax.plot(xs, fit.slope * xs + fit.intercept, "-", color="C0", label=f"slope {fit.slope:.3f}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sumproduct_set(spec: ExperimentSpec) -> CubeSet:
    n = max(spec.ladder)
    if spec.generator in ("interval", "full"):
        return full_interval(n)
    if spec.generator == "cantor":
        return gen.cantor_1d(n, spec.param("s", 0.5))
    raise ValueError(f"unknown sum-product set {spec.generator!r}")


def _projection_set(spec: ExperimentSpec) -> CubeSet:
    n = max(spec.ladder)
    g = spec.generator
    if g == "full":
        return full_grid(n)
    if g == "cantor":
        return gen.cantor_product(n, spec.param("s", 0.5), spec.param("t", spec.param("s", 0.5)))
    if g == "segment":
        return CubeSet.from_indices(n, [(i, 0) for i in range(2**n)])
    raise ValueError(f"unknown projection set {spec.generator!r}")


def run_experiment(spec: ExperimentSpec, out_dir) -> dict:
    """Run one spec and write <name>.csv, <name>.jsonl and <name>.svg into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    head = {"kind": spec.kind, "generator": spec.generator, "params": spec.params,
            "ladder": spec.ladder, "seed": spec.seed}
    if spec.kind == "furstenberg":
        res = run_furstenberg(spec)
        rows, summary, fit = res.rows, res.summary(), res.fit
        ylabel = "log2 |T| / M"
    elif spec.kind == "projection":
        K = _projection_set(spec)
        res = run_projection(K, spec.param("u", 0.5), spec.theta_grid, spec.ladder, spec.tolerance)
        rows, summary, fit = res.rows, res.summary(), res.size_fit
        ylabel = "log2 |K|"
    elif spec.kind == "sumproduct":
        res = run_sumproduct(_sumproduct_set(spec), spec.ladder)
        rows, summary, fit = res.rows, res.summary(), res.fit
        ylabel = "log2 max(|A+A|, |AA|)"
    else:
        res = run_highlow(spec)
        rows, summary = res.rows, res.summary()
        fit = fit_exponent([(r["n"], math.log2(max(r["fitted_constant"], 1e-300)))
                            for r in rows if r["S"] == rows[0]["S"]])
        ylabel = "log2 fitted constant"
    write_csv(out / f"{spec.name}.csv", rows)
    write_jsonl(out / f"{spec.name}.jsonl", [dict(head, record="row", **r) for r in rows]
                + [dict(head, record="summary", **summary)])
    write_svg(out / f"{spec.name}.svg", fit, spec.name, ylabel=ylabel)
    return dict(head, **summary)

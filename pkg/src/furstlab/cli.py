"""Command line entry point: furstlab generate|check|incidence|decompose|experiment."""
from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import generators as gen
from .dyadic import CubeSet, TubeSet, read_set, write_set
from .harness import load_spec, run_experiment
from .incidence import highlow_decompose, incidence_exact
from .multiscale import check_decomposition, classify_scales, decompose_branching, uniformize
from .regularity import (BranchingFunction, ad_regular_constants, branching_function, frostman_constant,
                         is_uniform, katz_tao_constant)


def _kv_file(path) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keys are case-sensitive (S and s differ)
    cp.read_string("[spec]\n" + Path(path).read_text())
    return dict(cp["spec"])


def _emit(args, name: str, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"{name}.json", "w", newline="\n") as fh:
            fh.write(text)


# --------------------------------------------------------------- generate


def _generate(kv: dict):
    g = kv.get("generator", "cantor_product")
    n = int(kv.get("n", 8))
    s = float(kv.get("s", 0.5))
    t = float(kv.get("t", 1.0))
    T = int(kv.get("block", 2))
    seed = int(kv.get("seed", 0))
    if g == "cantor_product":
        return gen.cantor_product(n, s, t, T), None
    if g == "interval_cross_cantor":
        return gen.interval_cross_cantor(n, s, T), None
    if g == "cantor_1d":
        return gen.cantor_1d(n, s, T), None
    if g == "well_spaced":
        return gen.well_spaced(n, int(kv.get("delta_big", n // 2)), int(kv.get("per_cell", 1))), None
    if g == "branching_set":
        kids = [int(x) for x in kv["children"].replace(",", " ").split()]
        return gen.branching_set(T, kids), None
    if g == "full_grid":
        from .dyadic import full_grid
        return full_grid(n), None
    if g in ("grid", "random", "cantor", "interval-cantor"):
        from .harness import build_configuration
        cfg = build_configuration(g, n, s, t, seed)
        return cfg.P, cfg
    raise SystemExit(f"unknown generator {g!r}")


def cmd_generate(args) -> int:
    kv = _kv_file(args.spec) if args.spec else {}
    for item in args.set or []:
        k, v = item.split("=", 1)
        kv[k.strip()] = v.strip()
    P, cfg = _generate(kv)
    counts = {"cubes": len(P), "n": P.n}
    achieved = {"cubes": math.log2(len(P)) / P.n if P.n else 0.0}
    meta = {}
    if cfg is not None:
        counts.update({"M": cfg.M, "tubes": len(cfg.union())})
        meta = {k: v for k, v in cfg.meta.items() if isinstance(v, (int, float, str))}
        achieved.update({k: v for k, v in meta.items() if k.startswith("achieved_")})
    payload = {"name": kv.get("generator", "cantor_product"), "params": dict(sorted(kv.items())),
               "achieved_exponents": achieved, "counts": counts, "meta": meta}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_set(out / "cubes.txt", P)
        if cfg is not None:
            write_set(out / "tubes.txt", cfg.union())
    _emit(args, "generate", payload)
    return 0


# ------------------------------------------------------------------ check


def _report(r):
    return json.loads(r.to_json())


def cmd_check(args) -> int:
    P = read_set(args.cubes)
    if not isinstance(P, CubeSet):
        raise SystemExit("--cubes must be a CUBESET file")
    what = args.what.split(",")
    out = {"n": P.n, "cubes": len(P), "s": args.s}
    if "frostman" in what:
        out["frostman"] = _report(frostman_constant(P, args.s))
    if "katz_tao" in what:
        out["katz_tao"] = _report(katz_tao_constant(P, args.s))
    if "ad" in what:
        up, lo = ad_regular_constants(P, args.s)
        out["ad_upper"], out["ad_lower"] = _report(up), _report(lo)
    if "uniform" in what:
        if P.n % args.T:
            raise SystemExit(f"scale exponent {P.n} is not a multiple of T={args.T}")
        ok, Ns = is_uniform(P, list(range(0, P.n + 1, args.T)))
        out["uniform"] = {"T": args.T, "uniform": ok, "N": Ns}
        if ok:
            out["branching"] = [str(v) for v in branching_function(P, args.T).exact]
    _emit(args, "check", out)
    return 0


# -------------------------------------------------------------- incidence


def cmd_incidence(args) -> int:
    P = read_set(args.cubes)
    T = read_set(args.tubes)
    if not isinstance(P, CubeSet) or not isinstance(T, TubeSet):
        raise SystemExit("need a CUBESET for --cubes and a TUBESET for --tubes")
    if args.mode == "exact":
        r = incidence_exact(P, T, args.delta_exp, args.fat)
        out = {"mode": "exact", "fat": args.fat, "delta_exp": args.delta_exp, "total": r.total,
               "per_tube": [[ia, ib, c, w] for (ia, ib), (c, w) in sorted(r.per_tube.items())]}
    else:
        if args.S is None:
            raise SystemExit("--S is required for --mode highlow")
        r = highlow_decompose(P, T, args.S, args.eps)
        out = {"mode": "highlow", **r.to_dict()}
    _emit(args, "incidence", out)
    return 0


# -------------------------------------------------------------- decompose


def read_branch(text: str) -> BranchingFunction:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = rows[0]
    if head[:2] != ["BRANCH", "v1"]:
        raise ValueError("not a BRANCH v1 file")
    kv = dict(p.split("=", 1) for p in head[2:])
    vals = {}
    for r in rows[1:]:
        j, num, den = (int(x) for x in r)
        vals[j] = Fraction(num, den)
    m = max(vals)
    if sorted(vals) != list(range(m + 1)):
        raise ValueError("BRANCH records must cover j = 0..m")
    return BranchingFunction(m, int(kv.get("T", 1)), tuple(vals[j] for j in range(m + 1)))


def cmd_decompose(args) -> int:
    text = Path(args.input).read_text()
    P = None
    if text.startswith("BRANCH"):
        f = read_branch(text)
    else:
        P = read_set(args.input)
        if args.uniformize:
            P = uniformize(P, args.T)
        f = branching_function(P, args.T)
    dec = decompose_branching(f, Fraction(args.s), Fraction(args.t), Fraction(args.u), Fraction(args.eps))
    out = {"branching": [str(v) for v in f.exact], "decomposition": dec.to_dict(),
           "violations": check_decomposition(f, dec)}
    if P is not None:
        out["verification"] = [r.to_dict() for r in classify_scales(P, dec, args.T)]
    _emit(args, "decompose", out)
    return 0


# ------------------------------------------------------------- experiment


def cmd_experiment(args) -> int:
    if not args.spec:
        raise SystemExit("experiment needs --spec FILE")
    spec = load_spec(args.spec)
    summary = run_experiment(spec, args.out or ".")
    _emit(args, spec.name + ".summary", summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="key = value config file")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="furstlab", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a generated cube set")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a spec key")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("check", parents=[common], help="regularity constants and uniformity")
    c.add_argument("--cubes", required=True)
    c.add_argument("--s", type=float, default=1.0)
    c.add_argument("--T", type=int, default=1)
    c.add_argument("--what", default="frostman,katz_tao,ad,uniform")
    c.set_defaults(func=cmd_check)

    i = sub.add_parser("incidence", parents=[common], help="incidence counts")
    i.add_argument("--cubes", required=True)
    i.add_argument("--tubes", required=True)
    i.add_argument("--delta-exp", type=int, required=True, dest="delta_exp")
    i.add_argument("--fat", type=int, choices=(4, 6), default=6)
    i.add_argument("--mode", choices=("exact", "highlow"), default="exact")
    i.add_argument("--S", type=float)
    i.add_argument("--eps", type=float, default=0.5)
    i.set_defaults(func=cmd_incidence)

    d = sub.add_parser("decompose", parents=[common], help="branching-function decomposition")
    d.add_argument("--input", required=True, help="CUBESET or BRANCH v1 file")
    d.add_argument("--T", type=int, default=2)
    d.add_argument("--s", required=True)
    d.add_argument("--t", required=True)
    d.add_argument("--u", required=True)
    d.add_argument("--eps", required=True)
    d.add_argument("--uniformize", action="store_true")
    d.set_defaults(func=cmd_decompose)

    e = sub.add_parser("experiment", parents=[common], help="run an experiment spec")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

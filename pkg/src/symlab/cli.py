"""Command-line interface: every experiment as a subcommand with reproducible
seeding and CSV/JSON outputs.

Exit codes: 0 ok, 1 bound violation somewhere in a scan (details land in
violations.json next to the CSVs), 2 usage error.  The master seed fully
determines all randomness; grid tasks get independent counter-derived
streams, so results do not depend on the worker count (capped by
SYMLAB_THREADS).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from ._csvio import write_csv
from .groups import build_group, regular_representation, sector_decomposition
from .moments import (
    exact_symmetric_haar_choi,
    approx_symmetric_haar_choi,
    relative_error,
    approx_twirl_error_bound,
)
from .ensembles import (
    EnsembleSpec,
    brickwork_choi_exact,
    haar_choi_on,
    iterated_gluing_bound,
    ti_choi_exact,
    ti_relative_error,
    ti_gluing_threshold,
    perm_sum_bruteforce,
)
from .commutant import AlgebraBudgetError
from .constructions import ControlledEnsembleSpec, controlled_trace_distance_experiment
from .phaselab import PhaseScanConfig, run_phase_scan
from .classical import distinguishability_experiment, patchwise_distinct_defect


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("SYMLAB_THREADS", "1")))
    except ValueError:
        return 1


def _parallel_map(fn, items):
    w = _workers()
    if w == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))


def _grid_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _finish(out_dir: str, violations: list) -> int:
    if violations:
        path = os.path.join(out_dir, "violations.json")
        with open(path, "w") as fh:
            json.dump(violations, fh, indent=2, sort_keys=True)
        print(f"bound violations: {len(violations)} (see {path})", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_twirl_verify(args) -> int:
    config = {"groups": args.group, "n": args.n, "k": args.k}
    rows = []
    violations = []
    tasks = [(g, n, k) for g in args.group.split(",") for n in _int_list(args.n)
             for k in _int_list(args.k)]

    def run(task):
        gname, n, k = task
        rep = regular_representation(build_group(gname))
        D = rep.site_dim**n
        dec = sector_decomposition(rep, n)
        approx = approx_symmetric_haar_choi(rep, n, k)
        exact = exact_symmetric_haar_choi(dec, k)
        eps = relative_error(approx, exact)
        bound = approx_twirl_error_bound(rep.group.order, k, D)
        return {
            "group": gname, "n": n, "k": k, "D": D,
            "epsilon": eps, "bound": bound,
            "bound_vacuous": not approx.bound_valid,
            "seed": args.seed,
        }

    for row in _parallel_map(run, tasks):
        rows.append(row)
        if not row["bound_vacuous"] and row["epsilon"] > row["bound"] + 1e-9:
            violations.append({"command": "twirl-verify", **row})
    write_csv(os.path.join(args.out, "twirl_errors.csv"),
              ["group", "n", "k", "D", "epsilon", "bound", "bound_vacuous", "seed"],
              rows, config, args.seed)
    return _finish(args.out, violations)


def cmd_design_error(args) -> int:
    config = {"group": args.group, "n": args.n, "xi": args.xi, "k": args.k,
              "boundary": args.boundary}
    rows = []
    violations = []
    gname = args.group
    rep = regular_representation(build_group(gname))
    haar_cache = {}

    def run(task):
        idx, (n, xi, k) = task
        spec = EnsembleSpec(kind="brickwork", group=gname, n_sites=n, xi=xi,
                            boundary=args.boundary)
        try:
            choi = brickwork_choi_exact(spec, k)
            if n not in haar_cache:
                haar_cache[(n, k)] = haar_choi_on(rep, n, k)
            eps = relative_error(choi, haar_cache[(n, k)])
            capacity = False
        except AlgebraBudgetError:
            eps, capacity = float("nan"), True
        bound, vacuous, _steps = iterated_gluing_bound(
            n, xi, k, rep.group.order, rep.site_dim)
        return {
            "kind": "brickwork", "group": gname, "n": n, "xi": xi, "k": k,
            "epsilon_measured": eps, "epsilon_bound": bound,
            "bound_vacuous": vacuous or capacity, "seed": args.seed,
        }

    tasks = list(enumerate((n, xi, k) for n in _int_list(args.n)
                           for xi in _int_list(args.xi) for k in _int_list(args.k)))
    for row in _parallel_map(run, tasks):
        rows.append(row)
        if not row["bound_vacuous"] and not np.isnan(row["epsilon_measured"]):
            if row["epsilon_measured"] > row["epsilon_bound"] + 1e-9:
                violations.append({"command": "design-error", **row})
    write_csv(os.path.join(args.out, "design_errors.csv"),
              ["kind", "group", "n", "xi", "k", "epsilon_measured", "epsilon_bound",
               "bound_vacuous", "seed"],
              rows, config, args.seed)
    return _finish(args.out, violations)


def cmd_ti_scan(args) -> int:
    config = {"m": args.m, "xi": args.xi, "k": args.k}
    rows = []
    violations = []
    for m in _int_list(args.m):
        for xi in _int_list(args.xi):
            for k in _int_list(args.k):
                K = m * k
                choi = ti_choi_exact(m, xi, k)
                res = ti_relative_error(choi)
                n = 2 * m * xi
                thr = ti_gluing_threshold(n, k, 1.0)
                perm = perm_sum_bruteforce(min(K, 6), max(4, K * K))
                row = {
                    "m": m, "xi": xi, "k": k, "K": K, "n": n,
                    "eps_bound": res["eps_bound"],
                    "eps_exact": res["eps_exact"] if res["eps_exact"] is not None else float("nan"),
                    "additive_norm": res["additive_norm"],
                    "threshold_xi_log2": thr,
                    "threshold_vacuous": xi < thr,
                    "perm_bounds_ok": perm["ok"],
                    "seed": args.seed,
                }
                rows.append(row)
                if not perm["ok"]:
                    violations.append({"command": "ti-scan", **row})
                if res["eps_exact"] is not None and res["eps_exact"] > res["eps_bound"] + 1e-9:
                    violations.append({"command": "ti-scan", **row})
    write_csv(os.path.join(args.out, "ti_scan.csv"),
              ["m", "xi", "k", "K", "n", "eps_bound", "eps_exact", "additive_norm",
               "threshold_xi_log2", "threshold_vacuous", "perm_bounds_ok", "seed"],
              rows, config, args.seed)
    return _finish(args.out, violations)


def cmd_cpru(args) -> int:
    config = {"variant": args.variant, "D": args.D, "D_L": args.D_L, "D_R": args.D_R,
              "k": args.k, "N": args.draws}
    if args.variant == "pfc":
        spec = ControlledEnsembleSpec(variant="pfc", D=args.D)
    else:
        spec = ControlledEnsembleSpec(variant="lrfc", D_L=args.D_L, D_R=args.D_R)
    rng = _grid_rng(args.seed, 0)
    res = controlled_trace_distance_experiment(spec, args.k, args.draws, rng)
    row = {
        "variant": args.variant, "D": spec.dim(), "D_L": args.D_L or "",
        "D_R": args.D_R or "", "k": args.k, "N": args.draws,
        "distance": res["distance"], "stderr": res["stderr"], "bound": res["bound"],
        "seed": args.seed,
    }
    violations = []
    if res["distance"] > res["bound"] + 3 * res["stderr"]:
        violations.append({"command": "cpru", **row})
    write_csv(os.path.join(args.out, "cpru_bounds.csv"),
              ["variant", "D", "D_L", "D_R", "k", "N", "distance", "stderr", "bound", "seed"],
              [row], config, args.seed)
    return _finish(args.out, violations)


def cmd_phase_scan(args) -> int:
    config = {"phase": args.phase, "n": args.n, "xi_grid": args.xi, "draws": args.draws,
              "strategy": args.strategy, "inflate": not args.no_inflate}
    cfg = PhaseScanConfig(
        phase=args.phase, n=args.n, xi_grid=tuple(_int_list(args.xi)),
        draws=args.draws, strategy=args.strategy, inflate=not args.no_inflate,
        seed=args.seed,
    )
    records = run_phase_scan(cfg)
    rows = [r.row() for r in records]
    write_csv(os.path.join(args.out, "phase_scan.csv"),
              ["experiment", "phase", "strategy", "n", "xi", "regions", "value",
               "sample_cost", "draws", "seed"],
              rows, config, args.seed)
    return _finish(args.out, [])


def cmd_classical_scan(args) -> int:
    config = {"kind_a": args.kind_a, "kind_b": args.kind_b, "n": args.n,
              "xi": args.xi, "k": args.k, "N": args.draws, "exact": args.exact}
    rows = []
    violations = []
    for idx, xi in enumerate(_int_list(args.xi)):
        rng = _grid_rng(args.seed, idx)
        n = args.n if args.n else 2 * xi
        mode = "exact" if args.exact else "sampling"
        tv, stderr, bound = distinguishability_experiment(
            args.kind_a, args.kind_b, args.k, xi, n, args.draws, rng, mode=mode)
        row = {"kind_a": args.kind_a, "kind_b": args.kind_b, "n": n, "xi": xi,
               "k": args.k, "mode": mode, "advantage": tv, "bound": bound,
               "seed": args.seed}
        rows.append(row)
        if bound < 1.0 and tv > bound + 3 * max(stderr, 1e-12):
            violations.append({"command": "classical-scan", **row})
    write_csv(os.path.join(args.out, "classical_scan.csv"),
              ["kind_a", "kind_b", "n", "xi", "k", "mode", "advantage", "bound", "seed"],
              rows, config, args.seed)
    return _finish(args.out, violations)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="symlab",
                                description="symmetric random unitary verification lab")
    p.add_argument("--version", action="version", version=f"symlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", type=str, default="out")
        sp.add_argument("--config", type=str, default=None,
                        help="JSON file whose keys override the flags")

    sp = sub.add_parser("twirl-verify", help="uniform-twirl error vs the exact twirl")
    sp.add_argument("--group", type=str, default="Z2,Z3,Z2xZ2")
    sp.add_argument("--n", type=str, default="3,4")
    sp.add_argument("--k", type=str, default="1,2")
    common(sp)
    sp.set_defaults(fn=cmd_twirl_verify)

    sp = sub.add_parser("design-error", help="brickwork design error vs the gluing bound")
    sp.add_argument("--group", type=str, default="Z2")
    sp.add_argument("--n", type=str, default="4,6")
    sp.add_argument("--xi", type=str, default="1,2")
    sp.add_argument("--k", type=str, default="1")
    sp.add_argument("--boundary", type=str, default="periodic", choices=["periodic", "open"])
    common(sp)
    sp.set_defaults(fn=cmd_design_error)

    sp = sub.add_parser("ti-scan", help="translation-invariant design errors and bounds")
    sp.add_argument("--m", type=str, default="2,3")
    sp.add_argument("--xi", type=str, default="1")
    sp.add_argument("--k", type=str, default="1")
    common(sp)
    sp.set_defaults(fn=cmd_ti_scan)

    sp = sub.add_parser("cpru", help="controlled-ensemble trace-distance experiment")
    sp.add_argument("--variant", type=str, default="pfc", choices=["pfc", "lrfc"])
    sp.add_argument("--D", type=int, default=32)
    sp.add_argument("--D-L", dest="D_L", type=int, default=16)
    sp.add_argument("--D-R", dest="D_R", type=int, default=16)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--N", "--draws", dest="draws", type=int, default=10000)
    common(sp)
    sp.set_defaults(fn=cmd_cpru)

    sp = sub.add_parser("phase-scan", help="phase recognition strategies vs light cone")
    sp.add_argument("--phase", type=str, default="ghz",
                    choices=["ghz", "cluster", "toric", "product"])
    sp.add_argument("--n", type=int, default=24)
    sp.add_argument("--xi", type=str, default="0,1,2")
    sp.add_argument("--draws", type=int, default=20)
    sp.add_argument("--strategy", type=str, default="mi",
                    choices=["order_parameter", "string_order", "mi", "cmi", "tee"])
    sp.add_argument("--no-inflate", action="store_true")
    common(sp)
    sp.set_defaults(fn=cmd_phase_scan)

    sp = sub.add_parser("classical-scan", help="classical scrambled-distribution advantage")
    sp.add_argument("--kind-a", dest="kind_a", type=str, default="z2_ssb")
    sp.add_argument("--kind-b", dest="kind_b", type=str, default="trivial_uniform")
    sp.add_argument("--n", type=int, default=0, help="bits (default 2*xi)")
    sp.add_argument("--xi", type=str, default="8,10,12")
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--N", "--draws", dest="draws", type=int, default=20000)
    sp.add_argument("--exact", action="store_true")
    common(sp)
    sp.set_defaults(fn=cmd_classical_scan)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"bad config file: {exc}")
        for key, val in overrides.items():
            if not hasattr(args, key):
                parser.error(f"unknown config key {key!r}")
            setattr(args, key, val)
    os.makedirs(args.out, exist_ok=True)
    try:
        return args.fn(args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``gmc {gen,solve,success,phase,scaling,noisy,cv}``.

Every data output ``OUT`` is accompanied by ``OUT.manifest.json`` holding the
resolved parameters, master seed, package version, output checksums and
timings. Data outputs are byte-identical for identical flags.
"""

import argparse
import hashlib
import json
import math
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .cv import loo_cv_error, selection_counts
from .datagen import EnsembleParams, PlantedInstance, gen_planted
from .dataio import (
    COUNTS_HEADER,
    CV_HEADER,
    NOISY_HEADER,
    PHASE_HEADER,
    SCALING_HEADER,
    SUCCESS_HEADER,
    atomic_write,
    load_csv,
    load_instance,
    save_instance,
    standardize,
    write_csv,
    write_json,
)
from .errors import GmcError, InvalidParams
from .experiments import (
    PERFECT_EPS_X,
    default_phase_grid,
    mean_stderr,
    nconv_scaling,
    noisy_mse_curve,
    phase_sweep,
    success_experiment,
)
from .parallel import resolve_workers
from .search import GmcConfig, multi_restart


def positive_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def float_list(s):
    try:
        return [float(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def int_list(s):
    try:
        return [int(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out, args, outputs, timings):
    params = {k: v for k, v in vars(args).items() if k not in ("func",)}
    doc = {
        "subcommand": args.command,
        "params": params,
        "seed": args.seed,
        "version": __version__,
        "outputs": {str(p): _sha256(p) for p in outputs},
        "timings": timings,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    write_json(f"{out}.manifest.json", doc)


def _finite(v):
    return v if math.isfinite(v) else None


def _cfg(args):
    return GmcConfig(t_wait=args.t_wait, max_mcs=args.max_mcs, seed=args.seed)


def cmd_gen(args):
    params = EnsembleParams(args.n, args.alpha, args.rho0, args.noise_var, args.seed)
    t0 = time.perf_counter()
    pi = gen_planted(params)
    save_instance(pi, args.out)
    _write_manifest(args.out, args, [args.out], {"total_s": time.perf_counter() - t0})
    print(f"M={params.M} K0={params.K0}")


def _run_summary(r):
    return {
        "support": r.c_final.ones.tolist(),
        "energy": r.energy,
        "n_conv": r.n_conv,
        "exhaustive_invocations": r.exhaustive_invocations,
        "terminated_by": r.terminated_by.value,
        "seed": r.seed,
    }


def cmd_solve(args):
    loaded = load_instance(args.inp)
    planted = loaded if isinstance(loaded, PlantedInstance) else None
    inst = planted.inst if planted else loaded
    if args.k > inst.M:
        raise InvalidParams(f"--k {args.k} exceeds M={inst.M}")
    t0 = time.perf_counter()
    rs = multi_restart(inst, args.k, args.n_init, _cfg(args), workers=resolve_workers(args.threads))
    elapsed = time.perf_counter() - t0
    conv = [r.n_conv for r in rs.all if r.converged]
    mean, se = mean_stderr(conv)
    report = {
        "K": args.k,
        "M": inst.M,
        "N": inst.N,
        "n_init": args.n_init,
        "seed": args.seed,
        "best": _run_summary(rs.best),
        "restarts": [_run_summary(r) for r in rs.all],
        "n_conv": {"mean": _finite(mean), "stderr": _finite(se), "n_converged": len(conv),
                   "n_maxmcs": len(rs.all) - len(conv)},
    }
    if planted is not None:
        diff = planted.x0 - rs.best.x_hat()
        eps_x = float(diff @ diff) / (2 * inst.N)
        report["eps_x"] = eps_x
        report["exact_recovery"] = eps_x <= PERFECT_EPS_X
    if args.out:
        report["manifest"] = f"{Path(args.out).name}.manifest.json"
        atomic_write(args.out, json.dumps(report, indent=2) + "\n")
        _write_manifest(args.out, args, [args.out], {"total_s": elapsed})
        print(f"best energy={rs.best.energy!r} support={rs.best.c_final.ones.tolist()}")
    else:
        print(json.dumps(report, indent=2))


def cmd_success(args):
    t0 = time.perf_counter()
    rep = success_experiment(args.n, args.alpha, args.rho0, args.n_samp, args.n_init,
                             _cfg(args), workers=resolve_workers(args.threads))
    write_csv(args.out, SUCCESS_HEADER, rep.csv_rows())
    _write_manifest(args.out, args, [args.out], {"total_s": time.perf_counter() - t0})
    print(f"P_suc = {rep.mean:.4f} +/- {rep.stderr:.4f} (capped runs: {rep.n_maxmcs})")


def cmd_phase(args):
    if args.alphas is None and args.rho0s is None:
        cells = default_phase_grid(args.n)
    else:
        grid = [round(0.05 * k, 2) for k in range(1, 20)]
        cells = [(a, r) for a in (args.alphas or grid) for r in (args.rho0s or grid)]
    t0 = time.perf_counter()
    out = phase_sweep(cells, args.n, args.n_samp, args.n_init, _cfg(args),
                      workers=resolve_workers(args.threads))
    write_csv(args.out, PHASE_HEADER, [c.csv_row() for c in out])
    _write_manifest(args.out, args, [args.out], {"total_s": time.perf_counter() - t0})
    print(f"wrote {len(out)} cells to {args.out}")


def cmd_scaling(args):
    t0 = time.perf_counter()
    rep = nconv_scaling(args.sizes, args.alpha, args.rho, args.rho0, args.n_samp, _cfg(args),
                        n_init=args.n_init, workers=resolve_workers(args.threads))
    write_csv(args.out, SCALING_HEADER, [r.csv_row() for r in rep.records])
    _write_manifest(args.out, args, [args.out], {"total_s": time.perf_counter() - t0})
    slope = "absent" if rep.slope is None else f"{rep.slope:.3f}"
    print(f"log-log slope of N_conv vs N: {slope}")


def cmd_noisy(args):
    params = EnsembleParams(args.n, args.alpha, args.rho0, args.noise_var, args.seed)
    t0 = time.perf_counter()
    rep = noisy_mse_curve(params, args.rhos, args.n_samp, args.n_init, _cfg(args),
                          workers=resolve_workers(args.threads))
    write_csv(args.out, NOISY_HEADER, [r.csv_row() for r in rep.rows])
    _write_manifest(args.out, args, [args.out], {"total_s": time.perf_counter() - t0})
    print(f"wrote {len(rep.rows)} rows to {args.out}")


def cmd_cv(args):
    inst = load_csv(args.a, args.y, header=args.header)
    if not args.no_standardize:
        inst = standardize(inst).inst
    ks = args.k_values or list(range(1, args.k_max + 1))
    workers = resolve_workers(args.threads)
    cfg = _cfg(args)
    out = Path(args.out)
    stem = out.with_suffix("")
    rows, outputs, reports, timings = [], [out], [], {}
    for K in ks:
        t0 = time.perf_counter()
        eps, rep = loo_cv_error(inst, K, args.n_init_per_fold, cfg, workers=workers)
        full = multi_restart(inst, K, args.fit_restarts, cfg, workers=workers).best
        timings[f"K={K}_s"] = time.perf_counter() - t0
        rows.append((K, eps))
        counts_path = Path(f"{stem}_counts_K{K}.csv")
        write_csv(counts_path, COUNTS_HEADER, selection_counts(rep))
        outputs.append(counts_path)
        reports.append({**rep.to_dict(), "full_data_fit": _run_summary(full)})
        top = ", ".join(f"{v}:{c}" for v, c in selection_counts(rep, top=5))
        print(f"K={K} eps_cv={eps:.6g} eps_y={full.energy:.6g} "
              f"support={full.c_final.ones.tolist()} top5=[{top}]")
    write_csv(out, CV_HEADER, rows)
    report_path = Path(f"{stem}_report.json")
    write_json(report_path, {"M": inst.M, "N": inst.N, "standardized": not args.no_standardize,
                             "manifest": f"{out.name}.manifest.json", "per_K": reports})
    outputs.append(report_path)
    _write_manifest(out, args, outputs, timings)


def build_parser():
    p = argparse.ArgumentParser(prog="gmc", description="Greedy Monte-Carlo search for "
                                "sparse linear regression.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--t-wait", type=positive_int, default=10,
                        help="stalled sweeps before the neighbourhood scan (default 10)")
    common.add_argument("--max-mcs", type=int, default=None,
                        help="hard cap on sweeps per run (default 100*t_wait*N)")
    common.add_argument("--threads", type=positive_int, default=None,
                        help="worker processes (default $GMC_THREADS or CPU count)")

    g = sub.add_parser("gen", parents=[common], help="generate a planted instance")
    g.add_argument("--n", type=positive_int, required=True)
    g.add_argument("--alpha", type=float, required=True)
    g.add_argument("--rho0", type=float, required=True)
    g.add_argument("--noise-var", type=float, default=0.0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", parents=[common], help="best-of-restarts GMC on an instance file")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--k", type=positive_int, required=True)
    s.add_argument("--n-init", type=positive_int, default=100)
    s.add_argument("--out", default=None, help="report path (default: stdout)")
    s.set_defaults(func=cmd_solve)

    su = sub.add_parser("success", parents=[common], help="mean success rate P_suc")
    su.add_argument("--n", type=positive_int, default=100)
    su.add_argument("--alpha", type=float, default=0.5)
    su.add_argument("--rho0", type=float, default=0.2)
    su.add_argument("--n-samp", type=positive_int, default=100)
    su.add_argument("--n-init", type=positive_int, default=100)
    su.add_argument("--out", default="success.csv")
    su.set_defaults(func=cmd_success)

    ph = sub.add_parser("phase", parents=[common], help="P_samp over an (alpha, rho0) grid")
    ph.add_argument("--n", type=positive_int, default=100)
    ph.add_argument("--alphas", type=float_list, default=None)
    ph.add_argument("--rho0s", type=float_list, default=None)
    ph.add_argument("--n-samp", type=positive_int, default=100)
    ph.add_argument("--n-init", type=positive_int, default=100)
    ph.add_argument("--out", default="phase.csv")
    ph.set_defaults(func=cmd_phase)

    sc = sub.add_parser("scaling", parents=[common], help="N_conv against system size")
    sc.add_argument("--sizes", type=int_list, default=[50, 100, 200, 400])
    sc.add_argument("--alpha", type=float, default=0.5)
    sc.add_argument("--rho", type=float, default=0.2)
    sc.add_argument("--rho0", type=float, default=0.2)
    sc.add_argument("--n-samp", type=positive_int, default=100)
    sc.add_argument("--n-init", type=positive_int, default=1)
    sc.add_argument("--out", default="scaling.csv")
    sc.set_defaults(func=cmd_scaling)

    no = sub.add_parser("noisy", parents=[common], help="eps_y / eps_x against assumed density")
    no.add_argument("--n", type=positive_int, default=100)
    no.add_argument("--alpha", type=float, default=0.5)
    no.add_argument("--rho0", type=float, default=0.2)
    no.add_argument("--noise-var", type=float, default=0.1)
    no.add_argument("--rhos", type=float_list,
                    default=[0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5])
    no.add_argument("--n-samp", type=positive_int, default=100)
    no.add_argument("--n-init", type=positive_int, default=100)
    no.add_argument("--out", default="noisy.csv")
    no.set_defaults(func=cmd_noisy)

    c = sub.add_parser("cv", parents=[common], help="leave-one-out CV on CSV data")
    c.add_argument("--a", required=True, help="predictor CSV (M rows x N columns)")
    c.add_argument("--y", required=True, help="response CSV (M rows, one column)")
    c.add_argument("--header", action="store_true", help="skip one header line in each file")
    c.add_argument("--no-standardize", action="store_true")
    c.add_argument("--k-max", type=positive_int, default=5)
    c.add_argument("--k-values", type=int_list, default=None)
    c.add_argument("--n-init-per-fold", type=positive_int, default=1)
    c.add_argument("--fit-restarts", type=positive_int, default=10,
                   help="restarts for the full-data fit at each K (default 10)")
    c.add_argument("--out", default="cv.csv")
    c.set_defaults(func=cmd_cv)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except GmcError as exc:
        print(f"gmc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``hdvcm <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys

from .harness import config as cfgmod
from .harness import io as hio
from .harness import lemmas, pipeline, simulation
from .inference import band_grid, write_band_csv
from .sampling import pair_count_mc


def _add_data_args(ap):
    ap.add_argument("--x", required=True, help="time-invariant covariate CSV")
    ap.add_argument("--long", required=True, help="long-format observation CSV")
    ap.add_argument("--normalize-times", action="store_true",
                    help="map observed times onto [0, (M-1)/M]")
    ap.add_argument("--seed", type=int, default=0, help="seed for CV fold assignment")
    ap.add_argument("--scheme", choices=["A", "B"], default="A", help="difference set")
    ap.add_argument("--whiten", action="store_true", help="whiten overlapping differences")
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--n-lambda", type=int, default=30)
    ap.add_argument("--K-beta-max", type=int, default=20)
    ap.add_argument("--K-gamma-grid", default="2,4,6,8")


def _ints(text: str) -> tuple:
    return tuple(int(s) for s in text.split(",") if s.strip())


def _load(args):
    return hio.ingest_csv(args.x, args.long, args.normalize_times)


def _write_rows(path, header, rows):
    out = open(path, "w", newline="") if path != "-" else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([simulation.fmt(v) for v in r])
    finally:
        if out is not sys.stdout:
            out.close()


def cmd_simulate(args) -> int:
    values = cfgmod.parse_config_text(open(args.config).read()) if args.config else {}
    for name in cfgmod._FIELDS:
        v = getattr(args, "cfg_" + name, None)
        if v is not None:
            values[name] = v
    values["rng_seed"] = args.seed
    cfg = cfgmod.SimConfig(**cfgmod.coerce_fields(values))
    if args.tune_delta_seed is not None:
        c = simulation.tune_delta_c(cfg, args.tune_delta_seed, args.tune_delta_reps)
        cfg = cfg.replace(delta_c=c)
        print(f"tuned delta_c = {c:.17g}", file=sys.stderr)
    os.makedirs(args.out, exist_ok=True)
    progress = None
    if args.verbose:
        def progress(rec):
            print(f"rep {rec['rep']}: {rec['status']}", file=sys.stderr)
    report = simulation.run_simulation(cfg, progress)
    with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as fh:
        fh.write(simulation.metrics_csv(report))
    with open(os.path.join(args.out, "reps.csv"), "w", newline="") as fh:
        fh.write(simulation.reps_csv(report))
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(cfgmod.format_config(cfg))
    sys.stdout.write(simulation.metrics_csv(report))
    return 0


def cmd_fit(args) -> int:
    d = _load(args)
    fit = pipeline.fit_dataset(d, args.K_beta, args.K_gamma, args.h, args.mode, args.scheme,
                               args.whiten, args.seed, args.K_beta_max, _ints(args.K_gamma_grid),
                               args.n_lambda, args.folds)
    for path in hio.write_fit(fit, args.out):
        print(path)
    return 0


def cmd_band(args) -> int:
    d = _load(args)
    fit = hio.read_fit(args.fit)
    if args.target == "beta":
        if fit.beta_hat is None:
            raise SystemExit("fit has no beta coefficients")
        band = pipeline.beta_band(d, fit, args.coord, args.tau, args.delta, args.seed)
    else:
        if fit.gamma_hat is None:
            raise SystemExit("fit has no gamma coefficients")
        band = pipeline.gamma_band(d, fit, args.coord, args.tau, args.delta, args.scheme,
                                   args.whiten, args.seed)
    write_band_csv(args.out, band, band_grid(args.points))
    return 0


def cmd_cv(args) -> int:
    d = _load(args)
    rows = pipeline.cv_report(d, args.K_beta_max, _ints(args.K_gamma_grid), args.scheme,
                              args.whiten, args.seed, args.n_lambda, args.folds)
    _write_rows(args.out, ["target", "h", "K", "lambda", "cv_error"], rows)
    return 0


def cmd_verify(args) -> int:
    rows = lemmas.verify_lemmas(args.seed)
    text = lemmas.lemma_report_csv(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    return 0 if all(r.passed for r in rows) else 1


def cmd_pair_counts(args) -> int:
    r = pair_count_mc(args.n, args.m, args.h, args.reps, rng_seed=args.seed)
    _write_rows(args.out, list(r.keys()), [list(r.values())])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hdvcm", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run the replication harness")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--config", help="flat key = value configuration file")
    s.add_argument("--out", default="sim_out", help="output directory")
    s.add_argument("--tune-delta-seed", type=int, help="tune delta_c on this held-out seed first")
    s.add_argument("--tune-delta-reps", type=int, default=None)
    s.add_argument("--verbose", action="store_true")
    for f in dataclasses.fields(cfgmod.SimConfig):
        if f.name == "rng_seed":
            continue
        s.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None,
                       help=f"default {f.default!r}")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="fit a dataset from CSV")
    _add_data_args(f)
    f.add_argument("--out", required=True, help="output prefix")
    f.add_argument("--K-beta", type=int, default=0, help="0 chooses by CV")
    f.add_argument("--K-gamma", type=int, default=0, help="0 chooses by CV")
    f.add_argument("--h", type=float, default=0.0, help="0 chooses by CV")
    f.add_argument("--mode", choices=["hd", "ld"], default="hd")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("band", help="confidence band from a fit and its data")
    _add_data_args(b)
    b.add_argument("--fit", required=True, help="fit prefix written by 'fit'")
    b.add_argument("--out", required=True, help="band CSV path")
    b.add_argument("--target", choices=["beta", "gamma"], default="beta")
    b.add_argument("--coord", type=int, default=0, help="0-based coordinate")
    b.add_argument("--tau", type=float, default=0.05)
    b.add_argument("--delta", type=float, default=0.0)
    b.add_argument("--points", type=int, default=512)
    b.set_defaults(func=cmd_band)

    c = sub.add_parser("cv", help="cross-validation grid report")
    _add_data_args(c)
    c.add_argument("--out", default="-", help="CSV path or - for stdout")
    c.set_defaults(func=cmd_cv)

    v = sub.add_parser("verify-lemmas", help="numerical checks of the basis identities")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_verify)

    p = sub.add_parser("prop1-mc", help="difference-set size Monte Carlo")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_pair_counts)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

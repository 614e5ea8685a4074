"""Command-line front end: ``run``, ``single`` and ``selftest``.

Exit codes: 0 success, 1 configuration error or failed self-check,
2 when every trial of some (SNR, algorithm) cell broke down numerically.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, load_spec
from .doa import build_dictionary, run_monte_carlo, run_trial, trial_rng
from .selftest import run_selftest

log = logging.getLogger("onebit_bsbl")

TRIALS_COLUMNS = ["trial", "algorithm", "snr_db", "nmse_db", "detected", "runtime_s"]
BINS_COLUMNS = ["algorithm", "angle_deg", "count"]
SUMMARY_COLUMNS = ["algorithm", "snr_db", "mean_nmse_db", "detection_rate", "mean_runtime_s",
                   "n_failed"]


def _fmt(x, digits=6, timing=True):
    if not timing:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.{digits}f}"


def _fmt_angle(a):
    return f"{a:g}"


def _writer(path: Path):
    f = open(path, "w", newline="", encoding="utf-8")
    return f, csv.writer(f, lineterminator="\r\n")


def write_results(out: Path, cells, grid, timing=True):
    """Write trials.csv, summary.csv and bins.csv for a list of Monte-Carlo results.

    Bin counts are summed over all SNR cells of the run.
    """
    out.mkdir(parents=True, exist_ok=True)
    f, w = _writer(out / "trials.csv")
    with f:
        w.writerow(TRIALS_COLUMNS)
        for res in cells:
            for r in res.trials:
                w.writerow([r.trial, r.algorithm, _fmt(r.snr_db, 3), _fmt(r.nmse_db),
                            int(r.detected), _fmt(r.runtime, timing=timing)])
    f, w = _writer(out / "summary.csv")
    with f:
        w.writerow(SUMMARY_COLUMNS)
        for res in cells:
            for s in res.summary:
                w.writerow([s["algorithm"], _fmt(s["snr_db"], 3), _fmt(s["mean_nmse_db"]),
                            _fmt(s["detection_rate"]), _fmt(s["mean_runtime_s"], timing=timing),
                            s["n_failed"]])
    bins = {}
    for res in cells:
        for name, counts in res.bins.items():
            bins[name] = bins.get(name, 0) + counts
    f, w = _writer(out / "bins.csv")
    with f:
        w.writerow(BINS_COLUMNS)
        for name, counts in bins.items():
            for angle, c in zip(grid, counts):
                w.writerow([name, _fmt_angle(angle), int(c)])


def _print_summary(cells, stream):
    print(f"{'algorithm':<20} {'snr_db':>7} {'nmse_db':>9} {'detect':>7} {'time_s':>8} {'failed':>6}",
          file=stream)
    for res in cells:
        for s in res.summary:
            print(f"{s['algorithm']:<20} {s['snr_db']:>7.1f} {s['mean_nmse_db']:>9.3f} "
                  f"{s['detection_rate']:>7.2f} {s['mean_runtime_s']:>8.3f} {s['n_failed']:>6d}",
                  file=stream)


def _resolve(args, spec):
    seed = spec.seed if args.seed is None else args.seed
    threads = spec.threads if args.threads is None else args.threads
    out = Path(args.out or spec.out or "results")
    return seed, threads, out


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    seed, threads, out = _resolve(args, spec)
    cells = []
    for snr in spec.snr_db:
        scenario = spec.scenario.replace(snr_db=snr)
        log.info("SNR %g dB: %d trials x %d algorithms", snr, spec.trials, len(spec.algorithms))
        cells.append(run_monte_carlo(scenario, spec.algorithms, spec.trials, seed=seed,
                                     threads=threads, keep_estimates=False))
    write_results(out, cells, spec.scenario.grid, timing=not args.no_timing)
    _print_summary(cells, sys.stdout)
    broken = [(s["algorithm"], s["snr_db"]) for res in cells for s in res.summary
              if s["n_failed"] == spec.trials]
    if broken:
        for name, snr in broken:
            print(f"error: {name} broke down in every trial at SNR {snr:g} dB", file=sys.stderr)
        return 2
    return 0


def cmd_single(args) -> int:
    spec = load_spec(args.spec)
    seed, _, out = _resolve(args, spec)
    scenario = spec.scenario.replace(snr_db=spec.snr_db[0])
    A = build_dictionary(scenario.grid, scenario.M, scenario.d_over_lambda)
    results = run_trial(scenario, spec.algorithms, trial_rng(seed, 0), trial=0, A=A)
    for r in results:
        if r.failed:
            print(f"{r.algorithm:<20} FAILED: {r.error}")
        else:
            angles = ", ".join(_fmt_angle(a) for a in scenario.grid[r.support])
            print(f"{r.algorithm:<20} nmse {r.nmse_db:8.3f} dB  detected {int(r.detected)}  "
                  f"top-{scenario.K} at [{angles}] deg")
    if args.emit_spectrum:
        out.mkdir(parents=True, exist_ok=True)
        ok = [r for r in results if not r.failed]
        truth = np.zeros(scenario.grid.size, dtype=int)
        truth[scenario.true_indices] = 1
        cols = ["angle_deg", "true_doa"]
        data = [[_fmt_angle(a) for a in scenario.grid], truth.tolist()]
        for r in ok:
            X = r.x_hat if r.x_hat.ndim == 2 else r.x_hat[:, None]
            flag = np.zeros(scenario.grid.size, dtype=int)
            flag[r.support] = 1
            cols += [f"{r.algorithm}_magnitude", f"{r.algorithm}_topk"]
            data += [[_fmt(v, 9) for v in np.linalg.norm(X, axis=1)], flag.tolist()]
        f, w = _writer(out / "spectrum.csv")
        with f:
            w.writerow(cols)
            w.writerows(zip(*data))
        print(f"wrote {out / 'spectrum.csv'}")
    if results and all(r.failed for r in results):
        return 2
    return 0


def cmd_selftest(args) -> int:
    return 1 if run_selftest(sys.stdout) else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="onebit-bsbl",
                                     description="One-bit DOA estimation with BSBL and BIHT.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--spec", required=True, help="YAML experiment spec")
        p.add_argument("--seed", type=int, help="override the spec seed (non-negative)")
        p.add_argument("--out", help="output directory (default: spec 'out' or ./results)")

    p = sub.add_parser("run", help="Monte-Carlo sweep over the spec's SNR list")
    common(p)
    p.add_argument("--threads", type=int, help="worker threads for trials")
    p.add_argument("--no-timing", action="store_true",
                   help="leave runtime columns empty so repeated runs are byte-identical")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("single", help="one realization at the first SNR of the spec")
    common(p)
    p.add_argument("--threads", type=int, help=argparse.SUPPRESS)
    p.add_argument("--emit-spectrum", action="store_true",
                   help="write per-angle magnitudes to spectrum.csv")
    p.set_defaults(func=cmd_single)

    p = sub.add_parser("selftest", help="numerical self-checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is not None and args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return 1
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

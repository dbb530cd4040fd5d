"""Command-line entry point: ``pncsim <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import capacity as cap
from .config import load_config, parse_snr_range
from .constellation import from_fractions
from .harness import ConfigurationError, plot_pairs, run_sweep, run_tdma_baseline, write_report
from .schedule import SchemeParams, format_occupancy


def _db_to_lin(db: float) -> float:
    return 10 ** (db / 10)


def _cmd_simulate(a: argparse.Namespace) -> int:
    cfg = load_config(a.config)
    over = {}
    if a.snr_db:
        over["snr_db"] = parse_snr_range(a.snr_db)
    if a.seed is not None:
        over["master_seed"] = a.seed
    if a.threads is not None:
        over["threads"] = a.threads
    if a.frames is not None:
        over["frames"] = a.frames
    if a.dump_dir:
        over["dump_dir"] = a.dump_dir
    cfg = replace(cfg, **over)
    report = run_sweep(cfg)
    write_report(report, a.out, a.csv)
    if cfg.baseline != "none":
        base = run_tdma_baseline(cfg, cfg.baseline)
        if a.out:
            write_report(base, Path(a.out).with_suffix(f".{cfg.baseline}.json"))
        if a.plot_data:
            Path(a.plot_data).write_text(plot_pairs(report, base))
        sys.stdout.write(f"# TDMA {cfg.baseline} baseline\n" + base.to_csv())
        sys.stdout.write("# cooperative scheme\n")
    sys.stdout.write(report.to_csv())
    return 0


def _cmd_schedule(a: argparse.Namespace) -> int:
    p = SchemeParams(a.users, a.bursts)
    sys.stdout.write(format_occupancy(p, a.slots, csv=a.csv) + "\n")
    return 0


def _cmd_capacity(a: argparse.Namespace) -> int:
    p = SchemeParams(a.nu, a.nb)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["snr_db"] + [f"rho_{i}" for i in range(1, a.nb + 1)]
               + [f"C_{i}" for i in range(1, a.nb + 1)] + ["Ra", "Nu_Ra", "recommended_rate"])
    for snr_db in parse_snr_range(a.snr_db):
        rp = cap.optimize_allocation(_db_to_lin(snr_db), p, a.grid_step, a.samples,
                                     a.report_samples, cap.snr_seed(snr_db, a.nb, a.seed))
        w.writerow([snr_db, *rp.allocation.rhos,
                    *(f"{c:.6f}" for c in rp.layer_capacities),
                    f"{rp.rate_per_user:.6f}", f"{rp.sum_rate:.6f}",
                    f"{cap.recommended_code_rate(rp, p):.6f}"])
        sys.stdout.flush()
    return 0


def _cmd_allocate(a: argparse.Namespace) -> int:
    p = SchemeParams(a.nu, a.nb)
    rp = cap.optimize_allocation(_db_to_lin(a.snr_db), p, a.grid_step, a.samples,
                                 a.report_samples, cap.snr_seed(a.snr_db, a.nb, a.seed))
    print(json.dumps({"rho": list(rp.allocation.rhos), "Ra": rp.rate_per_user,
                      "recommended_rate": cap.recommended_code_rate(rp, p)}))
    return 0


def _cmd_constellation(a: argparse.Namespace) -> int:
    rhos = [float(x) for x in a.rho.split(",")]
    c = from_fractions(rhos, a.es)
    sys.stdout.write("re,im,label\n")
    sys.stdout.write("".join(row + "\n" for row in c.to_csv_rows()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pncsim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a PLR/throughput sweep from a config file")
    s.add_argument("--config", required=True)
    s.add_argument("--snr-db", help="override sweep, start:stop:step or a comma list")
    s.add_argument("--out", help="JSON report path")
    s.add_argument("--csv", help="CSV report path")
    s.add_argument("--plot-data", help="scheme/baseline throughput pairs CSV")
    s.add_argument("--dump-dir", help="write received symbols and LLR histograms here")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--frames", type=int)
    s.set_defaults(fn=_cmd_simulate)

    s = sub.add_parser("schedule", help="print the slot occupancy table")
    s.add_argument("--users", type=int, required=True)
    s.add_argument("--bursts", type=int, required=True)
    s.add_argument("--slots", type=int, required=True)
    s.add_argument("--csv", action="store_true")
    s.set_defaults(fn=_cmd_schedule)

    for name, fn, hlp in (("capacity", _cmd_capacity, "optimal allocation and rate per SNR"),
                          ("allocate", _cmd_allocate, "optimal allocation at one SNR (JSON)")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--nb", type=int, choices=(1, 2, 3), required=True)
        if name == "capacity":
            s.add_argument("--snr-db", required=True, help="start:stop:step")
        else:
            s.add_argument("--snr-db", type=float, required=True)
        s.add_argument("--nu", type=int, default=4)
        s.add_argument("--grid-step", type=float, default=0.05)
        s.add_argument("--samples", type=int, default=cap.SEARCH_SAMPLES)
        s.add_argument("--report-samples", type=int, default=cap.REPORT_SAMPLES)
        s.add_argument("--seed", type=int, default=0)
        s.set_defaults(fn=fn)

    s = sub.add_parser("constellation", help="dump a superposed constellation as CSV")
    s.add_argument("--rho", required=True, help="comma-separated energy fractions")
    s.add_argument("--es", type=float, default=1.0)
    s.set_defaults(fn=_cmd_constellation)
    return ap


def main(argv: list[str] | None = None) -> int:
    a = build_parser().parse_args(argv)
    try:
        return a.fn(a)
    except (ConfigurationError, ValueError, OSError) as exc:
        print(f"pncsim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

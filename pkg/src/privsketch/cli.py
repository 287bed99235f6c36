"""Command line entry point: ``privsketch {run,stats,gen,report-io}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .datasets import gen_zipf, load_transactions, save_transactions, stats_csv_row
from .hashing import make_hash_family
from .ldp import PrivacyParams
from .protocol import (
    SampledReports,
    collector_estimate_full,
    collector_estimate_sampled,
    simulate_full,
    simulate_sampled,
)
from .wire import MODE_FULL, MODE_SAMPLED, read_reports, write_reports

log = logging.getLogger("privsketch")


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="run an experiment sweep")
    p.add_argument("--config", help="flat 'key = value' config file; flags override it")
    p.add_argument("--protocols", help=f"comma list from {','.join(harness.PROTOCOLS)}")
    p.add_argument("--epsilon", help="comma list of privacy budgets")
    p.add_argument("-K", "--K", dest="K", help="comma list of hash-function counts")
    p.add_argument("-M", "--M", dest="M", help="comma list of sketch widths")
    p.add_argument("--n", help="comma list of user counts")
    p.add_argument("--d", help="comma list of domain sizes (synthetic data)")
    p.add_argument("--topk", help="comma list of k for Var/NCR")
    p.add_argument("--dataset", help="transaction file instead of synthetic Zipf data")
    p.add_argument("--zipf-s", dest="zipf_s")
    p.add_argument("--draws-per-user", dest="draws_per_user")
    p.add_argument("--repeats")
    p.add_argument("--seed")
    p.add_argument("--output", "-o", help="result CSV (stdout when omitted)")
    p.add_argument("--query-domain", dest="query_domain", help="'full' or a file of dense item ids")
    p.add_argument("--clip", action="store_const", const="true", help="clip estimates to [0, 1]")
    p.add_argument("--pad-length", dest="pad_length", help="PS-OLH padding length (default: P90)")
    p.add_argument("--normalize", choices=["matches", "reports"])
    p.add_argument("--figure", action="append", default=[], choices=sorted(harness.FIGURES), help="also write plot data")
    p.add_argument("--plot-dir", default="plots")
    p.set_defaults(func=cmd_run)


def cmd_run(args) -> int:
    overrides = {}
    for name in ("protocols", "epsilon", "K", "M", "n", "d", "topk", "dataset", "zipf_s",
                 "draws_per_user", "repeats", "seed", "output", "query_domain", "clip",
                 "pad_length", "normalize"):
        value = getattr(args, name)
        if value is not None:
            overrides.update([harness.parse_setting(name, value)])
    config = harness.load_config(args.config, overrides)
    table = harness.run_experiment(config, progress=log.info)
    if config.output:
        harness.write_results(table, config.output)
        log.info("wrote %s", config.output)
    else:
        sys.stdout.write(harness.table_to_csv(table.rows, harness.RESULT_COLUMNS))
    for name in args.figure:
        path = harness.emit_plot_data(table, harness.FIGURES[name], args.plot_dir)
        log.info("wrote %s", path)
    return 0


def _add_stats(sub) -> None:
    p = sub.add_parser("stats", help="print n,d,max,min,p90 for a transaction file")
    p.add_argument("path")
    p.add_argument("--header", action="store_true")
    p.set_defaults(func=cmd_stats)


def cmd_stats(args) -> int:
    ds = load_transactions(args.path)
    if args.header:
        print("n,d,max,min,p90")
    print(stats_csv_row(ds))
    return 0


def _add_gen(sub) -> None:
    p = sub.add_parser("gen", help="write a synthetic Zipf dataset as a transaction file")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--d", type=int, default=1_000)
    p.add_argument("--zipf-s", type=float, default=1.1)
    p.add_argument("--draws-per-user", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_gen)


def cmd_gen(args) -> int:
    ds = gen_zipf(args.n, args.d, args.zipf_s, args.draws_per_user, args.seed)
    save_transactions(ds, args.output)
    print(stats_csv_row(ds))
    return 0


def _add_report_io(sub) -> None:
    p = sub.add_parser("report-io", help="write or read PSKW report files")
    io_sub = p.add_subparsers(dest="action", required=True)

    enc = io_sub.add_parser("encode", help="simulate users from a transaction file and write their reports")
    enc.add_argument("--dataset", required=True)
    enc.add_argument("--mode", choices=["sampled", "full"], default="sampled")
    enc.add_argument("--epsilon", type=float, default=3.0)
    enc.add_argument("-K", "--K", dest="K", type=int, default=4)
    enc.add_argument("-M", "--M", dest="M", type=int, default=128)
    enc.add_argument("--hash-seed", type=int, default=0)
    enc.add_argument("--seed", type=int, default=0)
    enc.add_argument("--output", "-o", required=True)
    enc.set_defaults(func=cmd_encode)

    dec = io_sub.add_parser("decode", help="read a report file and run the collector")
    dec.add_argument("path")
    dec.add_argument("--epsilon", type=float, default=3.0)
    dec.add_argument("--hash-seed", type=int, default=0)
    dec.add_argument("--domain-size", type=int, help="estimate items 0..d-1 (header only when omitted)")
    dec.add_argument("--output", "-o", help="estimates CSV (stdout when omitted)")
    dec.set_defaults(func=cmd_decode)


def cmd_encode(args) -> int:
    ds = load_transactions(args.dataset)
    family = make_hash_family(args.K, args.M, args.hash_seed)
    params = PrivacyParams(args.epsilon, args.K, args.M)
    rng = np.random.default_rng(args.seed)
    simulate = simulate_sampled if args.mode == "sampled" else simulate_full
    reports = simulate(ds.users, params, family, rng)
    write_reports(args.output, reports)
    print(f"mode={args.mode} K={args.K} M={args.M} n={len(reports)}")
    return 0


def cmd_decode(args) -> int:
    reports = read_reports(args.path)
    k, m = reports.shape
    mode = MODE_SAMPLED if isinstance(reports, SampledReports) else MODE_FULL
    print(f"mode={'sampled' if mode == MODE_SAMPLED else 'full'} K={k} M={m} n={len(reports)}", file=sys.stderr)
    if args.domain_size is None:
        return 0
    family = make_hash_family(k, m, args.hash_seed)
    params = PrivacyParams(args.epsilon, k, m)
    domain = np.arange(args.domain_size)
    if mode == MODE_SAMPLED:
        table = collector_estimate_sampled(reports, family, domain, params)
    else:
        table = collector_estimate_full(reports, family, domain, params)
    lines = ["item,estimate"] + [f"{x},{v:.10g}" for x, v in zip(table.items, table.values)]
    text = "\n".join(lines) + "\n"
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privsketch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)
    _add_stats(sub)
    _add_gen(sub)
    _add_report_io(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"privsketch: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner: distance sweeps, summaries and Monte Carlo sessions."""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

from .config import RunConfig, apply_setting, parse_config, validate
from .errors import ConfigError, DegenerateConfiguration, QKDError, UnboundedLimit
from .optimize import intercept_resend_limit, max_secure_distance, optimize_chi, sweep
from .passive_decoy import SessionRecord
from .pipeline import monte_carlo_rate

HEADER = ["l_km", "chi_opt", "bsteps", "rate", "Q_chi", "E_chi", "Q1", "e1", "p_pen", "mode"]


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return format(float(x), ".12g")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pdqkd", description=__doc__)
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--out", help="CSV output path (overrides 'out')")
    p.add_argument("--summary-only", action="store_true", help="skip the sweep and CSV")
    p.add_argument("--record", type=Path, help="write the Monte Carlo session record here")
    p.add_argument("--replay", type=Path, help="rerun estimation on a saved session record")
    p.add_argument("--gnuplot", type=Path, help="also write whitespace-separated l_km rate")
    p.add_argument("--workers", type=int, default=None, help="parallel sweep workers")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg = apply_setting(cfg, *item.split("=", 1))
    if args.out:
        cfg = apply_setting(cfg, "out", args.out)
    return validate(cfg)


def write_csv(path: Path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        for p in points:
            w.writerow([fmt(getattr(p, k)) for k in HEADER])


def write_gnuplot(path: Path, points) -> None:
    with open(path, "w") as fh:
        fh.write(f"# {points[0].mode if points else ''}\n")
        for p in points:
            fh.write(f"{fmt(p.l_km)} {fmt(p.rate)}\n")


def _distance(fn, ctx) -> str:
    try:
        return f"{fn(ctx):.2f}"
    except UnboundedLimit:
        return "inf"
    except DegenerateConfiguration:
        return "0.00"


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    ctx = cfg.context()
    try:
        if not args.summary_only:
            points = sweep(ctx, cfg.grid(), args.workers)
            write_csv(Path(cfg.out), points)
            if args.gnuplot:
                write_gnuplot(args.gnuplot, points)
        print(f"max_secure_distance_km = {_distance(max_secure_distance, ctx)}")
        print(f"intercept_resend_limit_km = {_distance(intercept_resend_limit, ctx)}")
        if cfg.monte_carlo or args.record or args.replay:
            record = None
            if args.replay:
                record = SessionRecord.from_text(args.replay.read_text(), cfg.n_max)
            chi = cfg.chi
            if chi is None:
                chi = optimize_chi(ctx, cfg.mc_l_km)[0]
                chi = 0.5 if math.isnan(chi) else chi
            res = monte_carlo_rate(ctx, chi, cfg.mc_l_km, cfg.n_total, cfg.seed,
                                   cfg.m_subset or None, cfg.delta_scale, record=record)
            if args.record:
                args.record.write_text(res.record.to_text())
            print(f"monte_carlo_rate = {fmt(res.rate)} (l_km = {fmt(cfg.mc_l_km)}, "
                  f"chi = {fmt(chi)}, n_total = {res.record.n_total})")
    except (QKDError, ValueError, FloatingPointError, OSError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line entry point: simulate, replay, analyze, report.

``simulate`` emits a reproducible dataset directory (order tape, feed,
quotes, daily volumes, manifest); ``replay`` turns a tape into a feed
through the incremental engine; ``analyze`` computes the estimator tables;
``report`` renders figures from those tables.  All outputs are
deterministic given identical inputs and seed.

Exit codes: 0 success, 1 input error, 2 internal invariant violation.
The env var AUCTIONLAB_CONFIG may point to a JSON file of flag defaults.

p-value convention throughout the tail tables: small p-values favor the
heavy-tailed candidate.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import engine, flow, ingest, metrics
from .errors import AuctionLabError
from .flow import FlowParams

TABLE_COLUMNS = ["asset", "side", "slice", "statistic", "value", "count"]

ESTIMATOR_TABLES = {
    "ratios": "table1_ratios",
    "monthly": "fig3_monthly",
    "activity": "fig4_activity",
    "fraction": "fig5_fraction",
    "hurst": "fig6_hurst",
    "reduction": "fig7_reduction",
    "response": "fig8_response",
    "conditional": "fig9_conditional",
    "spread": "fig10_spread",
    "ds": "fig11_ds",
    "reversion": "fig12_reversion",
    "weightedmid": "fig13_weightedmid",
    "tails": "fig1_fig2_tails",
}

PRESETS = {
    # 100 assets x 250 days is the standard small panel
    "small": dict(n_assets=100, n_days=250, duration_s=1800.0, base_rate=0.055,
                  profile="convex", accel=1.0, quote_interval_ms=15_000),
    "tiny": dict(n_assets=4, n_days=10, duration_s=600.0, base_rate=0.2,
                 profile="convex", accel=1.0, quote_interval_ms=10_000),
}


def venue_presets() -> dict:
    path = Path(__file__).with_name("venues.json")
    return json.loads(path.read_text())["presets"]


def _config_defaults() -> dict:
    path = os.environ.get("AUCTIONLAB_CONFIG")
    if not path:
        return {}
    return json.loads(Path(path).read_text())


def _cutoff_from_args(args) -> float:
    if args.cutoff_s is not None:
        return float(args.cutoff_s)
    presets = venue_presets()
    if args.venue_preset not in presets:
        raise AuctionLabError(f"unknown venue preset {args.venue_preset!r}; "
                              f"choose from {sorted(presets)}")
    return float(presets[args.venue_preset]["cutoff_s"])


def _flow_params(args, seed=None) -> FlowParams:
    kind, *rest = args.size_dist.split(":")
    coefs = tuple(float(x) for x in rest[0].split(",")) if rest else ()
    defaults = {"lognormal": (3.0, 1.0), "pareto": (2.5, 50.0)}.get(kind, ())
    params = FlowParams(
        duration_s=args.duration_s, base_rate=args.base_rate,
        profile=args.profile, accel=args.accel,
        contrarian_prob=args.contrarian_prob, cancel_prob=args.cancel_prob,
        market_prob=args.market_prob,
        size_dist=(kind,) + (coefs or defaults),
        price_dispersion=args.price_dispersion,
        fundamental=args.fundamental,
        seed=args.seed if seed is None else seed,
        quote_interval_ms=args.quote_interval_ms)
    params.validate()
    return params


# --- simulate ---

def _simulate_asset(job) -> tuple:
    """One asset's tape/feed/quotes frames over all days (worker-safe)."""
    a, params_dict, dates, cutoff_s, throttle_hz, seed = job
    params = FlowParams(**params_dict)
    asset = f"A{a:04d}"
    tapes, feeds, quotes = [], [], []
    auction_ms = int(round(params.duration_s * 1000))
    for d, date in enumerate(dates):
        for side_code, side in enumerate(("open", "close")):
            rng = flow.substream(seed, a, d, 10 + side_code)
            day = flow.gen_day(params, cutoff_s=cutoff_s if side == "close" else 0.0,
                               rng=rng)
            tapes.append(ingest.tape_frame(asset, date, side, day.tape))
            series = flow.day_series(day, asset=asset, date=date, side=side,
                                     auction_time_ms=auction_ms,
                                     throttle_hz=throttle_hz)
            feeds.append(ingest.feed_frame([series]))
        q = flow.gen_quotes(params, rng=flow.substream(seed, a, d, 20))
        quotes.append(pd.DataFrame({
            "asset": asset, "date": date, "time_ms": q.time_ms,
            "bid_ticks": q.bid, "ask_ticks": q.ask,
            "bid_size": q.bid_size, "ask_size": q.ask_size}))
    return (pd.concat(tapes, ignore_index=True),
            pd.concat(feeds, ignore_index=True),
            pd.concat(quotes, ignore_index=True))


def cmd_simulate(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    params = _flow_params(args)
    cutoff_s = _cutoff_from_args(args)
    dates = [d.strftime("%Y-%m-%d")
             for d in pd.bdate_range(args.start_date, periods=args.days)]
    jobs = [(a, dataclasses.asdict(params), dates, cutoff_s, args.throttle_hz,
             args.seed) for a in range(args.assets)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_asset, jobs, chunksize=1))
    else:
        results = [_simulate_asset(j) for j in jobs]
    tape = pd.concat([r[0] for r in results], ignore_index=True)
    feed = pd.concat([r[1] for r in results], ignore_index=True)
    quotes = pd.concat([r[2] for r in results], ignore_index=True)
    # nullable ints render as empty fields, matching the schemas
    tape["price_ticks"] = tape["price_ticks"].astype("Int64")
    tape["size"] = tape["size"].astype("Int64")
    feed["indicative_price_ticks"] = feed["indicative_price_ticks"].astype("Int64")
    tape.to_csv(out / "tape.csv", index=False)
    feed.to_csv(out / "feed.csv", index=False)
    quotes.to_csv(out / "quotes.csv", index=False)
    records = flow.gen_daily_volumes(args.assets, args.days, seed=args.seed,
                                     start_date=args.start_date)
    ingest.write_daily_volumes(records, out / "daily_volumes.csv")
    manifest = {
        "version": 1,
        "seed": args.seed,
        "n_assets": args.assets,
        "n_days": args.days,
        "start_date": args.start_date,
        "auction_time_ms": int(round(params.duration_s * 1000)),
        "reference_price": params.fundamental,
        "cutoff_s_close": cutoff_s,
        "throttle_hz": args.throttle_hz,
        "flow": dataclasses.asdict(params),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    print(f"wrote {args.assets * args.days * 2} series under {out}", file=sys.stderr)
    return 0


# --- replay ---

def cmd_replay(args) -> int:
    tape_path = Path(args.input)
    manifest = {}
    mpath = tape_path.parent / "manifest.json"
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
    if args.cutoff_s is None and args.venue_preset is None \
            and "cutoff_s_close" in manifest:
        cutoff_s = float(manifest["cutoff_s_close"])
    else:
        if args.venue_preset is None:
            args.venue_preset = "ARCA-close"
        cutoff_s = _cutoff_from_args(args)
    groups = ingest.parse_tape(tape_path)
    ref = args.reference_price or manifest.get("reference_price")
    auction_ms = manifest.get("auction_time_ms")
    if args.auction_time_s is not None:
        auction_ms = int(round(args.auction_time_s * 1000))
    series_list = []
    rejected = 0
    for asset, date, side, tape, _ids in groups:
        r = int(ref) if ref else int(np.median(tape.price[tape.price > 0])) \
            if (tape.price > 0).any() else 1
        at = auction_ms or (int((int(tape.time_ms[-1]) // 60_000 + 1) * 60_000)
                            if len(tape) else 60_000)
        rep = engine.replay_day(tape, r, at, cutoff_s=cutoff_s if side == "close" else 0.0)
        rej = rep.status >= engine.REJ_WORSEN
        if rej.any():
            rejected += int(rej.sum())
            for code, label in engine.REJECT_LABELS.items():
                k = int((rep.status == code).sum())
                if k:
                    print(f"{asset}/{date}/{side}: {k} events rejected "
                          f"({label})", file=sys.stderr)
        series_list.append(flow.day_series(rep, asset=asset, date=date, side=side,
                                           auction_time_ms=at,
                                           throttle_hz=args.throttle_hz))
    ingest.write_feed(series_list, args.output)
    print(f"replayed {len(groups)} series ({rejected} rejections) -> {args.output}",
          file=sys.stderr)
    return 0


# --- analyze ---

def _split_spread_tables(spread_df: pd.DataFrame) -> dict:
    stat = spread_df["statistic"]
    return {
        "fig10_spread": spread_df[stat.str.startswith(("time_", "delta_m"))],
        "fig11_ds": spread_df[stat.str.startswith("delta_s")],
        "fig12_reversion": spread_df[stat.str.startswith(("reversion", "overshoot"))],
        "fig13_weightedmid": spread_df[stat.str.startswith("wmid")],
    }


def _per_asset_tables(series_chunk, want, slice_s, min_updates) -> dict:
    """Per-asset estimator tables for one chunk of series (worker-safe)."""
    out = {}
    if "activity" in want:
        out["fig4_activity"] = metrics.activity_curve(series_chunk, width_s=slice_s)
    if "fraction" in want:
        withv = [s for s in series_chunk if s.final_volume]
        out["fig5_fraction"] = metrics.matched_fraction_curve(withv, width_s=slice_s)
        try:
            out["fig5_fraction_shapes"] = metrics.fraction_curve_shapes(
                withv, width_s=slice_s).merge(
                metrics.half_volume_time(withv)[
                    ["asset", "side", "value", "count", "n_unreached"]].rename(
                    columns={"value": "half_volume_median_min",
                             "count": "n_days_reached"}),
                on=["asset", "side"], how="left")
        except AuctionLabError:
            out["fig5_fraction_shapes"] = pd.DataFrame()
    if "hurst" in want:
        out["fig6_hurst"] = metrics.hurst_table(series_chunk,
                                                min_price_updates=min_updates,
                                                width_s=slice_s)
    if "reduction" in want:
        slices, overall = metrics.imbalance_reduction_prob(series_chunk, width_s=slice_s)
        out["fig7_reduction"] = pd.concat([slices, overall], ignore_index=True)
    if "response" in want or "conditional" in want:
        resp = metrics.response_curves(series_chunk, width_s=slice_s)
        out["fig8_response"] = resp[resp.condition == "unconditional"]
        out["fig9_conditional"] = resp[resp.condition != "unconditional"]
    if want & {"spread", "ds", "reversion", "weightedmid"}:
        try:
            spread = metrics.spread_metrics(series_chunk, width_s=slice_s)
        except AuctionLabError:
            spread = pd.DataFrame(columns=TABLE_COLUMNS)
        out.update(_split_spread_tables(spread))
        try:
            out["fig10_spread_rcdf"] = metrics.delta_m_rcdf(series_chunk)
        except AuctionLabError:
            out["fig10_spread_rcdf"] = pd.DataFrame()
    return out


def _analyze_chunk(job):
    return _per_asset_tables(*job)


def cmd_analyze(args) -> int:
    src = Path(args.input)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    want = set(ESTIMATOR_TABLES) if args.estimator == "all" else {args.estimator}
    unknown = want - set(ESTIMATOR_TABLES)
    if unknown:
        raise AuctionLabError(f"unknown estimator(s) {sorted(unknown)}")
    warnings = 0
    manifest = {}
    if (src / "manifest.json").exists():
        manifest = json.loads((src / "manifest.json").read_text())
    tables: dict = {}

    if want & {"ratios", "monthly"}:
        vol_path = src / "daily_volumes.csv"
        records = ingest.parse_daily_volumes(vol_path) if vol_path.exists() else []
        if "ratios" in want:
            try:
                tables["table1_ratios"] = metrics.ratio_summary(records)
            except AuctionLabError as exc:
                warnings += 1
                print(f"warning: ratios skipped: {exc}", file=sys.stderr)
                tables["table1_ratios"] = pd.DataFrame()
        if "monthly" in want:
            tables["fig3_monthly"] = metrics.monthly_median_ratio(
                records, min_assets=args.min_assets_month)

    feed_estimators = want & {"activity", "fraction", "hurst", "reduction",
                              "response", "conditional", "spread", "ds",
                              "reversion", "weightedmid"}
    if feed_estimators:
        feed_path = src / "feed.csv"
        series_list = []
        if feed_path.exists():
            series_list = ingest.parse_feed(
                feed_path, auction_time_ms=manifest.get("auction_time_ms"))
        else:
            warnings += 1
            print("warning: feed.csv missing; feed estimators emit empty tables",
                  file=sys.stderr)
        if want & {"spread", "ds", "reversion", "weightedmid"}:
            qpath = src / "quotes.csv"
            if qpath.exists():
                quotes = ingest.parse_quotes(qpath)
                series_list = [
                    ingest.align_quotes(s, quotes[(s.asset, s.date)])
                    if (s.asset, s.date) in quotes else s
                    for s in series_list]
            else:
                warnings += 1
                print("warning: quotes.csv missing; spread tables will be empty",
                      file=sys.stderr)
        by_asset: dict = {}
        for s in series_list:
            by_asset.setdefault(s.asset, []).append(s)
        chunks = [by_asset[a] for a in sorted(by_asset)]
        jobs = [(c, feed_estimators, args.slice_seconds, args.min_updates)
                for c in chunks]
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                parts = list(pool.map(_analyze_chunk, jobs,
                                      chunksize=max(1, len(jobs) // (4 * args.jobs))))
        else:
            parts = [_analyze_chunk(j) for j in jobs]
        for part in parts:
            for name, df in part.items():
                tables.setdefault(name, []).append(df)
        for name in list(tables):
            if isinstance(tables[name], list):
                frames = [f for f in tables[name] if len(f)]
                tables[name] = (pd.concat(frames, ignore_index=True)
                                if frames else pd.DataFrame())

    if "tails" in want:
        tape_path = src / "tape.csv"
        if tape_path.exists():
            ref = manifest.get("reference_price", 10_000)
            auction_ms = manifest.get("auction_time_ms")
            groups = []
            for asset, date, side, tape, _ids in ingest.parse_tape(tape_path):
                at = auction_ms or (int(tape.time_ms[-1]) + 1 if len(tape) else 60_000)
                cutoff = manifest.get("cutoff_s_close", 0.0) if side == "close" else 0.0
                rep = engine.replay_day(tape, int(ref), int(at), cutoff_s=cutoff)
                if rep.final_price is None:
                    continue
                _ids2, sizes = rep.fills()
                groups.append((asset, date, side,
                               sizes.astype(float) * float(rep.final_price)))
            tables["fig1_fig2_tails"] = metrics.tail_tests(
                groups, min_orders=args.min_orders)
        else:
            warnings += 1
            print("warning: tape.csv missing; tail table empty", file=sys.stderr)
            tables["fig1_fig2_tails"] = pd.DataFrame()

    for name, df in sorted(tables.items()):
        if df is None or (isinstance(df, pd.DataFrame) and df.empty):
            df = pd.DataFrame(columns=TABLE_COLUMNS)
        df.to_csv(out / f"{name}.csv", index=False)
    print(f"wrote {len(tables)} tables to {out} ({warnings} warnings)",
          file=sys.stderr)
    return 0


# --- report ---

def cmd_report(args) -> int:
    from . import report

    made = report.render_all(Path(args.input), Path(args.output or args.input))
    print(f"rendered {len(made)} figures", file=sys.stderr)
    return 0


# --- argument plumbing ---

def _add_common_sim_flags(p, defaults):
    p.add_argument("--seed", type=int, default=defaults.get("seed", 0))
    p.add_argument("--duration-s", type=float, default=defaults.get("duration_s", 1800.0))
    p.add_argument("--base-rate", type=float, default=defaults.get("base_rate", 0.08))
    p.add_argument("--profile", default=defaults.get("profile", "constant"),
                   choices=["constant", "linear", "convex"])
    p.add_argument("--accel", type=float, default=defaults.get("accel", 0.0))
    p.add_argument("--contrarian-prob", type=float,
                   default=defaults.get("contrarian_prob", 0.55))
    p.add_argument("--cancel-prob", type=float, default=defaults.get("cancel_prob", 0.1))
    p.add_argument("--market-prob", type=float, default=defaults.get("market_prob", 0.05))
    p.add_argument("--size-dist", default=defaults.get("size_dist", "lognormal:3,1"),
                   help="lognormal:MU,SIGMA or pareto:ALPHA,XMIN")
    p.add_argument("--price-dispersion", type=float,
                   default=defaults.get("price_dispersion", 3.0))
    p.add_argument("--fundamental", type=int, default=defaults.get("fundamental", 10_000))
    p.add_argument("--quote-interval-ms", type=int,
                   default=defaults.get("quote_interval_ms", 10_000))


def build_parser() -> argparse.ArgumentParser:
    defaults = _config_defaults()
    parser = argparse.ArgumentParser(
        prog="auctionlab",
        description=("Call-auction simulation and pre-auction feed analytics. "
                     "Tail tables use the convention that small p-values favor "
                     "the heavy-tailed model."))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset directory")
    p.add_argument("--output", required=True)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--assets", type=int, default=defaults.get("assets", 10))
    p.add_argument("--days", type=int, default=defaults.get("days", 20))
    p.add_argument("--start-date", default=defaults.get("start_date", "2021-01-04"))
    p.add_argument("--throttle-hz", type=float, default=defaults.get("throttle_hz"))
    p.add_argument("--venue-preset", default=defaults.get("venue_preset", "ARCA-close"))
    p.add_argument("--cutoff-s", type=float, default=None)
    p.add_argument("--jobs", type=int, default=defaults.get("jobs", 1))
    _add_common_sim_flags(p, defaults)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="replay an order tape into a feed CSV")
    p.add_argument("--input", required=True, help="tape.csv path")
    p.add_argument("--output", required=True, help="feed.csv path")
    p.add_argument("--reference-price", type=int, default=None)
    p.add_argument("--auction-time-s", type=float, default=None)
    p.add_argument("--venue-preset", default=defaults.get("venue_preset"))
    p.add_argument("--cutoff-s", type=float, default=None)
    p.add_argument("--throttle-hz", type=float, default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("analyze", help="compute estimator tables from a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--estimator", default="all",
                   choices=["all"] + sorted(ESTIMATOR_TABLES))
    p.add_argument("--jobs", type=int, default=defaults.get("jobs", 1))
    p.add_argument("--slice-seconds", type=float,
                   default=defaults.get("slice_seconds", 60.0))
    p.add_argument("--min-updates", type=int, default=defaults.get("min_updates", 50))
    p.add_argument("--min-orders", type=int, default=defaults.get("min_orders", 100))
    p.add_argument("--min-assets-month", type=int,
                   default=defaults.get("min_assets_month", 100))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render figures from analysis tables")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "preset", None):
        for key, val in PRESETS[args.preset].items():
            dest = {"n_assets": "assets", "n_days": "days"}.get(key, key)
            setattr(args, dest, val)
    try:
        return args.func(args)
    except AuctionLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

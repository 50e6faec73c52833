"""CSV schemas, per-day series assembly, quote alignment, minute slicing.

Three delimited formats are understood, all UTF-8 with headers and ISO-8601
dates:

* feed:    asset,date,side,time_ms,indicative_price_ticks,matched_volume,imbalance
  (``indicative_price_ticks`` empty when nothing crosses)
* quotes:  asset,date,time_ms,bid_ticks,ask_ticks,bid_size,ask_size
* volumes: asset,date,exchange,v_open,v_close,v_total,p_open,p_close,prev_close

plus the order tape consumed by the replay engine:

* tape:    asset,date,side,time_ms,action,order_id,buy_sell,kind,price_ticks,size

Times are integer milliseconds since local session start; the auction time
is a per-series field supplied by the caller (configs, manifests), not a
constant.  Rows whose indicative price is absent are retained with an empty
price field so imbalance statistics stay computable.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .engine import TapeDay
from .errors import NonMonotoneTime, SchemaError

FEED_COLUMNS = ["asset", "date", "side", "time_ms", "indicative_price_ticks",
                "matched_volume", "imbalance"]
TAPE_COLUMNS = ["asset", "date", "side", "time_ms", "action", "order_id",
                "buy_sell", "kind", "price_ticks", "size"]
QUOTE_COLUMNS = ["asset", "date", "time_ms", "bid_ticks", "ask_ticks",
                 "bid_size", "ask_size"]
VOLUME_COLUMNS = ["asset", "date", "exchange", "v_open", "v_close", "v_total",
                  "p_open", "p_close", "prev_close"]

EXCHANGES = ("ARCA", "NASDAQ", "NYSE")


@dataclass(frozen=True)
class QuoteSnapshot:
    """Best bid/ask of the regular book at one instant."""

    time_ms: int
    bid: int
    ask: int
    bid_size: int
    ask_size: int

    def __post_init__(self):
        if self.ask <= self.bid:
            raise ValueError("ask must exceed bid")
        if self.bid_size <= 0 or self.ask_size <= 0:
            raise ValueError("quote sizes must be positive")


class QuoteTable:
    """Array-backed, time-ordered sequence of quote snapshots."""

    def __init__(self, time_ms, bid, ask, bid_size, ask_size):
        self.time_ms = np.asarray(time_ms, dtype=np.int64)
        self.bid = np.asarray(bid, dtype=np.int64)
        self.ask = np.asarray(ask, dtype=np.int64)
        self.bid_size = np.asarray(bid_size, dtype=np.int64)
        self.ask_size = np.asarray(ask_size, dtype=np.int64)
        if not (np.diff(self.time_ms) > 0).all():
            raise ValueError("quote times must be strictly increasing")
        if (self.ask <= self.bid).any():
            raise ValueError("ask must exceed bid")
        if (self.bid_size <= 0).any() or (self.ask_size <= 0).any():
            raise ValueError("quote sizes must be positive")

    def __len__(self) -> int:
        return self.time_ms.shape[0]

    def __getitem__(self, i: int) -> QuoteSnapshot:
        return QuoteSnapshot(int(self.time_ms[i]), int(self.bid[i]),
                             int(self.ask[i]), int(self.bid_size[i]),
                             int(self.ask_size[i]))

    def snapshots(self) -> list:
        return [self[i] for i in range(len(self))]


@dataclass(frozen=True)
class DailyVolumeRecord:
    """One asset-day row of auction and total volumes."""

    asset: str
    date: str
    exchange: str
    v_open: int
    v_close: int
    v_total: int
    p_open: int
    p_close: int
    prev_close: int

    def __post_init__(self):
        if self.exchange not in EXCHANGES:
            raise ValueError(f"unknown exchange {self.exchange!r}")
        if min(self.v_open, self.v_close, self.v_total) < 0:
            raise ValueError("volumes must be non-negative")
        if self.v_total < self.v_open + self.v_close:
            raise ValueError("total volume below the sum of auction volumes")


@dataclass(frozen=True)
class DayAuctionSeries:
    """All indicative updates of one (asset, date, auction side).

    ``price`` is float ticks with NaN where nothing crossed.  Quote
    annotations (``bid``/``ask``/...) appear after :func:`align_quotes`;
    NaN marks updates before the first quote.
    """

    asset: str
    date: str
    side: str
    times: np.ndarray
    price: np.ndarray
    matched: np.ndarray
    imbalance: np.ndarray
    auction_time_ms: int
    final_price: Optional[int] = None
    final_volume: Optional[int] = None
    bid: Optional[np.ndarray] = None
    ask: Optional[np.ndarray] = None
    bid_size: Optional[np.ndarray] = None
    ask_size: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.times.shape[0]
        if not (self.price.shape[0] == self.matched.shape[0]
                == self.imbalance.shape[0] == n):
            raise ValueError("update arrays must share one length")
        if n and not (np.diff(self.times) > 0).all():
            raise NonMonotoneTime(f"{self.asset}/{self.date}/{self.side}")
        if n and self.times[-1] >= self.auction_time_ms:
            raise ValueError("updates must precede the auction time")
        if (self.matched < 0).any():
            raise ValueError("matched volume must be non-negative")
        if self.final_volume is not None and self.final_volume < 0:
            raise ValueError("final volume must be non-negative")

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def n_price_updates(self) -> int:
        return int(np.isfinite(self.price).sum())

    @property
    def has_quotes(self) -> bool:
        return self.bid is not None

    def key(self) -> tuple:
        return (self.asset, self.date, self.side)


def _require_columns(df: pd.DataFrame, columns, path) -> None:
    if list(df.columns) != columns:
        raise SchemaError(f"{path}: expected header {columns}, got {list(df.columns)}")


def _bad_lines(mask: np.ndarray, limit: int = 5) -> str:
    lines = (np.flatnonzero(mask) + 2)[:limit]  # +2: header and 1-based lines
    return ", ".join(str(int(x)) for x in lines)


def parse_feed(path, auction_time_ms=None, finals: str = "last") -> list:
    """Parse a feed CSV into per-(asset, date, side) series.

    ``auction_time_ms`` is a scalar, a mapping keyed by (asset, date, side),
    or None, in which case the auction time defaults to the last update time
    rounded up to the next whole minute.  ``finals="last"`` derives the
    final auction price/volume from the last update (the book no longer
    changes between it and the auction); ``finals="none"`` leaves them
    unset.
    """
    try:
        df = pd.read_csv(
            path,
            dtype={"asset": str, "date": str, "side": str, "time_ms": np.int64,
                   "indicative_price_ticks": np.float64,
                   "matched_volume": np.int64, "imbalance": np.int64},
        )
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed numeric field ({exc})") from exc
    _require_columns(df, FEED_COLUMNS, path)
    bad = ~df["side"].isin(("open", "close")).to_numpy()
    bad |= df["time_ms"].to_numpy() < 0
    bad |= df["matched_volume"].to_numpy() < 0
    price = df["indicative_price_ticks"].to_numpy()
    with np.errstate(invalid="ignore"):
        bad |= np.isfinite(price) & ((price <= 0) | (price != np.floor(price)))
    if bad.any():
        raise SchemaError(f"{path}: malformed rows at lines {_bad_lines(bad)}")
    return _series_from_frame(df, path, auction_time_ms, finals)


def _group_codes(df, columns) -> tuple[np.ndarray, int]:
    """Dense group ids (in order of first appearance) over several key columns."""
    combo = np.zeros(len(df), dtype=np.int64)
    for col in columns:
        codes, values = pd.factorize(df[col], sort=False)
        combo = combo * (len(values) + 1) + codes
    codes, _ = pd.factorize(combo, sort=False)
    return codes, int(codes.max()) + 1 if len(codes) else 0


def _group_rows(codes: np.ndarray, n_groups: int):
    """Yield (group id, original row indices) without rescanning per group.

    Row indices stay in file order within each group (stable sort).
    """
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    starts = np.flatnonzero(np.diff(sorted_codes, prepend=-1))
    ends = np.append(starts[1:], codes.shape[0])
    for g in range(n_groups):
        yield g, order[starts[g]:ends[g]]


def _series_from_frame(df, path, auction_time_ms, finals) -> list:
    times = df["time_ms"].to_numpy()
    price = df["indicative_price_ticks"].to_numpy()
    matched = df["matched_volume"].to_numpy()
    imbalance = df["imbalance"].to_numpy()
    codes, n_groups = _group_codes(df, ["asset", "date", "side"])
    out = []
    for g, idx in _group_rows(codes, n_groups):
        first = int(idx[0])
        asset = str(df["asset"].iat[first])
        date = str(df["date"].iat[first])
        side = str(df["side"].iat[first])
        t = times[idx]
        drop = np.flatnonzero(np.diff(t) <= 0)
        if drop.size:
            line = int(idx[drop[0] + 1]) + 2
            raise NonMonotoneTime(
                f"{path}: non-increasing time at line {line} "
                f"({asset}/{date}/{side})")
        if auction_time_ms is None:
            at = int((int(t[-1]) // 60_000 + 1) * 60_000) if t.size else 60_000
        elif isinstance(auction_time_ms, dict):
            at = int(auction_time_ms[(asset, date, side)])
        else:
            at = int(auction_time_ms)
        fp = fv = None
        if finals == "last" and t.size:
            last = price[idx[-1]]
            fp = int(last) if np.isfinite(last) else None
            fv = int(matched[idx[-1]])
        out.append(DayAuctionSeries(
            asset=asset, date=date, side=side,
            times=t, price=price[idx], matched=matched[idx],
            imbalance=imbalance[idx], auction_time_ms=at,
            final_price=fp, final_volume=fv))
    return out


def feed_frame(series_list) -> pd.DataFrame:
    """Long feed table mirroring IndicativeUpdate rows."""
    parts = []
    for s in series_list:
        parts.append(pd.DataFrame({
            "asset": s.asset, "date": s.date, "side": s.side,
            "time_ms": s.times,
            "indicative_price_ticks": s.price,
            "matched_volume": s.matched, "imbalance": s.imbalance,
        }))
    if not parts:
        return pd.DataFrame(columns=FEED_COLUMNS)
    return pd.concat(parts, ignore_index=True)


def write_feed(series_list, path) -> None:
    df = feed_frame(series_list)
    # nullable ints render absent prices as empty fields
    df["indicative_price_ticks"] = df["indicative_price_ticks"].astype("Int64")
    df.to_csv(path, index=False)


def parse_quotes(path) -> dict:
    """Quote CSV keyed by (asset, date)."""
    try:
        df = pd.read_csv(path, dtype={"asset": str, "date": str, "time_ms": np.int64,
                                      "bid_ticks": np.int64, "ask_ticks": np.int64,
                                      "bid_size": np.int64, "ask_size": np.int64})
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed numeric field ({exc})") from exc
    _require_columns(df, QUOTE_COLUMNS, path)
    bad = (df["ask_ticks"].to_numpy() <= df["bid_ticks"].to_numpy())
    bad |= (df["bid_size"].to_numpy() <= 0) | (df["ask_size"].to_numpy() <= 0)
    if bad.any():
        raise SchemaError(f"{path}: malformed quote rows at lines {_bad_lines(bad)}")
    out = {}
    codes, n_groups = _group_codes(df, ["asset", "date"])
    for g, idx in _group_rows(codes, n_groups):
        asset = str(df["asset"].iat[int(idx[0])])
        date = str(df["date"].iat[int(idx[0])])
        try:
            out[(asset, date)] = QuoteTable(
                df["time_ms"].to_numpy()[idx], df["bid_ticks"].to_numpy()[idx],
                df["ask_ticks"].to_numpy()[idx], df["bid_size"].to_numpy()[idx],
                df["ask_size"].to_numpy()[idx])
        except ValueError as exc:
            raise SchemaError(f"{path}: {asset}/{date}: {exc}") from exc
    return out


def quote_frame(quotes: dict) -> pd.DataFrame:
    parts = []
    for (asset, date), q in quotes.items():
        parts.append(pd.DataFrame({
            "asset": asset, "date": date, "time_ms": q.time_ms,
            "bid_ticks": q.bid, "ask_ticks": q.ask,
            "bid_size": q.bid_size, "ask_size": q.ask_size}))
    if not parts:
        return pd.DataFrame(columns=QUOTE_COLUMNS)
    return pd.concat(parts, ignore_index=True)


def write_quotes(quotes: dict, path) -> None:
    quote_frame(quotes).to_csv(path, index=False)


def parse_tape(path) -> list:
    """Tape CSV as (asset, date, side, TapeDay, original order-id strings).

    Order ids are densified in order of first appearance, so ids double as
    arrival ranks for fill allocation provided every cancel follows its
    submit (malformed tapes surface as unknown-id rejects at replay).
    """
    try:
        df = pd.read_csv(path, dtype={"asset": str, "date": str, "side": str,
                                      "time_ms": np.int64, "action": str,
                                      "order_id": str, "buy_sell": str,
                                      "kind": str, "price_ticks": np.float64,
                                      "size": np.float64})
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed numeric field ({exc})") from exc
    _require_columns(df, TAPE_COLUMNS, path)
    bad = ~df["action"].isin(("submit", "cancel")).to_numpy()
    bad |= ~df["side"].isin(("open", "close")).to_numpy()
    bad |= ~df["buy_sell"].isin(("buy", "sell")).to_numpy()
    bad |= ~df["kind"].isin(("limit", "market")).to_numpy()
    submit = (df["action"] == "submit").to_numpy()
    limit = (df["kind"] == "limit").to_numpy()
    price = df["price_ticks"].to_numpy()
    size = df["size"].to_numpy()
    with np.errstate(invalid="ignore"):
        bad |= submit & limit & ~(np.isfinite(price) & (price > 0))
        bad |= submit & ~limit & np.isfinite(price)
        bad |= submit & ~(np.isfinite(size) & (size > 0))
    if bad.any():
        raise SchemaError(f"{path}: malformed tape rows at lines {_bad_lines(bad)}")
    out = []
    codes, n_groups = _group_codes(df, ["asset", "date", "side"])
    action = (df["action"] == "cancel").to_numpy().astype(np.int8)
    bs = (df["buy_sell"] == "sell").to_numpy().astype(np.int8)
    kind = (df["kind"] == "market").to_numpy().astype(np.int8)
    times = df["time_ms"].to_numpy()
    oid_str = df["order_id"].to_numpy()
    for g, idx in _group_rows(codes, n_groups):
        first = int(idx[0])
        asset = str(df["asset"].iat[first])
        date = str(df["date"].iat[first])
        side = str(df["side"].iat[first])
        t = times[idx]
        drop = np.flatnonzero(np.diff(t) <= 0)
        if drop.size:
            line = int(idx[drop[0] + 1]) + 2
            raise NonMonotoneTime(f"{path}: non-increasing time at line {line}")
        dense, id_strings = pd.factorize(oid_str[idx], sort=False)
        p = np.where(np.isfinite(price[idx]), price[idx], -1).astype(np.int64)
        p[~submit[idx] | ~limit[idx]] = -1
        tape = TapeDay(
            time_ms=t.astype(np.int64), action=action[idx],
            order_id=dense.astype(np.int64), side=bs[idx], kind=kind[idx],
            price=p, size=np.where(np.isfinite(size[idx]), size[idx], 0).astype(np.int64))
        out.append((asset, date, side, tape, list(id_strings)))
    return out


def tape_frame(asset, date, side, tape: TapeDay) -> pd.DataFrame:
    price_col = np.where(tape.price > 0, tape.price, np.nan)
    return pd.DataFrame({
        "asset": asset, "date": date, "side": side,
        "time_ms": tape.time_ms,
        "action": np.where(tape.action == 1, "cancel", "submit"),
        "order_id": tape.order_id,
        "buy_sell": np.where(tape.side == 1, "sell", "buy"),
        "kind": np.where(tape.kind == 1, "market", "limit"),
        "price_ticks": price_col,
        "size": np.where(tape.action == 0, tape.size, np.nan),
    })


def parse_daily_volumes(path) -> list:
    try:
        df = pd.read_csv(path, dtype={"asset": str, "date": str, "exchange": str,
                                      "v_open": np.int64, "v_close": np.int64,
                                      "v_total": np.int64, "p_open": np.int64,
                                      "p_close": np.int64, "prev_close": np.int64})
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: malformed numeric field ({exc})") from exc
    _require_columns(df, VOLUME_COLUMNS, path)
    bad = ~df["exchange"].isin(EXCHANGES).to_numpy()
    bad |= (df[["v_open", "v_close", "v_total"]].to_numpy() < 0).any(axis=1)
    bad |= (df["v_total"] < df["v_open"] + df["v_close"]).to_numpy()
    if bad.any():
        raise SchemaError(f"{path}: malformed volume rows at lines {_bad_lines(bad)}")
    return [DailyVolumeRecord(**row) for row in df.to_dict("records")]


def volume_frame(records) -> pd.DataFrame:
    if not records:
        return pd.DataFrame(columns=VOLUME_COLUMNS)
    return pd.DataFrame([dataclasses.asdict(r) for r in records])[VOLUME_COLUMNS]


def write_daily_volumes(records, path) -> None:
    volume_frame(records).to_csv(path, index=False)


def align_quotes(series: DayAuctionSeries, quotes: QuoteTable) -> DayAuctionSeries:
    """Annotate each update with the latest quote at or before it (as-of join).

    Updates before the first quote carry NaN annotations and are excluded
    from the quote-relative estimators downstream.
    """
    idx = np.searchsorted(quotes.time_ms, series.times, side="right") - 1
    have = idx >= 0
    j = np.maximum(idx, 0)

    def pick(a):
        v = a[j].astype(np.float64)
        v[~have] = np.nan
        return v

    return dataclasses.replace(
        series, bid=pick(quotes.bid), ask=pick(quotes.ask),
        bid_size=pick(quotes.bid_size), ask_size=pick(quotes.ask_size))


def slice_minutes(series: DayAuctionSeries, direction: str = "forward",
                  width_s: float = 60.0) -> np.ndarray:
    """Per-update slice index on the 1-minute (or ``width_s``) grid.

    Forward slice k covers [k, k+1) minutes from session start; backward
    slice tau covers updates whose time-to-auction lies in [tau, tau+1)
    minutes.  Together the slices partition the updates.
    """
    w = int(round(width_s * 1000))
    if direction == "forward":
        return (series.times // w).astype(np.int64)
    if direction == "backward":
        return ((series.auction_time_ms - series.times) // w).astype(np.int64)
    raise ValueError(f"bad direction {direction!r}")

"""Reproducible synthetic pre-auction flow, quotes, and daily-volume panels.

Event times come from an inhomogeneous Poisson process (thinning against the
peak rate); each event is a cancel of a uniformly chosen resident order with
probability ``cancel_prob``, otherwise a new order whose side opposes the
sign of the current clearing imbalance with probability ``contrarian_prob``
(the quantity a trader actually sees on the feed).  Sizes are i.i.d.
heavy-tailed or lognormal; limit prices scatter around the fundamental with
Gaussian tick dispersion.  Identical seeds give byte-identical output;
distinct (asset, day) streams draw from split sub-seeds.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import engine
from .engine import TapeDay
from .errors import InvalidParams
from .ingest import DailyVolumeRecord, DayAuctionSeries, QuoteTable

_PROFILES = ("constant", "linear", "convex")

# stream tags feeding the sub-seed mix (seed, asset, day, tag)
_TAG_TAPE = 0
_TAG_QUOTES = 1
_TAG_VOLUMES = 2

# defaults for the synthetic daily-volume panel: per (exchange, side),
# mean and spread (two standard deviations) of log10 of the volume ratio
RATIO_PANEL_DEFAULTS = {
    ("ARCA", "open"): (-1.72, 1.24),
    ("ARCA", "close"): (-1.78, 1.47),
    ("NASDAQ", "open"): (-1.51, 0.79),
    ("NASDAQ", "close"): (-1.15, 0.82),
    ("NYSE", "open"): (-1.61, 0.90),
    ("NYSE", "close"): (-0.91, 0.60),
}


@dataclass(frozen=True)
class FlowParams:
    """Knobs for one synthetic (asset, day, side) stream."""

    duration_s: float = 1800.0
    base_rate: float = 0.08          # events per second at session start
    profile: str = "constant"        # constant | linear | convex
    accel: float = 0.0               # rate(t) = base * (1 + accel * (t/T)^k)
    contrarian_prob: float = 0.5
    cancel_prob: float = 0.2
    market_prob: float = 0.0
    size_dist: tuple = ("lognormal", 3.0, 1.0)   # or ("pareto", alpha, xmin)
    price_dispersion: float = 3.0    # ticks std around the fundamental
    fundamental: int = 10_000        # ticks; doubles as the reference price
    seed: int = 0
    late_cancel_burst: float = 0.0   # extra cancel prob in the last minute
    quote_interval_ms: int = 10_000
    quote_walk_sigma: float = 2.0    # ticks per quote step
    quote_half_spread: int = 1       # ticks
    quote_size_mu: float = 4.0
    quote_size_sigma: float = 0.8

    def validate(self) -> None:
        if self.duration_s <= 0 or self.base_rate <= 0:
            raise InvalidParams("duration and base rate must be positive")
        if self.profile not in _PROFILES:
            raise InvalidParams(f"unknown rate profile {self.profile!r}")
        if self.accel < 0:
            raise InvalidParams("acceleration coefficient must be >= 0")
        if not 0.0 <= self.contrarian_prob <= 1.0:
            raise InvalidParams("contrarian_prob must lie in [0, 1]")
        if not 0.0 <= self.cancel_prob < 1.0:
            raise InvalidParams("cancel_prob must lie in [0, 1)")
        if not 0.0 <= self.market_prob < 1.0:
            raise InvalidParams("market_prob must lie in [0, 1)")
        if not 0.0 <= self.late_cancel_burst < 1.0:
            raise InvalidParams("late_cancel_burst must lie in [0, 1)")
        if self.price_dispersion < 0:
            raise InvalidParams("price dispersion must be >= 0")
        if self.fundamental <= 0:
            raise InvalidParams("fundamental must be positive ticks")
        kind = self.size_dist[0]
        if kind == "lognormal":
            if len(self.size_dist) != 3 or self.size_dist[2] < 0:
                raise InvalidParams("lognormal sizes need (mu, sigma>=0)")
        elif kind == "pareto":
            if len(self.size_dist) != 3 or self.size_dist[1] <= 1 or self.size_dist[2] <= 0:
                raise InvalidParams("pareto sizes need alpha > 1 and xmin > 0")
        else:
            raise InvalidParams(f"unknown size distribution {kind!r}")
        if self.quote_interval_ms <= 0 or self.quote_half_spread < 1:
            raise InvalidParams("quote grid and half-spread must be positive")
        if self.quote_walk_sigma < 0:
            raise InvalidParams("quote walk sigma must be >= 0")


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic split stream for (seed, asset index, day index, tag)."""
    return np.random.default_rng(np.random.SeedSequence((int(seed),) + tuple(int(k) for k in key)))


def _rate_factor(params: FlowParams, x: np.ndarray) -> np.ndarray:
    if params.profile == "constant":
        return np.ones_like(x)
    if params.profile == "linear":
        return 1.0 + params.accel * x
    return 1.0 + params.accel * x * x


def gen_event_times(params: FlowParams, rng: np.random.Generator) -> np.ndarray:
    """Strictly increasing event times (ms) via Poisson thinning."""
    peak = params.base_rate * float(_rate_factor(params, np.array(1.0)))
    n = rng.poisson(peak * params.duration_s)
    t = np.sort(rng.uniform(0.0, params.duration_s, n))
    lam = params.base_rate * _rate_factor(params, t / params.duration_s)
    keep = rng.uniform(0.0, peak, n) < lam
    ms = np.floor(t[keep] * 1000.0).astype(np.int64)
    engine.strictly_increasing_ms(ms)
    close = int(round(params.duration_s * 1000))
    return ms[ms < close]


def _draw_sizes(params: FlowParams, rng: np.random.Generator, n: int) -> np.ndarray:
    kind = params.size_dist[0]
    if kind == "lognormal":
        raw = rng.lognormal(params.size_dist[1], params.size_dist[2], n)
    else:
        alpha, xmin = params.size_dist[1], params.size_dist[2]
        raw = xmin * rng.uniform(0.0, 1.0, n) ** (-1.0 / (alpha - 1.0))
    return np.maximum(1, np.rint(raw)).astype(np.int64)


@dataclass
class GeneratedDay:
    """Tape plus the consistent replay of it (statuses, updates, finals)."""

    tape: TapeDay
    status: np.ndarray
    grid: np.ndarray
    upd_time: np.ndarray
    upd_price: np.ndarray
    upd_matched: np.ndarray
    upd_imbalance: np.ndarray
    final_price: Optional[int]
    final_volume: int
    ord_arrays: tuple

    @property
    def n_accepted(self) -> int:
        return self.upd_time.shape[0]

    def fills(self) -> tuple[np.ndarray, np.ndarray]:
        ord_state, ord_side, ord_kind, ord_pidx, ord_size = self.ord_arrays
        if self.final_price is None:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        pidx = int(np.searchsorted(self.grid, self.final_price))
        f = engine.finalize_kernel(ord_state, ord_side, ord_kind, ord_pidx,
                                   ord_size, pidx, self.final_volume,
                                   self.grid.shape[0])
        ids = np.flatnonzero(f > 0)
        return ids, f[ids]


def gen_day(params: FlowParams, cutoff_s: float = 0.0,
            rng: Optional[np.random.Generator] = None) -> GeneratedDay:
    """Generate one coupled tape+feed day.

    The generator and the replay share one pass through the incremental
    engine, so contrarian side choices and restricted-phase rejections see
    exactly the state a later replay of the tape reproduces.
    """
    params.validate()
    if cutoff_s < 0:
        raise InvalidParams("cutoff must be >= 0 seconds")
    if rng is None:
        rng = substream(params.seed, 0, 0, _TAG_TAPE)
    times = gen_event_times(params, rng)
    n = times.shape[0]
    u_cancel = rng.uniform(0.0, 1.0, n)
    u_kind = rng.uniform(0.0, 1.0, n)
    u_side = rng.uniform(0.0, 1.0, n)
    u_pick = rng.uniform(0.0, 1.0, n)
    z = rng.normal(0.0, 1.0, n)
    prices = np.maximum(
        1, np.rint(params.fundamental + z * params.price_dispersion)).astype(np.int64)
    sizes = _draw_sizes(params, rng, n)
    grid = engine.price_grid(prices, params.fundamental)
    ref_idx = int(np.searchsorted(grid, params.fundamental))
    pidx = np.searchsorted(grid, prices).astype(np.int64)
    close_ms = int(round(params.duration_s * 1000))
    restrict_ms = close_ms - int(round(cutoff_s * 1000))
    burst_start = close_ms - 60_000 if params.late_cancel_burst > 0 else close_ms + 1
    (ev_action, ev_oid, ev_side, ev_kind, ev_pidx, ev_size, status,
     out_p, out_w, out_i, *ord_arrays) = engine.gen_kernel(
        times, u_cancel, u_kind, u_side, u_pick, pidx, sizes,
        float(params.cancel_prob), float(params.market_prob),
        float(params.contrarian_prob), float(params.late_cancel_burst),
        np.int64(burst_start), int(grid.shape[0]), ref_idx,
        np.int64(restrict_ms), np.int64(close_ms))
    tape = TapeDay(time_ms=times, action=ev_action, order_id=ev_oid,
                   side=ev_side, kind=ev_kind,
                   price=np.where((ev_kind == 0) & (ev_action == 0), grid[np.maximum(ev_pidx, 0)], -1),
                   size=ev_size)
    acc = status <= engine.ACCEPT_CANCEL
    upd_price = np.where(out_p[acc] >= 0, grid[np.maximum(out_p[acc], 0)], -1).astype(np.float64)
    upd_price[upd_price < 0] = np.nan
    final_price = None
    final_volume = 0
    if acc.any():
        last = int(np.flatnonzero(acc)[-1])
        if out_p[last] >= 0:
            final_price = int(grid[out_p[last]])
        final_volume = int(out_w[last])
    return GeneratedDay(
        tape=tape, status=status, grid=grid,
        upd_time=times[acc], upd_price=upd_price,
        upd_matched=out_w[acc], upd_imbalance=out_i[acc],
        final_price=final_price, final_volume=final_volume,
        ord_arrays=tuple(ord_arrays))


def gen_order_tape(params: FlowParams, cutoff_s: float = 0.0) -> TapeDay:
    """The order tape alone (identical seeds give identical tapes)."""
    return gen_day(params, cutoff_s=cutoff_s).tape


def day_series(day: GeneratedDay, asset: str = "SYN", date: str = "2020-01-01",
               side: str = "close", auction_time_ms: Optional[int] = None,
               throttle_hz: Optional[float] = None,
               duration_s: Optional[float] = None) -> DayAuctionSeries:
    """Assemble the disseminated series from a generated day.

    ``throttle_hz`` simulates a bounded dissemination rate by keeping the
    last update in each 1/hz window; finalization ignores dissemination, so
    the final auction price is unaffected.
    """
    if auction_time_ms is None:
        auction_time_ms = int(round((duration_s or 0) * 1000)) or (
            int(day.upd_time[-1]) + 1 if day.n_accepted else 60_000)
    keep = np.ones(day.n_accepted, dtype=bool)
    if throttle_hz is not None:
        keep = engine.throttle_mask(day.upd_time, throttle_hz)
    return DayAuctionSeries(
        asset=asset, date=date, side=side,
        times=day.upd_time[keep].astype(np.int64),
        price=day.upd_price[keep],
        matched=day.upd_matched[keep].astype(np.int64),
        imbalance=day.upd_imbalance[keep].astype(np.int64),
        auction_time_ms=int(auction_time_ms),
        final_price=day.final_price, final_volume=day.final_volume)


def gen_day_series(params: FlowParams, cutoff_s: float = 0.0,
                   throttle_hz: Optional[float] = None, asset: str = "SYN",
                   date: str = "2020-01-01", side: str = "close") -> DayAuctionSeries:
    """Generate and assemble one series in a single call."""
    day = gen_day(params, cutoff_s=cutoff_s)
    return day_series(day, asset=asset, date=date, side=side,
                      auction_time_ms=int(round(params.duration_s * 1000)),
                      throttle_hz=throttle_hz)


def gen_quotes(params: FlowParams, rng: Optional[np.random.Generator] = None) -> QuoteTable:
    """Regular-book best quotes on a fixed grid around a tick random walk."""
    params.validate()
    if rng is None:
        rng = substream(params.seed, 0, 0, _TAG_QUOTES)
    close_ms = int(round(params.duration_s * 1000))
    times = np.arange(0, close_ms, params.quote_interval_ms, dtype=np.int64)
    n = times.shape[0]
    steps = rng.normal(0.0, params.quote_walk_sigma, n)
    steps[0] = 0.0
    mid = np.rint(params.fundamental + np.cumsum(steps)).astype(np.int64)
    hs = int(params.quote_half_spread)
    mid = np.maximum(mid, hs + 1)
    sizes_b = np.maximum(1, np.rint(rng.lognormal(
        params.quote_size_mu, params.quote_size_sigma, n))).astype(np.int64)
    sizes_a = np.maximum(1, np.rint(rng.lognormal(
        params.quote_size_mu, params.quote_size_sigma, n))).astype(np.int64)
    return QuoteTable(times, mid - hs, mid + hs, sizes_b, sizes_a)


def gen_daily_volumes(n_assets: int, n_days: int, seed: int = 0,
                      ratio_stats: Optional[dict] = None,
                      start_date: str = "2021-01-04",
                      mean_daily_volume: float = 1e6) -> list:
    """Synthetic daily-volume panel with controlled log10 ratio statistics.

    Assets rotate over the three exchanges; each (exchange, side) draws
    log10 of its volume ratio from a normal with the configured mean and
    two-standard-deviation spread, truncated so the two auction ratios sum
    below one.
    """
    import pandas as pd

    stats = dict(RATIO_PANEL_DEFAULTS)
    if ratio_stats:
        stats.update(ratio_stats)
    dates = [d.strftime("%Y-%m-%d")
             for d in pd.bdate_range(start_date, periods=n_days)]
    exchanges = [("ARCA", "NASDAQ", "NYSE")[i % 3] for i in range(n_assets)]
    records = []
    for a in range(n_assets):
        rng = substream(seed, a, 0, _TAG_VOLUMES)
        exch = exchanges[a]
        mo, so = stats[(exch, "open")]
        mc, sc = stats[(exch, "close")]
        lr_open = rng.normal(mo, so / 2.0, n_days)
        lr_close = rng.normal(mc, sc / 2.0, n_days)
        totals = np.maximum(1000, np.rint(rng.lognormal(
            np.log(mean_daily_volume), 0.5, n_days))).astype(np.int64)
        close_px = np.maximum(100, np.rint(
            10_000 + np.cumsum(rng.normal(0, 40, n_days)))).astype(np.int64)
        open_px = np.maximum(100, close_px + np.rint(rng.normal(0, 20, n_days)).astype(np.int64))
        prev = np.empty(n_days, np.int64)
        prev[0] = 10_000
        prev[1:] = close_px[:-1]
        for d in range(n_days):
            ro, rc = 10.0 ** lr_open[d], 10.0 ** lr_close[d]
            total = int(totals[d])
            if ro + rc >= 0.98:  # keep both auctions inside the day's total
                scale = 0.98 / (ro + rc)
                ro *= scale
                rc *= scale
            records.append(DailyVolumeRecord(
                asset=f"A{a:04d}", date=dates[d], exchange=exch,
                v_open=int(round(ro * total)), v_close=int(round(rc * total)),
                v_total=total, p_open=int(open_px[d]), p_close=int(close_px[d]),
                prev_close=int(prev[d])))
    return records

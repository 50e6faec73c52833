"""Estimators over indicative-feed series and daily-volume panels.

Every function is a pure consumer of :class:`~auctionlab.ingest.DayAuctionSeries`
collections (or :class:`~auctionlab.ingest.DailyVolumeRecord` panels) and
returns tidy long-format tables ready for CSV: key columns, a slice column
where the statistic is per-minute, a statistic name, value and count.
Per-(asset, day) work is independent; only the final reductions aggregate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import pandas as pd

from . import fits
from .book import IndicativeUpdate
from .errors import (
    AuctionLabError,
    EmptyGroup,
    MissingFinalVolume,
    NoQuotes,
    TooFewPoints,
    ZeroTotal,
    ZeroVariance,
)
from .ingest import DailyVolumeRecord, DayAuctionSeries, slice_minutes

KIND_NEW_BUY = 0
KIND_NEW_SELL = 1
KIND_CANCEL = 2
KIND_INDETERMINATE = 3
KIND_LABELS = ("new_buy", "new_sell", "cancel", "indeterminate")

OVERALL = -1  # slice value for whole-session rows

_MIN_BIN = 10  # bins below this support are flagged and left out of headlines


@dataclass(frozen=True)
class EventClass:
    """Inferred nature of one feed transition."""

    kind: str
    sign: int
    improves_imbalance: Optional[bool]


def classify_event(prev: IndicativeUpdate, next: IndicativeUpdate) -> EventClass:
    """Classify one transition from the signs of the imbalance/volume changes.

    Rising matched volume with rising (falling) imbalance is a new buy
    (sell); falling matched volume is a cancellation whose side is the
    opposite of the imbalance change; everything else is indeterminate.
    """
    di = next.imbalance - prev.imbalance
    dw = next.matched_volume - prev.matched_volume
    if dw > 0 and di > 0:
        kind, sign = "new_buy", 1
    elif dw > 0 and di < 0:
        kind, sign = "new_sell", -1
    elif dw < 0:
        kind, sign = "cancel", -int(np.sign(di))
    else:
        kind, sign = "indeterminate", 0
    improves: Optional[bool] = None
    if prev.imbalance != 0 and di != 0:
        improves = bool(np.sign(prev.imbalance) * np.sign(di) == -1)
    return EventClass(kind=kind, sign=sign, improves_imbalance=improves)


def classify_transitions(series: DayAuctionSeries):
    """Vectorized transition classes for one series.

    Returns (kind codes, signs, improves) arrays of length n-1, where
    improves is +1 improving, 0 worsening, -1 undefined.
    """
    di = np.diff(series.imbalance)
    dw = np.diff(series.matched)
    kind = np.full(di.shape[0], KIND_INDETERMINATE, dtype=np.int8)
    kind[(dw > 0) & (di > 0)] = KIND_NEW_BUY
    kind[(dw > 0) & (di < 0)] = KIND_NEW_SELL
    kind[dw < 0] = KIND_CANCEL
    sign = np.zeros(di.shape[0], dtype=np.int8)
    sign[kind == KIND_NEW_BUY] = 1
    sign[kind == KIND_NEW_SELL] = -1
    cancel = kind == KIND_CANCEL
    sign[cancel] = -np.sign(di[cancel]).astype(np.int8)
    prev_i = series.imbalance[:-1]
    improves = np.full(di.shape[0], -1, dtype=np.int8)
    defined = (prev_i != 0) & (di != 0)
    improves[defined] = (np.sign(prev_i[defined]) * np.sign(di[defined]) == -1)
    return kind, sign, improves


# --- volume ratios ---

def volume_ratio(record: DailyVolumeRecord, side: str) -> float:
    """Auction volume over total daily volume."""
    if record.v_total <= 0:
        raise ZeroTotal(f"{record.asset}/{record.date}: zero total volume")
    v = record.v_open if side == "open" else record.v_close
    return v / record.v_total


def ratio_summary(records: Iterable[DailyVolumeRecord]) -> pd.DataFrame:
    """Per (exchange, side): mean log10 ratio, its two-sd spread, and the
    typical fraction 10**mean.  Zero-ratio rows are excluded and counted."""
    rows = []
    for r in records:
        for side in ("open", "close"):
            rows.append((r.exchange, side, volume_ratio(r, side)))
    if not rows:
        raise EmptyGroup("no volume records")
    df = pd.DataFrame(rows, columns=["exchange", "side", "ratio"])
    out = []
    for (exch, side), grp in df.groupby(["exchange", "side"], sort=True):
        pos = grp["ratio"].to_numpy()
        zeros = int((pos <= 0).sum())
        pos = pos[pos > 0]
        if pos.shape[0] == 0:
            continue  # a side that never trades has no ratio statistics
        ell = np.log10(pos)
        mean = float(ell.mean())
        sd2 = 2.0 * float(ell.std(ddof=1)) if ell.shape[0] > 1 else 0.0
        for stat, val in (("mean_log10", mean), ("two_sd_log10", sd2),
                          ("typical_fraction", 10.0 ** mean)):
            out.append((exch, side, stat, val, pos.shape[0], zeros))
    if not out:
        raise EmptyGroup("no positive volume ratios in any group")
    return pd.DataFrame(out, columns=["exchange", "side", "statistic", "value",
                                      "count", "zeros_excluded"])


def monthly_median_ratio(records: Iterable[DailyVolumeRecord],
                         min_assets: int = 100) -> pd.DataFrame:
    """Median ratio per (exchange, side, month); thin months are dropped."""
    rows = []
    for r in records:
        month = r.date[:7]
        for side in ("open", "close"):
            rows.append((r.exchange, side, month, r.asset, volume_ratio(r, side)))
    df = pd.DataFrame(rows, columns=["exchange", "side", "month", "asset", "ratio"])
    out = []
    for (exch, side, month), grp in df.groupby(["exchange", "side", "month"], sort=True):
        n_assets = grp["asset"].nunique()
        if n_assets < min_assets:
            continue
        out.append((exch, side, month, "median_ratio",
                    float(grp["ratio"].median()), len(grp), n_assets))
    return pd.DataFrame(out, columns=["exchange", "side", "month", "statistic",
                                      "value", "count", "n_assets"])


# --- activity and matched-volume curves ---

def _session_minutes(series: DayAuctionSeries, width_ms: int) -> int:
    return int(math.ceil(series.auction_time_ms / width_ms))


def activity_curve(series_list, width_s: float = 60.0) -> pd.DataFrame:
    """Mean over days of the cumulative update fraction per forward minute."""
    width_ms = int(round(width_s * 1000))
    acc: dict = {}
    for s in series_list:
        if len(s) == 0:
            continue
        k = _session_minutes(s, width_ms)
        marks = (np.arange(1, k + 1) * width_ms)
        frac = np.searchsorted(s.times, marks, side="left") / len(s)
        acc.setdefault((s.asset, s.side), []).append(frac)
    rows = []
    for (asset, side), curves in sorted(acc.items()):
        k = max(c.shape[0] for c in curves)
        stack = np.vstack([np.pad(c, (0, k - c.shape[0]), constant_values=1.0)
                           for c in curves])
        mean = stack.mean(axis=0)
        for minute in range(k):
            rows.append((asset, side, minute, "mean_update_fraction",
                         float(mean[minute]), stack.shape[0]))
    return pd.DataFrame(rows, columns=["asset", "side", "slice", "statistic",
                                       "value", "count"])


def _fraction_curve_one(s: DayAuctionSeries, width_ms: int) -> np.ndarray:
    if not s.final_volume:
        raise MissingFinalVolume(f"{s.asset}/{s.date}/{s.side}")
    k = _session_minutes(s, width_ms)
    marks = np.arange(1, k + 1) * width_ms
    idx = np.searchsorted(s.times, marks, side="right") - 1
    w = np.where(idx >= 0, s.matched[np.maximum(idx, 0)], 0)
    return w / float(s.final_volume)


def matched_fraction_curve(series_list, width_s: float = 60.0) -> pd.DataFrame:
    """Mean and median of matched volume over final volume per forward minute.

    Uses the last matched volume at or before each minute mark; values may
    exceed one on days whose matched volume peaks before cancellations.
    """
    width_ms = int(round(width_s * 1000))
    acc: dict = {}
    for s in series_list:
        curve = _fraction_curve_one(s, width_ms)
        acc.setdefault((s.asset, s.side), []).append(curve)
    rows = []
    for (asset, side), curves in sorted(acc.items()):
        k = max(c.shape[0] for c in curves)
        stack = np.vstack([np.pad(c, (0, k - c.shape[0]), mode="edge")
                           for c in curves])
        mean = stack.mean(axis=0)
        med = np.median(stack, axis=0)
        for minute in range(k):
            rows.append((asset, side, minute, "mean_fraction",
                         float(mean[minute]), stack.shape[0]))
            rows.append((asset, side, minute, "median_fraction",
                         float(med[minute]), stack.shape[0]))
    return pd.DataFrame(rows, columns=["asset", "side", "slice", "statistic",
                                       "value", "count"])


@dataclass(frozen=True)
class ShapeResult:
    """Linear-vs-quadratic call for one mean fraction curve."""

    label: str            # linear | convex-quadratic | concave-quadratic | undecidable
    p_quad_vs_linear: float
    quad_coef: float
    aic_linear: float
    aic_quadratic: float


def curve_shape(minutes, values, level: float = 0.05) -> ShapeResult:
    """Compare degree-1 and degree-2 fits with the Vuong statistic.

    The quadratic wins when the one-sided p favors it at ``level``; the
    linear fit wins at the symmetric threshold; anything else is
    undecidable.  Quadratic winners split on the curvature sign.
    """
    x = np.asarray(minutes, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.shape[0] < 10:
        raise TooFewPoints("need >= 10 minute points")
    f1 = fits.fit_polynomial(x, y, 1)
    f2 = fits.fit_polynomial(x, y, 2)
    d = f2.pointwise_loglik - f1.pointwise_loglik
    n = d.shape[0]
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        stat = 0.0 if float(d.mean()) == 0.0 else math.copysign(math.inf, float(d.mean()))
    else:
        stat = math.sqrt(n) * float(d.mean()) / sd
    from scipy.stats import norm

    p = float(norm.sf(stat))  # small p favors the quadratic
    if p < level:
        label = "convex-quadratic" if f2.params[2] > 0 else "concave-quadratic"
    elif p > 1.0 - level:
        label = "linear"
    else:
        label = "undecidable"
    return ShapeResult(label=label, p_quad_vs_linear=p, quad_coef=float(f2.params[2]),
                       aic_linear=f1.aic, aic_quadratic=f2.aic)


def fraction_curve_shapes(series_list, width_s: float = 60.0) -> pd.DataFrame:
    """Per-asset shape classification of the mean matched-fraction curve."""
    df = matched_fraction_curve(series_list, width_s=width_s)
    rows = []
    for (asset, side), grp in df[df["statistic"] == "mean_fraction"].groupby(
            ["asset", "side"], sort=True):
        grp = grp.sort_values("slice")
        shape = curve_shape(grp["slice"].to_numpy() + 1.0, grp["value"].to_numpy())
        rows.append((asset, side, shape.label, shape.p_quad_vs_linear,
                     shape.quad_coef, len(grp)))
    return pd.DataFrame(rows, columns=["asset", "side", "shape", "p_quad_vs_linear",
                                       "quad_coef", "n_minutes"])


def half_volume_time(series_list) -> pd.DataFrame:
    """Median across days of the first time matched volume reaches half the
    final volume, in minutes; days never reaching it are counted out."""
    acc: dict = {}
    for s in series_list:
        if not s.final_volume:
            raise MissingFinalVolume(f"{s.asset}/{s.date}/{s.side}")
        hit = np.flatnonzero(s.matched >= 0.5 * s.final_volume)
        key = (s.asset, s.side)
        acc.setdefault(key, [[], 0])
        if hit.size:
            acc[key][0].append(s.times[hit[0]] / 60_000.0)
        else:
            acc[key][1] += 1
    rows = []
    for (asset, side), (times, missed) in sorted(acc.items()):
        if times:
            rows.append((asset, side, "median_half_volume_minutes",
                         float(np.median(times)), len(times), missed))
    return pd.DataFrame(rows, columns=["asset", "side", "statistic", "value",
                                       "count", "n_unreached"])


# --- dispersion scaling (Hurst) ---

def _run_medians(keys: np.ndarray, values: np.ndarray):
    """Medians of ``values`` grouped by pre-sorted ``keys``.

    ``values`` must already be sorted within each key run.  Returns the
    unique keys, medians, and run lengths, fully vectorized.
    """
    n = keys.shape[0]
    if n == 0:
        return keys, values, np.zeros(0, dtype=np.int64)
    starts = np.flatnonzero(np.diff(keys, prepend=keys[0] - 1))
    ends = np.append(starts[1:], n)
    length = ends - starts
    mid = starts + length // 2
    odd = length % 2 == 1
    med = np.where(odd, values[mid],
                   0.5 * (values[mid] + values[np.maximum(mid - 1, starts)]))
    return keys[starts], med, length


def _grouped_medians(keys: np.ndarray, values: np.ndarray):
    """Per-key medians for unsorted input (one lexsort)."""
    order = np.lexsort((values, keys))
    return _run_medians(keys[order], values[order])


def hurst_dispersion(series: DayAuctionSeries, min_price_updates: int = 50,
                     width_s: float = 60.0):
    """Per-backward-minute medians of the squared final-price log distance,
    normalized by the day's indicative log-return variance.

    Returns (tau slices ascending, median dispersion per slice).
    """
    mask = np.isfinite(series.price)
    n_price = int(mask.sum())
    if n_price < min_price_updates:
        raise TooFewPoints(
            f"{n_price} price updates < {min_price_updates}")
    if series.final_price is None:
        raise ValueError("final auction price required")
    logpi = np.log(series.price[mask])
    var = float(np.var(np.diff(logpi)))
    if var == 0.0:
        raise ZeroVariance(f"{series.asset}/{series.date}/{series.side}")
    d = (math.log(series.final_price) - logpi) ** 2 / var
    tau = slice_minutes(series, "backward", width_s=width_s)[mask]
    taus, med, _ = _grouped_medians(tau, d)
    return taus.astype(np.int64), med


def hurst_panel(series_list, min_price_updates: int = 50,
                width_s: float = 60.0):
    """Cross-day per-slice medians per (asset, side), plus skip counters."""
    acc: dict = {}
    skipped = {"too_few_updates": 0, "zero_variance": 0, "no_final_price": 0}
    for s in series_list:
        if s.final_price is None:
            skipped["no_final_price"] += 1
            continue
        try:
            taus, med = hurst_dispersion(s, min_price_updates, width_s)
        except TooFewPoints:
            skipped["too_few_updates"] += 1
            continue
        except ZeroVariance:
            skipped["zero_variance"] += 1
            continue
        day = acc.setdefault((s.asset, s.side), {})
        for t, m in zip(taus, med):
            day.setdefault(int(t), []).append(float(m))
    rows = []
    for (asset, side), per_tau in sorted(acc.items()):
        for t in sorted(per_tau):
            vals = per_tau[t]
            rows.append((asset, side, t, "median_dispersion",
                         float(np.median(vals)), len(vals)))
    df = pd.DataFrame(rows, columns=["asset", "side", "slice", "statistic",
                                     "value", "count"])
    return df, skipped


@dataclass(frozen=True)
class HurstFit:
    """Scaling fit of the dispersion medians with the diffusion call."""

    amplitude: float
    hurst: float
    p_value: float
    subdiffusive: bool
    n_slices: int


def hurst_fit(taus, medians, p_threshold: float = 0.001) -> HurstFit:
    """Log-log slope of the per-slice medians; slices enter at their centers.

    Sub-diffusive means H below one half with a slope p-value under the
    threshold.
    """
    taus = np.asarray(taus, dtype=float)
    if taus.shape[0] < 5:
        raise TooFewPoints("need >= 5 slices")
    fit = fits.fit_loglog_slope(taus + 0.5, np.asarray(medians, dtype=float))
    sub = bool(fit.hurst < 0.5 and fit.p_value < p_threshold)
    return HurstFit(amplitude=fit.amplitude, hurst=fit.hurst,
                    p_value=fit.p_value, subdiffusive=sub,
                    n_slices=fit.n_used)


def hurst_table(series_list, min_price_updates: int = 50,
                width_s: float = 60.0) -> pd.DataFrame:
    """Per-slice medians plus one fit row per (asset, side)."""
    df, skipped = hurst_panel(series_list, min_price_updates, width_s)
    rows = []
    for (asset, side), grp in df.groupby(["asset", "side"], sort=True):
        # zero medians (indicative pinned at the final price across days)
        # carry no log-scale information
        grp = grp[grp["value"] > 0].sort_values("slice")
        if len(grp) < 5:
            continue
        fit = hurst_fit(grp["slice"].to_numpy(), grp["value"].to_numpy())
        n = int(grp["count"].sum())
        rows.append((asset, side, OVERALL, "hurst", fit.hurst, n))
        rows.append((asset, side, OVERALL, "hurst_p_value", fit.p_value, n))
        rows.append((asset, side, OVERALL, "hurst_amplitude", fit.amplitude, n))
        rows.append((asset, side, OVERALL, "subdiffusive", float(fit.subdiffusive), n))
    out = pd.concat([df, pd.DataFrame(rows, columns=df.columns)],
                    ignore_index=True)
    return out


# --- imbalance reduction ---

def imbalance_reduction_prob(series_list, width_s: float = 60.0,
                             literal_indexing: bool = False):
    """Probability that a new event reduces the imbalance.

    Default pairing tests sign(I_t) x sign(dI_{t+1}); the literal flag
    pairs the post-event imbalance with the previous change instead.
    Returns (per-slice table, per-asset table of day-averaged values).
    """
    slice_acc: dict = {}
    day_acc: dict = {}
    for s in series_list:
        if len(s) < 3:
            continue
        i = s.imbalance
        di = np.diff(i)
        if literal_indexing:
            # sign(I_{t+1} * dI_t): post-event level against the prior change
            level = i[2:]
            change = di[:-1]
            when = s.times[2:]
        else:
            level = i[:-1]
            change = di
            when = s.times[1:]
        ok = (level != 0) & (change != 0)
        if not ok.any():
            continue
        reduce = (np.sign(level[ok]) * np.sign(change[ok])) == -1
        sl = (when[ok] // int(round(width_s * 1000))).astype(np.int64)
        key = (s.asset, s.side)
        per = slice_acc.setdefault(key, {})
        for t in np.unique(sl):
            m = sl == t
            hit, tot = int(reduce[m].sum()), int(m.sum())
            agg = per.setdefault(int(t), [0, 0])
            agg[0] += hit
            agg[1] += tot
        day_acc.setdefault(key, []).append(float(reduce.mean()))
    rows = []
    for (asset, side), per in sorted(slice_acc.items()):
        for t in sorted(per):
            hit, tot = per[t]
            rows.append((asset, side, t, "reduction_prob", hit / tot, tot))
    slices = pd.DataFrame(rows, columns=["asset", "side", "slice", "statistic",
                                         "value", "count"])
    rows = [(asset, side, OVERALL, "reduction_prob_day_avg",
             float(np.mean(days)), len(days))
            for (asset, side), days in sorted(day_acc.items())]
    overall = pd.DataFrame(rows, columns=["asset", "side", "slice", "statistic",
                                          "value", "count"])
    return slices, overall


# --- response functions ---

def response_curves(series_list, width_s: float = 60.0,
                    min_bin: int = _MIN_BIN) -> pd.DataFrame:
    """Median signed log distance between the final price and the indicative
    price at the event, per forward-minute bin.

    New-order events are transitions with rising matched volume and nonzero
    imbalance change; cancellations are falling matched volume.  Each side
    is reported unconditionally and conditioned on improving/worsening the
    imbalance.  Dispersion is two sample standard deviations; bins with
    fewer than ``min_bin`` events are flagged low support.
    """
    width_ms = int(round(width_s * 1000))
    acc: dict = {}
    for s in series_list:
        if s.final_price is None or len(s) < 2:
            continue
        kind, sign, improves = classify_transitions(s)
        value = math.log(s.final_price) - np.log(s.price[:-1])
        usable = np.isfinite(value) & (sign != 0)
        new_order = usable & ((kind == KIND_NEW_BUY) | (kind == KIND_NEW_SELL))
        cancel = usable & (kind == KIND_CANCEL)
        minute = (s.times[:-1] // width_ms).astype(np.int64)
        resp = sign * value
        for curve, mask in (("new_order", new_order), ("cancellation", cancel)):
            for cond, cmask in (("unconditional", mask),
                                ("improving", mask & (improves == 1)),
                                ("worsening", mask & (improves == 0))):
                if not cmask.any():
                    continue
                acc.setdefault((s.asset, s.side, curve, cond), []).append(
                    (minute[cmask], resp[cmask]))
    rows = []
    for (asset, side, curve, cond), parts in sorted(acc.items()):
        minutes = np.concatenate([p[0] for p in parts])
        values = np.concatenate([p[1] for p in parts])
        counts = np.bincount(minutes)
        sums = np.bincount(minutes, weights=values)
        sumsq = np.bincount(minutes, weights=values * values)
        keys, med, _ = _grouped_medians(minutes, values)
        med_by = dict(zip(keys.tolist(), med.tolist()))
        for t in np.flatnonzero(counts):
            n = int(counts[t])
            if n > 1:
                var = max((sumsq[t] - sums[t] * sums[t] / n) / (n - 1), 0.0)
                disp = 2.0 * math.sqrt(var)
            else:
                disp = 0.0
            rows.append((asset, side, curve, cond, int(t),
                         float(med_by[t]), disp, n, n < min_bin))
    return pd.DataFrame(rows, columns=["asset", "side", "curve", "condition",
                                       "slice", "median", "dispersion",
                                       "count", "low_support"])


# --- indicative price vs regular book ---

_SPREAD_MEAN_STATS = {
    "in_spread": "time_in_spread", "above": "time_above", "below": "time_below",
    "reversion": "reversion_prob", "reversion_in": "reversion_prob_in",
    "reversion_out": "reversion_prob_out", "overshoot": "overshoot_prob",
    "wmid_closer": "wmid_pref", "wmid_tie": "wmid_tie_frac",
}
_SPREAD_DIST_STATS = ("delta_m", "delta_s")


def spread_metrics(series_list, width_s: float = 60.0) -> pd.DataFrame:
    """Indicative-vs-book statistics per forward minute and overall.

    Covers the fraction of updates with the indicative price inside the
    spread (plus above/below, a partition), the relative mid distance, the
    spread-unit distance conditional on being outside, the mid-reversion
    and overshoot probabilities, and the weighted-mid preference with ties
    kept separate.
    """
    width_ms = int(round(width_s * 1000))
    acc: dict = {}
    skipped = 0
    for s in series_list:
        if not s.has_quotes:
            skipped += 1
            continue
        ok = np.isfinite(s.price) & np.isfinite(s.bid)
        if not ok.any():
            skipped += 1
            continue
        pi = s.price
        m = (s.ask + s.bid) / 2.0
        spread = s.ask - s.bid
        mw = (s.ask_size * s.ask + s.bid_size * s.bid) / (s.ask_size + s.bid_size)
        minute = (s.times // width_ms).astype(np.int64)
        in_spread = (s.bid <= pi) & (pi <= s.ask)
        outside = ok & ~in_spread
        wd_m = np.abs(pi - m)
        per = acc.setdefault((s.asset, s.side), {})

        def put(stat, mask, values):
            per.setdefault(stat, []).append((minute[mask], values[mask]))

        put("in_spread", ok, in_spread)
        put("above", ok, pi > s.ask)
        put("below", ok, pi < s.bid)
        put("delta_m", ok, wd_m / m)
        put("delta_s", outside, wd_m / spread)
        put("wmid_closer", ok, wd_m > np.abs(pi - mw))
        put("wmid_tie", ok, wd_m == np.abs(pi - mw))
        # transition statistics need consecutive annotated price updates;
        # they bin at the earlier update
        both = ok[:-1] & ok[1:]
        dpi = pi[1:] - pi[:-1]
        dev = pi[:-1] - m[:-1]
        rev = (dpi * dev) < 0
        osh = ((pi[1:] - m[1:]) * dev) < 0
        minute_prev = minute[:-1]
        rev_ok = both & (dev != 0) & (dpi != 0)
        out_prev = both & outside[:-1]

        def put_t(stat, mask, values):
            per.setdefault(stat, []).append((minute_prev[mask], values[mask]))

        put_t("reversion", rev_ok, rev)
        put_t("reversion_in", rev_ok & in_spread[:-1], rev)
        put_t("reversion_out", rev_ok & outside[:-1], rev)
        put_t("overshoot", out_prev, osh)
    if not acc:
        raise NoQuotes(f"no quote-aligned series ({skipped} skipped)")
    rows = []
    for (asset, side), per in sorted(acc.items()):
        for stat in sorted(per):
            minutes = np.concatenate([p[0] for p in per[stat]])
            values = np.concatenate([p[1] for p in per[stat]]).astype(float)
            if minutes.shape[0] == 0:
                continue
            if stat in _SPREAD_MEAN_STATS:
                name = _SPREAD_MEAN_STATS[stat]
                counts = np.bincount(minutes)
                sums = np.bincount(minutes, weights=values)
                for t in np.flatnonzero(counts):
                    rows.append((asset, side, int(t), name,
                                 float(sums[t] / counts[t]), int(counts[t])))
                rows.append((asset, side, OVERALL, name,
                             float(values.mean()), values.shape[0]))
            else:
                counts = np.bincount(minutes)
                sums = np.bincount(minutes, weights=values)
                keys, med, length = _grouped_medians(minutes, values)
                med_by = dict(zip(keys.tolist(), med.tolist()))
                for t in np.flatnonzero(counts):
                    rows.append((asset, side, int(t), f"{stat}_mean",
                                 float(sums[t] / counts[t]), int(counts[t])))
                    rows.append((asset, side, int(t), f"{stat}_median",
                                 float(med_by[t]), int(counts[t])))
                rows.append((asset, side, OVERALL, f"{stat}_mean",
                             float(values.mean()), values.shape[0]))
                rows.append((asset, side, OVERALL, f"{stat}_median",
                             float(np.median(values)), values.shape[0]))
    df = pd.DataFrame(rows, columns=["asset", "side", "slice", "statistic",
                                     "value", "count"])
    return df.sort_values(["asset", "side", "statistic", "slice"],
                          ignore_index=True)


def delta_m_rcdf(series_list, max_points: int = 200) -> pd.DataFrame:
    """Reciprocal empirical CDF of the relative mid distance per (asset, side)."""
    acc: dict = {}
    for s in series_list:
        if not s.has_quotes:
            continue
        ok = np.isfinite(s.price) & np.isfinite(s.bid)
        m = (s.ask + s.bid) / 2.0
        vals = (np.abs(s.price - m) / m)[ok]
        vals = vals[vals > 0]
        if vals.size:
            acc.setdefault((s.asset, s.side), []).append(vals)
    rows = []
    for (asset, side), parts in sorted(acc.items()):
        v = np.sort(np.concatenate(parts))
        n = v.shape[0]
        p_gt = 1.0 - np.arange(1, n + 1) / n
        step = max(1, n // max_points)
        for i in range(0, n, step):
            rows.append((asset, side, float(v[i]), float(p_gt[i]), n))
    return pd.DataFrame(rows, columns=["asset", "side", "delta_m", "p_greater",
                                       "count"])


# --- single-order tails ---

def tail_tests(groups, min_orders: int = 100) -> pd.DataFrame:
    """Heavy-tail screens per auction day on matched order values.

    For each (asset, date, side, values) group with at least ``min_orders``
    orders: a lognormal-vs-exponential closeness test over the whole sample
    (small p favors the heavy-tailed side), then power law against each
    alternative above the KS-selected cut-off.  Days whose fits degenerate
    are skipped.
    """
    rows = []
    for asset, date, side, values in groups:
        v = np.asarray(values, dtype=float)
        v = v[v > 0]
        n = v.shape[0]
        if n < min_orders:
            continue
        key = (asset, date, side)
        try:
            full_min = float(v.min())
            ln_full = fits.fit_tail(v, "lognormal", full_min)
            ex_full = fits.fit_tail(v, "exponential", full_min)
            heavy = fits.vuong_test(ln_full, ex_full)
            xmin = fits.select_xmin(v)
            pl = fits.fit_tail(v, "powerlaw", xmin)
            day = [key + ("n_orders", float(n)),
                   key + ("p_heavy_vs_exponential", heavy.p_value_one_sided),
                   key + ("xmin", xmin),
                   key + ("alpha", pl.params[0]),
                   key + ("n_tail", float(pl.n_tail))]
            for family, stat in (("lognormal", "p_pl_vs_lognormal"),
                                 ("exponential", "p_pl_vs_exponential"),
                                 ("truncated_powerlaw", "p_pl_vs_truncated")):
                alt = fits.fit_tail(v, family, xmin)
                res = fits.vuong_test(pl, alt)
                day.append(key + (stat, res.p_value_one_sided))
        except AuctionLabError:
            continue  # degenerate day (constant values, failed MLE, ...)
        rows.extend(day)
    return pd.DataFrame(rows, columns=["asset", "date", "side", "statistic",
                                       "value"])

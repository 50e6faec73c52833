"""Incremental clearing engine and tape kernels (numba).

The pure-Python :class:`~auctionlab.book.AuctionBook` recomputes the clearing
from its aggregated price levels on every event; this module is the fast
path used for full-day replays and synthetic generation.  Prices are
compressed onto the day's tick grid and per-side volumes live in Fenwick
trees, so each event costs O(log P): point updates plus a binary search for
the crossing of the cumulative demand/supply curves.  Matched volume as a
function of price is bitonic (demand falls, supply rises), so the maximum
plateau is a contiguous index range and the reference-price tie-break only
needs the plateau edges.

Both paths are cross-checked event-by-event in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

# per-event replay statuses
ACCEPT_SUBMIT = 0
ACCEPT_CANCEL = 1
REJ_WORSEN = 2
REJ_DUP = 3
REJ_UNKNOWN = 4
REJ_CLOSED = 5

REJECT_LABELS = {
    REJ_WORSEN: "imbalance-worsening",
    REJ_DUP: "duplicate-id",
    REJ_UNKNOWN: "unknown-id",
    REJ_CLOSED: "auction-closed",
}


@njit(cache=True)
def _fen_add(tree, i, delta):
    i += 1
    n = tree.shape[0]
    while i < n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fen_sum(tree, i):
    # prefix sum over [0, i]; i = -1 yields 0
    s = 0
    i += 1
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _book_apply(fb, fs, fr, agg_b, agg_s, tot, side, kind, pidx, size):
    """Apply a signed size delta for one order; updates residency."""
    if kind == 1:  # market
        if side == 0:
            tot[0] += size
        else:
            tot[1] += size
        return
    was = agg_b[pidx] + agg_s[pidx]
    if side == 0:
        agg_b[pidx] += size
        _fen_add(fb, pidx, size)
        tot[2] += size
    else:
        agg_s[pidx] += size
        _fen_add(fs, pidx, size)
        tot[3] += size
    now = agg_b[pidx] + agg_s[pidx]
    if was == 0 and now > 0:
        _fen_add(fr, pidx, 1)
    elif was > 0 and now == 0:
        _fen_add(fr, pidx, -1)


@njit(cache=True)
def _matched_at(fb, fs, tot, i):
    b = tot[0] + tot[2] - _fen_sum(fb, i - 1)
    s = tot[1] + _fen_sum(fs, i)
    if b < s:
        return b
    return s


@njit(cache=True)
def _clearing(fb, fs, fr, tot, n_prices, ref_idx):
    """Current (price index, matched volume, imbalance); price index -1 if no cross."""
    k = n_prices
    # c = largest index with demand >= supply (demand - supply is non-increasing)
    b0 = tot[0] + tot[2] - _fen_sum(fb, -1)
    s0 = tot[1] + _fen_sum(fs, 0)
    if b0 < s0:
        c = -1
    else:
        lo, hi = 0, k - 1
        # invariant: B(lo) >= S(lo)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            b = tot[0] + tot[2] - _fen_sum(fb, mid - 1)
            s = tot[1] + _fen_sum(fs, mid)
            if b >= s:
                lo = mid
            else:
                hi = mid - 1
        c = lo
    best = 0
    if c >= 0:
        m = _matched_at(fb, fs, tot, c)
        if m > best:
            best = m
    if c + 1 <= k - 1:
        m = _matched_at(fb, fs, tot, c + 1)
        if m > best:
            best = m
    if best == 0:
        return -1, 0, tot[0] - tot[1]
    # plateau [plo, phi] of indices achieving the max volume
    t = c if (c >= 0 and _matched_at(fb, fs, tot, c) == best) else c + 1
    lo, hi = 0, t
    while lo < hi:
        mid = (lo + hi) // 2
        if _matched_at(fb, fs, tot, mid) >= best:
            hi = mid
        else:
            lo = mid + 1
    plo = lo
    lo, hi = t, k - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _matched_at(fb, fs, tot, mid) >= best:
            lo = mid
        else:
            hi = mid - 1
    phi = lo
    # tie-break: reference if on the plateau, else nearest resident price
    if plo <= ref_idx <= phi:
        p = ref_idx
    elif ref_idx > phi:
        cnt = _fen_sum(fr, phi)
        p = -1
        if cnt > 0:
            lo, hi = 0, phi
            while lo < hi:
                mid = (lo + hi) // 2
                if _fen_sum(fr, mid) >= cnt:
                    hi = mid
                else:
                    lo = mid + 1
            p = lo
        if p < plo or p > phi:
            p = _scan_resident(fb, fs, fr, tot, plo, phi, ref_idx)
    else:
        cnt = _fen_sum(fr, plo - 1)
        p = -1
        if _fen_sum(fr, k - 1) > cnt:
            lo, hi = 0, k - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if _fen_sum(fr, mid) >= cnt + 1:
                    hi = mid
                else:
                    lo = mid + 1
            p = lo
        if p < plo or p > phi:
            p = _scan_resident(fb, fs, fr, tot, plo, phi, ref_idx)
    b = tot[0] + tot[2] - _fen_sum(fb, p - 1)
    s = tot[1] + _fen_sum(fs, p)
    w = b if b < s else s
    return p, w, b - s


@njit(cache=True)
def _scan_resident(fb, fs, fr, tot, plo, phi, ref_idx):
    """Defensive linear fallback: nearest resident index inside the plateau."""
    best = plo
    best_d = np.int64(1) << 62
    for i in range(plo, phi + 1):
        if _fen_sum(fr, i) - _fen_sum(fr, i - 1) > 0:
            d = abs(i - ref_idx)
            if d < best_d:
                best_d = d
                best = i
    return best


@njit(cache=True)
def replay_kernel(action, oid, side, kind, pidx, size, time_ms,
                  n_prices, ref_idx, restrict_ms, close_ms, n_orders):
    """Drive one tape through the incremental book.

    Returns per-event status plus the indicative state (price index, matched
    volume, imbalance) after each event, and the final per-order state
    arrays used by the fill allocator.
    """
    nev = action.shape[0]
    fb = np.zeros(n_prices + 1, np.int64)
    fs = np.zeros(n_prices + 1, np.int64)
    fr = np.zeros(n_prices + 1, np.int64)
    agg_b = np.zeros(n_prices, np.int64)
    agg_s = np.zeros(n_prices, np.int64)
    tot = np.zeros(4, np.int64)  # market buy, market sell, limit buy, limit sell
    ord_state = np.zeros(n_orders, np.int8)  # 0 unseen, 1 resident, 2 gone
    ord_side = np.zeros(n_orders, np.int8)
    ord_kind = np.zeros(n_orders, np.int8)
    ord_pidx = np.full(n_orders, -1, np.int64)
    ord_size = np.zeros(n_orders, np.int64)
    status = np.empty(nev, np.int8)
    out_p = np.empty(nev, np.int64)
    out_w = np.empty(nev, np.int64)
    out_i = np.empty(nev, np.int64)
    cp, cw, ci = _clearing(fb, fs, fr, tot, n_prices, ref_idx)
    for e in range(nev):
        t = time_ms[e]
        o = oid[e]
        if t >= close_ms:
            status[e] = REJ_CLOSED
        elif action[e] == 0:
            if o < 0 or o >= n_orders or ord_state[o] != 0:
                status[e] = REJ_DUP
            else:
                _book_apply(fb, fs, fr, agg_b, agg_s, tot,
                            side[e], kind[e], pidx[e], size[e])
                p, w, i = _clearing(fb, fs, fr, tot, n_prices, ref_idx)
                if t >= restrict_ms and abs(i) >= abs(ci):
                    _book_apply(fb, fs, fr, agg_b, agg_s, tot,
                                side[e], kind[e], pidx[e], -size[e])
                    status[e] = REJ_WORSEN
                else:
                    ord_state[o] = 1
                    ord_side[o] = side[e]
                    ord_kind[o] = kind[e]
                    ord_pidx[o] = pidx[e]
                    ord_size[o] = size[e]
                    status[e] = ACCEPT_SUBMIT
                    cp, cw, ci = p, w, i
        else:
            if o < 0 or o >= n_orders or ord_state[o] != 1:
                status[e] = REJ_UNKNOWN
            else:
                _book_apply(fb, fs, fr, agg_b, agg_s, tot,
                            ord_side[o], ord_kind[o], ord_pidx[o], -ord_size[o])
                p, w, i = _clearing(fb, fs, fr, tot, n_prices, ref_idx)
                if t >= restrict_ms and abs(i) > abs(ci):
                    _book_apply(fb, fs, fr, agg_b, agg_s, tot,
                                ord_side[o], ord_kind[o], ord_pidx[o], ord_size[o])
                    status[e] = REJ_WORSEN
                else:
                    ord_state[o] = 2
                    status[e] = ACCEPT_CANCEL
                    cp, cw, ci = p, w, i
        out_p[e] = cp
        out_w[e] = cw
        out_i[e] = ci
    return status, out_p, out_w, out_i, ord_state, ord_side, ord_kind, ord_pidx, ord_size


@njit(cache=True)
def gen_kernel(time_ms, u_cancel, u_kind, u_side, u_pick, pidx_draw, size_draw,
               cancel_prob, market_prob, q, burst_extra, burst_start_ms,
               n_prices, ref_idx, restrict_ms, close_ms):
    """Coupled order-flow generator: decisions see the live clearing state.

    Each slot becomes a cancel of a uniformly chosen resident order with
    probability cancel_prob (plus an optional late burst), else a new order
    whose side opposes the sign of the current imbalance with probability q
    (fair coin when the imbalance is zero).  Order ids are the event index.
    Returns the tape, per-event status, the emitted indicative states, and
    the final order arrays.
    """
    nev = time_ms.shape[0]
    fb = np.zeros(n_prices + 1, np.int64)
    fs = np.zeros(n_prices + 1, np.int64)
    fr = np.zeros(n_prices + 1, np.int64)
    agg_b = np.zeros(n_prices, np.int64)
    agg_s = np.zeros(n_prices, np.int64)
    tot = np.zeros(4, np.int64)
    ord_state = np.zeros(nev, np.int8)
    ord_side = np.zeros(nev, np.int8)
    ord_kind = np.zeros(nev, np.int8)
    ord_pidx = np.full(nev, -1, np.int64)
    ord_size = np.zeros(nev, np.int64)
    resident = np.empty(nev, np.int64)
    res_pos = np.full(nev, -1, np.int64)
    n_res = 0
    ev_action = np.zeros(nev, np.int8)
    ev_oid = np.full(nev, -1, np.int64)
    ev_side = np.zeros(nev, np.int8)
    ev_kind = np.zeros(nev, np.int8)
    ev_pidx = np.full(nev, -1, np.int64)
    ev_size = np.zeros(nev, np.int64)
    status = np.empty(nev, np.int8)
    out_p = np.empty(nev, np.int64)
    out_w = np.empty(nev, np.int64)
    out_i = np.empty(nev, np.int64)
    cp, cw, ci = _clearing(fb, fs, fr, tot, n_prices, ref_idx)
    for e in range(nev):
        t = time_ms[e]
        restricted = t >= restrict_ms
        p_cancel = cancel_prob
        if t >= burst_start_ms:
            p_cancel = min(0.95, cancel_prob + burst_extra)
        if u_cancel[e] < p_cancel and n_res > 0:
            k = int(u_pick[e] * n_res)
            if k >= n_res:
                k = n_res - 1
            o = resident[k]
            ev_action[e] = 1
            ev_oid[e] = o
            ev_side[e] = ord_side[o]
            ev_kind[e] = ord_kind[o]
            ev_pidx[e] = ord_pidx[o]
            ev_size[e] = ord_size[o]
            _book_apply(fb, fs, fr, agg_b, agg_s, tot,
                        ord_side[o], ord_kind[o], ord_pidx[o], -ord_size[o])
            p, w, i = _clearing(fb, fs, fr, tot, n_prices, ref_idx)
            if restricted and abs(i) > abs(ci):
                _book_apply(fb, fs, fr, agg_b, agg_s, tot,
                            ord_side[o], ord_kind[o], ord_pidx[o], ord_size[o])
                status[e] = REJ_WORSEN
            else:
                last = resident[n_res - 1]
                resident[k] = last
                res_pos[last] = k
                res_pos[o] = -1
                n_res -= 1
                ord_state[o] = 2
                status[e] = ACCEPT_CANCEL
                cp, cw, ci = p, w, i
        else:
            knd = 1 if u_kind[e] < market_prob else 0
            if ci == 0:
                sd = 0 if u_side[e] < 0.5 else 1
            elif ci > 0:
                sd = 1 if u_side[e] < q else 0
            else:
                sd = 0 if u_side[e] < q else 1
            px = -1 if knd == 1 else pidx_draw[e]
            sz = size_draw[e]
            ev_action[e] = 0
            ev_oid[e] = e
            ev_side[e] = sd
            ev_kind[e] = knd
            ev_pidx[e] = px
            ev_size[e] = sz
            _book_apply(fb, fs, fr, agg_b, agg_s, tot, sd, knd, px, sz)
            p, w, i = _clearing(fb, fs, fr, tot, n_prices, ref_idx)
            if restricted and abs(i) >= abs(ci):
                _book_apply(fb, fs, fr, agg_b, agg_s, tot, sd, knd, px, -sz)
                status[e] = REJ_WORSEN
            else:
                ord_state[e] = 1
                ord_side[e] = sd
                ord_kind[e] = knd
                ord_pidx[e] = px
                ord_size[e] = sz
                resident[n_res] = e
                res_pos[e] = n_res
                n_res += 1
                status[e] = ACCEPT_SUBMIT
                cp, cw, ci = p, w, i
        out_p[e] = cp
        out_w[e] = cw
        out_i[e] = ci
    return (ev_action, ev_oid, ev_side, ev_kind, ev_pidx, ev_size, status,
            out_p, out_w, out_i, ord_state, ord_side, ord_kind, ord_pidx, ord_size)


@njit(cache=True)
def finalize_kernel(ord_state, ord_side, ord_kind, ord_pidx, ord_size,
                    price_idx, matched, n_prices):
    """Fill allocation at the final price: market first, better price, FIFO.

    Order ids double as arrival sequence, so the composite sort key
    (price rank, id) realizes price/time priority exactly.
    """
    n = ord_state.shape[0]
    fills = np.zeros(n, np.int64)
    if price_idx < 0 or matched <= 0:
        return fills
    for sd in range(2):
        cnt = 0
        for o in range(n):
            if ord_state[o] != 1 or ord_side[o] != sd:
                continue
            if ord_kind[o] == 0:
                if sd == 0 and ord_pidx[o] < price_idx:
                    continue
                if sd == 1 and ord_pidx[o] > price_idx:
                    continue
            cnt += 1
        ids = np.empty(cnt, np.int64)
        keys = np.empty(cnt, np.int64)
        j = 0
        for o in range(n):
            if ord_state[o] != 1 or ord_side[o] != sd:
                continue
            if ord_kind[o] == 0:
                if sd == 0 and ord_pidx[o] < price_idx:
                    continue
                if sd == 1 and ord_pidx[o] > price_idx:
                    continue
            if ord_kind[o] == 1:
                rank = 0
            elif sd == 0:
                rank = n_prices - ord_pidx[o]
            else:
                rank = ord_pidx[o] + 1
            ids[j] = o
            keys[j] = rank * (np.int64(1) << 40) + o
            j += 1
        order = np.argsort(keys)
        rem = matched
        for k in order:
            if rem <= 0:
                break
            o = ids[k]
            take = ord_size[o] if ord_size[o] < rem else rem
            fills[o] = take
            rem -= take
    return fills


@njit(cache=True)
def strictly_increasing_ms(ms):
    for i in range(1, ms.shape[0]):
        if ms[i] <= ms[i - 1]:
            ms[i] = ms[i - 1] + 1
    return ms


# --- python-side wrappers ---

@dataclass
class TapeDay:
    """One day-side of order-tape events with dense integer order ids."""

    time_ms: np.ndarray
    action: np.ndarray     # 0 submit, 1 cancel
    order_id: np.ndarray   # dense ints
    side: np.ndarray       # 0 buy, 1 sell
    kind: np.ndarray       # 0 limit, 1 market
    price: np.ndarray      # ticks, -1 for market/cancel rows
    size: np.ndarray

    def __len__(self) -> int:
        return self.time_ms.shape[0]

    @property
    def n_orders(self) -> int:
        if len(self) == 0:
            return 0
        return int(self.order_id.max()) + 1


@dataclass
class ReplayDay:
    """Replay output: per-event status plus the accepted indicative updates."""

    tape: TapeDay
    status: np.ndarray
    grid: np.ndarray
    upd_time: np.ndarray
    upd_price: np.ndarray     # float ticks, NaN when no cross
    upd_matched: np.ndarray
    upd_imbalance: np.ndarray
    final_price: Optional[int]
    final_volume: int
    _ord_arrays: tuple = None

    @property
    def n_accepted(self) -> int:
        return self.upd_time.shape[0]

    def fills(self) -> tuple[np.ndarray, np.ndarray]:
        """(order ids, filled shares) with positive fills only."""
        ord_state, ord_side, ord_kind, ord_pidx, ord_size = self._ord_arrays
        if self.final_price is None:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        pidx = int(np.searchsorted(self.grid, self.final_price))
        f = finalize_kernel(ord_state, ord_side, ord_kind, ord_pidx, ord_size,
                            pidx, self.final_volume, self.grid.shape[0])
        ids = np.flatnonzero(f > 0)
        return ids, f[ids]


def price_grid(limit_prices: np.ndarray, reference_price: int) -> np.ndarray:
    """Compressed tick grid: every tape limit price plus the reference."""
    ref = np.array([reference_price], dtype=np.int64)
    if limit_prices.size == 0:
        return ref
    return np.union1d(limit_prices[limit_prices > 0].astype(np.int64), ref)


def replay_day(tape: TapeDay, reference_price: int, auction_time_ms: int,
               cutoff_s: float = 0.0) -> ReplayDay:
    """Run a tape through the incremental engine.

    Events at or after the auction time are rejected closed; from
    ``auction_time - cutoff`` onward only imbalance-reducing events pass.
    """
    grid = price_grid(tape.price[(tape.action == 0) & (tape.kind == 0)],
                      reference_price)
    ref_idx = int(np.searchsorted(grid, reference_price))
    pidx = np.searchsorted(grid, np.where(tape.price > 0, tape.price, grid[0]))
    pidx = np.where(tape.price > 0, pidx, -1).astype(np.int64)
    restrict_ms = int(auction_time_ms - round(cutoff_s * 1000))
    out = replay_kernel(
        tape.action.astype(np.int8), tape.order_id.astype(np.int64),
        tape.side.astype(np.int8), tape.kind.astype(np.int8),
        pidx, tape.size.astype(np.int64), tape.time_ms.astype(np.int64),
        int(grid.shape[0]), ref_idx, restrict_ms, int(auction_time_ms),
        max(tape.n_orders, 1),
    )
    status, out_p, out_w, out_i = out[:4]
    ord_arrays = out[4:]
    acc = status <= ACCEPT_CANCEL
    price = np.where(out_p[acc] >= 0, grid[np.maximum(out_p[acc], 0)], -1).astype(np.float64)
    price[price < 0] = np.nan
    final_price = None
    final_volume = 0
    if acc.any():
        last = int(np.flatnonzero(acc)[-1])
        if out_p[last] >= 0:
            final_price = int(grid[out_p[last]])
        final_volume = int(out_w[last])
    return ReplayDay(
        tape=tape, status=status, grid=grid,
        upd_time=tape.time_ms[acc].astype(np.int64),
        upd_price=price,
        upd_matched=out_w[acc].astype(np.int64),
        upd_imbalance=out_i[acc].astype(np.int64),
        final_price=final_price, final_volume=final_volume,
        _ord_arrays=ord_arrays,
    )


def throttle_mask(time_ms: np.ndarray, hz: float) -> np.ndarray:
    """Keep the last update per 1/hz-second window (dissemination throttle)."""
    if time_ms.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    width = max(1, int(round(1000.0 / hz)))
    win = time_ms // width
    keep = np.ones(time_ms.shape[0], dtype=bool)
    keep[:-1] = win[:-1] != win[1:]
    return keep


def warmup() -> None:
    """Compile (or load the cached) kernels on a two-event tape."""
    tape = TapeDay(
        time_ms=np.array([1, 2], np.int64),
        action=np.array([0, 0], np.int8),
        order_id=np.array([0, 1], np.int64),
        side=np.array([0, 1], np.int8),
        kind=np.array([0, 0], np.int8),
        price=np.array([100, 100], np.int64),
        size=np.array([5, 5], np.int64),
    )
    r = replay_day(tape, 100, 1000)
    r.fills()
    gen_kernel(np.array([1, 2], np.int64), np.zeros(2), np.zeros(2),
               np.zeros(2), np.zeros(2), np.zeros(2, np.int64),
               np.ones(2, np.int64), 0.0, 0.0, 0.5, 0.0, np.int64(10 ** 9),
               1, 0, np.int64(10 ** 9), np.int64(10 ** 9))
    strictly_increasing_ms(np.array([1, 1], np.int64))

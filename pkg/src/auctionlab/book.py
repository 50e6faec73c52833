"""Pre-auction order book with exact integer clearing.

Prices are integer ticks (scaled by a per-asset tick size upstream), so the
clearing rule is free of float tie-break ambiguity.  The clearing price
maximizes matched volume; among equal-volume prices the one closest to the
reference price (previous close) wins, and a remaining tie goes to the lower
price.  When nothing crosses, the indicative price is absent, matched volume
is zero, and the feed still carries the market-order imbalance.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .errors import (
    AuctionClosed,
    BackwardTransition,
    DuplicateId,
    ImbalanceWorsening,
    UnknownId,
)

Side = Literal["buy", "sell"]
Kind = Literal["limit", "market"]

PHASES = ("open", "restricted", "closed")
_PHASE_RANK = {p: i for i, p in enumerate(PHASES)}


@dataclass(frozen=True)
class AuctionOrder:
    """One auction order; limit orders carry a tick price, market orders do not."""

    id: str | int
    side: Side
    kind: Kind
    price: Optional[int]
    size: int
    submit_time: int = 0

    def __post_init__(self):
        if self.side not in ("buy", "sell"):
            raise ValueError(f"bad side {self.side!r}")
        if self.kind not in ("limit", "market"):
            raise ValueError(f"bad kind {self.kind!r}")
        if self.size <= 0:
            raise ValueError("order size must be positive")
        if self.kind == "limit":
            if self.price is None or self.price <= 0:
                raise ValueError("limit orders need a positive tick price")
        elif self.price is not None:
            raise ValueError("market orders carry no price")


@dataclass(frozen=True)
class ClearingResult:
    """Indicative price, matched volume and signed (buy-positive) imbalance."""

    price: Optional[int]
    matched_volume: int
    imbalance: int


@dataclass(frozen=True)
class IndicativeUpdate:
    """One disseminated feed record."""

    time_ms: int
    price: Optional[int]
    matched_volume: int
    imbalance: int


@dataclass(frozen=True)
class AuctionResult:
    """Final uncrossing outcome: per-order fills plus unexecuted residuals."""

    final_price: Optional[int]
    total_matched: int
    fills: list = field(default_factory=list)       # (order id, filled shares)
    residuals: list = field(default_factory=list)   # (order id, unfilled shares)


class AuctionBook:
    """Single-writer auction book for one (asset, date, side).

    Aggregates limit volume per price level with FIFO queues inside each
    level, tracks market-order totals, and recomputes the clearing after
    every accepted event.  Distinct books are independent; process them in
    parallel freely.
    """

    def __init__(self, reference_price: int, phase: str = "open"):
        if reference_price <= 0:
            raise ValueError("reference price must be positive ticks")
        if phase not in PHASES:
            raise ValueError(f"bad phase {phase!r}")
        self.reference_price = int(reference_price)
        self.phase = phase
        # price -> {order id -> order}; insertion order doubles as FIFO order
        self._buy_levels: dict[int, dict] = {}
        self._sell_levels: dict[int, dict] = {}
        self._buy_totals: dict[int, int] = {}
        self._sell_totals: dict[int, int] = {}
        self._market_buy = 0
        self._market_sell = 0
        self._orders: dict = {}        # resident orders by id
        self._seq: dict = {}           # id -> arrival sequence (FIFO tiebreak)
        self._used_ids: set = set()
        self._next_seq = 0
        self._last_clearing = ClearingResult(None, 0, 0)

    @classmethod
    def from_orders(cls, orders, reference_price: int) -> "AuctionBook":
        """Build an open book from an order collection without per-order
        clearing recomputation (bulk setup for finalization and tests)."""
        book = cls(reference_price)
        for order in orders:
            if order.id in book._used_ids:
                raise DuplicateId(f"order id {order.id!r} already used")
            book._insert(order)
            book._used_ids.add(order.id)
            book._seq[order.id] = book._next_seq
            book._next_seq += 1
        book._last_clearing = book.compute_clearing()
        return book

    # --- inspection ---

    def __len__(self) -> int:
        return len(self._orders)

    @property
    def orders(self) -> dict:
        return dict(self._orders)

    @property
    def market_buy(self) -> int:
        return self._market_buy

    @property
    def market_sell(self) -> int:
        return self._market_sell

    @property
    def last_clearing(self) -> ClearingResult:
        return self._last_clearing

    def demand_supply_at(self, p: int) -> tuple[int, int]:
        """Cumulative demand and supply at price p.

        B(p) counts market buys plus buy limits priced at or above p; S(p)
        counts market sells plus sell limits at or below p.
        """
        if p <= 0:
            raise ValueError("price must be positive ticks")
        b = self._market_buy + sum(v for q, v in self._buy_totals.items() if q >= p)
        s = self._market_sell + sum(v for q, v in self._sell_totals.items() if q <= p)
        return b, s

    # --- clearing ---

    def compute_clearing(self) -> ClearingResult:
        """Clearing over the candidate grid: resident prices plus the reference."""
        mb, ms = self._market_buy, self._market_sell
        cand = set(self._buy_totals)
        cand.update(self._sell_totals)
        cand.add(self.reference_price)
        prices = np.fromiter(cand, dtype=np.int64, count=len(cand))
        prices.sort()
        buy_sz = np.array([self._buy_totals.get(int(p), 0) for p in prices], dtype=np.int64)
        sell_sz = np.array([self._sell_totals.get(int(p), 0) for p in prices], dtype=np.int64)
        demand = mb + buy_sz[::-1].cumsum()[::-1]
        supply = ms + sell_sz.cumsum()
        matched = np.minimum(demand, supply)
        w = int(matched.max())
        if w == 0:
            return ClearingResult(None, 0, mb - ms)
        at_max = np.flatnonzero(matched == w)
        dist = np.abs(prices[at_max] - self.reference_price)
        # closest to reference first, lower price on a remaining tie
        best = at_max[np.lexsort((prices[at_max], dist))[0]]
        return ClearingResult(
            int(prices[best]), w, int(demand[best] - supply[best])
        )

    # --- mutation ---

    def _insert(self, order: AuctionOrder) -> None:
        if order.kind == "market":
            if order.side == "buy":
                self._market_buy += order.size
            else:
                self._market_sell += order.size
        else:
            levels = self._buy_levels if order.side == "buy" else self._sell_levels
            totals = self._buy_totals if order.side == "buy" else self._sell_totals
            levels.setdefault(order.price, {})[order.id] = order
            totals[order.price] = totals.get(order.price, 0) + order.size
        self._orders[order.id] = order

    def _remove(self, order: AuctionOrder) -> None:
        if order.kind == "market":
            if order.side == "buy":
                self._market_buy -= order.size
            else:
                self._market_sell -= order.size
        else:
            levels = self._buy_levels if order.side == "buy" else self._sell_levels
            totals = self._buy_totals if order.side == "buy" else self._sell_totals
            del levels[order.price][order.id]
            totals[order.price] -= order.size
            if totals[order.price] == 0:
                del totals[order.price]
                del levels[order.price]
        del self._orders[order.id]

    def submit(self, order: AuctionOrder) -> IndicativeUpdate:
        """Add an order and emit the new indicative state.

        In the restricted phase the order must strictly reduce |imbalance|
        of the current clearing, else it is rejected without state change.
        """
        if self.phase == "closed":
            raise AuctionClosed("auction is closed")
        if order.id in self._used_ids:
            raise DuplicateId(f"order id {order.id!r} already used")
        self._insert(order)
        clearing = self.compute_clearing()
        if self.phase == "restricted" and abs(clearing.imbalance) >= abs(
            self._last_clearing.imbalance
        ):
            self._remove(order)
            raise ImbalanceWorsening(
                f"order {order.id!r} does not reduce |imbalance| "
                f"({self._last_clearing.imbalance} -> {clearing.imbalance})"
            )
        self._used_ids.add(order.id)
        self._seq[order.id] = self._next_seq
        self._next_seq += 1
        self._last_clearing = clearing
        return IndicativeUpdate(
            order.submit_time, clearing.price, clearing.matched_volume, clearing.imbalance
        )

    def cancel(self, order_id, time_ms: int = 0) -> IndicativeUpdate:
        """Remove a resident order and emit the new indicative state.

        Restricted-phase cancels may not strictly increase |imbalance|.
        """
        if self.phase == "closed":
            raise AuctionClosed("auction is closed")
        order = self._orders.get(order_id)
        if order is None:
            raise UnknownId(f"no resident order {order_id!r}")
        self._remove(order)
        clearing = self.compute_clearing()
        if self.phase == "restricted" and abs(clearing.imbalance) > abs(
            self._last_clearing.imbalance
        ):
            self._insert(order)
            raise ImbalanceWorsening(
                f"cancel of {order_id!r} would worsen |imbalance|"
            )
        self._last_clearing = clearing
        return IndicativeUpdate(
            time_ms, clearing.price, clearing.matched_volume, clearing.imbalance
        )

    def set_phase(self, phase: str, time_ms: int = 0) -> None:
        """Move the phase forward; same-phase calls are no-ops."""
        if phase not in PHASES:
            raise ValueError(f"bad phase {phase!r}")
        if _PHASE_RANK[phase] < _PHASE_RANK[self.phase]:
            raise BackwardTransition(f"{self.phase} -> {phase}")
        self.phase = phase

    def finalize(self) -> AuctionResult:
        """Close the auction and allocate fills at the final clearing price.

        Allocation is price priority then arrival priority: market orders
        rank ahead of limits, better-priced limits first, FIFO within price.
        A book with no cross yields zero matched volume and no fills.
        """
        if self.phase == "closed":
            raise AuctionClosed("auction already finalized")
        clearing = self.compute_clearing()
        self.phase = "closed"
        if clearing.price is None:
            residuals = [(o.id, o.size) for o in self._rank("buy", None)]
            residuals += [(o.id, o.size) for o in self._rank("sell", None)]
            return AuctionResult(None, 0, [], residuals)
        fills: list = []
        filled: dict = {}
        for side in ("buy", "sell"):
            remaining = clearing.matched_volume
            for order in self._rank(side, clearing.price):
                take = min(order.size, remaining)
                remaining -= take
                if take > 0:
                    fills.append((order.id, take))
                    filled[order.id] = take
        residuals = [
            (o.id, o.size - filled.get(o.id, 0))
            for o in self._orders.values()
            if o.size > filled.get(o.id, 0)
        ]
        return AuctionResult(clearing.price, clearing.matched_volume, fills, residuals)

    def _rank(self, side: Side, price: Optional[int]) -> list:
        """Orders of one side in allocation order; price=None ranks everything."""
        res = []
        for order in self._orders.values():
            if order.side != side:
                continue
            if price is not None and order.kind == "limit":
                if side == "buy" and order.price < price:
                    continue
                if side == "sell" and order.price > price:
                    continue
            if order.kind == "market":
                price_key = 0
            elif side == "buy":
                price_key = -order.price
            else:
                price_key = order.price
            res.append((0 if order.kind == "market" else 1, price_key,
                        self._seq[order.id], order))
        res.sort(key=lambda t: t[:3])
        return [t[3] for t in res]

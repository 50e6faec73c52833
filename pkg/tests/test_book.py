"""Order book unit and property tests against brute-force oracles."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from auctionlab.book import AuctionBook, AuctionOrder
from auctionlab.errors import (
    AuctionClosed,
    BackwardTransition,
    DuplicateId,
    ImbalanceWorsening,
    UnknownId,
)

from oracles import (
    brute_clearing,
    brute_clearing_dense,
    brute_demand_supply,
    random_orders,
)


def build_book(orders, ref=1000):
    book = AuctionBook(reference_price=ref)
    for o in orders:
        book.submit(o)
    return book


def o(id, side, price, size, kind="limit", t=0):
    return AuctionOrder(id, side, kind, price, size, t)


# --- demand_supply_at ---

class TestDemandSupply:
    def test_empty_book(self):
        book = AuctionBook(reference_price=100)
        assert book.demand_supply_at(100) == (0, 0)

    def test_direct_sum(self):
        book = build_book([
            o(1, "buy", 1000, 100),
            AuctionOrder(2, "sell", "market", None, 40),
        ])
        assert book.demand_supply_at(1000) == (100, 40)

    def test_matches_brute_scan(self):
        orders = [o(1, "buy", 1002, 50), o(2, "buy", 1000, 50), o(3, "sell", 1001, 60)]
        book = build_book(orders)
        # hand enumeration: buys at/above 1001 = 50; sells at/below 1001 = 60
        assert book.demand_supply_at(1001) == (50, 60)
        for p in (999, 1000, 1001, 1002, 1003):
            assert book.demand_supply_at(p) == brute_demand_supply(orders, p)


# --- compute_clearing ---

class TestClearing:
    def test_single_crossing_level(self):
        book = build_book([o(1, "buy", 1000, 100), o(2, "sell", 1000, 100)], ref=1000)
        c = book.compute_clearing()
        assert (c.price, c.matched_volume, c.imbalance) == (1000, 100, 0)

    def test_no_cross(self):
        book = build_book([o(1, "buy", 900, 100), o(2, "sell", 1000, 100)], ref=950)
        c = book.compute_clearing()
        assert c.price is None
        assert c.matched_volume == 0

    def test_reference_tiebreak(self):
        orders = [
            o(1, "buy", 1002, 100), o(2, "buy", 1000, 100),
            o(3, "sell", 1000, 100), o(4, "sell", 1002, 100),
        ]
        book = build_book(orders, ref=1003)
        c = book.compute_clearing()
        # volume ties at 1000 and 1002; 1002 is closer to the reference
        assert (c.price, c.matched_volume) == brute_clearing(orders, 1003)[:2] == (1002, 100)

    def test_market_only_book_clears_at_reference(self):
        book = AuctionBook(reference_price=777)
        book.submit(AuctionOrder(1, "buy", "market", None, 30))
        book.submit(AuctionOrder(2, "sell", "market", None, 80))
        c = book.compute_clearing()
        assert (c.price, c.matched_volume, c.imbalance) == (777, 30, -50)

    def test_randomized_against_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            orders = random_orders(rng, int(rng.integers(1, 40)))
            ref = int(rng.integers(80, 121))
            book = build_book(orders, ref=ref)
            c = book.compute_clearing()
            price, w, imb = brute_clearing(orders, ref)
            assert (c.price, c.matched_volume, c.imbalance) == (price, w, imb)
            # resident-price candidates lose no volume against a dense grid
            assert c.matched_volume == brute_clearing_dense(orders, ref)


# --- submit ---

class TestSubmit:
    def test_one_sided_book_emits_absent_price(self):
        book = AuctionBook(reference_price=1000)
        upd = book.submit(o(1, "buy", 1000, 100, t=5))
        assert upd.price is None
        assert upd.matched_volume == 0
        assert upd.imbalance == 0  # no market orders resident
        assert upd.time_ms == 5

    def test_market_buy_raises_imbalance_at_same_price(self):
        orders = [
            o(1, "buy", 1002, 100), o(2, "buy", 1000, 100),
            o(3, "sell", 1000, 100), o(4, "sell", 1002, 100),
        ]
        book = build_book(orders, ref=1003)
        before = book.compute_clearing()
        upd = book.submit(AuctionOrder(9, "buy", "market", None, 50))
        after_orders = orders + [AuctionOrder(9, "buy", "market", None, 50)]
        assert (upd.price, upd.matched_volume, upd.imbalance) == brute_clearing(after_orders, 1003)
        assert upd.price == before.price
        assert upd.matched_volume >= before.matched_volume
        assert upd.imbalance == before.imbalance + 50

    def test_restricted_rejects_worsening_buy(self):
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 300))
        book.submit(o(2, "sell", 1000, 100))  # I = +200
        book.set_phase("restricted")
        with pytest.raises(ImbalanceWorsening):
            book.submit(o(3, "buy", 1000, 10))
        assert len(book) == 2  # no state change
        assert book.last_clearing.imbalance == 200

    def test_restricted_accepts_reducing_order(self):
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 300))
        book.submit(o(2, "sell", 1000, 100))
        book.set_phase("restricted")
        upd = book.submit(o(3, "sell", 1000, 50))
        assert upd.imbalance == 150

    def test_duplicate_id(self):
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 10))
        with pytest.raises(DuplicateId):
            book.submit(o(1, "sell", 1000, 10))
        # an id stays used even after cancellation
        book.cancel(1)
        with pytest.raises(DuplicateId):
            book.submit(o(1, "buy", 1000, 10))

    def test_closed_rejects(self):
        book = AuctionBook(reference_price=1000)
        book.set_phase("closed")
        with pytest.raises(AuctionClosed):
            book.submit(o(1, "buy", 1000, 10))


# --- cancel ---

class TestCancel:
    def test_submit_cancel_inverse(self):
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 10))
        upd = book.cancel(1, time_ms=9)
        assert len(book) == 0
        assert (upd.price, upd.matched_volume, upd.imbalance) == (None, 0, 0)
        assert book.demand_supply_at(1000) == (0, 0)

    def test_cancel_matched_supply_drops_volume(self):
        book = build_book([o(1, "buy", 1000, 100), o(2, "sell", 1000, 100)])
        assert book.last_clearing.matched_volume == 100
        upd = book.cancel(2)
        assert upd.matched_volume == 0

    def test_unknown_id(self):
        book = AuctionBook(reference_price=1000)
        with pytest.raises(UnknownId):
            book.cancel(42)

    def test_cancel_each_equals_rebuild(self):
        rng = np.random.default_rng(11)
        orders = random_orders(rng, 30)
        for removed in orders:
            book = build_book(orders, ref=100)
            upd = book.cancel(removed.id)
            rebuilt = [x for x in orders if x.id != removed.id]
            assert (upd.price, upd.matched_volume, upd.imbalance) == brute_clearing(rebuilt, 100)


# --- set_phase ---

class TestPhases:
    def test_restricted_then_worsening_rejected(self):
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 50))
        book.submit(o(2, "sell", 1000, 20))
        book.set_phase("restricted", time_ms=60_000)
        with pytest.raises(ImbalanceWorsening):
            book.submit(o(3, "buy", 1000, 5))

    def test_same_phase_noop(self):
        book = AuctionBook(reference_price=1000)
        book.set_phase("open")
        assert book.phase == "open"

    def test_backward_transition(self):
        book = AuctionBook(reference_price=1000)
        book.set_phase("closed")
        with pytest.raises(BackwardTransition):
            book.set_phase("open")


# --- finalize ---

class TestFinalize:
    def test_exact_cross(self):
        book = build_book([o(1, "buy", 1000, 100), o(2, "sell", 1000, 100)])
        res = book.finalize()
        assert res.final_price == 1000
        assert res.total_matched == 100
        assert sorted(res.fills) == [(1, 100), (2, 100)]
        assert book.phase == "closed"

    def test_fifo_within_price(self):
        # hand allocation: one buy for 100, sells 100-then-50 arrive in order;
        # matched volume is 100, so the first sell fills fully, second gets 0
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 100, t=0))
        book.submit(o(2, "sell", 1000, 100, t=1))
        book.submit(o(3, "sell", 1000, 50, t=2))
        res = book.finalize()
        assert res.total_matched == 100
        fills = dict(res.fills)
        assert fills == {1: 100, 2: 100}
        assert (3, 50) in res.residuals
        buy_total = sum(v for k, v in res.fills if k == 1)
        sell_total = sum(v for k, v in res.fills if k != 1)
        assert buy_total == sell_total == res.total_matched

    def test_larger_buy_takes_both_sells(self):
        book = AuctionBook(reference_price=1000)
        book.submit(o(1, "buy", 1000, 150, t=0))
        book.submit(o(2, "sell", 1000, 100, t=1))
        book.submit(o(3, "sell", 1000, 50, t=2))
        res = book.finalize()
        assert res.total_matched == 150
        assert dict(res.fills) == {1: 150, 2: 100, 3: 50}

    def test_no_cross(self):
        book = build_book([o(1, "buy", 900, 10), o(2, "sell", 1100, 10)])
        res = book.finalize()
        assert res.final_price is None
        assert res.total_matched == 0
        assert res.fills == []

    def test_double_finalize_raises(self):
        book = AuctionBook(reference_price=1000)
        book.finalize()
        with pytest.raises(AuctionClosed):
            book.finalize()

    def test_conservation_and_limit_constraints_randomized(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            orders = random_orders(rng, int(rng.integers(2, 60)))
            book = build_book(orders, ref=int(rng.integers(80, 121)))
            res = book.finalize()
            by_id = {x.id: x for x in orders}
            buys = sum(v for k, v in res.fills if by_id[k].side == "buy")
            sells = sum(v for k, v in res.fills if by_id[k].side == "sell")
            assert buys == sells == res.total_matched
            for k, v in res.fills:
                order = by_id[k]
                assert 0 < v <= order.size
                if order.kind == "limit":
                    if order.side == "buy":
                        assert order.price >= res.final_price
                    else:
                        assert order.price <= res.final_price
            # residuals + fills account for every share
            got = {k: v for k, v in res.fills}
            left = {k: v for k, v in res.residuals}
            for x in orders:
                assert got.get(x.id, 0) + left.get(x.id, 0) == x.size


# --- invariants ---

@st.composite
def event_sequences(draw):
    n = draw(st.integers(min_value=1, max_value=60))
    events = []
    for i in range(n):
        if draw(st.booleans()) and i > 0:
            events.append(("cancel", draw(st.integers(0, i - 1))))
        else:
            side = draw(st.sampled_from(["buy", "sell"]))
            if draw(st.integers(0, 5)) == 0:
                events.append(("market", side, draw(st.integers(1, 40))))
            else:
                events.append(
                    ("limit", side, draw(st.integers(90, 110)), draw(st.integers(1, 40)))
                )
    return events


class TestInvariants:
    @given(event_sequences())
    @settings(max_examples=60, deadline=None)
    def test_incremental_equals_rebuild(self, events):
        book = AuctionBook(reference_price=100)
        alive = {}
        for i, ev in enumerate(events):
            if ev[0] == "cancel":
                target = ev[1]
                if target in alive:
                    upd = book.cancel(target, time_ms=i)
                    del alive[target]
                else:
                    continue
            elif ev[0] == "market":
                order = AuctionOrder(i, ev[1], "market", None, ev[2], i)
                upd = book.submit(order)
                alive[i] = order
            else:
                order = AuctionOrder(i, ev[1], "limit", ev[2], ev[3], i)
                upd = book.submit(order)
                alive[i] = order
            price, w, imb = brute_clearing(list(alive.values()), 100)
            assert (upd.price, upd.matched_volume, upd.imbalance) == (price, w, imb)

    def test_adding_buy_is_monotone(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            orders = random_orders(rng, 20)
            book = build_book(orders, ref=100)
            before_w = book.compute_clearing().matched_volume
            before_b = {p: book.demand_supply_at(p)[0] for p in range(85, 116)}
            book.submit(o(999, "buy", int(rng.integers(85, 116)), int(rng.integers(1, 40))))
            after = book.compute_clearing()
            assert after.matched_volume >= before_w
            for p in range(85, 116):
                assert book.demand_supply_at(p)[0] >= before_b[p]

    def test_restricted_imbalance_never_grows(self):
        rng = np.random.default_rng(5)
        book = AuctionBook(reference_price=100)
        for i in range(40):
            side = "buy" if rng.random() < 0.5 else "sell"
            book.submit(AuctionOrder(i, side, "limit", int(rng.integers(95, 106)),
                                     int(rng.integers(1, 30)), i))
        book.set_phase("restricted")
        level = abs(book.last_clearing.imbalance)
        for i in range(40, 140):
            side = "buy" if rng.random() < 0.5 else "sell"
            try:
                if rng.random() < 0.25 and len(book.orders) > 0:
                    oid = next(iter(book.orders))
                    upd = book.cancel(oid, time_ms=i)
                else:
                    upd = book.submit(AuctionOrder(i, side, "limit",
                                                   int(rng.integers(95, 106)),
                                                   int(rng.integers(1, 30)), i))
            except ImbalanceWorsening:
                continue
            assert abs(upd.imbalance) <= level
            level = abs(upd.imbalance)

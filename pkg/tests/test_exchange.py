"""Exchange matching, FIFO intake, and book invariants."""

import random

import pytest

from dtxsim.exchange import ASK, BID, Exchange, Order, OrderRejected


def make_exchange(traders=("T1", "T2", "T3", "T4")):
    exchange = Exchange()
    for t in traders:
        exchange.register_trader(t)
    return exchange


def submit(exchange, trader, side, price, t=0.0, qty=1, limit=None):
    exchange.enqueue_order(Order(trader, side, price, qty, t,
                                 limit_price=limit if limit is not None else price))
    trades = []
    while exchange.pending_messages():
        trades.extend(exchange.process_next(t))
    return trades


class TestEnqueue:
    def test_replacement_keeps_only_latest_order(self):
        exchange = make_exchange()
        exchange.enqueue_order(Order("T1", BID, 100, 1, 0.0))
        exchange.enqueue_order(Order("T1", BID, 105, 1, 0.1))
        while exchange.pending_messages():
            exchange.process_next(0.1)
        s = exchange.summary()
        assert s.best_bid == 105
        assert s.bid_qty_total == 1
        assert s.bid_depth == 1

    def test_fifo_processing_order(self):
        exchange = make_exchange()
        id1 = exchange.enqueue_order(Order("T1", BID, 90, 1, 0.0))
        id2 = exchange.enqueue_order(Order("T2", BID, 95, 1, 0.5))
        exchange.process_next(1.0)
        exchange.process_next(1.0)
        assert [s.order_id for s in exchange.shouts] == [id1, id2]

    def test_rejects_zero_price(self):
        exchange = make_exchange()
        with pytest.raises(OrderRejected):
            exchange.enqueue_order(Order("T1", BID, 0, 1, 0.0))

    def test_rejects_bad_quantity(self):
        exchange = make_exchange()
        with pytest.raises(OrderRejected):
            exchange.enqueue_order(Order("T1", BID, 100, 0, 0.0))

    def test_rejects_unknown_trader(self):
        exchange = make_exchange()
        with pytest.raises(OrderRejected):
            exchange.enqueue_order(Order("NOBODY", BID, 100, 1, 0.0))

    def test_acknowledgment_is_order_id(self):
        exchange = make_exchange()
        first = exchange.enqueue_order(Order("T1", BID, 100, 1, 0.0))
        second = exchange.enqueue_order(Order("T2", BID, 100, 1, 0.0))
        assert second == first + 1


class TestMatching:
    def test_execution_at_resting_price(self):
        exchange = make_exchange()
        submit(exchange, "T1", ASK, 95)
        trades = submit(exchange, "T2", BID, 100)
        assert len(trades) == 1
        assert trades[0].price == 95
        assert trades[0].resting_side == ASK
        assert trades[0].buyer_id == "T2"
        assert trades[0].seller_id == "T1"

    def test_time_priority_at_same_level(self):
        exchange = make_exchange()
        submit(exchange, "T1", BID, 100, t=0.0)
        submit(exchange, "T2", BID, 100, t=1.0)
        trades = submit(exchange, "T3", ASK, 90, t=2.0)
        assert trades[0].buyer_id == "T1"

    def test_partial_fill_leaves_remainder(self):
        exchange = make_exchange()
        submit(exchange, "T1", ASK, 95, qty=2)
        trades = submit(exchange, "T2", BID, 100, qty=1)
        assert len(trades) == 1
        assert trades[0].quantity == 1
        s = exchange.summary()
        assert s.best_ask == 95
        assert s.ask_qty_total == 1

    def test_big_order_sweeps_levels(self):
        exchange = make_exchange()
        submit(exchange, "T1", ASK, 95)
        submit(exchange, "T2", ASK, 96)
        trades = submit(exchange, "T3", BID, 100, qty=2)
        assert [t.price for t in trades] == [95, 96]
        assert exchange.summary().best_ask is None

    def test_non_crossing_rests(self):
        exchange = make_exchange()
        submit(exchange, "T1", ASK, 105)
        trades = submit(exchange, "T2", BID, 100)
        assert trades == []
        s = exchange.summary()
        assert (s.best_bid, s.best_ask) == (100, 105)

    def test_empty_queue_is_noop(self):
        exchange = make_exchange()
        assert exchange.process_next(0.0) == []


class TestSummary:
    def test_empty_book(self):
        exchange = make_exchange()
        s = exchange.summary()
        assert s.best_bid is None and s.best_ask is None
        assert s.bid_qty_total == 0 and s.ask_qty_total == 0
        assert s.last_trade is None

    def test_totals_and_depth(self):
        exchange = make_exchange()
        submit(exchange, "T1", BID, 100)
        submit(exchange, "T2", BID, 99, qty=2)
        submit(exchange, "T3", ASK, 103)
        s = exchange.summary()
        assert s.best_bid == 100 and s.best_ask == 103
        assert s.bid_qty_total == 3 and s.ask_qty_total == 1
        assert s.bid_depth == 2 and s.ask_depth == 1
        assert s.qty_at_best_bid == 1 and s.qty_at_best_ask == 1

    def test_last_trade_on_tape(self):
        exchange = make_exchange()
        submit(exchange, "T1", ASK, 95)
        submit(exchange, "T2", BID, 100)
        assert exchange.summary().last_trade.price == 95


class TestInvariants:
    """Randomized order streams in lockstep."""

    def run_stream(self, seed, n_orders=4000):
        rng = random.Random(seed)
        exchange = make_exchange(tuple("T%02d" % i for i in range(25)))
        for k in range(n_orders):
            side = BID if rng.random() < 0.5 else ASK
            limit = rng.randint(40, 160)
            if side == BID:
                price = rng.randint(max(1, limit - 40), limit)
            else:
                price = rng.randint(limit, limit + 40)
            exchange.enqueue_order(Order("T%02d" % rng.randrange(25), side,
                                         price, 1, float(k), limit_price=limit))
            for trade in exchange.process_next(float(k)):
                # conservation: buyer surplus + seller surplus == limit gap
                buyer_surplus = trade.buyer_limit - trade.price
                seller_surplus = trade.price - trade.seller_limit
                assert buyer_surplus + seller_surplus == \
                    trade.buyer_limit - trade.seller_limit
                assert trade.buyer_id != trade.seller_id
            s = exchange.summary()
            if s.best_bid is not None and s.best_ask is not None:
                assert s.best_bid < s.best_ask
        return exchange

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_randomized_streams(self, seed):
        exchange = self.run_stream(seed)
        # FIFO: processing order equals enqueue order
        ids = [s.order_id for s in exchange.shouts]
        assert ids == sorted(ids)
        # tape times never decrease
        times = [t.time for t in exchange.tape]
        assert times == sorted(times)
        assert len(exchange.tape) > 0

    def test_one_live_order_per_trader(self):
        rng = random.Random(9)
        exchange = make_exchange(("A", "B", "C"))
        for k in range(500):
            side = BID if rng.random() < 0.5 else ASK
            submit(exchange, rng.choice("ABC"), side, rng.randint(50, 150), t=float(k))
            live = [o for t in "ABC" if (o := exchange.live_order(t)) is not None]
            assert len({o.trader_id for o in live}) == len(live)
            total_resting = exchange.summary().bid_qty_total + exchange.summary().ask_qty_total
            assert total_resting == len(live)


def test_tape_csv_export(tmp_path):
    exchange = make_exchange()
    submit(exchange, "T1", ASK, 95, t=1.5)
    submit(exchange, "T2", BID, 100, t=2.0)
    path = tmp_path / "tape.csv"
    exchange.export_tape_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "time,price,quantity,buyer,seller"
    assert lines[1] == "2.0,95,1,T2,T1"

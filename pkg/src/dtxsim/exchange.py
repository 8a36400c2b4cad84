"""Price-time-priority limit order book with a FIFO inbound message queue.

Matching semantics:
  * an incoming order that crosses the opposite best executes at the
    *resting* order's price, against the earliest order at that level;
  * partial fills leave the remainder on the book;
  * each trader has at most one live order -- a newly processed order
    replaces the trader's previous book entry atomically.

Thread model: many producer threads may call ``enqueue_order`` concurrently;
exactly one consumer calls ``process_next``; ``summary`` and the event
accessors are safe from any thread. A single-threaded caller driving the
same methods gets deterministic (lockstep) behaviour.
"""

from __future__ import annotations

import bisect
import csv
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

BID = "BID"
ASK = "ASK"

MIN_PRICE = 1  # system-wide price floor, in ticks


class OrderRejected(ValueError):
    """Raised when a submitted order violates the exchange's invariants."""


@dataclass
class Order:
    """A priced, timestamped, sided quote owned by one trader.

    ``order_id`` is assigned by the exchange on enqueue. ``limit_price`` is a
    private accounting tag (the assignment limit the quote was made under);
    it is never published in the market summary.
    """

    trader_id: str
    side: str
    price: int
    quantity: int
    submit_time: float
    order_id: Optional[int] = None
    limit_price: Optional[int] = None
    tag: int = 0

    def __str__(self):
        return "[%s %s P=%d Q=%d T=%.3f id=%s]" % (
            self.trader_id, self.side, self.price, self.quantity,
            self.submit_time, self.order_id)


@dataclass
class Trade:
    """One execution. ``price`` always equals the resting order's price.

    ``buyer_limit`` / ``seller_limit`` carry the assignment limits attached to
    the two executed orders; they feed profit accounting and are not part of
    the public tape export.
    """

    time: float
    price: int
    quantity: int
    buyer_id: str
    seller_id: str
    resting_side: str
    buyer_limit: Optional[int] = None
    seller_limit: Optional[int] = None
    buyer_tag: int = 0
    seller_tag: int = 0


@dataclass
class Shout:
    """A processed order event, as observed by belief-keeping traders.

    ``accepted`` flips to True when the shouted order (eventually) trades.
    """

    order_id: int
    time: float
    side: str
    price: int
    accepted: bool = False


@dataclass(frozen=True)
class LobSummary:
    """Instantaneous Level-2 view of the book (anonymized)."""

    time: float
    best_bid: Optional[int]
    best_ask: Optional[int]
    bid_qty_total: int
    ask_qty_total: int
    bid_depth: int
    ask_depth: int
    qty_at_best_bid: int
    qty_at_best_ask: int
    last_trade: Optional[Trade]


_EMPTY_SUMMARY = LobSummary(0.0, None, None, 0, 0, 0, 0, 0, 0, None)


class _BookSide:
    """One side of the book: price level -> FIFO deque of orders."""

    def __init__(self, side):
        self.side = side
        self.levels: dict[int, deque[Order]] = {}
        self.prices: list[int] = []  # ascending
        self.qty_total = 0

    def best_price(self) -> Optional[int]:
        if not self.prices:
            return None
        return self.prices[-1] if self.side == BID else self.prices[0]

    def qty_at(self, price) -> int:
        level = self.levels.get(price)
        return sum(o.quantity for o in level) if level else 0

    def add(self, order: Order):
        level = self.levels.get(order.price)
        if level is None:
            level = deque()
            self.levels[order.price] = level
            bisect.insort(self.prices, order.price)
        level.append(order)
        self.qty_total += order.quantity

    def remove(self, order: Order):
        level = self.levels[order.price]
        level.remove(order)
        self.qty_total -= order.quantity
        if not level:
            del self.levels[order.price]
            self.prices.pop(bisect.bisect_left(self.prices, order.price))

    def earliest_at_best(self) -> Order:
        return self.levels[self.best_price()][0]


class Exchange:
    """CDA matching engine with FIFO intake, trade tape and shout log."""

    def __init__(self):
        self._lock = threading.Lock()
        self._inbound: deque[Order] = deque()
        self._bids = _BookSide(BID)
        self._asks = _BookSide(ASK)
        self._live: dict[str, Order] = {}      # trader_id -> resting order
        self._traders: set[str] = set()
        self._next_order_id = 0
        self._shout_by_order: dict[int, Shout] = {}
        self.tape: list[Trade] = []
        self.shouts: list[Shout] = []
        self._summary: LobSummary = _EMPTY_SUMMARY
        self._dirty = False
        self._last_time = 0.0
        self.version = 0  # bumps on every processed message (cheap change probe)

    def register_trader(self, trader_id: str):
        with self._lock:
            self._traders.add(trader_id)

    def enqueue_order(self, order: Order) -> int:
        """Validate and append an order message to the FIFO queue.

        Returns the assigned order id as acknowledgment.
        """
        with self._lock:
            if order.trader_id not in self._traders:
                raise OrderRejected("unknown trader %r" % order.trader_id)
            if order.side not in (BID, ASK):
                raise OrderRejected("bad side %r" % order.side)
            if not isinstance(order.price, int) or order.price < MIN_PRICE:
                raise OrderRejected("bad price %r" % (order.price,))
            if not isinstance(order.quantity, int) or order.quantity < 1:
                raise OrderRejected("bad quantity %r" % (order.quantity,))
            if order.submit_time < 0:
                raise OrderRejected("bad submit time %r" % order.submit_time)
            order.order_id = self._next_order_id
            self._next_order_id += 1
            self._inbound.append(order)
            return order.order_id

    def pending_messages(self) -> int:
        return len(self._inbound)

    def process_next(self, time: float) -> list[Trade]:
        """Dequeue one message and match it; empty queue is a no-op.

        Returns the trades this message produced (possibly several under
        partial fills; at most one when all quantities are 1).
        """
        with self._lock:
            if not self._inbound:
                return []
            incoming = self._inbound.popleft()
            trader = incoming.trader_id

            # replacement: drop the trader's previous book entry first
            prior = self._live.pop(trader, None)
            if prior is not None:
                self._side(prior.side).remove(prior)

            shout = Shout(incoming.order_id, time, incoming.side, incoming.price)
            self.shouts.append(shout)
            self._shout_by_order[incoming.order_id] = shout

            own = self._side(incoming.side)
            opp = self._asks if incoming.side == BID else self._bids
            trades = []
            while incoming.quantity > 0:
                best = opp.best_price()
                if best is None or not self._crosses(incoming.side, incoming.price, best):
                    break
                resting = opp.earliest_at_best()
                qty = min(incoming.quantity, resting.quantity)
                if incoming.side == BID:
                    trade = Trade(time, resting.price, qty,
                                  buyer_id=trader, seller_id=resting.trader_id,
                                  resting_side=ASK,
                                  buyer_limit=incoming.limit_price,
                                  seller_limit=resting.limit_price,
                                  buyer_tag=incoming.tag,
                                  seller_tag=resting.tag)
                else:
                    trade = Trade(time, resting.price, qty,
                                  buyer_id=resting.trader_id, seller_id=trader,
                                  resting_side=BID,
                                  buyer_limit=resting.limit_price,
                                  seller_limit=incoming.limit_price,
                                  buyer_tag=resting.tag,
                                  seller_tag=incoming.tag)
                trades.append(trade)
                self.tape.append(trade)
                shout.accepted = True
                rshout = self._shout_by_order.get(resting.order_id)
                if rshout is not None:
                    rshout.accepted = True
                incoming.quantity -= qty
                if qty == resting.quantity:
                    opp.remove(resting)
                    self._live.pop(resting.trader_id, None)
                else:
                    resting.quantity -= qty
                    opp.qty_total -= qty

            if incoming.quantity > 0:
                own.add(incoming)
                self._live[trader] = incoming
            self._dirty = True
            self._last_time = time
            self.version += 1
            return trades

    def summary(self) -> LobSummary:
        """Consistent point-in-time snapshot; never a half-updated view."""
        with self._lock:
            if self._dirty:
                self._summary = self._build_summary()
                self._dirty = False
            return self._summary

    def trades_since(self, index: int) -> list[Trade]:
        with self._lock:
            return self.tape[index:]

    def shout_window(self, n: int) -> list[Shout]:
        """The most recent n processed-order events (belief history)."""
        with self._lock:
            return self.shouts[-n:]

    def live_order(self, trader_id: str) -> Optional[Order]:
        with self._lock:
            return self._live.get(trader_id)

    def export_tape_csv(self, path):
        """Write the trade tape: one row per trade, public fields only."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["time", "price", "quantity", "buyer", "seller"])
            for t in self.tape:
                writer.writerow([repr(t.time), t.price, t.quantity,
                                 t.buyer_id, t.seller_id])

    # -- internals --------------------------------------------------------

    def _side(self, side) -> _BookSide:
        return self._bids if side == BID else self._asks

    @staticmethod
    def _crosses(side, price, opp_best) -> bool:
        return price >= opp_best if side == BID else price <= opp_best

    def _build_summary(self) -> LobSummary:
        bb = self._bids.best_price()
        ba = self._asks.best_price()
        last = self.tape[-1] if self.tape else None
        return LobSummary(
            time=self._last_time,
            best_bid=bb,
            best_ask=ba,
            bid_qty_total=self._bids.qty_total,
            ask_qty_total=self._asks.qty_total,
            bid_depth=len(self._bids.prices),
            ask_depth=len(self._asks.prices),
            qty_at_best_bid=self._bids.qty_at(bb) if bb is not None else 0,
            qty_at_best_ask=self._asks.qty_at(ba) if ba is not None else 0,
            last_trade=last,
        )

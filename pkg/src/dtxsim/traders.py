"""The classic public-domain trading strategies: GVWY, ZIC, ZIP, GDX, AA.

Each trader owns its RNG and strategy state and shares nothing with other
traders; market information arrives as immutable snapshots and event lists.
Every strategy quotes within its assignment limit (buyers never above,
sellers never below), so no trade can book a loss.

Strategy internals follow the canonical published formulations: ZIC after
Gode & Sunder (1993), ZIP after Cliff (1997), GDX after Tesauro & Bredin
(2002), AA after Vytelingum (2006). Constants are the usual literature
ranges where the sources give them.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .exchange import ASK, BID, MIN_PRICE, Exchange, Order, Shout, Trade

PRICE_FLOOR = 1    # lowest quotable price
PRICE_CAP = 400    # highest quotable price (covers default ranges plus offsets)

GDX_WINDOW = 30    # shouts remembered for belief estimation
GDX_GAMMA = 0.9    # discount on continuation value in the pricing recursion
GDX_MAX_HORIZON = 10


@dataclass(frozen=True)
class CustomerOrder:
    """An assignment: trade one unit on ``side`` no worse than ``limit_price``.

    ``serial`` identifies the assignment so a fill of a quote made under an
    older, superseded assignment does not consume the current one.
    """

    trader_id: str
    side: str
    limit_price: int
    issue_time: float
    serial: int = 0


@dataclass(frozen=True)
class MarketEvent:
    """What changed on the market since a trader last looked."""

    trades: tuple[Trade, ...]
    bid_improved: bool
    bid_hit: bool
    ask_improved: bool
    ask_lifted: bool
    best_bid: Optional[int]
    best_ask: Optional[int]


class MarketView:
    """A trader's porthole onto the exchange at one instant."""

    __slots__ = ("time", "exchange")

    def __init__(self, time: float, exchange: Exchange):
        self.time = time
        self.exchange = exchange

    def summary(self):
        return self.exchange.summary()


class Trader:
    """Base trader: assignment bookkeeping, event tracking, quote gating.

    Subclasses implement ``quote_price`` and optionally ``observe``.
    A trader re-quotes at most once per ``requote_interval`` of market time
    and skips re-submitting an unchanged price.
    """

    strategy = "?"
    requote_interval = 1.0

    def __init__(self, trader_id: str, side: str, rng: random.Random):
        self.trader_id = trader_id
        self.side = side
        self.rng = rng
        self.assignment: Optional[CustomerOrder] = None
        self.balance = 0
        self.blotter: list[Trade] = []
        self._tape_seen = 0
        self._seen_version = 0
        self._prev_summary = None
        self._next_quote_time = 0.0
        self._live_price: Optional[int] = None
        self._live_limit: Optional[int] = None

    def assign(self, order: CustomerOrder):
        """Receive a customer order; any previous assignment is superseded."""
        self.assignment = order

    def on_fill(self, trade: Trade, own_side: str) -> int:
        """Book the surplus from an execution of this trader's order.

        Surplus is measured against the limit attached to the executed
        order. The current assignment is consumed only if the order was
        quoted under it (a fill of a stale quote leaves it live).
        """
        if own_side == BID:
            limit = trade.buyer_limit
            surplus = limit - trade.price
            tag = trade.buyer_tag
        else:
            limit = trade.seller_limit
            surplus = trade.price - limit
            tag = trade.seller_tag
        self.balance += surplus
        self.blotter.append(trade)
        if self.assignment is not None and self.assignment.serial == tag:
            self.assignment = None
        self._live_price = None
        self._live_limit = None
        return surplus

    def poll(self, view: MarketView) -> Optional[Order]:
        """Observe new market events, then maybe emit a quote."""
        if view.exchange.version != self._seen_version:
            self._seen_version = view.exchange.version
            event = self._gather_event(view)
            if event is not None:
                self.observe(event, view)
        if self.assignment is None:
            return None
        if view.time < self._next_quote_time:
            return None
        self._next_quote_time = view.time + self.requote_interval
        price = self.quote_price(view)
        if price is None:
            return None
        # system bounds, then the limit takes precedence (no-loss before cap)
        price = int(min(max(price, PRICE_FLOOR), PRICE_CAP))
        if self.side == BID:
            price = min(price, self.assignment.limit_price)
        else:
            price = max(price, self.assignment.limit_price)
        if price == self._live_price and self.assignment.limit_price == self._live_limit:
            return None
        self._live_price = price
        self._live_limit = self.assignment.limit_price
        return Order(self.trader_id, self.side, price, 1, view.time,
                     limit_price=self.assignment.limit_price,
                     tag=self.assignment.serial)

    # -- strategy hooks ----------------------------------------------------

    def quote_price(self, view: MarketView) -> Optional[int]:
        raise NotImplementedError

    def observe(self, event: MarketEvent, view: MarketView):
        pass

    # -- event assembly ------------------------------------------------------

    def _gather_event(self, view: MarketView) -> Optional[MarketEvent]:
        exchange = view.exchange
        new_trades: Sequence[Trade] = ()
        if len(exchange.tape) > self._tape_seen:
            new_trades = exchange.trades_since(self._tape_seen)
            self._tape_seen += len(new_trades)
        cur = exchange.summary()
        prev = self._prev_summary
        self._prev_summary = cur
        if prev is cur and not new_trades:
            return None
        bid_improved = (prev is not None and prev.best_bid is not None
                        and cur.best_bid is not None and cur.best_bid > prev.best_bid)
        ask_improved = (prev is not None and prev.best_ask is not None
                        and cur.best_ask is not None and cur.best_ask < prev.best_ask)
        bid_hit = any(t.resting_side == BID for t in new_trades)
        ask_lifted = any(t.resting_side == ASK for t in new_trades)
        if not (new_trades or bid_improved or ask_improved):
            return None
        return MarketEvent(tuple(new_trades), bid_improved, bid_hit,
                           ask_improved, ask_lifted, cur.best_bid, cur.best_ask)


# ---------------------------------------------------------------------------
# GVWY: quote the limit price itself, giving all surplus away.

def giveaway_price(assignment: Optional[CustomerOrder]) -> Optional[int]:
    if assignment is None:
        return None
    return assignment.limit_price


class GiveawayTrader(Trader):
    strategy = "GVWY"

    def quote_price(self, view):
        return giveaway_price(self.assignment)


# ---------------------------------------------------------------------------
# ZIC: uniform random price between the limit and the system bound.

def zic_price(side: str, limit: int, rng: random.Random,
              price_floor: int = PRICE_FLOOR, price_cap: int = PRICE_CAP) -> int:
    """Buyer draws U[floor, limit]; seller draws U[limit, cap].

    A degenerate interval (limit outside the bounds) quotes the limit.
    """
    if side == BID:
        if limit < price_floor:
            return limit
        return rng.randint(price_floor, limit)
    if limit > price_cap:
        return limit
    return rng.randint(limit, price_cap)


class ZicTrader(Trader):
    strategy = "ZIC"

    def quote_price(self, view):
        return zic_price(self.side, self.assignment.limit_price, self.rng)


# ---------------------------------------------------------------------------
# ZIP: limit price plus an adaptive profit margin (Widrow-Hoff with momentum).

@dataclass
class ZipState:
    """Adaptive-margin state for one side-fixed ZIP trader.

    Buyer margins live in [-1, 0], seller margins in [0, inf); ``price`` is
    the trader's current shout price, None until it has quoted once.
    """

    margin: float
    beta: float
    momentum: float
    last_change: float = 0.0
    price: Optional[float] = None
    limit: Optional[int] = None


def init_zip_state(side: str, rng: random.Random) -> ZipState:
    # Cliff 1997 ranges: beta U(0.1,0.5), momentum U(0.0,0.1), |margin| U(0.05,0.35)
    margin = rng.uniform(0.05, 0.35)
    if side == BID:
        margin = -margin
    return ZipState(margin=margin, beta=rng.uniform(0.1, 0.5),
                    momentum=rng.uniform(0.0, 0.1))


def zip_quote_price(state: ZipState, side: str, limit: int) -> int:
    price = int(round(limit * (1.0 + state.margin)))
    state.price = float(price)
    state.limit = limit
    return price


def zip_apply_target(state: ZipState, side: str, tau: float) -> ZipState:
    """Move the shout price toward ``tau`` and rederive the margin.

    delta = beta*(tau - price); change = momentum*last + (1-momentum)*delta.
    The margin is clamped so a buyer never prices above its limit nor a
    seller below it.
    """
    if state.price is None or state.limit is None:
        return state
    delta = state.beta * (tau - state.price)
    change = state.momentum * state.last_change + (1.0 - state.momentum) * delta
    state.last_change = change
    margin = (state.price + change) / state.limit - 1.0
    if side == BID:
        state.margin = min(max(margin, -1.0), 0.0)
    else:
        state.margin = max(margin, 0.0)
    state.price = state.limit * (1.0 + state.margin)
    return state


def _zip_target_up(price: float, rng: random.Random) -> float:
    return rng.uniform(1.0, 1.05) * price + rng.uniform(0.0, 0.05 * price)


def _zip_target_down(price: float, rng: random.Random) -> float:
    return rng.uniform(0.95, 1.0) * price - rng.uniform(0.0, 0.05 * price)


def zip_update(state: ZipState, side: str, event: MarketEvent,
               rng: random.Random, active: bool) -> ZipState:
    """Cliff's margin rules applied to one market event.

    Sellers raise margins when trades clear at or above their price, cut
    them when undercut or outpriced; buyers mirror.
    """
    if state.price is None:
        return state
    deal = len(event.trades) > 0
    trade_price = event.trades[-1].price if deal else None

    if side == ASK:
        if deal:
            if state.price <= trade_price:
                zip_apply_target(state, side, _zip_target_up(trade_price, rng))
            elif event.ask_lifted and active and state.price > trade_price:
                zip_apply_target(state, side, _zip_target_down(trade_price, rng))
        elif event.ask_improved and event.best_ask is not None \
                and state.price > event.best_ask:
            anchor = event.best_bid if event.best_bid is not None else PRICE_CAP
            zip_apply_target(state, side, _zip_target_up(anchor, rng))
    else:
        if deal:
            if state.price >= trade_price:
                zip_apply_target(state, side, _zip_target_down(trade_price, rng))
            elif event.bid_hit and active and state.price < trade_price:
                zip_apply_target(state, side, _zip_target_up(trade_price, rng))
        elif event.bid_improved and event.best_bid is not None \
                and state.price < event.best_bid:
            anchor = event.best_ask if event.best_ask is not None else PRICE_FLOOR
            zip_apply_target(state, side, _zip_target_down(anchor, rng))
    return state


class ZipTrader(Trader):
    strategy = "ZIP"

    def __init__(self, trader_id, side, rng):
        super().__init__(trader_id, side, rng)
        self.state = init_zip_state(side, rng)

    def observe(self, event, view):
        zip_update(self.state, self.side, event, self.rng,
                   active=self.assignment is not None)

    def quote_price(self, view):
        return zip_quote_price(self.state, self.side, self.assignment.limit_price)


# ---------------------------------------------------------------------------
# GDX: belief over quote acceptance, priced by a discounted value recursion.

def gdx_belief(window: Sequence[Shout], price: float, side: str) -> float:
    """Estimated probability that a quote at ``price`` would be accepted.

    Seller at a: (accepted asks >= a + bids >= a) over the same plus
    unaccepted asks <= a. Buyer at b mirrors with the inequalities flipped.
    Zero when the window offers no supporting evidence.
    """
    supporting = 0
    against = 0
    if side == ASK:
        for s in window:
            if s.side == ASK:
                if s.accepted and s.price >= price:
                    supporting += 1
                elif not s.accepted and s.price <= price:
                    against += 1
            elif s.price >= price:
                supporting += 1
    else:
        for s in window:
            if s.side == BID:
                if s.accepted and s.price <= price:
                    supporting += 1
                elif not s.accepted and s.price >= price:
                    against += 1
            elif s.price <= price:
                supporting += 1
    total = supporting + against
    if total == 0:
        return 0.0
    return supporting / total


def gdx_grid_beliefs(window: Sequence[Shout], grid: Sequence[int],
                     side: str) -> list[float]:
    """Beliefs at every grid price in one pass (bisect over sorted counts).

    Agrees exactly with ``gdx_belief`` evaluated pointwise; this form keeps
    the pricing recursion cheap inside the session loop.
    """
    import bisect

    acc, opp, unacc = [], [], []
    own_side = side
    for s in window:
        if s.side == own_side:
            (acc if s.accepted else unacc).append(s.price)
        else:
            opp.append(s.price)
    acc.sort()
    opp.sort()
    unacc.sort()
    out = []
    for p in grid:
        if side == ASK:
            supporting = (len(acc) - bisect.bisect_left(acc, p)
                          + len(opp) - bisect.bisect_left(opp, p))
            against = bisect.bisect_right(unacc, p)
        else:
            supporting = bisect.bisect_right(acc, p) + bisect.bisect_right(opp, p)
            against = len(unacc) - bisect.bisect_left(unacc, p)
        total = supporting + against
        out.append(supporting / total if total else 0.0)
    return out


def _interp_belief(grid: Sequence[int], beliefs: Sequence[float], p: float) -> float:
    """Linear interpolation of belief between observed grid prices."""
    if p <= grid[0]:
        return beliefs[0]
    if p >= grid[-1]:
        return beliefs[-1]
    for i in range(1, len(grid)):
        if p <= grid[i]:
            span = grid[i] - grid[i - 1]
            w = (p - grid[i - 1]) / span
            return beliefs[i - 1] * (1.0 - w) + beliefs[i] * w
    return beliefs[-1]


def gdx_quote_price(window: Sequence[Shout], side: str, limit: int,
                    horizon: int, gamma: float = GDX_GAMMA,
                    price_floor: int = PRICE_FLOOR,
                    price_cap: int = PRICE_CAP) -> int:
    """Price maximizing V(n) = max_p q(p)*s(p) + (1-q(p))*gamma*V(n-1).

    Candidates are the admissible observed prices plus the limit itself
    (belief interpolated there); an empty or useless window quotes the
    limit. Ties break toward the fill-favoring price: lower for sellers,
    higher for buyers.
    """
    if not window:
        return limit
    grid = sorted({s.price for s in window})
    if side == ASK:
        candidates = [p for p in grid if limit <= p <= price_cap]
    else:
        candidates = [p for p in grid if price_floor <= p <= limit]
    if limit not in candidates and grid[0] <= limit <= grid[-1]:
        candidates.append(limit)
    if not candidates:
        return limit
    beliefs_grid = gdx_grid_beliefs(window, grid, side)
    # sellers scan ascending, buyers descending, so the first strict maximum
    # realizes the tie-break
    candidates.sort(reverse=(side == BID))
    qs = [_interp_belief(grid, beliefs_grid, p) for p in candidates]
    surpluses = [p - limit if side == ASK else limit - p for p in candidates]
    value = 0.0
    best = limit
    for _ in range(max(horizon, 1)):
        best_value = None
        for p, q, s in zip(candidates, qs, surpluses):
            v = q * s + (1.0 - q) * gamma * value
            if best_value is None or v > best_value:
                best_value = v
                best = p
        value = best_value
    return int(best)


class GdxTrader(Trader):
    strategy = "GDX"

    def __init__(self, trader_id, side, rng, duration: float = 3600.0,
                 issue_interval: float = 30.0):
        super().__init__(trader_id, side, rng)
        self.duration = duration
        self.issue_interval = issue_interval

    def _horizon(self, time: float) -> int:
        remaining = int((self.duration - time) / self.issue_interval)
        return min(max(remaining, 1), GDX_MAX_HORIZON)

    def quote_price(self, view):
        window = view.exchange.shout_window(GDX_WINDOW)
        return gdx_quote_price(window, self.side, self.assignment.limit_price,
                               self._horizon(view.time))


# ---------------------------------------------------------------------------
# AA: equilibrium tracking with an exponential aggressiveness-to-price map.

AA_THETA_MIN = -8.0
AA_THETA_MAX = 2.0
AA_LAMBDA = 0.05         # aggressiveness nudge applied around the shout level
AA_VOL_WINDOW = 20       # trades considered for the volatility signal
AA_VOL_SCALE = 0.10      # relative volatility mapped onto the theta range
AA_INIT_MARGIN = 0.10    # pre-trade margin before any equilibrium estimate


@dataclass
class AaState:
    """Aggressiveness state for one side-fixed AA trader."""

    r: float                       # aggressiveness in [-1, 1]
    theta: float = 2.0
    equilibrium: Optional[float] = None
    beta_short: float = 0.3
    beta_long: float = 0.05
    recent_prices: list[float] = field(default_factory=list)


def init_aa_state(rng: random.Random) -> AaState:
    return AaState(r=rng.uniform(-0.3, 0.3))


def _theta_ramp(u: float, theta: float) -> float:
    """(exp(u*theta)-1)/(exp(theta)-1), linear in u as theta -> 0."""
    if abs(theta) < 1e-9:
        return u
    return (math.exp(u * theta) - 1.0) / (math.exp(theta) - 1.0)


def aa_target(state: AaState, side: str, limit: int,
              price_floor: int = PRICE_FLOOR, price_cap: int = PRICE_CAP) -> float:
    """Map aggressiveness r onto a target price.

    r = 0 targets the equilibrium estimate; r = 1 targets the limit price
    (trade-seeking); r = -1 targets the most profitable admissible extreme.
    Extra-marginal assignments can do no better than the limit itself.
    """
    eq = state.equilibrium
    r, theta = state.r, state.theta
    if side == BID:
        if eq is None or limit <= eq:  # extra-marginal (or no estimate yet)
            base = min(limit, eq) if eq is not None else limit
            if r >= 0:
                return float(limit) if eq is None else float(base)
            return base * (1.0 - _theta_ramp(-r, theta))
        if r >= 0:
            return eq + (limit - eq) * _theta_ramp(r, theta)
        return eq * (1.0 - _theta_ramp(-r, theta))
    else:
        if eq is None or limit >= eq:
            base = max(limit, eq) if eq is not None else limit
            if r >= 0:
                return float(limit) if eq is None else float(base)
            return base + (price_cap - base) * _theta_ramp(-r, theta)
        if r >= 0:
            return eq - (eq - limit) * _theta_ramp(r, theta)
        return eq + (price_cap - eq) * _theta_ramp(-r, theta)


def _aa_inverse_target(state: AaState, side: str, limit: int, price: float) -> float:
    """The aggressiveness whose target equals ``price`` (clamped to [-1, 1])."""
    lo, hi = -1.0, 1.0
    for _ in range(40):  # bisection against the monotone target map
        mid = (lo + hi) / 2.0
        probe = AaState(r=mid, theta=state.theta, equilibrium=state.equilibrium)
        t = aa_target(probe, side, limit)
        too_passive = t < price if side == BID else t > price
        if too_passive:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


def aa_update(state: AaState, side: str, limit: int,
              trade_prices: Sequence[float]) -> AaState:
    """Fold observed trades into the equilibrium, r, and theta estimates."""
    for p in trade_prices:
        if state.equilibrium is None:
            state.equilibrium = float(p)
        else:
            state.equilibrium = 0.95 * state.equilibrium + 0.05 * float(p)
        state.recent_prices.append(float(p))
        if len(state.recent_prices) > AA_VOL_WINDOW:
            state.recent_prices.pop(0)

        tau = aa_target(state, side, limit)
        r_shout = _aa_inverse_target(state, side, limit, p)
        if side == BID:
            aggressive_enough = tau >= p
        else:
            aggressive_enough = tau <= p
        r_goal = r_shout - AA_LAMBDA if aggressive_enough else r_shout + AA_LAMBDA
        state.r += state.beta_short * (min(max(r_goal, -1.0), 1.0) - state.r)
        state.r = min(max(state.r, -1.0), 1.0)

    if len(state.recent_prices) >= 2 and state.equilibrium:
        mean = sum(state.recent_prices) / len(state.recent_prices)
        var = sum((p - mean) ** 2 for p in state.recent_prices) / len(state.recent_prices)
        vol = math.sqrt(var) / state.equilibrium
        theta_goal = AA_THETA_MAX - (AA_THETA_MAX - AA_THETA_MIN) * min(vol / AA_VOL_SCALE, 1.0)
        state.theta += state.beta_long * (theta_goal - state.theta)
        state.theta = min(max(state.theta, AA_THETA_MIN), AA_THETA_MAX)
    return state


def aa_quote_price(state: AaState, side: str, limit: int) -> int:
    """Quote toward the target from the profitable side of the limit."""
    if state.equilibrium is None:
        if side == BID:
            return max(int(round(limit * (1.0 - AA_INIT_MARGIN))), PRICE_FLOOR)
        return min(int(round(limit * (1.0 + AA_INIT_MARGIN))), PRICE_CAP)
    tau = aa_target(state, side, limit)
    price = int(round(tau))
    if side == BID:
        return min(max(price, PRICE_FLOOR), limit)
    return max(min(price, PRICE_CAP), limit)


class AaTrader(Trader):
    strategy = "AA"

    def __init__(self, trader_id, side, rng):
        super().__init__(trader_id, side, rng)
        self.state = init_aa_state(rng)

    def observe(self, event, view):
        if event.trades and self.assignment is not None:
            aa_update(self.state, self.side, self.assignment.limit_price,
                      [t.price for t in event.trades])
        elif event.trades:
            # keep tracking the equilibrium even between assignments
            for p in (t.price for t in event.trades):
                if self.state.equilibrium is None:
                    self.state.equilibrium = float(p)
                else:
                    self.state.equilibrium = 0.95 * self.state.equilibrium + 0.05 * p

    def quote_price(self, view):
        return aa_quote_price(self.state, self.side, self.assignment.limit_price)


# ---------------------------------------------------------------------------

REGISTRY = {
    "GVWY": GiveawayTrader,
    "ZIC": ZicTrader,
    "ZIP": ZipTrader,
    "GDX": GdxTrader,
    "AA": AaTrader,
}


def canonical_strategy(name: str) -> str:
    key = name.strip().upper()
    if key not in REGISTRY and key != "DTX":
        raise ValueError("unknown strategy %r" % name)
    return key

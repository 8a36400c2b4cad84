"""Level-2 snapshot features, equilibrium estimation and Smith's alpha.

Everything here is a pure function of its inputs, safe from any thread.
A snapshot row has 14 fields: 13 model inputs plus the trade price target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .exchange import ASK, BID, LobSummary, Trade

# canonical field order for snapshot rows, norm stats and model inputs
FIELDS = ("t", "otype", "limit", "mid", "micro", "imbal", "spread",
          "bb", "ba", "dt", "qty", "pstar", "alpha", "price")
CSV_HEADER = ",".join(FIELDS)
N_INPUTS = 13  # all fields but the target

P_STAR_WEIGHT = 0.95  # EWMA persistence for the equilibrium estimate


@dataclass(frozen=True)
class FeatureRecord:
    """One market snapshot, taken at a trade instant."""

    t: float             # trade time, seconds
    otype: int           # 0 = bid initiated, 1 = ask initiated
    limit: int           # initiating trader's assignment limit
    mid: float
    micro: float
    imbal: float
    spread: float
    bb: float            # best bid (with fallback when absent)
    ba: float            # best ask (with fallback when absent)
    dt: float            # seconds since the previous trade
    qty: int             # total quantity resting on both sides
    pstar: float         # equilibrium price estimate
    alpha: float         # Smith's alpha, percent
    price: int           # the trade price (training target)

    def to_row(self) -> list:
        return [getattr(self, f) for f in FIELDS]


def _fallback_price(s: LobSummary) -> float:
    if s.last_trade is not None:
        return float(s.last_trade.price)
    return 0.0


def effective_bests(s: LobSummary) -> tuple[float, float]:
    """Best bid/ask as reals, falling back when a side is empty.

    A missing side borrows the present side's best; with both sides empty
    the last trade price is used, and a never-traded empty market yields 0.
    """
    if s.best_bid is not None and s.best_ask is not None:
        return float(s.best_bid), float(s.best_ask)
    if s.best_bid is not None:
        return float(s.best_bid), float(s.best_bid)
    if s.best_ask is not None:
        return float(s.best_ask), float(s.best_ask)
    p = _fallback_price(s)
    return p, p


def midprice(s: LobSummary) -> float:
    """Average of the best bid and best ask, with empty-side fallbacks."""
    bb, ba = effective_bests(s)
    return (bb + ba) / 2.0


def microprice(s: LobSummary) -> float:
    """Depth-weighted midprice over the best levels.

    Weighting pulls the price toward the heavier side:
    (bb*q_ask + ba*q_bid) / (q_bid + q_ask). Degenerate books fall back
    to the midprice.
    """
    if s.best_bid is None or s.best_ask is None:
        return midprice(s)
    qb, qa = s.qty_at_best_bid, s.qty_at_best_ask
    if qb + qa == 0:
        return midprice(s)
    return (s.best_bid * qa + s.best_ask * qb) / (qb + qa)


def imbalance(s: LobSummary) -> float:
    """Normalized bid/ask quantity difference in [-1, 1]; 0 when empty."""
    total = s.bid_qty_total + s.ask_qty_total
    if total == 0:
        return 0.0
    return (s.bid_qty_total - s.ask_qty_total) / total


def estimate_p_star(trade_prices: Sequence[float],
                    current: Optional[LobSummary] = None) -> float:
    """Equilibrium price estimate: EWMA of trade prices.

    Seeded with the first trade price, then est = 0.95*est + 0.05*price.
    Before any trade the midprice stands in; before any quote at all, 0.
    """
    if not trade_prices:
        return midprice(current) if current is not None else 0.0
    est = float(trade_prices[0])
    for p in trade_prices[1:]:
        est = P_STAR_WEIGHT * est + (1.0 - P_STAR_WEIGHT) * p
    return est


def smith_alpha(trade_prices: Sequence[float], p_star: float) -> float:
    """Smith's alpha: RMS deviation of trade prices from p_star, as a
    percentage of p_star. Zero for an empty window."""
    if p_star <= 0:
        raise ValueError("p_star must be positive, got %r" % p_star)
    n = len(trade_prices)
    if n == 0:
        return 0.0
    ssq = 0.0
    for p in trade_prices:
        d = p - p_star
        ssq += d * d
    return (100.0 / p_star) * math.sqrt(ssq / n)


def make_record(s: LobSummary, tape: Sequence[Trade], aggressor_side: str,
                aggressor_limit: int, trade_index: int) -> FeatureRecord:
    """Build the snapshot row for the trade at ``tape[trade_index]``.

    ``s`` is the book state at the trade instant; ``aggressor_*`` describe
    the customer order that initiated the trade. Equilibrium statistics are
    cumulative over the tape up to and including this trade.
    """
    trade = tape[trade_index]
    prices = [t.price for t in tape[:trade_index + 1]]
    pstar = estimate_p_star(prices, s)
    alpha = smith_alpha(prices, pstar) if pstar > 0 else 0.0
    prev = tape[trade_index - 1] if trade_index > 0 else None
    dt = trade.time - prev.time if prev is not None else trade.time
    bb, ba = effective_bests(s)
    return FeatureRecord(
        t=trade.time,
        otype=0 if aggressor_side == BID else 1,
        limit=aggressor_limit,
        mid=midprice(s),
        micro=microprice(s),
        imbal=imbalance(s),
        spread=max(ba - bb, 0.0),
        bb=bb,
        ba=ba,
        dt=dt,
        qty=s.bid_qty_total + s.ask_qty_total,
        pstar=pstar,
        alpha=alpha,
        price=trade.price,
    )


@dataclass
class NormStats:
    """Per-field min/max over a training corpus, for min-max scaling."""

    mins: list[float]
    maxs: list[float]

    def __post_init__(self):
        if len(self.mins) != len(FIELDS) or len(self.maxs) != len(FIELDS):
            raise ValueError("norm stats must cover all %d fields" % len(FIELDS))
        for name, lo, hi in zip(FIELDS, self.mins, self.maxs):
            if lo > hi:
                raise ValueError("min > max for field %r" % name)

    def save(self, path):
        with open(path, "w") as f:
            for name, lo, hi in zip(FIELDS, self.mins, self.maxs):
                f.write("%s,%s,%s\n" % (name, repr(float(lo)), repr(float(hi))))

    @classmethod
    def load(cls, path) -> "NormStats":
        mins, maxs = [], []
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 3 or parts[0] != FIELDS[len(mins)]:
                    raise ValueError("%s: line %d: expected '%s,min,max'"
                                     % (path, lineno, FIELDS[len(mins)]))
                mins.append(float(parts[1]))
                maxs.append(float(parts[2]))
        if len(mins) != len(FIELDS):
            raise ValueError("%s: expected %d rows, got %d"
                             % (path, len(FIELDS), len(mins)))
        return cls(mins, maxs)


def _scale(x: float, lo: float, hi: float) -> float:
    if hi <= lo:
        return 0.0  # constant field carries no information
    v = (x - lo) / (hi - lo)
    return min(max(v, 0.0), 1.0)


def normalize(record: FeatureRecord, stats: NormStats) -> list[float]:
    """Min-max scale the 13 input fields to [0, 1] (target excluded)."""
    return normalize_inputs(record.to_row()[:N_INPUTS], stats)


def normalize_inputs(values, stats: NormStats) -> list[float]:
    """Min-max scale a raw 13-field input row to [0, 1]."""
    return [_scale(float(v), stats.mins[i], stats.maxs[i])
            for i, v in enumerate(values)]


def normalize_target(price: float, stats: NormStats) -> float:
    i = FIELDS.index("price")
    return _scale(float(price), stats.mins[i], stats.maxs[i])


def denormalize_price(y: float, stats: NormStats) -> int:
    """Invert the target field's min-max map and round to integer ticks."""
    i = FIELDS.index("price")
    lo, hi = stats.mins[i], stats.maxs[i]
    if hi <= lo:
        return int(round(lo))
    return int(round(lo + y * (hi - lo)))

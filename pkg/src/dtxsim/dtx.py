"""The DTX strategy: model inference over live market features.

DTX assembles the 13 input fields at the current instant (using only its
own limit price), runs the network, and quotes the denormalized price when
it is profitable. A prediction that would cross its limit falls back to
improving its own side's best by one tick, capped at the limit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from . import features
from .exchange import ASK, BID, LobSummary, Trade
from .neural import ModelParams, forward
from .traders import PRICE_FLOOR, CustomerOrder, Trader


@dataclass
class DtxState:
    """Per-trader inference state; the model itself is shared read-only."""

    model: ModelParams
    last_trade_time: Optional[float] = None


def dtx_on_trade(state: DtxState, trade: Trade) -> DtxState:
    state.last_trade_time = trade.time
    return state


def dtx_input_vector(state: DtxState, now: float, assignment: CustomerOrder,
                     s: LobSummary, trade_prices) -> list[float]:
    """The 13 live feature fields, in canonical order, unnormalized."""
    bb, ba = features.effective_bests(s)
    pstar = features.estimate_p_star(trade_prices, s)
    alpha = features.smith_alpha(trade_prices, pstar) if pstar > 0 else 0.0
    dt = now - state.last_trade_time if state.last_trade_time is not None else now
    return [
        now,
        0.0 if assignment.side == BID else 1.0,
        float(assignment.limit_price),
        features.midprice(s),
        features.microprice(s),
        features.imbalance(s),
        max(ba - bb, 0.0),
        bb,
        ba,
        dt,
        float(s.bid_qty_total + s.ask_qty_total),
        pstar,
        alpha,
    ]


def dtx_quote(state: DtxState, now: float, assignment: CustomerOrder,
              s: LobSummary, trade_prices) -> int:
    """Model price if it respects the limit, else one tick inside own best.

    Fallbacks: a buyer quotes min(limit, best_bid + 1) (just the limit when
    there is no best bid); a seller quotes max(limit, best_ask - 1).
    """
    raw = dtx_input_vector(state, now, assignment, s, trade_prices)
    stats = state.model.norm
    vec = features.normalize_inputs(raw, stats)
    window = [vec] * state.model.seq_len
    predicted = features.denormalize_price(forward(state.model, window), stats)
    limit = assignment.limit_price
    if assignment.side == BID:
        if PRICE_FLOOR <= predicted <= limit:
            return predicted
        if s.best_bid is None:
            return limit
        return min(limit, s.best_bid + 1)
    if predicted >= limit:
        return predicted
    if s.best_ask is None:
        return limit
    return max(limit, s.best_ask - 1)


class DtxTrader(Trader):
    strategy = "DTX"

    def __init__(self, trader_id: str, side: str, rng: random.Random,
                 model: ModelParams):
        super().__init__(trader_id, side, rng)
        if model is None:
            raise ValueError("DTX trader requires a model")
        self.state = DtxState(model)

    def observe(self, event, view):
        for trade in event.trades:
            dtx_on_trade(self.state, trade)

    def quote_price(self, view):
        tape = view.exchange.tape
        prices = [t.price for t in tape]
        return dtx_quote(self.state, view.time, self.assignment,
                         view.summary(), prices)

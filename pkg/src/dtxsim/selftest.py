"""Built-in invariant suites for the ``selftest`` subcommand.

A fast, self-contained subset of the property checks: exchange invariants
over randomized order streams, the gradient check, the exact Wilcoxon
against brute-force enumeration, and strategy limit discipline.
"""

from __future__ import annotations

import itertools
import random

import numpy as np

from .analysis import wilcoxon_signed_rank
from .exchange import ASK, BID, Exchange, Order
from .features import FIELDS, NormStats
from .neural import TrainConfig, backward, init_params, train
from .session import build_offset_series
from .traders import zic_price


def _check_exchange(n_orders=10000, seed=7) -> str:
    rng = random.Random(seed)
    exchange = Exchange()
    traders = ["T%02d" % i for i in range(30)]
    for t in traders:
        exchange.register_trader(t)
    for k in range(n_orders):
        side = BID if rng.random() < 0.5 else ASK
        limit = rng.randint(40, 160)
        price = rng.randint(max(1, limit - 30), limit) if side == BID \
            else rng.randint(limit, limit + 30)
        order = Order(rng.choice(traders), side, price, 1, float(k),
                      limit_price=limit)
        exchange.enqueue_order(order)
        for trade in exchange.process_next(float(k)):
            surplus = (trade.buyer_limit - trade.price) + (trade.price - trade.seller_limit)
            assert surplus == trade.buyer_limit - trade.seller_limit
        s = exchange.summary()
        if s.best_bid is not None and s.best_ask is not None:
            assert s.best_bid < s.best_ask, "crossed book at rest"
    ids = [sh.order_id for sh in exchange.shouts]
    assert ids == sorted(ids), "FIFO processing order broken"
    times = [t.time for t in exchange.tape]
    assert times == sorted(times), "tape not monotone"
    return "exchange invariants: %d orders, %d trades" % (n_orders, len(exchange.tape))


def _check_gradients(draws=5, seed=3) -> str:
    rng = np.random.default_rng(seed)
    norm = NormStats([0.0] * len(FIELDS), [1.0] * len(FIELDS))
    worst = 0.0
    for _ in range(draws):
        params = init_params(norm, rng)
        x = rng.uniform(0, 1, size=(3, 1, 13))
        y = rng.uniform(0, 1, size=3)
        grads, _ = backward(params, x, y)
        for name, arr in params.param_items():
            flat = arr.ravel()
            g = grads[name].ravel()
            for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                h = 1e-5
                old = flat[idx]
                flat[idx] = old + h
                _, up = backward(params, x, y)
                flat[idx] = old - h
                _, down = backward(params, x, y)
                flat[idx] = old
                fd = (up - down) / (2 * h)
                rel = abs(fd - g[idx]) / (max(abs(fd), abs(g[idx])) + 1e-6)
                worst = max(worst, rel)
    assert worst <= 1e-4, "gradient mismatch: %g" % worst
    return "gradient check: max relative error %.3g" % worst


def _check_wilcoxon() -> str:
    rng = random.Random(11)
    for _ in range(25):
        n = rng.randint(2, 8)
        diffs = [rng.randint(-5, 5) or 1 for _ in range(n)]
        pairs = [(d, 0.0) for d in diffs]
        result = wilcoxon_signed_rank(pairs)
        # brute-force enumeration of all sign assignments
        from .analysis import _average_ranks
        ranks = _average_ranks([abs(d) for d in diffs])
        w_obs = sum(r for r, d in zip(ranks, diffs) if d > 0)
        below = above = 0
        for signs in itertools.product((0, 1), repeat=n):
            w = sum(r for r, s in zip(ranks, signs) if s)
            below += w <= w_obs + 1e-12
            above += w >= w_obs - 1e-12
        expected = min(1.0, 2.0 * min(below, above) / 2 ** n)
        assert abs(result.p_value - expected) < 1e-12, \
            "exact p %.12g != enumeration %.12g" % (result.p_value, expected)
    return "wilcoxon exact agrees with enumeration"


def _check_traders() -> str:
    rng = random.Random(5)
    for _ in range(2000):
        limit = rng.randint(1, 200)
        assert zic_price(BID, limit, rng) <= limit
        assert zic_price(ASK, limit, rng) >= limit
    fn = build_offset_series(99, 600.0)
    fn2 = build_offset_series(99, 600.0)
    assert all(fn(t) == fn2(t) for t in range(0, 600, 10))
    return "trader limit discipline and offset determinism"


def _check_training() -> str:
    norm = NormStats([0.0] * len(FIELDS), [1.0] * len(FIELDS))
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, size=(512, 1, 13))
    y = np.full(512, 0.4)
    cfg = TrainConfig(batch_size=64, epochs=8, seed=1, learning_rate=0.01)
    _, curve = train(x, y, cfg, norm)
    assert curve[-1] < curve[0], "loss did not fall"
    return "training loss falls on a constant-target set"


def run_selftest() -> int:
    checks = (_check_exchange, _check_gradients, _check_wilcoxon,
              _check_traders, _check_training)
    failed = 0
    for check in checks:
        try:
            message = check()
            print("PASS %s" % message)
        except AssertionError as e:
            failed += 1
            print("FAIL %s: %s" % (check.__name__, e))
    return 2 if failed else 0

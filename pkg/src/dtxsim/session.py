"""One market session: schedule construction, customer order drip-feed,
the trading clock, and profit/snapshot collection.

Two drive modes share every exchange and trader code path:

* LOCKSTEP -- strictly single-threaded; each 0.1 s virtual tick polls the
  traders in a seeded random order. Bit-identical results per seed.
* THREADED -- one thread per trader continuously reading the book and
  quoting, one exchange consumer thread, one clock/issuer thread; virtual
  time runs at ``time_scale`` times real time.
"""

from __future__ import annotations

import csv
import hashlib
import random
import threading
import time as wallclock
from dataclasses import dataclass, field
from typing import Callable, Optional

from .exchange import ASK, BID, Exchange, Trade
from .features import CSV_HEADER, FeatureRecord, make_record
from .traders import REGISTRY, CustomerOrder, MarketView, Trader, canonical_strategy

LOCKSTEP = "LOCKSTEP"
THREADED = "THREADED"

BUYER = "BUYER"
SELLER = "SELLER"

TICK = 0.1                # lockstep virtual tick, seconds
TRADERS_PER_SIDE = 20

OFFSET_STEP_SECONDS = 30.0
OFFSET_MAX_STEP = 5

STEPMODES = ("FIXED", "JITTERED", "RANDOM")


class ConfigError(ValueError):
    """Raised for invalid session configuration."""


def derive_seed(base: int, tag: str) -> int:
    """Stable 63-bit child seed from a base seed and a text tag."""
    digest = hashlib.sha256(("%d:%s" % (base, tag)).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def build_offset_series(seed: int, duration: float,
                        min_offset: Optional[int] = None) -> Callable[[float], int]:
    """Deterministic price offset: a seeded random walk, one step per 30 s.

    Starts at zero, steps are integers in [-5, 5], and the walk is clamped
    at ``min_offset`` so the shifted price range stays at or above 1 tick.
    """
    if duration <= 0:
        raise ConfigError("duration must be positive")
    rng = random.Random(seed)
    n_steps = int(duration // OFFSET_STEP_SECONDS) + 1
    offsets = [0]
    for _ in range(n_steps):
        step = rng.randint(-OFFSET_MAX_STEP, OFFSET_MAX_STEP)
        nxt = offsets[-1] + step
        if min_offset is not None and nxt < min_offset:
            nxt = min_offset
        offsets.append(nxt)

    def offset_fn(t: float) -> int:
        i = int(t // OFFSET_STEP_SECONDS)
        return offsets[min(max(i, 0), n_steps)]

    return offset_fn


@dataclass
class SupplyDemandSchedule:
    """Limit-price generator for one side of the market."""

    side: str                                  # BUYER or SELLER
    price_range: tuple[int, int] = (50, 150)
    offset_fn: Callable[[float], int] = lambda t: 0
    issue_interval: float = 30.0
    stepmode: str = "JITTERED"

    def __post_init__(self):
        lo, hi = self.price_range
        if lo > hi:
            raise ConfigError("price range low > high")
        if self.issue_interval <= 0:
            raise ConfigError("issue interval must be positive")
        if self.stepmode not in STEPMODES:
            raise ConfigError("unknown stepmode %r" % self.stepmode)
        if self.side not in (BUYER, SELLER):
            raise ConfigError("schedule side must be BUYER or SELLER")


def issue_customer_orders(schedule: SupplyDemandSchedule, traders: list[Trader],
                          time: float, rng: random.Random,
                          serial_start: int = 0) -> list[CustomerOrder]:
    """One assignment round: a fresh limit price for every trader on a side.

    FIXED spaces limits evenly across the offset-shifted range; JITTERED
    adds up to half a step of noise; RANDOM draws uniformly. Limits are
    dealt to traders in shuffled order so no seat is systematically rich.
    """
    n = len(traders)
    if n == 0:
        return []
    offset = schedule.offset_fn(time)
    lo = max(schedule.price_range[0] + offset, 1)
    hi = max(schedule.price_range[1] + offset, lo)
    step = (hi - lo) / (n - 1) if n > 1 else 0.0
    limits = []
    for i in range(n):
        if schedule.stepmode == "FIXED":
            price = lo + i * step
        elif schedule.stepmode == "JITTERED":
            price = lo + i * step + rng.uniform(-step / 2.0, step / 2.0)
        else:
            price = rng.randint(lo, hi)
        limits.append(int(min(max(round(price), lo), hi)))
    rng.shuffle(limits)
    side = BID if schedule.side == BUYER else ASK
    return [CustomerOrder(trader.trader_id, side, limit, time, serial_start + i)
            for i, (trader, limit) in enumerate(zip(traders, limits))]


@dataclass
class SessionConfig:
    """Everything needed to reproduce one market session."""

    buyers: list[tuple[str, int]]
    sellers: list[tuple[str, int]]
    seed: int
    duration: float = 3600.0
    mode: str = LOCKSTEP
    range_low: int = 50
    range_high: int = 150
    issue_interval: float = 30.0
    stepmode: str = "JITTERED"
    time_scale: float = 60.0   # virtual seconds per real second (THREADED)

    def validate(self):
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.mode not in (LOCKSTEP, THREADED):
            raise ConfigError("mode must be LOCKSTEP or THREADED")
        for label, spec in (("buyers", self.buyers), ("sellers", self.sellers)):
            total = 0
            for name, count in spec:
                canonical_strategy(name)
                if count < 0:
                    raise ConfigError("negative count for %s" % name)
                total += count
            if total != TRADERS_PER_SIDE:
                raise ConfigError("%s must total %d traders, got %d"
                                  % (label, TRADERS_PER_SIDE, total))
        if self.range_low > self.range_high:
            raise ConfigError("range_low > range_high")
        if self.range_low < 1:
            raise ConfigError("range_low must be >= 1")
        if self.issue_interval <= 0:
            raise ConfigError("issue_interval must be positive")
        if self.stepmode not in STEPMODES:
            raise ConfigError("unknown stepmode %r" % self.stepmode)


@dataclass
class SessionResult:
    """Per-session outcome: profits, the tape, and one snapshot per trade."""

    ppt_by_strategy: dict[str, float]
    profit_by_trader: dict[str, int]
    tape: list[Trade]
    snapshots: list[FeatureRecord]


def _build_traders(config: SessionConfig, model) -> tuple[list[Trader], list[Trader]]:
    from .dtx import DtxTrader  # local import to avoid a module cycle

    def build_side(spec, side, prefix):
        out = []
        index = 0
        for name, count in spec:
            key = canonical_strategy(name)
            for _ in range(count):
                tid = "%s%02d" % (prefix, index)
                rng = random.Random(derive_seed(config.seed, "trader:" + tid))
                if key == "DTX":
                    if model is None:
                        raise ConfigError("DTX traders need a model")
                    trader = DtxTrader(tid, side, rng, model)
                elif key == "GDX":
                    trader = REGISTRY[key](tid, side, rng,
                                           duration=config.duration,
                                           issue_interval=config.issue_interval)
                else:
                    trader = REGISTRY[key](tid, side, rng)
                out.append(trader)
                index += 1
        return out

    return build_side(config.buyers, BID, "B"), build_side(config.sellers, ASK, "S")


class _Session:
    """Shared bookkeeping for both drive modes."""

    def __init__(self, config: SessionConfig, model):
        config.validate()
        self.config = config
        self.exchange = Exchange()
        self.buyers, self.sellers = _build_traders(config, model)
        self.by_id = {t.trader_id: t for t in self.buyers + self.sellers}
        for tid in self.by_id:
            self.exchange.register_trader(tid)
        offset_seed = derive_seed(config.seed, "offset")
        offset_fn = build_offset_series(offset_seed, config.duration,
                                        min_offset=1 - config.range_low)
        self.demand = SupplyDemandSchedule(BUYER, (config.range_low, config.range_high),
                                           offset_fn, config.issue_interval,
                                           config.stepmode)
        self.supply = SupplyDemandSchedule(SELLER, (config.range_low, config.range_high),
                                           offset_fn, config.issue_interval,
                                           config.stepmode)
        self.issue_rng = random.Random(derive_seed(config.seed, "issue"))
        self.poll_rng = random.Random(derive_seed(config.seed, "poll"))
        self.snapshots: list[FeatureRecord] = []
        self._serial = 0
        self._recorded = 0

    def issue_round(self, t: float):
        for schedule, traders in ((self.demand, self.buyers),
                                  (self.supply, self.sellers)):
            orders = issue_customer_orders(schedule, traders, t,
                                           self.issue_rng, self._serial)
            self._serial += len(orders)
            for order in orders:
                self.by_id[order.trader_id].assign(order)

    def bookkeep(self, trade: Trade):
        self.by_id[trade.buyer_id].on_fill(trade, BID)
        self.by_id[trade.seller_id].on_fill(trade, ASK)
        if trade.resting_side == ASK:
            aggressor_side, limit = BID, trade.buyer_limit
        else:
            aggressor_side, limit = ASK, trade.seller_limit
        record = make_record(self.exchange.summary(), self.exchange.tape,
                             aggressor_side, limit, self._recorded)
        self._recorded += 1
        self.snapshots.append(record)

    def result(self) -> SessionResult:
        profits = {t.trader_id: t.balance for t in self.buyers + self.sellers}
        groups: dict[str, list[int]] = {}
        for t in self.buyers + self.sellers:
            groups.setdefault(t.strategy, []).append(t.balance)
        ppt = {name: sum(vals) / len(vals) for name, vals in groups.items()}
        return SessionResult(ppt, profits, self.exchange.tape, self.snapshots)


def run_session(config: SessionConfig, model=None) -> SessionResult:
    """Run one full session and collect its result."""
    session = _Session(config, model)
    if config.mode == LOCKSTEP:
        _drive_lockstep(session)
    else:
        _drive_threaded(session)
    return session.result()


def _shuffle(items: list, rng: random.Random):
    """In-place Fisher-Yates using rng.random(); faster than rng.shuffle."""
    for i in range(len(items) - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        items[i], items[j] = items[j], items[i]


def _drive_lockstep(session: _Session):
    config = session.config
    exchange = session.exchange
    order_of_play = session.buyers + session.sellers
    next_issue = 0.0
    n_ticks = int(round(config.duration / TICK))
    for step in range(n_ticks):
        t = step * TICK
        if t >= next_issue - 1e-9:
            session.issue_round(t)
            next_issue += config.issue_interval
        _shuffle(order_of_play, session.poll_rng)
        view = MarketView(t, exchange)
        for trader in order_of_play:
            order = trader.poll(view)
            if order is None:
                continue
            exchange.enqueue_order(order)
            while exchange.pending_messages():
                for trade in exchange.process_next(t):
                    session.bookkeep(trade)


def _drive_threaded(session: _Session):
    config = session.config
    exchange = session.exchange
    start = wallclock.perf_counter()
    scale = config.time_scale

    def vnow() -> float:
        return (wallclock.perf_counter() - start) * scale

    stop = threading.Event()

    def issuer():
        next_issue = 0.0
        while not stop.is_set():
            t = vnow()
            if t >= config.duration:
                break
            if t >= next_issue:
                session.issue_round(min(t, config.duration))
                next_issue += config.issue_interval
            wallclock.sleep(0.001)

    def consumer():
        while True:
            if exchange.pending_messages():
                t = min(vnow(), config.duration)
                for trade in exchange.process_next(t):
                    session.bookkeep(trade)
            elif stop.is_set():
                break
            else:
                wallclock.sleep(0.0002)

    def trader_loop(trader: Trader):
        pause = max(trader.requote_interval / scale / 4.0, 0.0005)
        while not stop.is_set():
            t = vnow()
            if t >= config.duration:
                break
            order = trader.poll(MarketView(t, exchange))
            if order is not None:
                exchange.enqueue_order(order)
            wallclock.sleep(pause)

    threads = [threading.Thread(target=issuer, name="issuer"),
               threading.Thread(target=consumer, name="consumer")]
    threads += [threading.Thread(target=trader_loop, args=(tr,), name=tr.trader_id)
                for tr in session.buyers + session.sellers]
    for th in threads:
        th.start()
    deadline = start + config.duration / scale
    while wallclock.perf_counter() < deadline:
        wallclock.sleep(0.002)
    stop.set()
    for th in threads:
        th.join()


def write_snapshots_csv(records: list[FeatureRecord], path):
    """Snapshot CSV: 14 columns in the canonical feature order."""
    with open(path, "w", newline="") as f:
        f.write(CSV_HEADER + "\n")
        writer = csv.writer(f)
        for r in records:
            writer.writerow([_fmt(v) for v in r.to_row()])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_snapshots_csv(path) -> list[list[float]]:
    """Read a snapshot CSV back as rows of floats (header checked)."""
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError("%s: unexpected snapshot header" % path)
        for line in f:
            line = line.strip()
            if line:
                rows.append([float(x) for x in line.split(",")])
    return rows


# -- plain key-value session config files -----------------------------------

def _parse_population(text: str) -> list[tuple[str, int]]:
    out = []
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, count = part.partition(":")
        out.append((canonical_strategy(name), int(count)))
    return out


def load_config(path) -> SessionConfig:
    """Parse a ``key=value`` session config file.

    Keys: duration, seed, mode, buyers, sellers, range_low, range_high,
    issue_interval, stepmode (populations look like ``ZIC:10,ZIP:10``).
    """
    values: dict[str, str] = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ConfigError("%s: line %d: expected key=value" % (path, lineno))
            values[key.strip()] = value.strip()
    try:
        config = SessionConfig(
            buyers=_parse_population(values["buyers"]),
            sellers=_parse_population(values["sellers"]),
            seed=int(values["seed"]),
            duration=float(values.get("duration", 3600)),
            mode=values.get("mode", LOCKSTEP).upper(),
            range_low=int(values.get("range_low", 50)),
            range_high=int(values.get("range_high", 150)),
            issue_interval=float(values.get("issue_interval", 30)),
            stepmode=values.get("stepmode", "JITTERED").upper(),
            time_scale=float(values.get("time_scale", 60)),
        )
    except KeyError as e:
        raise ConfigError("%s: missing required key %s" % (path, e)) from None
    config.validate()
    return config

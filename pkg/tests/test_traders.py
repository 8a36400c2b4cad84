"""Strategy behaviour: quote rules, learning updates, limit discipline."""

import math
import random
import statistics

import pytest

from dtxsim.exchange import ASK, BID, Exchange, Order, Shout, Trade
from dtxsim.traders import (AaState, CustomerOrder, GdxTrader, GiveawayTrader,
                            MarketEvent, MarketView, ZicTrader, ZipState,
                            ZipTrader, AaTrader, aa_quote_price, aa_target,
                            aa_update, canonical_strategy, gdx_belief,
                            gdx_quote_price, giveaway_price, init_aa_state,
                            init_zip_state, zic_price, zip_apply_target,
                            zip_quote_price, zip_update)


def assignment(side, limit, tid="T1", t=0.0):
    return CustomerOrder(tid, side, limit, t)


class TestGiveaway:
    def test_buyer_quotes_limit(self):
        assert giveaway_price(assignment(BID, 120)) == 120

    def test_seller_quotes_limit(self):
        assert giveaway_price(assignment(ASK, 80)) == 80

    def test_no_assignment_no_quote(self):
        assert giveaway_price(None) is None


class TestZic:
    def test_buyer_range(self):
        rng = random.Random(0)
        draws = {zic_price(BID, 100, rng, 1, 400) for _ in range(5000)}
        assert min(draws) >= 1 and max(draws) <= 100
        assert 1 in draws and 100 in draws  # all values admissible

    def test_seller_range(self):
        rng = random.Random(0)
        draws = {zic_price(ASK, 100, rng, 1, 200) for _ in range(5000)}
        assert min(draws) >= 100 and max(draws) <= 200

    def test_reproducible_with_fixed_rng(self):
        assert zic_price(ASK, 100, random.Random(7), 1, 200) == \
            zic_price(ASK, 100, random.Random(7), 1, 200)

    def test_uniform_mean_within_three_sigma(self):
        rng = random.Random(123)
        n = 100_000
        mean = statistics.fmean(zic_price(BID, 100, rng, 1, 400) for _ in range(n))
        # U{1..100}: mean 50.5, var (100^2 - 1)/12
        sigma = math.sqrt((100 ** 2 - 1) / 12 / n)
        assert abs(mean - 50.5) <= 3 * sigma

    def test_degenerate_interval_quotes_limit(self):
        rng = random.Random(0)
        assert zic_price(ASK, 500, rng, 1, 400) == 500


class TestZip:
    def test_quote_formula(self):
        state = ZipState(margin=0.10, beta=0.3, momentum=0.0)
        assert zip_quote_price(state, ASK, 100) == 110

    def test_buyer_quote_below_limit(self):
        state = ZipState(margin=-0.25, beta=0.3, momentum=0.0)
        assert zip_quote_price(state, BID, 100) == 75

    def test_hand_evaluated_update(self):
        # price 110, target 105, beta 0.5, momentum 0 -> price 107.5, margin 0.075
        state = ZipState(margin=0.10, beta=0.5, momentum=0.0)
        zip_quote_price(state, ASK, 100)
        zip_apply_target(state, ASK, 105.0)
        assert state.price == pytest.approx(107.5)
        assert state.margin == pytest.approx(0.075)

    def test_momentum_blends_changes(self):
        state = ZipState(margin=0.10, beta=0.5, momentum=0.4, last_change=2.0)
        zip_quote_price(state, ASK, 100)
        zip_apply_target(state, ASK, 105.0)
        # change = 0.4*2.0 + 0.6*(0.5*(105-110)) = -0.7
        assert state.last_change == pytest.approx(-0.7)
        assert state.price == pytest.approx(109.3)

    def test_buyer_clamped_at_limit(self):
        state = ZipState(margin=-0.02, beta=1.0, momentum=0.0)
        zip_quote_price(state, BID, 100)
        zip_apply_target(state, BID, 200.0)  # pushes past the limit
        assert state.margin == 0.0
        assert zip_quote_price(state, BID, 100) == 100

    def test_seller_margin_never_negative(self):
        state = ZipState(margin=0.05, beta=1.0, momentum=0.0)
        zip_quote_price(state, ASK, 100)
        zip_apply_target(state, ASK, 10.0)
        assert state.margin == 0.0

    @pytest.mark.parametrize("side", [BID, ASK])
    def test_margin_sign_invariant_under_random_events(self, side):
        rng = random.Random(11)
        state = init_zip_state(side, rng)
        limit = 100
        zip_quote_price(state, side, limit)
        for k in range(500):
            trade_price = rng.randint(50, 150)
            deal = rng.random() < 0.6
            event = MarketEvent(
                trades=(Trade(float(k), trade_price, 1, "B", "S", ASK, 200, 1),) if deal else (),
                bid_improved=rng.random() < 0.3, bid_hit=deal and rng.random() < 0.5,
                ask_improved=rng.random() < 0.3, ask_lifted=deal and rng.random() < 0.5,
                best_bid=rng.randint(50, 100), best_ask=rng.randint(100, 150))
            zip_update(state, side, event, rng, active=True)
            if side == BID:
                assert -1.0 <= state.margin <= 0.0
                assert zip_quote_price(state, side, limit) <= limit
            else:
                assert state.margin >= 0.0
                assert zip_quote_price(state, side, limit) >= limit

    def test_raises_margin_when_trade_beats_price(self):
        rng = random.Random(1)
        state = ZipState(margin=0.05, beta=0.3, momentum=0.0)
        zip_quote_price(state, ASK, 100)  # price 105
        event = MarketEvent(trades=(Trade(1.0, 120, 1, "B", "S", ASK, 200, 1),),
                            bid_improved=False, bid_hit=False,
                            ask_improved=False, ask_lifted=True,
                            best_bid=None, best_ask=None)
        zip_update(state, ASK, event, rng, active=True)
        assert state.margin > 0.05


def shout(order_id, side, price, accepted):
    return Shout(order_id, float(order_id), side, price, accepted)


class TestGdx:
    def test_belief_worked_example(self):
        # accepted ask at 100, bid at 98, no unaccepted asks -> q(95) = 1.0
        window = [shout(0, ASK, 100, True), shout(1, BID, 98, False)]
        assert gdx_belief(window, 95, ASK) == pytest.approx(1.0)

    def test_belief_counts(self):
        window = [shout(0, ASK, 100, True), shout(1, ASK, 90, False),
                  shout(2, BID, 98, False)]
        # at 95: accepted asks >= 95 -> 1; bids >= 95 -> 1; unaccepted asks <= 95 -> 1
        assert gdx_belief(window, 95, ASK) == pytest.approx(2 / 3)

    def test_belief_above_all_observations_is_zero(self):
        window = [shout(0, ASK, 100, True), shout(1, BID, 98, False)]
        assert gdx_belief(window, 200, ASK) == 0.0

    def test_buyer_belief_mirrors(self):
        window = [shout(0, BID, 100, True), shout(1, ASK, 102, False)]
        # buyer at 105: accepted bids <= 105 -> 1; asks <= 105 -> 1; none against
        assert gdx_belief(window, 105, BID) == pytest.approx(1.0)
        assert gdx_belief(window, 10, BID) == 0.0

    def test_seller_belief_monotone_non_increasing(self):
        rng = random.Random(4)
        for _ in range(50):
            window = [shout(i, BID if rng.random() < 0.5 else ASK,
                            rng.randint(50, 150), rng.random() < 0.5)
                      for i in range(30)]
            beliefs = [gdx_belief(window, p, ASK) for p in range(40, 160)]
            assert all(a >= b for a, b in zip(beliefs, beliefs[1:]))

    # this window pins the beliefs q(100) = 0.5 and q(110) = 0.25:
    # asks at 100: 1 accepted, 2 unaccepted; asks at 110: 1 accepted, 1 unaccepted
    DP_WINDOW = [shout(0, ASK, 100, True), shout(1, ASK, 100, False),
                 shout(2, ASK, 100, False), shout(3, ASK, 110, True),
                 shout(4, ASK, 110, False)]

    def test_dp_horizon_one_tie_breaks_low_for_seller(self):
        # limit 90: V = max(0.5*10, 0.25*20) = 5 at both prices -> pick 100
        assert gdx_belief(self.DP_WINDOW, 100, ASK) == pytest.approx(0.5)
        assert gdx_belief(self.DP_WINDOW, 110, ASK) == pytest.approx(0.25)
        assert gdx_quote_price(self.DP_WINDOW, ASK, 90, horizon=1) == 100

    def test_longer_horizon_can_hold_out_for_more(self):
        # V2 = max(0.5*10 + 0.5*V1, 0.25*20 + 0.75*V1) with V1 = 5 -> 110 wins
        deep = gdx_quote_price(self.DP_WINDOW, ASK, 90, horizon=2, gamma=1.0)
        assert deep == 110

    def test_empty_history_quotes_limit(self):
        assert gdx_quote_price([], ASK, 90, horizon=5) == 90

    def test_no_admissible_grid_quotes_limit(self):
        window = [shout(0, ASK, 60, False)]
        assert gdx_quote_price(window, ASK, 90, horizon=5) == 90

    def test_quotes_respect_limit(self):
        rng = random.Random(5)
        for _ in range(100):
            window = [shout(i, BID if rng.random() < 0.5 else ASK,
                            rng.randint(50, 150), rng.random() < 0.5)
                      for i in range(rng.randint(1, 30))]
            limit = rng.randint(50, 150)
            assert gdx_quote_price(window, ASK, limit, horizon=5) >= limit
            assert gdx_quote_price(window, BID, limit, horizon=5) <= limit


class TestAa:
    def test_r_zero_targets_equilibrium(self):
        state = AaState(r=0.0, theta=2.0, equilibrium=100.0)
        assert aa_target(state, BID, 100) == pytest.approx(100.0)
        state2 = AaState(r=0.0, theta=-3.0, equilibrium=100.0)
        assert aa_target(state2, BID, 140) == pytest.approx(100.0)

    def test_maximally_passive_buyer_targets_extreme(self):
        state = AaState(r=-1.0, theta=2.0, equilibrium=100.0)
        assert aa_target(state, BID, 140) == pytest.approx(0.0)

    def test_maximally_passive_seller_targets_cap(self):
        state = AaState(r=-1.0, theta=2.0, equilibrium=100.0)
        assert aa_target(state, ASK, 60) == pytest.approx(400.0)

    def test_maximally_aggressive_targets_limit(self):
        state = AaState(r=1.0, theta=2.0, equilibrium=100.0)
        assert aa_target(state, BID, 140) == pytest.approx(140.0)
        assert aa_target(state, ASK, 60) == pytest.approx(60.0)

    def test_target_monotone_in_r(self):
        for theta in (-4.0, -0.5, 0.0, 1.0, 2.0):
            targets = [aa_target(AaState(r=r / 20.0, theta=theta, equilibrium=100.0),
                                 BID, 140) for r in range(-20, 21)]
            assert all(a <= b + 1e-9 for a, b in zip(targets, targets[1:]))
            seller = [aa_target(AaState(r=r / 20.0, theta=theta, equilibrium=100.0),
                                ASK, 60) for r in range(-20, 21)]
            assert all(a >= b - 1e-9 for a, b in zip(seller, seller[1:]))

    def test_equilibrium_converges_to_constant_stream(self):
        state = init_aa_state(random.Random(0))
        aa_update(state, BID, 140, [100.0] * 200)
        assert state.equilibrium == pytest.approx(100.0, abs=1e-6)

    def test_equilibrium_within_observed_range(self):
        rng = random.Random(3)
        state = init_aa_state(rng)
        prices = [rng.uniform(80, 120) for _ in range(100)]
        aa_update(state, ASK, 60, prices)
        assert min(prices) <= state.equilibrium <= max(prices)

    def test_pre_trade_quote_uses_initial_margin(self):
        state = AaState(r=0.0, theta=2.0, equilibrium=None)
        assert aa_quote_price(state, BID, 100) == 90
        assert aa_quote_price(state, ASK, 100) == 110

    def test_quotes_respect_limit(self):
        rng = random.Random(6)
        for _ in range(200):
            state = init_aa_state(rng)
            if rng.random() < 0.7:
                aa_update(state, BID, 100,
                          [rng.uniform(40, 180) for _ in range(rng.randint(1, 10))])
            assert aa_quote_price(state, BID, 100) <= 100
            assert aa_quote_price(state, ASK, 100) >= 100

    def test_r_and_theta_stay_bounded(self):
        rng = random.Random(8)
        state = init_aa_state(rng)
        for _ in range(100):
            aa_update(state, BID, 120, [rng.uniform(10, 300)])
            assert -1.0 <= state.r <= 1.0
            assert -8.0 <= state.theta <= 2.0


class TestTraderShell:
    """Integration behaviour of the Trader base machinery."""

    def market(self):
        exchange = Exchange()
        for tid in ("X", "Y", "Z"):
            exchange.register_trader(tid)
        return exchange

    def test_no_assignment_no_order(self):
        exchange = self.market()
        trader = GiveawayTrader("X", BID, random.Random(0))
        assert trader.poll(MarketView(0.0, exchange)) is None

    def test_quote_carries_limit_tag(self):
        exchange = self.market()
        trader = GiveawayTrader("X", BID, random.Random(0))
        trader.assign(CustomerOrder("X", BID, 120, 0.0, serial=9))
        order = trader.poll(MarketView(0.0, exchange))
        assert order.price == 120
        assert order.limit_price == 120
        assert order.tag == 9

    def test_requote_throttled(self):
        exchange = self.market()
        trader = ZicTrader("X", BID, random.Random(0))
        trader.assign(CustomerOrder("X", BID, 120, 0.0))
        assert trader.poll(MarketView(0.0, exchange)) is not None
        assert trader.poll(MarketView(0.5, exchange)) is None  # not due yet
        assert trader.poll(MarketView(1.0, exchange)) is not None

    def test_unchanged_price_not_resubmitted(self):
        exchange = self.market()
        trader = GiveawayTrader("X", BID, random.Random(0))
        trader.assign(CustomerOrder("X", BID, 120, 0.0))
        assert trader.poll(MarketView(0.0, exchange)) is not None
        assert trader.poll(MarketView(5.0, exchange)) is None  # same price

    def test_fill_books_surplus_and_consumes_assignment(self):
        trader = GiveawayTrader("X", BID, random.Random(0))
        trader.assign(CustomerOrder("X", BID, 120, 0.0, serial=1))
        trade = Trade(1.0, 100, 1, "X", "Y", ASK, buyer_limit=120,
                      seller_limit=90, buyer_tag=1)
        surplus = trader.on_fill(trade, BID)
        assert surplus == 20
        assert trader.balance == 20
        assert trader.assignment is None

    def test_stale_fill_keeps_new_assignment(self):
        trader = GiveawayTrader("X", BID, random.Random(0))
        trader.assign(CustomerOrder("X", BID, 120, 0.0, serial=1))
        trader.assign(CustomerOrder("X", BID, 110, 30.0, serial=2))
        trade = Trade(30.1, 100, 1, "X", "Y", ASK, buyer_limit=120,
                      seller_limit=90, buyer_tag=1)
        trader.on_fill(trade, BID)
        assert trader.balance == 20
        assert trader.assignment.serial == 2

    @pytest.mark.parametrize("cls", [GiveawayTrader, ZicTrader, ZipTrader,
                                     GdxTrader, AaTrader])
    def test_identical_seed_identical_quotes(self, cls):
        def run():
            exchange = self.market()
            trader = cls("X", ASK, random.Random(42))
            # a fixed stream of market activity from two other participants
            script_rng = random.Random(7)
            quotes = []
            for k in range(120):
                t = k * 0.5
                exchange.enqueue_order(Order("Y", BID, script_rng.randint(80, 110), 1, t))
                exchange.enqueue_order(Order("Z", ASK, script_rng.randint(95, 130), 1, t))
                while exchange.pending_messages():
                    exchange.process_next(t)
                if k % 10 == 0:
                    trader.assign(CustomerOrder("X", ASK, script_rng.randint(70, 120), t))
                order = trader.poll(MarketView(t, exchange))
                quotes.append(None if order is None else order.price)
            return quotes

        assert run() == run()


def test_canonical_strategy_names():
    assert canonical_strategy("zip") == "ZIP"
    assert canonical_strategy(" Dtx ") == "DTX"
    with pytest.raises(ValueError):
        canonical_strategy("SHVR")

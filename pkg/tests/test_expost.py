import math

import numpy as np
import pytest

from h2bid import domain as D
from h2bid.expost import (DaySolveError, Variation, RealizedDay, cumulative_profit, evaluate_days,
                          realized_activation, redispatch, regulation_bid, route_hydrogen, run_variation, settle)
from h2bid.model import ContractViolation, build_model, extract_bids
from h2bid.solver import SolverConfig, solve
from factories import day_instance, heavy_activation_fixture, micro_instance, realized_day
from oracles import max_delivery_uniform, replay_hydrogen

HIGHS = SolverConfig(backend="highs")


def twenty_kg_spec():
    spec = D.ElectrolyzerSpec.default()
    return D.ElectrolyzerSpec(spec.capacity_ce, spec.min_load_e, spec.standby_power, spec.curve,
                              spec.min_down_time, 20.0)


def one_hour_day(price, deficit):
    return RealizedDay([price], [deficit], [0.0], [0.0], [0.0], [0.0])


def segments(inst):
    return [(s.p_min, s.p_max, s.slope_a, s.intercept_b) for s in inst.spec.curve.segments]


@pytest.fixture(scope="module")
def alpha_one_bids():
    out = []
    for seed in range(3):
        inst = day_instance(seed)
        model = build_model(inst.with_alpha(1.0, 1.0))
        out.append((inst, extract_bids(model, solve(model, HIGHS).x)))
    return out


class TestActivationRule:
    @pytest.mark.parametrize("price,deficit,expected", [
        (250.0, True, 1.0), (150.0, True, 0.0), (200.0, True, 1.0), (250.0, False, 0.0)])
    def test_threshold(self, price, deficit, expected):
        spec, contract = twenty_kg_spec(), D.default_contract()
        assert regulation_bid(spec, contract) == 200.0
        assert realized_activation(spec, contract, one_hour_day(price, deficit))[0] == expected


class TestRedispatch:
    def _bids(self, p_tot=8.0, up=3.0):
        curve = D.ElectrolyzerSpec.default().curve
        return D.BidSchedule(p_da=[p_tot], p_fcr=[0.0], p_mfrr_up=[up], p_mfrr_dn=[0.0],
                             states=[D.State.ONLINE], p_tot=[p_tot], h_sched=[D.evaluate_curve(curve, p_tot)])

    def _one_hour_inst(self):
        spec = D.ElectrolyzerSpec.default()
        contract = D.HydrogenContract(10.0, 0.0, 200.0, (D.TrailerSlot.all_day(1000.0, 1),))
        market = D.MarketStructure(hours_per_day=1, fcr_block_hours=1)
        return D.DayInstance(spec, market, contract, [50.0], [0.0], [10.0], [0.0], [1.0], [1.0])

    def test_activated_hour(self):
        inst = self._one_hour_inst()
        out = redispatch(self._bids(), inst, [1.0])
        assert out.consumption[0] == 5.0
        assert out.hydrogen[0] == D.evaluate_curve(inst.spec.curve, 5.0)

    def test_forbidden_band_counts_violation(self):
        inst = self._one_hour_inst()
        out = redispatch(self._bids(p_tot=1.5, up=0.9), inst, [1.0])
        assert out.hydrogen[0] == 0.0
        assert out.consumption[0] == inst.spec.standby_power
        assert out.physical_violation_hours == 1

    def test_rejects_inconsistent_bids(self):
        bad = D.BidSchedule(p_da=[9.0], p_fcr=[0.0], p_mfrr_up=[0.0], p_mfrr_dn=[0.0],
                            states=[D.State.ONLINE], p_tot=[8.0], h_sched=[100.0])
        with pytest.raises(ContractViolation):
            redispatch(bad, self._one_hour_inst(), [0.0])

    def test_no_activation_reproduces_schedule(self, alpha_one_bids):
        inst, bids = alpha_one_bids[0]
        out = redispatch(bids, inst, np.zeros(24))
        assert np.array_equal(out.hydrogen, bids.h_sched)
        assert np.array_equal(out.consumption, bids.p_da)

    def test_upward_activation_never_adds_hydrogen(self, alpha_one_bids):
        rng = np.random.default_rng(0)
        for inst, bids in alpha_one_bids:
            out = redispatch(bids, inst, rng.integers(0, 2, 24))
            assert np.all(out.hydrogen <= bids.h_sched + 1e-12)

    def test_matches_hour_by_hour_replay(self, alpha_one_bids):
        inst, bids = alpha_one_bids[1]
        alpha = np.zeros(24)
        alpha[[2, 5, 9, 13, 17, 21]] = 1.0
        out = redispatch(bids, inst, alpha)
        expected = replay_hydrogen(bids, segments(inst), alpha)
        assert out.hydrogen.tolist() == expected
        delivered = max_delivery_uniform(expected, 100.0, [1100.0] * 3)
        assert math.fsum(out.delivered) == pytest.approx(delivered, abs=1e-6)

    def test_routing_respects_trailers(self):
        contract = D.HydrogenContract(10.0, 0.0, 100.0, (D.TrailerSlot.all_day(150.0, 3),
                                                         D.TrailerSlot.all_day(120.0, 3)))
        production = np.array([180.0, 150.0, 90.0])
        routed = route_hydrogen(contract, production)
        assert routed.sum() == pytest.approx(max_delivery_uniform(production, 100.0, [150.0, 120.0]))
        assert np.all(routed.sum(axis=0) <= [150.0 + 1e-9, 120.0 + 1e-9])
        assert np.all(routed <= 100.0 + 1e-9)


class TestSettle:
    def test_activation_settlement(self):
        spec = D.ElectrolyzerSpec.default()
        contract = D.HydrogenContract(10.0, 0.0, 200.0, (D.TrailerSlot.all_day(1000.0, 1),))
        inst = D.DayInstance(spec, D.MarketStructure(hours_per_day=1, fcr_block_hours=1), contract,
                             [0.0], [0.0], [0.0], [0.0], [1.0], [1.0])
        bids = D.BidSchedule(p_da=[8.0], p_fcr=[0.0], p_mfrr_up=[3.0], p_mfrr_dn=[0.0],
                             states=[D.State.ONLINE], p_tot=[8.0], h_sched=[D.evaluate_curve(spec.curve, 8.0)])
        day = RealizedDay([250.0], [True], [0.0], [0.0], [0.0], [0.0])
        res = settle(bids, inst, day, redispatch(bids, inst, [1.0]))
        assert res.activation_settlement == 750.0

    @pytest.mark.parametrize("variation", list(Variation))
    def test_no_activation_identity(self, variation):
        inst = day_instance(8)
        day = RealizedDay.from_forecast(inst, np.full(24, 50.0), np.zeros(24, bool))
        res, sol = run_variation(variation, inst, day, HIGHS)
        assert res.activated_hours == 0
        assert abs(res.total - sol.objective) <= 1e-6

    def test_decomposition_identity(self):
        inst, day = heavy_activation_fixture()
        res, _ = run_variation(Variation.ALPHA_ONE, inst, day, HIGHS)
        c = res.components()
        assert res.total == (c["hydrogen_revenue"] + c["fcr_revenue"] + c["mfrr_revenue"] - c["da_cost"]
                             + c["activation_settlement"])
        assert res.unmet_demand_kg >= 0


class TestVariations:
    def test_noas_has_no_reserve_revenue(self):
        inst = day_instance(9)
        res, _ = run_variation(Variation.NO_AS, inst, realized_day(inst, 9), HIGHS)
        assert res.fcr_revenue == 0.0 and res.mfrr_revenue == 0.0 and res.activation_settlement == 0.0

    def test_day_ahead_ordering(self):
        inst = day_instance(10)
        day = realized_day(inst, 10)
        obj = {v: run_variation(v, inst, day, HIGHS)[1].objective for v in Variation}
        tol = 1e-6
        assert obj[Variation.ALPHA_ZERO] >= obj[Variation.ORACLE] - tol
        assert obj[Variation.ORACLE] >= obj[Variation.ALPHA_ONE] - tol
        assert obj[Variation.ALPHA_ZERO] >= obj[Variation.NO_AS] - tol

    def test_alpha_zero_unmet_demand_matches_replay(self):
        inst, day = heavy_activation_fixture()
        res, _ = run_variation(Variation.ALPHA_ZERO, inst, day, HIGHS)
        alpha = realized_activation(inst.spec, inst.contract, day)
        hourly = replay_hydrogen(res.bids, segments(inst), alpha)
        delivered = max_delivery_uniform(hourly, 100.0, [1100.0] * 3)
        assert res.unmet_demand_kg > 0
        assert res.unmet_demand_kg == max(0.0, 2000.0 - delivered)

    def test_alpha_one_robust_to_any_activation(self, alpha_one_bids):
        rng = np.random.default_rng(1)
        inst, bids = alpha_one_bids[2]
        day = realized_day(inst, 2)
        for _ in range(25):
            out = redispatch(bids, inst, rng.integers(0, 2, 24))
            res = settle(bids, inst, day, out)
            assert res.unmet_demand_kg == 0.0 and res.curtailed_kg == 0.0

    def test_solver_failure_names_the_day(self):
        inst = micro_instance(hours=4, segments=2, seed=0)
        day = RealizedDay.from_forecast(inst, np.zeros(4), np.zeros(4, bool))
        with pytest.raises(DaySolveError, match="micro-0"):
            run_variation(Variation.ALPHA_ONE, inst, day, SolverConfig(node_limit=1))

    @pytest.mark.parametrize("parse_name,expected", [("noas", Variation.NO_AS), ("a0", Variation.ALPHA_ZERO),
                                                     ("AlphaOne", Variation.ALPHA_ONE), ("oracle", Variation.ORACLE)])
    def test_parse(self, parse_name, expected):
        assert Variation.parse(parse_name) is expected


@pytest.fixture(scope="module")
def outcomes():
    days = [(day_instance(s), realized_day(day_instance(s), s)) for s in range(10)]
    return evaluate_days(days, [Variation.NO_AS, Variation.ALPHA_ZERO], HIGHS)


class TestSweep:
    def test_order_and_count(self, outcomes):
        assert [(o.index, o.variation) for o in outcomes] == [
            (i, v) for i in range(10) for v in (Variation.NO_AS, Variation.ALPHA_ZERO)]

    def test_cumulative_is_prefix_sum(self, outcomes):
        for v in (Variation.NO_AS, Variation.ALPHA_ZERO):
            daily = [o.result.total for o in outcomes if o.variation is v]
            series = cumulative_profit(outcomes, v)
            assert len(series) == 10
            assert series[-1] == pytest.approx(sum(daily), rel=1e-12)
            assert np.allclose(np.diff(series), daily[1:])

    def test_keep_going_records_failures(self):
        inst = micro_instance(hours=4, segments=2, seed=0)
        day = RealizedDay.from_forecast(inst, np.zeros(4), np.zeros(4, bool))
        out = evaluate_days([(inst, day)], [Variation.ALPHA_ONE], SolverConfig(node_limit=1), keep_going=True)
        assert out[0].result is None and "NodeLimit" in out[0].error

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from h2bid import domain as D
from factories import micro_instance, two_segment_curve

ROOT = Path(__file__).resolve().parents[1]


class TestCurve:
    def test_breakpoint_belongs_to_lower_segment(self):
        curve = two_segment_curve()
        assert D.evaluate_curve(curve, 6.0) == 18.0 * 6.0 + 4.0

    def test_zero_power_gives_zero(self):
        assert D.evaluate_curve(two_segment_curve(), 0.0) == 0.0

    @pytest.mark.parametrize("p", [0.5, 1.999, -1.0, 10.0001])
    def test_outside_operating_range(self, p):
        with pytest.raises(D.DomainError):
            D.evaluate_curve(two_segment_curve(), p)

    def test_discontinuity_reported(self):
        curve = D.ProductionCurve((D.CurveSegment(2, 6, 18, 4), D.CurveSegment(6, 10, 14, 0)))
        assert any("discontinuous" in msg for msg in curve.problems())

    def test_gap_between_segments_reported(self):
        curve = D.ProductionCurve((D.CurveSegment(2, 5, 18, 4), D.CurveSegment(6, 10, 14, 28)))
        assert any("contiguous" in msg for msg in curve.problems())

    def test_round_trip_dict(self):
        curve = two_segment_curve()
        assert D.ProductionCurve.from_dict(curve.to_dict()) == curve

    @given(st.floats(2.0, 10.0))
    def test_monotone_and_continuous(self, p):
        curve = two_segment_curve()
        eps = 1e-6
        lo = D.evaluate_curve(curve, max(2.0, p - eps))
        hi = D.evaluate_curve(curve, min(10.0, p + eps))
        assert lo <= hi
        assert hi - lo <= 20 * 2 * eps


class TestDefaultCurve:
    def test_fixture_shape(self):
        curve, meta = D.load_default_curve()
        assert len(curve.segments) == 4
        assert curve.problems() == []
        assert curve.p_min == pytest.approx(0.1 * meta["capacity_mw"])
        assert curve.p_max == meta["capacity_mw"]

    def test_specific_yield_peaks_near_thirty_percent_load(self):
        curve, _ = D.load_default_curve()
        grid = np.linspace(curve.p_min, curve.p_max, 901)
        eta = np.array([D.evaluate_curve(curve, p) / p for p in grid])
        assert grid[np.argmax(eta)] == pytest.approx(3.0, abs=0.6)
        assert eta[-1] < eta.max()

    def test_fixture_regenerates_bit_exactly(self):
        proc = subprocess.run([sys.executable, str(ROOT / "scripts/fit_default_curve.py"), "--check"])
        assert proc.returncode == 0

    def test_fit_recovers_a_piecewise_linear_target(self):
        target = two_segment_curve()
        eta = lambda u: np.array([D.evaluate_curve(target, 10 * x) / (10 * x) for x in np.atleast_1d(u)])  # noqa: E731
        fitted = D.fit_production_curve(10.0, (0.2, 0.6, 1.0), eta)
        for a, b in zip(fitted.segments, target.segments):
            assert a.slope_a == pytest.approx(b.slope_a, rel=1e-9)
            assert a.intercept_b == pytest.approx(b.intercept_b, abs=1e-8)

    def test_default_spec_is_valid(self):
        spec = D.ElectrolyzerSpec.default()
        assert spec.problems() == []
        assert spec.capacity_ce == 10.0


class TestValidation:
    def test_valid_micro_instance(self):
        assert D.validate_instance(micro_instance()) is not None

    def test_series_length_problem_listed(self):
        inst = micro_instance(hours=2)
        bad = D.DayInstance(inst.spec, inst.market, inst.contract, np.zeros(3), inst.fcr_prices,
                            inst.mfrr_up_prices, inst.mfrr_dn_prices, inst.alpha_up, inst.alpha_dn)
        with pytest.raises(D.ValidationError) as err:
            D.validate_instance(bad)
        assert "price series length" in str(err.value)

    def test_all_problems_reported_together(self):
        inst = micro_instance(hours=2)
        bad = inst.with_alpha([2.0, 0.0], [0.0, -1.0])
        problems = D.instance_problems(bad)
        assert sum("alpha out of range" in p for p in problems) == 2

    def test_trailer_window_must_be_contiguous(self):
        slot = D.TrailerSlot(100.0, [True, False, True, True])
        assert slot.problems() == ["trailer availability must be a single contiguous window"]
        assert D.TrailerSlot(100.0, [False, True, True, False]).problems() == []

    def test_standby_must_stay_below_min_load(self):
        spec = D.ElectrolyzerSpec(10.0, 2.0, 2.5, two_segment_curve(), 2, 17.0)
        assert "standby power must be in [0, minimum load)" in spec.problems()

    def test_unreachable_demand(self):
        contract = D.HydrogenContract(10.0, 1e6, 100.0, (D.TrailerSlot.all_day(1e7),))
        assert any("exceeds" in p for p in contract.problems(two_segment_curve()))

    def test_market_blocks(self):
        m = D.MarketStructure()
        assert m.n_blocks == 6
        assert [m.block_of(t) for t in (0, 3, 4, 23)] == [0, 0, 1, 5]
        assert D.MarketStructure(hours_per_day=10).problems()


class TestBidSchedule:
    def _bids(self, **over):
        base = dict(p_da=[4.1, 0.0], p_fcr=[0.0], p_mfrr_up=[0.0, 0.0], p_mfrr_dn=[0.0, 0.0],
                    states=[D.State.ONLINE, D.State.OFF], p_tot=[4.0, 0.0], h_sched=[70.0, 0.0],
                    standby_draw=[0.1, 0.0])
        base.update(over)
        return D.BidSchedule(**base)

    def test_consistent_schedule(self):
        assert self._bids().problems(D.MarketStructure(hours_per_day=2, fcr_block_hours=2)) == []

    def test_day_ahead_identity_checked(self):
        problems = self._bids(p_da=[5.0, 0.0]).problems(D.MarketStructure(hours_per_day=2, fcr_block_hours=2))
        assert problems and "day-ahead" in problems[0]

    def test_bid_below_minimum(self):
        problems = self._bids(p_mfrr_up=[0.05, 0.0]).problems(D.MarketStructure(hours_per_day=2, fcr_block_hours=2))
        assert problems == ["mFRR up bid outside [0.1, 10.0]"]

    def test_objective_of_fixed_schedule(self):
        inst = micro_instance(hours=2)
        bids = self._bids()
        expected = 10.0 * 70.0 - 4.1 * inst.da_prices[0]
        assert D.schedule_objective(bids, inst) == pytest.approx(expected)

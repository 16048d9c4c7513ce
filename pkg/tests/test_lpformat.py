import numpy as np
import pytest

from h2bid.lpformat import LpParseError, column_names, dumps, read_lp, write_lp
from h2bid.model import build_model
from h2bid.solver import SolverConfig, solve
from factories import day_instance, lp_model, micro_instance


def assert_same_model(a, b):
    assert np.array_equal(a.objective, b.objective)
    assert (a.A != b.A).nnz == 0
    assert np.array_equal(a.rhs, b.rhs)
    assert list(a.sense) == list(b.sense)
    assert np.array_equal(a.lo, b.lo) and np.array_equal(a.hi, b.hi)
    assert np.array_equal(a.integrality, b.integrality)
    assert a.tags == b.tags


class TestRoundTrip:
    @pytest.mark.parametrize("inst", [micro_instance(hours=3, segments=2, seed=1), day_instance(6)],
                             ids=["micro", "day"])
    def test_lossless(self, inst):
        model = build_model(inst)
        back, names = read_lp(dumps(model))
        assert names == column_names(model)
        assert_same_model(model, back)

    def test_file_round_trip_solves_identically(self, tmp_path):
        model = build_model(micro_instance(hours=4, segments=2, seed=5))
        path = tmp_path / "day.lp"
        write_lp(model, path)
        back, _ = read_lp(path)
        cfg = SolverConfig(backend="highs")
        assert solve(back, cfg).objective == solve(model, cfg).objective

    def test_fixed_and_ranged_bounds(self):
        model = lp_model([1.0, -2.5], [[1.0, 1.0]], [3.0], lo=[0.5, -1.0], hi=[0.5, 2.0])
        text = dumps(model)
        assert " x0 = 0.5\n" in text and " -1.0 <= x1 <= 2.0\n" in text
        assert_same_model(model, read_lp(text)[0])


class TestParse:
    def test_minimize_flips_sign(self):
        model, names = read_lp("Minimize\n obj: 2 x + 3 y\nSubject To\n c.0: x + y >= 1\nEnd\n")
        assert names == ["x", "y"]
        assert np.array_equal(model.objective, [-2.0, -3.0])
        assert model.tags == ("c",)

    def test_row_without_relation(self):
        with pytest.raises(LpParseError, match="line 4"):
            read_lp("Maximize\n obj: x\nSubject To\n c.0: x + y\nEnd\n")

    def test_text_outside_sections(self):
        with pytest.raises(LpParseError):
            read_lp("x + y <= 3\nEnd\n")

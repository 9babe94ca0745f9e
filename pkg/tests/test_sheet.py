import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from stablesheets.lepage import ArrivalSequence, Box, LePageState, draw_lepage_state
from stablesheets.rng import stream
from stablesheets.sheet import (
    GridSheet,
    cumulate,
    discretize_lepage,
    eval_piecewise,
    grid_index,
    lepage_sheet,
    read_sheets,
    reconstruct_increment,
    sample_increments,
    write_sheets,
)

int_fields = st.integers(1, 3).flatmap(
    lambda d: st.integers(1, 5).flatmap(
        lambda n: hnp.arrays(np.float64, (n,) * d, elements=st.integers(-1000, 1000).map(float))
    )
)


class TestGridIndex:
    @given(st.floats(0.0, 1.0), st.integers(1, 4096))
    def test_defining_inequality(self, x, n):
        m = int(grid_index(x, n))
        assert x <= m / n
        assert m == 0 or x > (m - 1) / n

    def test_gridpoints_map_to_themselves(self):
        n = 10
        assert np.array_equal(grid_index(np.arange(n + 1) / n, n), np.arange(n + 1))


class TestCumulate:
    def test_small_2d(self):
        inc = np.array([[1.0, 2.0], [3.0, 4.0]])
        vals = cumulate(inc)
        assert vals.tolist() == [[0, 0, 0], [0, 1, 3], [0, 4, 10]]

    @given(int_fields)
    def test_round_trip_exact(self, inc):
        # integer-valued increments make every partial sum exact
        sheet = GridSheet.from_increments(inc)
        for n in np.ndindex(*inc.shape):
            assert reconstruct_increment(sheet, tuple(i + 1 for i in n)) == inc[n]

    def test_reconstruct_out_of_range(self):
        with pytest.raises(IndexError):
            reconstruct_increment(GridSheet.from_increments(np.ones(3)), 4)

    def test_d2_single_cell(self):
        s = GridSheet.from_increments([[2.5]])
        assert s.values.tolist() == [[0.0, 0.0], [0.0, 2.5]]

    @given(int_fields, st.data())
    def test_dirty_region_update(self, inc, data):
        sheet = GridSheet.from_increments(inc)
        n = tuple(data.draw(st.integers(1, inc.shape[0])) for _ in range(inc.ndim))
        sheet.add_to_increment(n, 7.0)
        assert np.array_equal(sheet.values, cumulate(sheet.increments))


class TestSampling:
    def test_cap(self, rng):
        with pytest.raises(MemoryError):
            sample_increments(1.0, 64, 3, rng, max_cells=1000)

    def test_dimension_cap(self, rng):
        with pytest.raises(ValueError):
            sample_increments(1.0, 2, 4, rng)

    def test_gaussian_variance(self):
        # alpha = 2: Var U(1) = 2 for every N
        u1 = np.array([sample_increments(2.0, 16, 1, stream(2, "g", i)).values[-1] for i in range(4000)])
        assert abs(u1.var() - 2.0) < 4 * 2.0 * np.sqrt(2 / u1.size)


class TestEvaluation:
    def test_piecewise_uses_right_gridpoint(self):
        s = GridSheet.from_increments([1.0, 2.0, 4.0, 8.0])
        assert eval_piecewise(s, 0.0) == 0.0
        assert eval_piecewise(s, 0.25) == 1.0
        assert eval_piecewise(s, 0.26) == 3.0
        assert eval_piecewise(s, 1.0) == 15.0
        assert eval_piecewise(s, [[0.1], [0.9]]).tolist() == [1.0, 15.0]

    def test_outside_cube(self):
        with pytest.raises(ValueError):
            eval_piecewise(GridSheet.from_increments([1.0]), 1.5)

    def test_lepage_sheet_single_atom(self):
        s = LePageState(1.0, Box.unit(1), [1.0], ArrivalSequence([2.0]), [[0.4]])
        w = (2 / np.pi) / 2.0
        assert lepage_sheet(s, 0.39) == 0.0
        assert lepage_sheet(s, 0.4) == pytest.approx(w)
        assert lepage_sheet(s, [[0.1], [1.0]]).tolist() == pytest.approx([0.0, w])

    def test_lepage_sheet_fast_path_matches_kernel(self, rng):
        s = draw_lepage_state(1.0, Box.unit(1), 500, rng)
        x = rng.random((50, 1))
        direct = np.array([s.weights[s.vs[:, 0] <= xi[0]].sum() for xi in x])
        np.testing.assert_allclose(lepage_sheet(s, x), direct, atol=1e-12)

    def test_unit_domain_required(self, rng):
        s = draw_lepage_state(1.0, Box((0.0,), (2.0,)), 10, rng)
        with pytest.raises(ValueError):
            lepage_sheet(s, 0.5)


class TestCoupling:
    @pytest.mark.parametrize("d,n", [(1, 64), (2, 16), (3, 4)])
    def test_gridpoint_identity(self, d, n):
        s = draw_lepage_state(1.3, Box.unit(d), 800, stream(5, "couple", d))
        grid = discretize_lepage(s, n)
        m = np.indices((n + 1,) * d).reshape(d, -1).T
        np.testing.assert_allclose(grid.values[tuple(m.T)], lepage_sheet(s, m / n), atol=1e-12)

    def test_total_mass(self, rng):
        s = draw_lepage_state(0.8, Box.unit(2), 300, rng)
        assert discretize_lepage(s, 8).increments.sum() == pytest.approx(s.weights.sum(), rel=1e-12)

    def test_empty_state(self):
        s = draw_lepage_state(1.0, Box.unit(1), 5, stream(0)).truncate(0)
        assert np.all(discretize_lepage(s, 4).values == 0.0)


class TestSerialisation:
    def test_binary_round_trip_bitwise(self, rng):
        s = sample_increments(0.9, 7, 2, rng, seed=99)
        back = GridSheet.from_bytes(s.to_bytes())
        assert back.increments.tobytes() == s.increments.tobytes()
        assert (back.alpha, back.seed) == (0.9, 99)
        assert np.array_equal(back.values, s.values)

    def test_optional_fields(self):
        back = GridSheet.from_bytes(GridSheet.from_increments([1.0]).to_bytes())
        assert back.alpha is None and back.seed is None

    def test_multi_record_file(self, tmp_path, rng):
        sheets = [sample_increments(1.0, 4, 1, rng), sample_increments(1.0, 3, 2, rng)]
        write_sheets(tmp_path / "s.bin", sheets)
        back = list(read_sheets(tmp_path / "s.bin"))
        assert [b.increments.shape for b in back] == [(4,), (3, 3)]

    def test_bad_magic(self):
        with pytest.raises(ValueError):
            GridSheet.from_bytes(b"XXXX" + bytes(30))

    def test_truncated(self):
        data = GridSheet.from_increments([1.0, 2.0]).to_bytes()
        with pytest.raises(ValueError):
            GridSheet.from_stream(io.BytesIO(data[:-3]))

    def test_csv(self):
        text = GridSheet.from_increments([[1.0, 2.0], [3.0, 4.0]]).to_csv().splitlines()
        assert text[0] == "m1,m2,x1,x2,value"
        assert len(text) == 1 + 9
        assert text[-1] == "2,2,1.0,1.0,10.0"

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cooplearn.data import (
    DataError,
    DataView,
    MultiViewDataset,
    center_response,
    load_view,
    read_numeric_csv,
    standardize,
    write_csv,
)


class TestCsv:
    def test_round_trip_is_exact(self, tmp_path, rng):
        m = rng.standard_normal((7, 3)) * 1e3
        write_csv(tmp_path / "a.csv", m, ["a", "b", "c"])
        back, header = read_numeric_csv(tmp_path / "a.csv")
        assert header == ("a", "b", "c")
        assert np.array_equal(back, m)

    def test_ragged_row_names_row(self, tmp_path):
        (tmp_path / "r.csv").write_text("a,b\n1,2\n3\n")
        with pytest.raises(DataError, match="ragged row 2"):
            read_numeric_csv(tmp_path / "r.csv")

    def test_non_numeric_cell_names_position(self, tmp_path):
        (tmp_path / "r.csv").write_text("a,b\n1,2\n3,x\n")
        with pytest.raises(DataError, match=r"row 2, col 2"):
            read_numeric_csv(tmp_path / "r.csv")

    def test_missing_value(self, tmp_path):
        (tmp_path / "r.csv").write_text("a,b\n1,nan\n")
        with pytest.raises(DataError, match="non-finite"):
            read_numeric_csv(tmp_path / "r.csv")

    def test_empty_and_missing_file(self, tmp_path):
        (tmp_path / "e.csv").write_text("")
        with pytest.raises(DataError, match="empty"):
            read_numeric_csv(tmp_path / "e.csv")
        with pytest.raises(DataError, match="no such file"):
            read_numeric_csv(tmp_path / "nope.csv")

    def test_headerless(self, tmp_path):
        (tmp_path / "h.csv").write_text("1,2\n3,4\n")
        v = load_view(tmp_path / "h.csv", has_header=False, name="h")
        assert v.column_names == ("V1", "V2")
        assert v.matrix.tolist() == [[1, 2], [3, 4]]


class TestStandardize:
    def test_population_sd(self):
        s = standardize(DataView("a", np.array([[1.0], [3.0]])))
        assert s.column_means[0] == 2.0
        assert s.column_sds[0] == 1.0
        assert s.matrix[:, 0].tolist() == [-1.0, 1.0]

    def test_constant_column_is_zeroed(self):
        s = standardize(DataView("a", np.array([[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]])))
        assert np.all(s.matrix[:, 1] == 0)
        assert s.column_sds[1] == 1.0

    def test_single_row_rejected(self):
        with pytest.raises(DataError, match="insufficient rows"):
            standardize(DataView("a", np.ones((1, 2))))

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, (12, 3), elements=st.floats(-1e3, 1e3, allow_nan=False)))
    def test_transform_round_trip(self, m):
        s = standardize(DataView("a", m))
        assert np.allclose(s.destandardize()[:, s.column_sds != 1.0], m[:, s.column_sds != 1.0],
                           atol=1e-8 * (1 + np.abs(m).max()))
        assert np.allclose(s.transform(m), s.matrix, atol=1e-9)
        assert np.allclose(s.matrix.mean(axis=0), 0, atol=1e-9)


class TestResponse:
    def test_gaussian_centering(self):
        r = center_response([1.0, 2.0, 6.0])
        assert r.mean == 3.0
        assert r.values.tolist() == [-2.0, -1.0, 3.0]
        assert np.array_equal(r.raw(), [1.0, 2.0, 6.0])

    def test_binomial_requires_01(self):
        with pytest.raises(DataError, match="binomial"):
            center_response([0, 2], "binomial")
        assert center_response([0, 1], "binomial").values.tolist() == [0, 1]


class TestDataset:
    def test_row_mismatch(self, rng):
        with pytest.raises(DataError, match="rows"):
            MultiViewDataset.build([rng.standard_normal((5, 2)), rng.standard_normal((4, 2))], np.ones(5))

    def test_duplicate_names(self, rng):
        a = DataView("a", rng.standard_normal((5, 2)))
        with pytest.raises(DataError, match="unique"):
            MultiViewDataset.build([a, a], rng.standard_normal(5))

    def test_take_restandardizes_on_subset(self, rng):
        ds = MultiViewDataset.build([rng.standard_normal((10, 2))], rng.standard_normal(10))
        sub = ds.take(np.arange(6))
        raw = ds.raw[0].matrix[:6]
        assert np.allclose(sub.views[0].column_means, raw.mean(axis=0))
        assert np.allclose(sub.response.mean, ds.raw_y[:6].mean())

    def test_views_are_read_only(self, rng):
        ds = MultiViewDataset.build([rng.standard_normal((4, 2))], rng.standard_normal(4))
        with pytest.raises(ValueError):
            ds.views[0].matrix[0, 0] = 1.0

import numpy as np
import pytest

from dominogp.errors import CsvFormatError
from dominogp.series import (
    Dataset,
    SyntheticSpec,
    TimeSeries,
    generate_synthetic,
    make_grid,
    read_dataset_csv,
    split_holdout,
    split_query,
    write_dataset_csv,
)


class TestMakeGrid:
    def test_integer_grid(self):
        g = make_grid(0, 1, 3)
        assert np.array_equal(g.points(), [0.0, 1.0, 2.0])

    def test_fractional_step(self):
        g = make_grid(0, 0.5, 5)
        assert g.points()[-1] == 2.0

    def test_rejects_negative_step(self):
        with pytest.raises(ValueError):
            make_grid(10, -1, 3)

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            make_grid(0, 1, 1)


class TestGenerateSynthetic:
    def test_pure_trend_is_exact(self):
        grid = make_grid(0, 1, 20)
        spec = SyntheticSpec(trend_slope=2.0, trend_intercept=1.0, noise_std=0.0)
        ds = generate_synthetic(spec, grid, 3)
        t = grid.points()
        for s in ds.series:
            assert np.array_equal(s.values, 1.0 + 2.0 * t)

    def test_pure_sinusoid_bounded(self):
        grid = make_grid(0, 1, 11)
        spec = SyntheticSpec(
            periodic_components=((1.0, grid.span, 0.0),),
            noise_std=0.0,
            amp_jitter=0.0,
            phase_jitter=0.0,
        )
        ds = generate_synthetic(spec, grid, 2)
        for s in ds.series:
            assert abs(s.values[0]) < 1e-12
            assert np.all(np.abs(s.values) <= 1.0 + 1e-12)

    def test_zero_noise_matches_closed_form(self):
        grid = make_grid(2.0, 0.25, 40)
        spec = SyntheticSpec(
            trend_slope=0.3,
            trend_intercept=-1.0,
            periodic_components=((2.0, 5.0, 0.4), (0.5, 1.7, -0.2)),
            noise_std=0.0,
            amp_jitter=0.0,
            phase_jitter=0.0,
        )
        ds = generate_synthetic(spec, grid, 2)
        t = grid.points()
        expected = -1.0 + 0.3 * t
        expected = expected + 2.0 * np.sin(2 * np.pi * t / 5.0 + 0.4)
        expected = expected + 0.5 * np.sin(2 * np.pi * t / 1.7 - 0.2)
        for s in ds.series:
            np.testing.assert_allclose(s.values, expected, rtol=0, atol=1e-14)

    def test_same_seed_bit_identical_different_seed_differs(self):
        grid = make_grid(0, 1, 30)
        spec = SyntheticSpec(periodic_components=((1.0, 7.0, 0.0),), noise_std=0.5, seed=42)
        a = generate_synthetic(spec, grid, 4)
        b = generate_synthetic(spec, grid, 4)
        for sa, sb in zip(a.series, b.series):
            assert np.array_equal(sa.values, sb.values)
        from dataclasses import replace

        c = generate_synthetic(replace(spec, seed=43), grid, 4)
        assert any(
            not np.array_equal(sa.values, sc.values) for sa, sc in zip(a.series, c.series)
        )

    def test_jitter_makes_individuals_distinct(self):
        grid = make_grid(0, 1, 30)
        spec = SyntheticSpec(periodic_components=((1.0, 7.0, 0.0),), noise_std=0.0, seed=1)
        ds = generate_synthetic(spec, grid, 3)
        assert not np.array_equal(ds.series[0].values, ds.series[1].values)

    def test_rejects_single_series(self):
        with pytest.raises(ValueError):
            generate_synthetic(SyntheticSpec(), make_grid(0, 1, 5), 1)


class TestSplits:
    def _dataset(self, count=5, n=10):
        grid = make_grid(0, 1, n)
        spec = SyntheticSpec(trend_slope=1.0, noise_std=0.1, seed=0)
        return generate_synthetic(spec, grid, count)

    def test_holdout_removes_exactly_one(self):
        ds = self._dataset(5)
        train, holdout = split_holdout(ds, 2)
        assert train.count == 4
        assert holdout.id == 2
        assert all(s.id != 2 for s in train.series)

    def test_holdout_needs_three_series(self):
        ds = self._dataset(2)
        with pytest.raises(ValueError):
            split_holdout(ds, 0)

    def test_holdout_is_a_partition(self):
        ds = self._dataset(4)
        train, holdout = split_holdout(ds, 1)
        ids = sorted([s.id for s in train.series] + [holdout.id])
        assert ids == [s.id for s in ds.series]
        np.testing.assert_array_equal(holdout.values, ds.series[1].values)

    def test_query_split_lengths(self):
        ds = self._dataset(3, n=10)
        observed, target = split_query(ds.series[0], 3)
        assert len(observed) == 3
        assert len(target) == 7
        assert observed.grid.start == 0.0
        assert target.grid.start == 3.0

    def test_query_split_rejects_full_prefix(self):
        ds = self._dataset(3, n=10)
        with pytest.raises(ValueError):
            split_query(ds.series[0], 10)
        with pytest.raises(ValueError):
            split_query(ds.series[0], 0)

    def test_query_split_is_a_partition(self):
        ds = self._dataset(3, n=12)
        observed, target = split_query(ds.series[0], 5)
        recombined = np.concatenate([observed.values, target.values])
        assert np.array_equal(recombined, ds.series[0].values)


class TestCsvRoundTrip:
    def test_round_trip(self, tmp_path):
        grid = make_grid(0, 0.5, 8)
        spec = SyntheticSpec(trend_slope=0.7, noise_std=0.3, seed=9)
        ds = generate_synthetic(spec, grid, 3)
        path = tmp_path / "data.csv"
        n_rows = write_dataset_csv(ds, path)
        assert n_rows == 24
        loaded = read_dataset_csv(path)
        assert loaded.count == 3
        assert loaded.grid == grid
        for a, b in zip(ds.series, loaded.series):
            assert np.array_equal(a.values, b.values)

    def test_malformed_row_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("series_id,t,y\n0,0.0,1.0\n0,1.0,not-a-number\n")
        with pytest.raises(CsvFormatError) as err:
            read_dataset_csv(path)
        assert err.value.line == 3

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n")
        with pytest.raises(CsvFormatError):
            read_dataset_csv(path)


def test_series_rejects_nonfinite():
    grid = make_grid(0, 1, 3)
    with pytest.raises(ValueError):
        TimeSeries(0, grid, np.array([1.0, np.nan, 2.0]))


def test_dataset_rejects_mismatched_grids():
    a = TimeSeries(0, make_grid(0, 1, 3), np.zeros(3))
    b = TimeSeries(1, make_grid(0, 2, 3), np.zeros(3))
    with pytest.raises(ValueError):
        Dataset([a, b])

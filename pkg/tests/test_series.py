import numpy as np
import pytest

from counterpath.errors import DataError
from counterpath.series import (
    IngestConfig,
    MultivariateSeries,
    compute_metrics,
    load_csv,
    load_series,
    make_lag_design,
    save_series,
    walk_forward_splits,
    _format_timestamp,
    _parse_timestamp,
)


def write_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def simple_series(values, names=("a",), target=0, delta_ns=10**9):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    return MultivariateSeries(
        names=names,
        timestamps=np.arange(T, dtype=np.int64) * delta_ns,
        values=values,
        target_index=target,
        actionable_mask=np.ones(values.shape[1], dtype=bool),
    )


class TestLoadCsv:
    def test_basic_parse(self, tmp_path):
        path = write_csv(tmp_path, "t,a,b\n0,1,10\n3,2,20\n6,3,30\n9,4,40\n")
        series, report = load_csv(path, IngestConfig(target="b"))
        assert series.n_variables == 2
        assert series.n_samples == 4
        assert series.target_name == "b"
        assert series.delta_seconds == 3.0
        assert report.rows_read == 4 and report.rows_dropped == 0
        # default mask: everything but the target is actionable
        assert list(series.actionable_mask) == [True, False]

    def test_duplicate_timestamp_rejected(self, tmp_path):
        path = write_csv(tmp_path, "t,a\n0,1\n1,2\n1,3\n2,4\n")
        with pytest.raises(DataError, match="non-monotone timestamps"):
            load_csv(path, IngestConfig(target="a"))

    def test_forward_fill_keeps_length(self, tmp_path):
        path = write_csv(tmp_path, "t,a,b\n0,1,10\n1,,20\n2,3,30\n3,4,40\n")
        series, report = load_csv(path, IngestConfig(target="b", fill="forward"))
        assert series.n_samples == 4
        assert report.cells_filled == 1
        assert series.values[1, 0] == 1.0

    def test_reject_drops_leading_hole(self, tmp_path):
        path = write_csv(tmp_path, "t,a,b\n0,,10\n1,2,20\n2,3,30\n3,4,40\n")
        series, report = load_csv(path, IngestConfig(target="b"))
        assert series.n_samples == 3
        assert report.rows_dropped == 1

    def test_reject_mid_hole_breaks_grid(self, tmp_path):
        path = write_csv(tmp_path, "t,a\n0,1\n1,\n2,3\n3,4\n")
        with pytest.raises(DataError, match="non-uniform sampling"):
            load_csv(path, IngestConfig(target="a"))

    def test_unknown_target(self, tmp_path):
        path = write_csv(tmp_path, "t,a\n0,1\n1,2\n")
        with pytest.raises(DataError, match="unknown target"):
            load_csv(path, IngestConfig(target="zz"))

    def test_duplicate_header(self, tmp_path):
        path = write_csv(tmp_path, "t,a,a\n0,1,2\n1,2,3\n")
        with pytest.raises(DataError, match="header"):
            load_csv(path, IngestConfig(target="a"))

    def test_all_empty_column(self, tmp_path):
        path = write_csv(tmp_path, "t,a,b\n0,,10\n1,,20\n", name="empty.csv")
        with pytest.raises(DataError, match="all-empty column"):
            load_csv(path, IngestConfig(target="b"))

    def test_iso_timestamps(self, tmp_path):
        path = write_csv(
            tmp_path,
            "t,a\n2024-01-01T00:00:00Z,1\n2024-01-01T00:00:03Z,2\n2024-01-01T00:00:06Z,3\n",
        )
        series, _ = load_csv(path, IngestConfig(target="a"))
        assert series.delta_seconds == 3.0

    def test_first_row_hole_cannot_forward_fill(self, tmp_path):
        path = write_csv(tmp_path, "t,a\n0,\n1,2\n2,3\n")
        with pytest.raises(DataError, match="forward-fill"):
            load_csv(path, IngestConfig(target="a", fill="forward"))


class TestTimestamps:
    def test_decimal_seconds_roundtrip_exact(self):
        for ns in (0, 1, 3 * 10**9, 1234567891, 10**18 + 7):
            assert _parse_timestamp(_format_timestamp(ns)) == ns

    def test_negative_roundtrip(self):
        ns = -(3 * 10**9 + 5)
        assert _parse_timestamp(_format_timestamp(ns)) == ns

    def test_unparseable(self):
        with pytest.raises(DataError):
            _parse_timestamp("yesterday")


class TestSeriesInvariants:
    def test_gap_tolerance(self):
        ts = np.array([0, 10**9, 2 * 10**9 + 3], dtype=np.int64)  # gap beyond 1e-9 relative
        with pytest.raises(DataError, match="non-uniform"):
            MultivariateSeries(
                names=("a",), timestamps=ts, values=np.ones((3, 1)),
                target_index=0, actionable_mask=np.array([True]),
            )

    def test_values_immutable(self):
        series = simple_series([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            series.values[0, 0] = 9.0

    def test_non_finite_rejected(self):
        with pytest.raises(DataError, match="non-finite"):
            simple_series([1.0, np.nan, 3.0])

    def test_slice_rows_keeps_grid(self):
        series = simple_series(np.arange(10.0))
        part = series.slice_rows(2, 7)
        assert part.n_samples == 5
        assert part.delta_ns == series.delta_ns


class TestLagDesign:
    def test_spec_example(self):
        series = simple_series([1.0, 2.0, 3.0, 4.0])
        design = make_lag_design(series, "a", ["a"], p=2)
        assert np.array_equal(design.rows, [[2.0, 1.0], [3.0, 2.0]])
        assert np.array_equal(design.targets, [3.0, 4.0])
        assert design.feature_columns == (("a", 1), ("a", 2))

    def test_lag_order_too_large(self):
        series = simple_series([1.0, 2.0, 3.0, 4.0])
        with pytest.raises(DataError):
            make_lag_design(series, "a", ["a"], p=4)

    def test_two_variable_layout(self):
        series = simple_series(np.arange(8.0).reshape(4, 2), names=("a", "b"))
        design = make_lag_design(series, "a", ["a", "b"], p=1)
        assert design.n_features == 2
        assert design.feature_columns == (("a", 1), ("b", 1))

    def test_empty_included(self):
        series = simple_series([1.0, 2.0, 3.0])
        with pytest.raises(DataError, match="empty"):
            make_lag_design(series, "a", [], p=1)

    def test_lagging_round_trip(self):
        rng = np.random.default_rng(5)
        values = rng.standard_normal((40, 3))
        series = simple_series(values, names=("a", "b", "c"))
        p = 4
        design = make_lag_design(series, "b", ["a", "b", "c"], p=p)
        # every design cell must reproduce the original series exactly
        for i in range(design.n_rows):
            t = p + i
            for k, (name, lag) in enumerate(design.feature_columns):
                v = series.index_of(name)
                assert design.rows[i, k] == values[t - lag, v]
            assert design.targets[i] == values[t, 1]


class TestWalkForward:
    def test_spec_example(self):
        series = simple_series(np.arange(100.0))
        plan = walk_forward_splits(series, n_folds=5, min_train=50)
        assert plan.n_folds == 5
        assert plan.folds[0] == ((0, 50), (50, 60))
        assert plan.folds[-1] == ((0, 90), (90, 100))

    def test_insufficient_data(self):
        series = simple_series(np.arange(10.0))
        with pytest.raises(DataError, match="insufficient"):
            walk_forward_splits(series, n_folds=5, min_train=9)

    def test_no_overlap_exhaustive(self):
        for T in range(20, 201):
            series = simple_series(np.arange(float(T)))
            for n_folds in (2, 3, 5):
                min_train = T // 3
                plan = walk_forward_splits(series, n_folds, min_train)
                prev_end = None
                covered = 0
                for (tr_s, tr_e), (va_s, va_e) in plan.folds:
                    assert tr_s == 0 and tr_e == va_s  # trains on everything before
                    if prev_end is not None:
                        assert va_s == prev_end  # disjoint and ordered
                    covered += va_e - va_s
                    prev_end = va_e
                assert covered == T - min_train
                assert prev_end == T


class TestMetrics:
    def test_perfect_fit(self):
        m = compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert m.mae == 0 and m.mse == 0 and m.r2 == 1.0

    def test_mean_predictor_r2_zero(self):
        actual = np.array([1.0, 2.0, 3.0, 6.0])
        pred = np.full(4, actual.mean())
        m = compute_metrics(pred, actual)
        assert m.r2 == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed(self):
        # SS_res = 1 + 1 = 2, SS_tot = (1-2)^2 + (3-2)^2 = 2
        m = compute_metrics([2.0, 4.0], [1.0, 3.0])
        assert m.mae == 1.0
        assert m.mse == 1.0
        assert m.r2 == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(7)
        pred = rng.standard_normal(30)
        actual = rng.standard_normal(30)
        perm = rng.permutation(30)
        a = compute_metrics(pred, actual)
        b = compute_metrics(pred[perm], actual[perm])
        assert a.mae == pytest.approx(b.mae, rel=1e-12)
        assert a.mse == pytest.approx(b.mse, rel=1e-12)
        assert a.r2 == pytest.approx(b.r2, rel=1e-12)

    def test_constant_actual_flags_r2(self):
        m = compute_metrics([1.0, 2.0], [3.0, 3.0])
        assert not m.r2_defined
        assert np.isnan(m.r2)

    def test_mape_guard(self):
        m = compute_metrics([1.0, 2.0, 3.0], [0.0, 2.0, 3.0])
        assert m.mape_excluded == 1
        assert np.isfinite(m.mape)

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            compute_metrics([1.0], [1.0, 2.0])

    def test_r2_never_exceeds_one(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            pred = rng.standard_normal(10)
            actual = rng.standard_normal(10)
            m = compute_metrics(pred, actual)
            assert m.r2 <= 1.0 + 1e-12


class TestBundleIO:
    def test_save_load_roundtrip(self, tmp_path, granger4_series):
        directory = save_series(granger4_series, tmp_path / "bundle")
        back = load_series(directory)
        assert back.names == granger4_series.names
        assert np.array_equal(back.values, granger4_series.values)
        assert np.array_equal(back.timestamps, granger4_series.timestamps)
        assert back.target_index == granger4_series.target_index
        assert np.array_equal(back.actionable_mask, granger4_series.actionable_mask)

    def test_missing_bundle(self, tmp_path):
        with pytest.raises(DataError, match="not a series bundle"):
            load_series(tmp_path / "nope")

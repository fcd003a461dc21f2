import math

import numpy as np
import pytest
from scipy.integrate import quad

from counterpath.causality import (
    CausalityMatrix,
    GrangerResult,
    causality_matrix,
    export_heatmap,
    granger_pair,
    load_heatmap,
    paired_t_test,
    select_features,
    student_t_sf,
)
from counterpath.errors import DataError
from counterpath.series import MultivariateSeries, walk_forward_splits
from counterpath.synth import generate_var, standard_benchmarks


def t_density(x, df):
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def sf_by_quadrature(t, df):
    upper, _ = quad(t_density, t, np.inf, args=(df,), limit=200)
    return upper


class TestStudentT:
    def test_matches_quadrature_oracle(self):
        # full df sweep, t grid over [-10, 10], tolerance 1e-8
        ts = np.linspace(-10.0, 10.0, 21)
        for df in range(2, 51):
            for t in ts:
                assert student_t_sf(float(t), df) == pytest.approx(
                    sf_by_quadrature(float(t), df), abs=1e-8
                )

    def test_monotone_decreasing_in_t(self):
        for df in (2, 5, 30):
            values = [student_t_sf(t, df) for t in np.linspace(-6, 6, 61)]
            assert all(b < a for a, b in zip(values, values[1:]))

    def test_symmetry_and_bounds(self):
        assert student_t_sf(0.0, 7) == pytest.approx(0.5, abs=1e-15)
        for t in (-3.0, -0.5, 0.8, 4.2):
            p = student_t_sf(t, 9)
            assert 0.0 <= p <= 1.0
            assert p + student_t_sf(-t, 9) == pytest.approx(1.0, abs=1e-12)


class TestPairedT:
    def test_all_zero_differences(self):
        t, p = paired_t_test([0.0, 0.0, 0.0, 0.0])
        assert t == 0.0 and p == 0.5

    def test_zero_variance_positive_mean(self):
        t, p = paired_t_test([1.0, 1.0, 1.0, 1.0])
        assert p == 0.0 and t == math.inf

    def test_zero_variance_negative_mean(self):
        t, p = paired_t_test([-2.0, -2.0])
        assert p == 1.0 and t == -math.inf

    def test_reference_computation(self):
        d = [2.0, 1.5, 2.5, 2.0, 2.0]
        t, p = paired_t_test(d)
        arr = np.array(d)
        expected_t = arr.mean() / (arr.std(ddof=1) / math.sqrt(5))
        assert t == pytest.approx(expected_t, rel=1e-12)
        assert p < 0.001
        assert p == pytest.approx(sf_by_quadrature(expected_t, 4), abs=1e-10)

    def test_too_few(self):
        with pytest.raises(DataError):
            paired_t_test([1.0])


def two_var_series(x, y, names=("x", "y")):
    values = np.column_stack([x, y])
    return MultivariateSeries(
        names=names,
        timestamps=np.arange(values.shape[0], dtype=np.int64) * 3 * 10**9,
        values=values,
        target_index=1,
        actionable_mask=np.array([True, False]),
    )


class TestGrangerPair:
    def test_planted_edge_detected(self):
        hits = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            T = 1000
            x = rng.standard_normal(T)
            y = np.zeros(T)
            y[1:] = 0.8 * x[:-1] + 0.3 * rng.standard_normal(T - 1)
            series = two_var_series(x, y)
            plan = walk_forward_splits(series, 10, (4 * T) // 5)
            result = granger_pair(series, "x", "y", p=3, plan=plan)
            assert result.significant == (result.p_value < 0.05)
            if result.p_value < 0.01:
                hits += 1
        assert hits >= 18  # >= 90% detection at p < 0.01

    def test_reverse_direction_only(self):
        rng = np.random.default_rng(7)
        T = 1200
        e = np.zeros(T)
        noise = rng.standard_normal(T)
        for t in range(1, T):
            e[t] = 0.8 * e[t - 1] + noise[t]
        c = np.zeros(T)
        c[1:] = e[:-1] + 0.05 * rng.standard_normal(T - 1)  # c is a shifted copy of e
        series = two_var_series(c, e, names=("c", "e"))
        plan = walk_forward_splits(series, 10, (4 * T) // 5)
        forward = granger_pair(series, "c", "e", p=3, plan=plan)
        reverse = granger_pair(series, "e", "c", p=3, plan=plan)
        assert reverse.significant
        assert not forward.significant

    def test_independent_noise_mostly_quiet(self):
        rejections = 0
        for seed in range(20):
            series = generate_var(standard_benchmarks()["null2"], 800, seed=100 + seed)
            plan = walk_forward_splits(series, 10, 640)
            result = granger_pair(series, "n1", "n2", p=3, plan=plan)
            rejections += result.significant
        assert rejections <= 5  # near the nominal alpha, not inflated

    def test_same_variable_rejected(self, granger4_series):
        plan = walk_forward_splits(granger4_series, 4, 2000)
        with pytest.raises(DataError):
            granger_pair(granger4_series, "v1", "v1", p=2, plan=plan)

    def test_result_invariant_enforced(self):
        with pytest.raises(DataError, match="disagrees"):
            GrangerResult(
                cause="a", effect="b",
                fold_errors_restricted=np.ones(3),
                fold_errors_unrestricted=np.ones(3),
                t_stat=0.0, p_value=0.5, significant=True,
            )


class TestCausalityMatrix:
    def test_two_variable_matrix(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(600)
        y = np.zeros(600)
        y[1:] = 0.7 * x[:-1] + 0.5 * rng.standard_normal(599)
        series = two_var_series(x, y)
        plan = walk_forward_splits(series, 5, 480)
        matrix = causality_matrix(series, p=3, plan=plan)
        assert math.isnan(matrix.p_values[0, 0]) and math.isnan(matrix.p_values[1, 1])
        assert np.isfinite(matrix.p_values[0, 1]) and np.isfinite(matrix.p_values[1, 0])
        assert matrix.mask[0, 1]

    def test_granger4_smoke_recovery(self, granger4_series):
        plan = walk_forward_splits(granger4_series, 10, 2000)
        matrix = causality_matrix(granger4_series, p=5, plan=plan)
        planted = standard_benchmarks()["granger4"].planted_adjacency()
        off = ~np.eye(4, dtype=bool)
        assert np.all(matrix.mask[planted & off])

    def test_select_features(self):
        names = ("a", "b", "c")
        pv = np.full((3, 3), np.nan)
        pv[0, 1] = 0.01   # a -> b
        pv[2, 1] = 0.03   # c -> b
        pv[1, 0] = 0.8
        pv[1, 2] = 0.6
        pv[0, 2] = 0.7
        pv[2, 0] = 0.9
        mask = pv < 0.05
        np.fill_diagonal(mask, False)
        matrix = CausalityMatrix(names=names, p_values=pv, mask=mask)
        assert select_features(matrix, "b") == ["b", "a", "c"]
        assert select_features(matrix, "a") == ["a"]

    def test_export_import_roundtrip(self, tmp_path):
        names = ("a", "b")
        pv = np.full((2, 2), np.nan)
        pv[0, 1] = 0.012345678901234567
        pv[1, 0] = 0.4
        mask = pv < 0.05
        np.fill_diagonal(mask, False)
        matrix = CausalityMatrix(names=names, p_values=pv, mask=mask)
        path, mask_path = export_heatmap(matrix, tmp_path / "heat.csv")
        assert path.exists() and mask_path.exists()
        text = path.read_text()
        assert text.splitlines()[1].startswith("a,,")  # undefined diagonal is empty
        back = load_heatmap(path)
        assert back.names == names
        assert back.p_values[0, 1] == pv[0, 1]
        assert np.array_equal(back.mask, matrix.mask)

    def test_heatmap_line_count(self, tmp_path):
        names = ("a", "b")
        pv = np.full((2, 2), np.nan)
        pv[0, 1] = 0.2
        pv[1, 0] = 0.6
        matrix = CausalityMatrix(names=names, p_values=pv, mask=np.zeros((2, 2), bool))
        path, _ = export_heatmap(matrix, tmp_path / "h.csv")
        assert len(path.read_text().strip().splitlines()) == 3

import numpy as np
import pytest

from counterpath.errors import DataError
from counterpath.series import IngestConfig, load_csv, load_series, save_series
from counterpath.synth import (
    VarSystemSpec,
    companion_spectral_radius,
    generate_var,
    standard_benchmarks,
)


def test_zero_dynamics_is_white_noise():
    spec = VarSystemSpec(
        names=("a", "b"), coefficients=np.zeros((1, 2, 2)), noise_sigma=np.ones(2),
        target="a", actionable=(),
    )
    series = generate_var(spec, 4000, seed=2)
    bound = 4.0 / np.sqrt(4000)
    assert np.all(np.abs(series.values.mean(axis=0)) < bound)


def test_ar1_autocorrelation_matches_theory():
    spec = VarSystemSpec(
        names=("y",), coefficients=np.array([[[0.9]]]), noise_sigma=np.ones(1),
        target="y", actionable=(),
    )
    series = generate_var(spec, 5000, seed=4)
    x = series.values[:, 0]
    rho = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert rho == pytest.approx(0.9, abs=0.05)


def test_unstable_spec_rejected_with_radius():
    with pytest.raises(DataError, match="1.2"):
        VarSystemSpec(
            names=("y",), coefficients=np.array([[[1.2]]]), noise_sigma=np.ones(1),
            target="y", actionable=(),
        )


def test_benchmarks():
    bench = standard_benchmarks()
    assert set(bench) == {"granger4", "ga5", "null2"}
    for spec in bench.values():
        assert companion_spectral_radius(spec.coefficients) < 1.0
    g4 = bench["granger4"].planted_adjacency()
    off = g4 & ~np.eye(4, dtype=bool)
    assert off.sum() == 3
    null_adj = bench["null2"].planted_adjacency()
    assert not np.any(null_adj)


def test_determinism_per_seed():
    spec = standard_benchmarks()["null2"]
    a = generate_var(spec, 200, seed=9)
    b = generate_var(spec, 200, seed=9)
    c = generate_var(spec, 200, seed=10)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_delta_is_three_seconds():
    series = generate_var(standard_benchmarks()["null2"], 150, seed=0)
    assert series.delta_seconds == 3.0


def test_csv_roundtrip_lossless(tmp_path):
    series = generate_var(standard_benchmarks()["granger4"], 300, seed=1)
    directory = save_series(series, tmp_path / "d")
    back = load_series(directory)
    assert np.array_equal(back.values, series.values)


def test_null2_cross_covariance_small():
    series = generate_var(standard_benchmarks()["null2"], 5000, seed=6)
    cov = np.cov(series.values.T)[0, 1]
    assert abs(cov) < 4.0 / np.sqrt(5000)


def test_spec_json_roundtrip():
    spec = standard_benchmarks()["granger4"]
    back = VarSystemSpec.from_json(spec.to_json())
    assert back.names == spec.names
    assert np.array_equal(back.coefficients, spec.coefficients)
    assert back.target == spec.target
    assert back.actionable == spec.actionable


def test_short_series_rejected():
    with pytest.raises(DataError, match="T >= 100"):
        generate_var(standard_benchmarks()["null2"], 50, seed=0)

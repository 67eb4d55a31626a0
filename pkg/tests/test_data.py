import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdfool.data import (
    Dataset,
    FeatureSchema,
    SimulationConfig,
    kfold_split,
    load_csv,
    load_schema,
    rank_correlation,
    read_metadata,
    simulate_correlated_gaussian,
    spearman_correlation_matrix,
    write_csv,
    write_metadata,
    write_schema,
)
from pdfool.errors import ConfigError, DataError, RowError, SchemaError


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_feature_schema_invariants():
    with pytest.raises(SchemaError):
        FeatureSchema("c", "categorical")
    with pytest.raises(SchemaError):
        FeatureSchema("c", "categorical", ("a", "a"))
    with pytest.raises(SchemaError):
        FeatureSchema("x", "continuous", ("a",))
    with pytest.raises(SchemaError):
        FeatureSchema("x", "ordinal")


def test_dataset_rejects_duplicate_names_and_bad_categories():
    s = (FeatureSchema("x"), FeatureSchema("x"))
    with pytest.raises(SchemaError):
        Dataset(s, np.zeros((2, 2)), np.zeros(2))
    cat = (FeatureSchema("c", "categorical", ("a", "b")),)
    with pytest.raises(RowError):
        Dataset(cat, np.array([[0.0], [2.0]]), np.zeros(2))
    with pytest.raises(RowError):
        Dataset((FeatureSchema("x"),), np.array([[np.nan]]), np.zeros(1))


def test_dataset_is_read_only():
    d = Dataset((FeatureSchema("x"),), np.zeros((2, 1)), np.zeros(2))
    with pytest.raises(ValueError):
        d.rows[0, 0] = 1.0


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        path = _write(tmp_path, "x1,x2,y\n1,2,3\n4,5,6\n7,8.5,9\n")
        d = load_csv(path, [FeatureSchema("x1"), FeatureSchema("x2")], "y")
        assert (d.n, d.p) == (3, 2)
        np.testing.assert_array_equal(d.rows, [[1, 2], [4, 5], [7, 8.5]])
        np.testing.assert_array_equal(d.target, [3, 6, 9])

    def test_unknown_category_names_cell(self, tmp_path):
        path = _write(tmp_path, "colour,y\nRed,1\nPurple,0\n")
        schema = [FeatureSchema("colour", "categorical", ("Red", "Blue"))]
        with pytest.raises(RowError) as e:
            load_csv(path, schema, "y")
        assert e.value.row == 1 and e.value.column == "colour"
        assert "Purple" in str(e.value)

    def test_categories_map_to_indices(self, tmp_path):
        path = _write(tmp_path, "colour,y\nBlue,1\nRed,0\n")
        d = load_csv(path, [FeatureSchema("colour", "categorical", ("Red", "Blue"))], "y")
        np.testing.assert_array_equal(d.rows[:, 0], [1, 0])

    def test_missing_column(self, tmp_path):
        path = _write(tmp_path, "x1,y\n1,2\n")
        with pytest.raises(SchemaError):
            load_csv(path, [FeatureSchema("x1"), FeatureSchema("x2")], "y")

    def test_unparseable_and_missing_cells(self, tmp_path):
        path = _write(tmp_path, "x1,y\n1,2\nabc,3\n")
        with pytest.raises(RowError, match="row 1"):
            load_csv(path, [FeatureSchema("x1")], "y")
        path = _write(tmp_path, "x1,y\n1,2\n,3\n", "m.csv")
        with pytest.raises(RowError):
            load_csv(path, [FeatureSchema("x1")], "y")

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, ""), [FeatureSchema("x1")], "y")
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, "x1,y\n", "h.csv"), [FeatureSchema("x1")], "y")

    def test_fourteen_predictors_binary_target(self, tmp_path):
        names = [f"v{i}" for i in range(14)]
        rng = np.random.default_rng(0)
        lines = [",".join(names + ["two_year_recid"])]
        for _ in range(30):
            lines.append(",".join([str(v) for v in rng.integers(0, 5, 14)] + [str(rng.integers(0, 2))]))
        path = _write(tmp_path, "\n".join(lines) + "\n")
        d = load_csv(path, [FeatureSchema(n, "discrete") for n in names], "two_year_recid")
        assert d.p == 14 and d.n == 30
        assert set(np.unique(d.target)) <= {0.0, 1.0}


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20),
    st.lists(st.sampled_from(["Red", "Blue", "Green"]), min_size=20, max_size=20),
)
def test_csv_round_trip(tmp_path_factory, xs, cats):
    n = len(xs)
    schema = (FeatureSchema("x"), FeatureSchema("c", "categorical", ("Red", "Blue", "Green")))
    idx = [("Red", "Blue", "Green").index(c) for c in cats[:n]]
    d = Dataset(schema, np.column_stack([xs, idx]), np.array(xs) * 0.5 + 1)
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    write_csv(d, path)
    back = load_csv(path, schema, "y")
    np.testing.assert_array_equal(back.rows, d.rows)
    np.testing.assert_array_equal(back.target, d.target)


def test_schema_file_round_trip(tmp_path):
    schema = [FeatureSchema("age", "discrete"), FeatureSchema("race", "categorical", ("A", "B"))]
    write_schema(schema, tmp_path / "s.txt")
    assert load_schema(tmp_path / "s.txt") == schema


class TestKfold:
    def _ds(self, n):
        return Dataset((FeatureSchema("x"),), np.arange(n, dtype=float)[:, None], np.zeros(n))

    def test_exact_division(self):
        split = kfold_split(self._ds(10), 5, 0)
        assert sorted(np.bincount(split.fold_assignments)) == [2] * 5

    def test_remainder(self):
        split = kfold_split(self._ds(11), 5, 0)
        assert sorted(np.bincount(split.fold_assignments)) == [2, 2, 2, 2, 3]

    def test_deterministic(self):
        a = kfold_split(self._ds(37), 4, 9).fold_assignments
        b = kfold_split(self._ds(37), 4, 9).fold_assignments
        np.testing.assert_array_equal(a, b)

    def test_out_of_range(self):
        with pytest.raises(ConfigError):
            kfold_split(self._ds(5), 1, 0)
        with pytest.raises(ConfigError):
            kfold_split(self._ds(5), 6, 0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 60), st.integers(0, 1000), st.data())
    def test_partition(self, n, seed, data):
        k = data.draw(st.integers(2, n))
        split = kfold_split(self._ds(n), k, seed)
        tests = np.concatenate([split.test_indices(f) for f in range(k)])
        assert sorted(tests) == list(range(n))
        for f in range(k):
            assert set(split.train_indices(f)).isdisjoint(split.test_indices(f))
        counts = np.bincount(split.fold_assignments, minlength=k)
        assert counts.max() - counts.min() <= 1


class TestSimulator:
    def test_pairwise_correlation(self):
        d = simulate_correlated_gaussian(SimulationConfig(n_rows=100_000, seed=1))
        assert abs(np.corrcoef(d.rows[:, 0], d.rows[:, 1])[0, 1] - 0.3) <= 0.01

    def test_moments(self):
        d = simulate_correlated_gaussian(SimulationConfig(n_rows=100_000, seed=2))
        corr = np.corrcoef(d.rows.T)
        off = corr[~np.eye(6, dtype=bool)]
        assert np.all(np.abs(off - 0.3) <= 0.02)
        assert np.all(np.abs(d.rows.mean(axis=0)) <= 0.02)
        assert np.all(np.abs(d.rows.std(axis=0) - 1) <= 0.02)

    def test_noise_only_variance(self):
        cfg = SimulationConfig(n_rows=50_000, pairwise_correlation=0.0,
                               coefficient_vector=(0,) * 6, noise_sd=0.5, seed=3)
        d = simulate_correlated_gaussian(cfg)
        assert abs(d.target.var() / 0.25 - 1) <= 0.05

    def test_ols_recovers_coefficients(self):
        d = simulate_correlated_gaussian(SimulationConfig(n_rows=10_000, seed=4))
        X = np.column_stack([np.ones(d.n), d.rows])
        beta = np.linalg.solve(X.T @ X, X.T @ d.target)
        np.testing.assert_allclose(beta[1:], [1, 1, 1, 1, 1, 0], atol=0.05)

    def test_deterministic(self):
        a = simulate_correlated_gaussian(SimulationConfig(n_rows=50, seed=5))
        b = simulate_correlated_gaussian(SimulationConfig(n_rows=50, seed=5))
        np.testing.assert_array_equal(a.rows, b.rows)
        np.testing.assert_array_equal(a.target, b.target)

    def test_default_shape(self):
        cfg = SimulationConfig(n_rows=10)
        assert cfg.coefficient_vector == (1, 1, 1, 1, 1, 0)
        assert simulate_correlated_gaussian(cfg).feature_names == [f"X{i}" for i in range(1, 7)]

    @pytest.mark.parametrize("rho", [-0.2, -0.5, 1.0, 1.5])
    def test_non_positive_definite(self, rho):
        with pytest.raises(ConfigError):
            SimulationConfig(n_rows=10, pairwise_correlation=rho)

    def test_zero_rows(self):
        with pytest.raises(ConfigError):
            SimulationConfig(n_rows=0)

    def test_metadata_sidecar(self, tmp_path):
        cfg = SimulationConfig(n_rows=10, seed=3)
        write_metadata(cfg.metadata(), tmp_path / "m.txt")
        meta = read_metadata(tmp_path / "m.txt")
        assert meta["seed"] == "3" and meta["n"] == "10" and float(meta["correlation"]) == 0.3


class TestSpearman:
    def test_examples(self):
        assert rank_correlation([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
        # 1 - 6 * sum(d^2) / (n (n^2 - 1)) with d = (0, 1, 1, 0)
        assert rank_correlation([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(1 - 6 * 2 / (4 * 15))

    def test_matrix_properties(self):
        d = simulate_correlated_gaussian(SimulationConfig(n_rows=500, seed=6))
        m = spearman_correlation_matrix(d).values
        np.testing.assert_array_equal(m, m.T)
        np.testing.assert_array_equal(np.diag(m), 1.0)
        assert np.all(np.abs(m) <= 1)

    def test_ties_average_ranks(self):
        x = [1, 1, 2, 3]
        z = [1, 2, 3, 4]
        # average ranks of x: 1.5, 1.5, 3, 4
        rx = np.array([1.5, 1.5, 3, 4]) - 2.5
        rz = np.array([1, 2, 3, 4]) - 2.5
        assert rank_correlation(x, z) == pytest.approx(rx @ rz / np.sqrt((rx @ rx) * (rz @ rz)))

    def test_categorical_needs_ordering(self):
        schema = (FeatureSchema("x"), FeatureSchema("c", "categorical", ("lo", "hi", "mid")))
        d = Dataset(schema, np.array([[1, 0], [2, 2], [3, 1.0]]), np.zeros(3))
        with pytest.raises(SchemaError):
            spearman_correlation_matrix(d)
        m = spearman_correlation_matrix(d, {"c": ["lo", "mid", "hi"]})
        assert m["x", "c"] == pytest.approx(1.0)
        assert spearman_correlation_matrix(d, exclude=["c"]).names == ["x"]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([np.exp, np.arctan, lambda v: v**3]))
    def test_monotone_invariance(self, seed, fn):
        d = simulate_correlated_gaussian(SimulationConfig(n_rows=60, seed=seed))
        rows = np.array(d.rows)
        rows[:, 2] = fn(rows[:, 2])
        d2 = Dataset(d.schema, rows, d.target)
        np.testing.assert_allclose(
            spearman_correlation_matrix(d).values, spearman_correlation_matrix(d2).values, atol=1e-12
        )

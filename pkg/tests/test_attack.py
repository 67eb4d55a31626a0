from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pdfool.attack import (
    AdversarialModel,
    AllocatorClassifier,
    CompensationTable,
    ExtrapolationClassifier,
    FeatureCompensation,
    LambdaRho,
    TargetPd,
    adversarial_predict_batch,
    build_adversarial_multi,
    build_adversarial_single,
    default_multiplier,
    estimate_lambda_rho,
    generate_augmenting_sample,
    lambda_rho_from_arrays,
    load_attack,
    save_attack,
    solve_gamma,
    train_allocator,
    train_extrapolation_classifier,
)
from pdfool.data import Dataset, FeatureSchema
from pdfool.errors import ConfigError, DataError, SchemaError, UnreachableTargetError
from pdfool.explain import GridSpec, build_permuted_pd_data, compute_pd
from pdfool.learner import ConstantClassifier, FunctionPredictor, LinearPredictor, MlpConfig, train_mlp


def _ds(X, y=None):
    X = np.asarray(X, dtype=float)
    schema = tuple(FeatureSchema(f"x{j + 1}") for j in range(X.shape[1]))
    return Dataset(schema, X, np.zeros(len(X)) if y is None else np.asarray(y, float))


def _compensation(feature, column, grid_values, gamma, categorical=False):
    g = GridSpec(feature, grid_values, categorical=categorical)
    m = len(g)
    return FeatureCompensation(feature, column, g, np.ones(m), np.zeros(m), np.asarray(gamma, float), np.asarray(gamma, float))


@dataclass
class FixedAllocator:
    """Multiclass stub: sends every row to one class."""

    label: int
    n_classes: int
    n_features: int

    def predict_proba(self, X):
        out = np.zeros((len(X), self.n_classes))
        out[:, self.label] = 1.0
        return out


def _flag_x1_above(t, p):
    return ExtrapolationClassifier(FunctionPredictor(lambda X: (X[:, 0] > t) * 1.0, p), 0.5)


class TestAugmentingSample:
    def test_size_and_membership(self):
        rng = np.random.default_rng(0)
        d = _ds(np.column_stack([rng.integers(18, 90, 1000), rng.normal(size=1000)]))
        aug = generate_augmenting_sample(d, 30, seed=1)
        assert aug.rows.shape == (30_000, 2)
        for j in range(2):
            assert np.isin(aug.rows[:, j], d.rows[:, j]).all()

    def test_categorical_cells(self):
        schema = (FeatureSchema("c", "categorical", ("a", "b", "z")),)
        d = Dataset(schema, np.zeros((20, 1)), np.zeros(20))
        aug = generate_augmenting_sample(d, 50, 0)
        assert set(np.unique(aug.rows)) == {0.0, 1.0, 2.0}

    def test_single_column_matches_uniform_over_unique(self):
        col = np.repeat([1.0, 2.0, 3.0, 4.0], [5, 10, 20, 65])
        aug = generate_augmenting_sample(_ds(col[:, None]), 100, 2)
        counts = np.array([np.sum(aug.rows[:, 0] == v) for v in (1, 2, 3, 4)])
        assert stats.chisquare(counts).pvalue > 0.01

    def test_breaks_dependence(self):
        x = np.random.default_rng(3).normal(size=1000)
        aug = generate_augmenting_sample(_ds(np.column_stack([x, x])), 20, 4)
        assert abs(np.corrcoef(aug.rows.T)[0, 1]) <= 0.02

    def test_errors_and_defaults(self):
        with pytest.raises(ConfigError):
            generate_augmenting_sample(_ds([[1.0]]), 0, 0)
        assert default_multiplier(50_000) == 30 and default_multiplier(49_999) == 100
        const = generate_augmenting_sample(_ds(np.ones((5, 1))), 3, 0)
        assert np.all(const.rows == 1.0)

    def test_deterministic(self):
        d = _ds(np.random.default_rng(5).normal(size=(30, 2)))
        a = generate_augmenting_sample(d, 4, 9).rows
        np.testing.assert_array_equal(a, generate_augmenting_sample(d, 4, 9).rows)


def test_classifier_cannot_separate_identical_copies():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 2))
    d = _ds(X)
    from pdfool.attack import AugmentingSample

    cfg = MlpConfig((6, 1), "binary", max_epochs=10, seed=1)
    c = train_extrapolation_classifier(d, AugmentingSample(X.copy(), 1, 0), cfg, 0.5)
    Xt = rng.normal(size=(2000, 2))
    labels = np.r_[np.zeros(2000), np.ones(2000)]
    acc = np.mean(c.classify(np.vstack([Xt, Xt])) == labels)
    assert abs(acc - 0.5) <= 0.05


def test_threshold_tie_goes_to_extrapolation():
    c = ExtrapolationClassifier(ConstantClassifier(0.7, 1), 0.7)
    assert c.classify(np.zeros((3, 1))).all()
    with pytest.raises(ConfigError):
        ExtrapolationClassifier(ConstantClassifier(0.7, 1), 1.0)


class TestLambdaRho:
    def test_four_row_example(self):
        d = _ds([[0, 1], [0, 2], [0, 3], [0, 4]])
        f = FunctionPredictor(lambda X: X[:, 1] * 10, 2)
        c = ExtrapolationClassifier(FunctionPredictor(lambda X: (X[:, 1] == 3) * 1.0, 2), 0.5)
        lr = estimate_lambda_rho(build_permuted_pd_data(d, GridSpec("x1", [0.5])), c, f)
        assert lr.lam[0] == 0.25
        assert lr.rho[0] == pytest.approx((10 + 20 + 40) / 3, abs=1e-12)

    def test_never_flagged_gives_pd(self):
        d = _ds(np.random.default_rng(0).normal(size=(9, 2)))
        f = FunctionPredictor(lambda X: X[:, 0] * X[:, 1], 2)
        perm = build_permuted_pd_data(d, GridSpec("x1", [-1.0, 2.0]))
        lr = estimate_lambda_rho(perm, ExtrapolationClassifier(ConstantClassifier(0.0, 2), 0.5), f)
        np.testing.assert_array_equal(lr.lam, 0.0)
        np.testing.assert_allclose(lr.rho, compute_pd(f, perm).values, atol=1e-12)

    def test_always_flagged_sentinel(self):
        d = _ds(np.ones((3, 1)))
        lr = estimate_lambda_rho(
            build_permuted_pd_data(d, GridSpec("x1", [0.0])),
            ExtrapolationClassifier(ConstantClassifier(1.0, 1), 0.5),
            FunctionPredictor(lambda X: X[:, 0], 1),
        )
        assert lr.lam[0] == 1.0 and np.isfinite(lr.rho[0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0.05, 0.9), st.floats(0.05, 0.9))
    def test_lower_threshold_raises_lambda(self, seed, t1, t2):
        lo, hi = sorted((t1, t2))
        rng = np.random.default_rng(seed)
        probs = rng.uniform(size=(5, 20))
        f_vals = rng.normal(size=(5, 20))
        g = GridSpec("x1", np.arange(5.0))
        a = lambda_rho_from_arrays("x1", 0, g, probs >= lo, f_vals)
        b = lambda_rho_from_arrays("x1", 0, g, probs >= hi, f_vals)
        assert np.all(a.lam >= b.lam)


class TestSolveGamma:
    def _lr(self, lam, rho):
        g = GridSpec("x1", np.arange(float(len(lam))))
        return g, LambdaRho("x1", 0, g, np.asarray(lam, float), np.asarray(rho, float))

    def test_hand_example(self):
        g, lr = self._lr([0.4], [0.6])
        comp = solve_gamma(TargetPd("x1", g, np.array([0.5])), lr)
        assert comp.gamma[0] == pytest.approx(0.35, abs=1e-12)

    def test_full_control_and_satisfied_target(self):
        g, lr = self._lr([1.0, 0.3], [0.0, 2.5])
        comp = solve_gamma(TargetPd("x1", g, np.array([7.0, 2.5])), lr)
        assert comp.gamma[0] == 7.0
        assert comp.gamma[1] == pytest.approx(2.5, abs=1e-12)

    def test_unreachable_names_grid_values(self):
        g, lr = self._lr([0.2, 0.0, 0.0], [1.0, 1.0, 1.0])
        with pytest.raises(UnreachableTargetError) as e:
            solve_gamma(TargetPd("x1", g, np.zeros(3)), lr)
        assert e.value.grid_values == [1.0, 2.0]

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.tuples(st.floats(1e-3, 1.0), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=15)
    )
    def test_identity(self, triples):
        lam, rho, target = (np.array(v) for v in zip(*triples))
        g, lr = self._lr(lam, rho)
        comp = solve_gamma(TargetPd("x1", g, target), lr)
        assert np.all(np.abs(comp.identity_residual()) <= 1e-9 * np.maximum(1, np.abs(comp.gamma)))

    def test_target_builders(self):
        g = GridSpec("x1", [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(TargetPd.flat_at(g, 3.0).desired, 3.0)
        np.testing.assert_array_equal(TargetPd.linear(g, 2.0, -1.0).desired, [-1.0, 1.0, 3.0])
        with pytest.raises(Exception):
            TargetPd("x1", g, np.array([1.0, 2.0]))


class TestLookup:
    def test_midpoint_and_clamping(self):
        e = _compensation("x2", 1, [0.0, 1.0, 2.0], [5.0, 1.0, 3.0])
        np.testing.assert_array_equal(e.lookup([1.5, -4.0, 9.0, 1.0]), [2.0, 5.0, 3.0, 1.0])

    def test_categorical_membership(self):
        e = _compensation("c", 0, [2.0, 0.0], [7.0, 9.0], categorical=True)
        np.testing.assert_array_equal(e.lookup([0.0, 2.0]), [9.0, 7.0])
        with pytest.raises(SchemaError):
            e.lookup([1.0])


class TestAdversarialModel:
    def _single(self):
        f = FunctionPredictor(lambda X: np.sin(X[:, 0]) + X[:, 1], 2)
        comp = CompensationTable()
        comp.add(_compensation("x1", 0, [0.0, 1.0, 2.0], [10.0, 20.0, 30.0]))
        return f, build_adversarial_single(f, _flag_x1_above(0.5, 2), comp, "x1")

    def test_passthrough_and_lookup(self):
        f, a = self._single()
        X = np.array([[0.25, 3.0], [1.0, -1.0], [1.5, 0.0]])
        out = a.predict(X)
        assert out[0] == f.predict(X[:1])[0]
        assert out[1] == 20.0 and out[2] == 25.0

    def test_multi_routing(self):
        f = FunctionPredictor(lambda X: X[:, 0] + X[:, 1], 2)
        comp = CompensationTable()
        comp.add(_compensation("x1", 0, [0.0, 4.0], [0.0, 4.0]))
        comp.add(_compensation("x2", 1, [0.0, 2.0], [1.0, 3.0]))
        c = ExtrapolationClassifier(ConstantClassifier(1.0, 2), 0.5)
        X = np.array([[1.0, 1.0], [3.0, -5.0]])
        to_x2 = build_adversarial_multi(f, c, AllocatorClassifier(FixedAllocator(2, 3, 2)), comp, ["x1", "x2"])
        np.testing.assert_array_equal(to_x2.predict(X), [2.0, 1.0])
        back = build_adversarial_multi(f, c, AllocatorClassifier(FixedAllocator(0, 3, 2)), comp, ["x1", "x2"])
        np.testing.assert_array_equal(back.predict(X), f.predict(X))

    def test_allocator_class_count_checked(self):
        f, a = self._single()
        comp = CompensationTable()
        comp.add(_compensation("x1", 0, [0.0], [1.0]))
        comp.add(_compensation("x2", 1, [0.0], [1.0]))
        with pytest.raises(ConfigError):
            build_adversarial_multi(f, a.extrapolation, AllocatorClassifier(FixedAllocator(0, 2, 2)), comp, ["x1", "x2"])
        with pytest.raises(ConfigError):
            AdversarialModel(f, a.extrapolation, comp, ("x1", "x2"))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_single_multi_consistency(self, seed):
        f, a = self._single()
        multi = build_adversarial_multi(
            f, a.extrapolation, AllocatorClassifier(FixedAllocator(1, 2, 2)), a.compensation, ["x1"]
        )
        X = np.random.default_rng(seed).uniform(-1, 3, size=(25, 2))
        np.testing.assert_array_equal(multi.predict(X), a.predict(X))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_batch_equals_rows_and_passthrough(self, seed):
        f, a = self._single()
        X = np.random.default_rng(seed).uniform(-1, 3, size=(25, 2))
        batch = adversarial_predict_batch(a, X)
        np.testing.assert_array_equal(batch, [adversarial_predict_batch(a, X[i])[0] for i in range(25)])
        real = ~a.extrapolation.classify(X)
        np.testing.assert_array_equal(batch[real], f.predict(X)[real])
        assert adversarial_predict_batch(a, np.empty((0, 2))).shape == (0,)

    def test_stub_never_flagging_is_transparent(self):
        d = _ds(np.random.default_rng(0).normal(size=(30, 2)))
        f = FunctionPredictor(lambda X: X[:, 0] ** 2 - X[:, 1], 2)
        comp = CompensationTable()
        comp.add(_compensation("x1", 0, [0.0, 1.0], [99.0, 99.0]))
        a = build_adversarial_single(f, ExtrapolationClassifier(ConstantClassifier(0.0, 2), 0.5), comp, "x1")
        perm = build_permuted_pd_data(d, GridSpec("x1", [-1.0, 0.0, 1.0]))
        np.testing.assert_array_equal(compute_pd(a, perm).values, compute_pd(f, perm).values)

    def test_in_sample_identity(self):
        rng = np.random.default_rng(1)
        d = _ds(rng.normal(size=(200, 3)))
        f = FunctionPredictor(lambda X: X[:, 0] + 0.5 * X[:, 1] * X[:, 2], 3)
        c = ExtrapolationClassifier(FunctionPredictor(lambda X: 1 / (1 + np.exp(-(X[:, 0] * X[:, 1]))), 3), 0.6)
        grid = GridSpec("x1", np.linspace(-2, 2, 10))
        perm = build_permuted_pd_data(d, grid)
        comp = CompensationTable()
        target = TargetPd.linear(grid, -1.5, 0.3)
        comp.add(solve_gamma(target, estimate_lambda_rho(perm, c, f)))
        a = build_adversarial_single(f, c, comp, "x1")
        np.testing.assert_allclose(compute_pd(a, perm).values, target.desired, atol=1e-9, rtol=0)

    def test_untargeted_feature_unchanged_on_real_rows(self):
        rng = np.random.default_rng(2)
        d = _ds(rng.normal(size=(50, 2)))
        f, a = self._single()
        perm = build_permuted_pd_data(d, GridSpec("x2", [-1.0, 0.0, 1.0]))
        for _, X in perm.blocks():
            keep = ~a.extrapolation.classify(X)
            np.testing.assert_array_equal(a.predict(X)[keep], f.predict(X)[keep])


class TestAllocator:
    def test_disjoint_regions(self):
        rng = np.random.default_rng(0)
        d = _ds(rng.uniform(-1, 1, size=(600, 2)))
        c = ExtrapolationClassifier(
            FunctionPredictor(lambda X: (np.abs(X).max(axis=1) > 2) * 1.0, 2), 0.5
        )
        perms = [
            build_permuted_pd_data(d, GridSpec("x1", [5.0, 6.0])),
            build_permuted_pd_data(d, GridSpec("x2", [-6.0, -5.0])),
        ]
        cfg = MlpConfig((8, 3), "multiclass", learn_rate=0.05, max_epochs=60, batch_size=64)
        alloc = train_allocator(d, perms, c, cfg)
        assert alloc.n_classes == 3
        test = rng.uniform(-1, 1, size=(300, 2))
        a1, a2 = test.copy(), test.copy()
        a1[:, 0] = 5.5
        a2[:, 1] = -5.5
        X = np.vstack([test, a1, a2])
        labels = np.repeat([0, 1, 2], 300)
        assert np.mean(alloc.allocate(X) == labels) > 0.9

    def test_errors(self):
        d = _ds(np.random.default_rng(0).normal(size=(40, 2)))
        never = ExtrapolationClassifier(ConstantClassifier(0.0, 2), 0.5)
        perms = [build_permuted_pd_data(d, GridSpec(f"x{k}", [0.0])) for k in (1, 2)]
        cfg = MlpConfig((4, 3), "multiclass")
        with pytest.raises(UnreachableTargetError):
            train_allocator(d, perms, never, cfg)
        with pytest.raises(ConfigError):
            train_allocator(d, perms[:1], never, MlpConfig((4, 2), "multiclass"))
        with pytest.raises(ConfigError):
            train_allocator(d, perms, never, MlpConfig((4, 4), "multiclass"))


def test_attack_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 2))
    d = _ds(X, X[:, 0])
    cm = train_mlp(_ds(X, (X[:, 0] > 0) * 1.0), MlpConfig((4, 1), "binary", max_epochs=3))
    alloc = train_mlp(_ds(X, (X[:, 0] > 0) + (X[:, 1] > 0) * 1.0), MlpConfig((4, 3), "multiclass", max_epochs=3))
    comp = CompensationTable()
    comp.add(_compensation("x1", 0, [-1.0, 0.0, 1.0 / 3], [0.1, 0.2, 0.3]))
    comp.add(_compensation("x2", 1, [0.0, 1.0], [-2.0, 2.0]))
    a = build_adversarial_multi(
        LinearPredictor(np.array([1.0, 2.0]), 0.5), ExtrapolationClassifier(cm, 0.3),
        AllocatorClassifier(alloc), comp, ["x1", "x2"],
    )
    manifest = save_attack(a, tmp_path / "art", prefix="fold0_")
    assert (tmp_path / "art" / "fold0_c1.model").exists()
    back = load_attack(manifest)
    np.testing.assert_array_equal(back.predict(d.rows), a.predict(d.rows))
    assert back.threshold == 0.3 and back.targeted_features == ("x1", "x2")


def test_load_attack_rejects_other_files(tmp_path):
    (tmp_path / "m.txt").write_text("hello\n")
    with pytest.raises(DataError):
        load_attack(tmp_path / "m.txt")

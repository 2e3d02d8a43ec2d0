"""Generator, corruption, split, and CSV ingestion tests."""

import numpy as np
import pytest

from awam.datagen import (
    Dataset,
    classification_target,
    component_f,
    corrupt_features,
    corrupt_labels,
    gen_classification,
    gen_regression,
    inject_outliers,
    load_csv,
    make_imbalanced,
    read_dataset_csv,
    regression_target,
    sample_noise,
    split,
    write_dataset_csv,
)


class TestComponents:
    def test_hand_values(self):
        assert component_f(2, 1.0) == 8.0
        assert component_f(1, 0.0) == 0.0
        assert component_f(8, 0.5) == pytest.approx(-5.0, rel=1e-12)
        assert component_f(6, 0.4) == pytest.approx(2.0, rel=1e-12)

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            component_f(0, 0.5)
        with pytest.raises(ValueError):
            component_f(9, 0.5)

    def test_fstar_matches_independent_recomputation(self):
        ds = gen_regression(500, 12, "A", seed=0)
        f = np.zeros(500)
        for j in range(1, 9):
            f += component_f(j, ds.X[:, j - 1])
        assert np.array_equal(ds.f_star, f)
        assert np.array_equal(regression_target(ds.X), f)


class TestNoise:
    def test_gauss_variance(self):
        rng = np.random.default_rng(0)
        draws = np.array([sample_noise("gauss", rng) for _ in range(100_000)])
        assert abs(np.var(draws) - 1.0) < 0.05

    def test_mixture_a_tail_fraction(self):
        rng = np.random.default_rng(1)
        draws = np.array([sample_noise("A", rng) for _ in range(100_000)])
        # P(draw > 3) ~ 0.2 * P(N(8,1) > 3) ~ 0.2
        assert abs(np.mean(draws > 3.0) - 0.2) < 0.02

    def test_student_t_median(self):
        rng = np.random.default_rng(2)
        draws = np.array([sample_noise("C", rng) for _ in range(100_000)])
        assert abs(np.median(draws)) < 0.05

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            sample_noise("D", np.random.default_rng(0))


class TestGenRegression:
    def test_mixture_means(self):
        ds_a = gen_regression(100_000, 8, "A", seed=3)
        assert abs(np.mean(ds_a.y - ds_a.f_star)) < 0.05   # zero-mean mixture
        ds_b = gen_regression(100_000, 8, "B", seed=4)
        assert abs(np.mean(ds_b.y - ds_b.f_star) - 4.0) < 0.1  # mean 0.8*0+0.2*20

    def test_determinism(self):
        a = gen_regression(200, 10, "B", seed=5)
        b = gen_regression(200, 10, "B", seed=5)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        assert np.array_equal(a.corrupted, b.corrupted)

    def test_outlier_component_flagged(self):
        ds = gen_regression(50_000, 8, "B", seed=6)
        frac = ds.corrupted.mean()
        assert abs(frac - 0.2) < 0.01
        # flagged residuals sit near +20, clean near 0
        resid = ds.y - ds.f_star
        assert abs(np.mean(resid[ds.corrupted]) - 20.0) < 0.1
        assert abs(np.mean(resid[~ds.corrupted])) < 0.05
        clean = gen_regression(1000, 8, "gauss", seed=6)
        assert not clean.corrupted.any()

    def test_support_and_p_check(self):
        ds = gen_regression(100, 9, "gauss", seed=7)
        assert ds.true_support == frozenset(range(8))
        with pytest.raises(ValueError):
            gen_regression(100, 7, "gauss", seed=7)


class TestGenClassification:
    def test_decision_rule_hand_values(self):
        X = np.array([[0.5, 0.5, 0.1], [0.8, 0.5, 0.9]])
        f, y = classification_target(X)
        assert f[0] == pytest.approx(-0.08, rel=1e-12) and y[0] == 0.0
        assert f[1] == pytest.approx(0.01, rel=1e-12) and y[1] == 1.0

    def test_class_fraction_stable_across_seeds(self):
        fracs = [gen_classification(100_000, 5, seed=s).y.mean() for s in range(3)]
        assert max(fracs) - min(fracs) < 0.01

    def test_support_and_p_check(self):
        ds = gen_classification(100, 2, seed=0)
        assert ds.true_support == frozenset({0, 1})
        with pytest.raises(ValueError):
            gen_classification(100, 1, seed=0)


class TestCorruptions:
    def test_label_flip_counts(self):
        ds = gen_classification(200, 4, seed=1)
        rng = np.random.default_rng(2)
        out = corrupt_labels(ds, 0.3, rng)
        assert out.corrupted.sum() == 60
        assert np.all(out.y[out.corrupted] == 1.0 - ds.y[out.corrupted])
        assert np.array_equal(out.y[~out.corrupted], ds.y[~out.corrupted])

    def test_label_flip_edges(self):
        ds = gen_classification(100, 3, seed=3)
        rng = np.random.default_rng(4)
        same = corrupt_labels(ds, 0.0, rng)
        assert np.array_equal(same.y, ds.y) and not same.corrupted.any()
        flipped = corrupt_labels(ds, 1.0, rng)
        assert np.array_equal(flipped.y, 1.0 - ds.y) and flipped.corrupted.all()

    def test_label_flip_task_guard(self):
        ds = gen_regression(100, 8, "gauss", seed=5)
        with pytest.raises(ValueError):
            corrupt_labels(ds, 0.1, np.random.default_rng(0))

    def test_inject_outliers(self):
        ds = gen_regression(5000, 8, "gauss", seed=6)
        rng = np.random.default_rng(7)
        out = inject_outliers(ds, 0.25, mean=100.0, var=100.0, rng=rng)
        assert out.corrupted.sum() == 1250
        shift = out.y[out.corrupted].mean() - ds.y[out.corrupted].mean()
        assert abs(shift - 100.0) < 2.0
        ident = inject_outliers(ds, 0.0, 100.0, 100.0, rng)
        assert np.array_equal(ident.y, ds.y)
        with pytest.raises(ValueError):
            inject_outliers(gen_classification(10, 2, 0), 0.1, 1.0, 1.0, rng)

    def test_corrupt_features(self):
        ds = gen_regression(400, 8, "gauss", seed=8)
        rng = np.random.default_rng(9)
        out = corrupt_features(ds, 0.5, rng)
        assert out.corrupted.sum() == 200
        changed = np.any(out.X != ds.X, axis=1)
        assert np.array_equal(changed, out.corrupted)
        # heavy-tailed noise takes rows outside [0,1]; no clamping here
        assert (out.X[out.corrupted].min() < 0.0) or (out.X[out.corrupted].max() > 1.0)
        ident = corrupt_features(ds, 0.0, rng)
        assert np.array_equal(ident.X, ds.X)


class TestImbalance:
    def test_balanced_target_keeps_everything(self):
        y = np.array([0.0, 1.0] * 50)
        ds = Dataset(X=np.random.default_rng(0).random((100, 2)), y=y,
                     corrupted=np.zeros(100, dtype=bool), task="classification")
        out = make_imbalanced(ds, 0.5, np.random.default_rng(1))
        assert out.n == 100 and out.y.mean() == 0.5

    def test_count_arithmetic(self):
        y = np.concatenate([np.ones(1900), np.zeros(1900)])
        ds = Dataset(X=np.random.default_rng(2).random((3800, 2)), y=y,
                     corrupted=np.zeros(3800, dtype=bool), task="classification")
        out = make_imbalanced(ds, 0.05, np.random.default_rng(3))
        assert out.n == 2000
        assert (out.y == 0).sum() == 100 and (out.y == 1).sum() == 1900

    def test_infeasible_and_degenerate(self):
        y = np.concatenate([np.ones(10), np.zeros(2)])
        ds = Dataset(X=np.random.default_rng(4).random((12, 2)), y=y,
                     corrupted=np.zeros(12, dtype=bool), task="classification")
        with pytest.raises(ValueError):
            make_imbalanced(ds, 0.9, np.random.default_rng(5))  # needs 90 negatives
        with pytest.raises(ValueError):
            make_imbalanced(ds, 0.0, np.random.default_rng(5))  # class absent
        only_pos = Dataset(X=np.zeros((5, 2)), y=np.ones(5),
                           corrupted=np.zeros(5, dtype=bool), task="classification")
        with pytest.raises(ValueError):
            make_imbalanced(only_pos, 0.3, np.random.default_rng(5))


class TestSplit:
    def test_three_one_one_sizes(self):
        ds = gen_regression(100, 8, "gauss", seed=0)
        tr, me, te = split(ds, (3, 1, 1), np.random.default_rng(1))
        assert (tr.n, me.n, te.n) == (60, 20, 20)

    def test_partition(self):
        ds = gen_regression(103, 8, "gauss", seed=2)
        ds = Dataset(X=ds.X, y=np.arange(103, dtype=float),
                     corrupted=ds.corrupted, task="regression")
        tr, me, te = split(ds, (3, 1, 1), np.random.default_rng(3), clean_meta=False)
        ids = np.concatenate([tr.y, me.y, te.y])
        assert sorted(ids.tolist()) == list(range(103))

    def test_clean_meta_feasibility(self):
        ds = gen_regression(100, 8, "gauss", seed=4)
        flags = np.zeros(100, dtype=bool)
        flags[:50] = True
        half = Dataset(X=ds.X, y=ds.y, corrupted=flags, task="regression")
        tr, me, te = split(half, (3, 1, 1), np.random.default_rng(5), clean_meta=True)
        assert not me.corrupted.any() and me.n == 20
        flags85 = np.zeros(100, dtype=bool)
        flags85[:85] = True
        mostly = Dataset(X=ds.X, y=ds.y, corrupted=flags85, task="regression")
        with pytest.raises(ValueError, match="clean"):
            split(mostly, (3, 1, 1), np.random.default_rng(6), clean_meta=True)

    def test_largest_remainder(self):
        ds = gen_regression(11, 8, "gauss", seed=7)
        tr, me, te = split(ds, (3, 1, 1), np.random.default_rng(8), clean_meta=False)
        # 11 * (0.6, 0.2, 0.2) = (6.6, 2.2, 2.2): remainder goes to the first
        assert (tr.n, me.n, te.n) == (7, 2, 2)

    def test_largest_remainder_tie_breaks_to_lower_index(self):
        ds = gen_regression(102, 8, "gauss", seed=9)
        tr, me, te = split(ds, (3, 1, 1), np.random.default_rng(10), clean_meta=False)
        # 102 * (0.6, 0.2, 0.2) = (61.2, 20.4, 20.4): tied remainders, meta wins
        assert (tr.n, me.n, te.n) == (61, 21, 20)


class TestCsv:
    def test_dataset_roundtrip(self, tmp_path):
        ds = gen_regression(50, 8, "B", seed=0)
        path = tmp_path / "ds.csv"
        write_dataset_csv(ds, path)
        back = read_dataset_csv(path, task="regression", true_support=ds.true_support)
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)
        assert np.array_equal(back.corrupted, ds.corrupted)
        assert np.array_equal(back.f_star, ds.f_star)
        assert back.true_support == ds.true_support

    def test_load_csv_hand_written(self, tmp_path):
        path = tmp_path / "hand.csv"
        path.write_text("a,b,label\n0.0,10.0,1.0\n2.0,30.0,3.0\n")
        ds = load_csv(path, target_column="label", task="regression")
        # min-max rescaling maps each feature column onto {0, 1}
        assert np.array_equal(ds.X, [[0.0, 0.0], [1.0, 1.0]])
        assert np.array_equal(ds.y, [1.0, 3.0])
        assert not ds.corrupted.any()

    def test_load_csv_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("a,b,label\n")
        ds = load_csv(path, target_column="label", task="regression")
        assert ds.n == 0 and ds.p == 2

    def test_load_csv_errors(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,label\n1.0,2.0,3.0\n1.0,oops,3.0\n")
        with pytest.raises(ValueError, match="row 3, column 'b'"):
            load_csv(path, target_column="label", task="regression")
        path.write_text("a,b,label\n1.0,2.0\n")
        with pytest.raises(ValueError, match="ragged row 2"):
            load_csv(path, target_column="label", task="regression")
        path.write_text("a,b,label\n1.0,2.0,3.0\n")
        with pytest.raises(ValueError, match="missing target column"):
            load_csv(path, target_column="target", task="regression")

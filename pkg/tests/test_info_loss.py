import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxsense.context import ContextDistances
from ctxsense.extension import ExtensionConfig
from ctxsense.info_loss import (
    ConvergenceError,
    InfoLossModel,
    build_training_set,
    kl_divergence,
    kl_rows,
    n_features,
    nonneg_lasso,
    predict_batch,
    predict_info_loss,
    train_info_loss,
    transform_batch,
    transform_features,
)


def _simplex(rng, size, dim):
    return rng.dirichlet(np.ones(dim), size=size)


def _random_design(rng, rows, n, m):
    # positive contexts that are not on the simplex, so C columns are not collinear
    c = rng.uniform(0.1, 1.0, size=(rows, n))
    d = rng.integers(0, 9, size=(rows, m)).astype(float)
    return c, d, transform_batch(c, d)


class TestKL:
    def test_identical_is_zero(self):
        assert kl_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0

    def test_worked_example(self):
        # 0.5 log2(0.5/0.9) + 0.5 log2(0.5/0.1)
        assert kl_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(0.73697, abs=1e-4)

    def test_asymmetric(self):
        assert kl_divergence([0.9, 0.1], [0.5, 0.5]) != pytest.approx(kl_divergence([0.5, 0.5], [0.9, 0.1]))

    def test_zero_in_q_is_smoothed(self):
        assert np.isfinite(kl_divergence([0.5, 0.5], [1.0, 0.0]))

    def test_validation(self):
        with pytest.raises(ValueError):
            kl_divergence([0.5, 0.5], [1.0])
        with pytest.raises(ValueError):
            kl_divergence([0.7, 0.7], [0.5, 0.5])
        with pytest.raises(ValueError):
            kl_divergence([-0.1, 1.1], [0.5, 0.5])

    def test_nonnegative_on_random_pairs(self):
        rng = np.random.default_rng(0)
        p, q = _simplex(rng, 10_000, 8), _simplex(rng, 10_000, 8)
        assert np.all(kl_rows(p, q) >= 0)
        assert np.all(kl_rows(p, p) == 0)


class TestFeatures:
    def test_scalar_example(self):
        np.testing.assert_array_equal(transform_features([1.0], [2]), [1, 2, 1, 4, 2])

    def test_length(self):
        assert n_features(8, 6) == 76
        assert transform_features(np.full(8, 0.125), np.arange(6)).shape == (76,)

    def test_layout_blocks(self):
        c, d = np.array([0.2, 0.3, 0.5]), np.array([1.0, 4.0])
        f = transform_features(c, d)
        np.testing.assert_array_equal(f[:3], c)
        np.testing.assert_array_equal(f[3:5], d)
        np.testing.assert_array_equal(f[5:8], c**2)
        np.testing.assert_array_equal(f[8:10], d**2)
        np.testing.assert_array_equal(f[10:], np.outer(c, d).ravel())

    def test_zero_distances(self):
        f = transform_features(np.full(4, 0.25), np.zeros(3))
        assert not f[4:7].any() and not f[11:14].any() and not f[14:].any()


class TestTrainingSet:
    def _pairs(self, rng, blocks, cfg, n=8, m=6):
        bs = cfg.block_size
        ctx = _simplex(rng, blocks * bs, n)
        dist = rng.integers(1, cfg.max_dist + 1, size=(blocks * bs, m))
        dist[::bs] = 0
        return ContextDistances(ctx, dist)

    def test_labels_and_features_use_actual_context(self):
        rng = np.random.default_rng(1)
        cfg = ExtensionConfig(32, 20)
        pairs = self._pairs(rng, 2, cfg)
        X, y = build_training_set(pairs, cfg)
        assert X.shape == (106, 76) and y.shape == (106,)
        assert y[0] == 0.0 and y[53] == 0.0
        assert np.count_nonzero(y[:53] == 0) == 1
        np.testing.assert_array_equal(X[:53, :8], np.repeat(pairs.contexts[:1], 53, axis=0))
        assert y[5] == pytest.approx(kl_divergence(pairs.contexts[0], pairs.contexts[5]))

    def test_constant_contexts_give_zero_labels(self):
        cfg = ExtensionConfig(4, 3)
        ctx = np.tile(np.full(8, 0.125), (16, 1))
        dist = np.ones((16, 6), dtype=int)
        dist[::8] = 0
        _, y = build_training_set(ContextDistances(ctx, dist), cfg)
        assert not y.any()

    def test_partial_block_rejected(self):
        cfg = ExtensionConfig(4, 3)
        with pytest.raises(ValueError):
            build_training_set(ContextDistances(np.full((5, 2), 0.5), np.zeros((5, 1))), cfg)


class TestLasso:
    def test_linear_ground_truth(self):
        rng = np.random.default_rng(2)
        _, d, X = _random_design(rng, 200, 2, 2)
        y = 2.0 * d[:, 0]
        fit = nonneg_lasso(X, y, lam=0.0, tol=1e-12, max_sweeps=100_000)
        assert fit.coef[2] == pytest.approx(2.0, abs=1e-3)
        assert np.mean((X @ fit.coef - y) ** 2) < 1e-8

    def test_negative_truth_is_clipped(self):
        rng = np.random.default_rng(3)
        _, d, X = _random_design(rng, 200, 1, 1)
        y = 3.0 * d[:, 0] - d[:, 0] ** 2
        fit = nonneg_lasso(X, y, lam=0.0)
        assert np.all(fit.coef >= 0)
        assert fit.coef[3] == 0.0  # D^2 column for n=1, m=1

    def test_large_lambda_zeroes_everything(self):
        rng = np.random.default_rng(4)
        _, _, X = _random_design(rng, 100, 3, 3)
        y = rng.uniform(0, 1, 100)
        fit = nonneg_lasso(X, y, lam=1e6)
        assert not fit.coef.any()
        assert not (X @ fit.coef).any()

    @pytest.mark.parametrize("seed", range(5))
    def test_exact_recovery(self, seed):
        rng = np.random.default_rng(seed)
        n, m = 3, 3
        _, _, X = _random_design(rng, 200, n, m)
        truth = np.zeros(n_features(n, m))
        truth[rng.choice(truth.size, 3, replace=False)] = rng.uniform(0.5, 2.0, 3)
        fit = nonneg_lasso(X, X @ truth, lam=1e-6, tol=1e-12, max_sweeps=200_000)
        np.testing.assert_allclose(fit.coef, truth, atol=1e-3)

    def test_objective_nonincreasing(self):
        rng = np.random.default_rng(5)
        _, _, X = _random_design(rng, 150, 2, 3)
        y = rng.uniform(0, 3, 150)
        hist = nonneg_lasso(X, y, lam=1e-3).objective_history
        assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))

    def test_sparsity_with_positive_lambda(self):
        rng = np.random.default_rng(6)
        _, d, X = _random_design(rng, 300, 3, 3)
        fit = nonneg_lasso(X, d[:, 1] + 0.01 * rng.normal(size=300), lam=1e-2)
        assert np.count_nonzero(fit.coef == 0) > 0

    def test_non_convergence_reported(self):
        rng = np.random.default_rng(7)
        _, _, X = _random_design(rng, 100, 3, 3)
        with pytest.raises(ConvergenceError) as err:
            nonneg_lasso(X, rng.uniform(size=100), lam=0.0, tol=0.0, max_sweeps=3)
        assert err.value.sweeps == 3 and err.value.residual > 0

    def test_zero_column_ignored(self):
        X = np.column_stack([np.arange(10.0), np.zeros(10)])
        fit = nonneg_lasso(X, 2 * np.arange(10.0), lam=0.0)
        assert fit.coef[1] == 0.0 and fit.coef[0] == pytest.approx(2.0)

    def test_random_fits_nonnegative(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            X = rng.normal(size=(30, 6))
            y = rng.normal(size=30)
            assert np.all(nonneg_lasso(X, y, lam=rng.uniform(0, 0.1)).coef >= 0)


class TestModel:
    def test_zero_model_predicts_zero(self):
        model = InfoLossModel(np.zeros(76), 1e-3, 8, 6)
        assert predict_info_loss(model, np.full(8, 0.125), np.arange(1, 7)) == 0.0

    def test_single_distance_term(self):
        coef = np.zeros(76)
        coef[8] = 2.0  # b_d for sensor 0
        model = InfoLossModel(coef, 0.0, 8, 6)
        assert predict_info_loss(model, np.full(8, 0.125), [3, 1, 1, 1, 1, 1]) == 6.0

    def test_rejects_negative_coefficients(self):
        coef = np.zeros(76)
        coef[0] = -1.0
        with pytest.raises(ValueError):
            InfoLossModel(coef, 0.0, 8, 6)

    def test_dimension_mismatch(self):
        model = InfoLossModel(np.zeros(76), 1e-3, 8, 6)
        with pytest.raises(ValueError):
            predict_info_loss(model, np.full(8, 0.125), [1, 2])
        with pytest.raises(ValueError):
            train_info_loss(np.zeros((3, 10)), np.zeros(3), 8, 6)

    def test_distance_terms_reproduce_prediction(self):
        rng = np.random.default_rng(9)
        model = InfoLossModel(rng.uniform(0, 1, 76), 1e-3, 8, 6)
        c = _simplex(rng, 1, 8)[0]
        d = rng.uniform(1, 8, 6)
        const, lin, quad = model.distance_terms(c)
        assert const + lin @ d + quad @ d**2 == pytest.approx(predict_info_loss(model, c, d))

    def test_persistence(self, tmp_path):
        rng = np.random.default_rng(10)
        model = InfoLossModel(rng.uniform(0, 1, 76), 1e-3, 8, 6)
        model.save(tmp_path / "m.json")
        back = InfoLossModel.load(tmp_path / "m.json")
        np.testing.assert_array_equal(back.coef, model.coef)
        assert (back.n, back.m, back.lam) == (8, 6, 1e-3)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(11)
        model = InfoLossModel(rng.uniform(0, 1, 76), 1e-3, 8, 6)
        c, d = _simplex(rng, 5, 8), rng.uniform(1, 8, (5, 6))
        expected = [predict_info_loss(model, ci, di) for ci, di in zip(c, d)]
        np.testing.assert_allclose(predict_batch(model, c, d), expected)


simplex8 = st.lists(st.floats(0.01, 1.0), min_size=8, max_size=8).map(lambda v: np.array(v) / sum(v))


@settings(max_examples=200, deadline=None)
@given(p=simplex8, q=simplex8)
def test_kl_nonnegative_property(p, q):
    assert kl_divergence(p, q) >= 0.0


@settings(max_examples=100, deadline=None)
@given(
    coef=st.lists(st.floats(0, 10), min_size=76, max_size=76),
    c=simplex8,
    d=st.lists(st.floats(1, 32), min_size=6, max_size=6),
    j=st.integers(0, 5),
    delta=st.floats(0, 10),
)
def test_prediction_monotone_in_distance(coef, c, d, j, delta):
    model = InfoLossModel(np.array(coef), 0.0, 8, 6)
    bumped = np.array(d)
    bumped[j] += delta
    assert predict_info_loss(model, c, bumped) >= predict_info_loss(model, c, d) - 1e-9
    assert predict_info_loss(model, c, d) >= 0.0

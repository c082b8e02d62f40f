import numpy as np
import pytest

from hdavca.svr import (
    FeatureScaler,
    dual_objective,
    grid_search,
    kkt_violation,
    load_model,
    rbf_kernel,
    save_model,
    scale_features,
    svr_predict,
    svr_predict_batch,
    svr_train,
    _match_rows,
)


def _project(v, u, c, iters=80):
    lo, hi = -1e7, 1e7
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if u @ np.clip(v - mid * u, 0, c) > 0:
            lo = mid
        else:
            hi = mid
    return np.clip(v - 0.5 * (lo + hi) * u, 0, c)


def qp_oracle(kernel, y, c, eps, iters=6000):
    """Accelerated projected gradient on the box/equality-constrained dual."""
    n = len(y)
    u = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([eps - y, eps + y])
    q = np.block([[kernel, -kernel], [-kernel, kernel]])
    lip = np.linalg.eigvalsh(q)[-1] + 1e-9
    a = np.zeros(2 * n)
    z = a.copy()
    t = 1.0
    for _ in range(iters):
        g = q @ z + p
        a_new = _project(z - g / lip, u, c)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = a_new + ((t - 1) / t_new) * (a_new - a)
        a, t = a_new, t_new
    a = _project(a, u, c)
    return float(0.5 * a @ q @ a + p @ a)


def _beta_of(model, x):
    xs = model.scaler.apply(x)
    beta = np.zeros(len(x))
    beta[_match_rows(xs, model.support_vectors)] = model.coefficients
    return beta, xs


class TestScaler:
    def test_single_vector_scales_to_zero(self):
        scaled, _ = scale_features(np.array([[3.0, -1.0, 7.0]]))
        assert np.all(scaled == 0.0)

    def test_min_max_to_unit_interval(self):
        scaled, _ = scale_features(np.array([[0.0], [10.0]]))
        assert np.array_equal(scaled.ravel(), [-1.0, 1.0])

    def test_refit_reproduces_bit_exactly(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-5, 5, (20, 7))
        scaled, scaler = scale_features(x)
        assert np.array_equal(scaler.apply(x), scaled)

    def test_masked_dims_stay_zero(self):
        x = np.array([[1.0, 5.0], [2.0, 9.0]])
        mask = np.array([True, False])
        scaled, scaler = scale_features(x, mask)
        assert np.all(scaled[:, 1] == 0.0)
        assert np.any(scaled[:, 0] != 0.0)

    def test_dimension_mismatch(self):
        _, scaler = scale_features(np.zeros((2, 3)))
        with pytest.raises(ValueError, match="length mismatch"):
            scaler.apply(np.zeros(4))


class TestTraining:
    def test_constant_target_predicts_constant(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(10, 4))
        y = np.full(10, 3.3)
        model = svr_train(x, y, 10.0, 0.5, 0.1)
        preds = svr_predict_batch(model, x)
        assert np.all(np.abs(preds - 3.3) <= 0.1 + 1e-9)
        assert len(model.coefficients) == 0  # flat target inside the tube

    def test_synthetic_fit_quality(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(200, 5))
        y = np.sin(np.linalg.norm(x, axis=1)) + 0.01 * rng.normal(size=200)
        model = svr_train(x, y, 256.0, 0.2, 0.01)
        pred = svr_predict_batch(model, x)
        assert float(np.sqrt(np.mean((pred - y) ** 2))) < 0.1

    def test_dual_feasibility(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 6))
        y = x @ rng.normal(size=6) + 0.1 * rng.normal(size=30)
        c = 5.0
        model = svr_train(x, y, c, 0.3, 0.05)
        beta, _ = _beta_of(model, x)
        assert np.all(np.abs(beta) <= c * (1 + 1e-9))
        assert beta.sum() == pytest.approx(0.0, abs=1e-9)

    def test_kkt_satisfied_within_tolerance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(25, 4))
        y = np.cos(x[:, 0]) + 0.05 * rng.normal(size=25)
        model = svr_train(x, y, 8.0, 0.4, 0.05)
        assert kkt_violation(model, x, y) < 1e-3

    def test_matches_qp_oracle(self):
        rng = np.random.default_rng(17)
        for n in (12, 16, 20):
            x = rng.normal(size=(n, 4))
            y = np.sin(np.linalg.norm(x, axis=1)) + 0.05 * rng.normal(size=n)
            c, gamma, eps = 10.0, 0.5, 0.05
            model = svr_train(x, y, c, gamma, eps)
            beta, xs = _beta_of(model, x)
            kernel = rbf_kernel(xs, xs, gamma)
            ours = dual_objective(kernel, y, eps, beta)
            reference = qp_oracle(kernel, y, c, eps)
            assert abs(ours - reference) < 1e-3

    def test_sample_permutation_invariance(self):
        # the dual optimum is unique; a tight KKT stop removes path effects
        rng = np.random.default_rng(4)
        x = rng.normal(size=(18, 3))
        y = x @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=18)
        model_a = svr_train(x, y, 16.0, 0.2, 0.05, tol=1e-8)
        perm = rng.permutation(18)
        model_b = svr_train(x[perm], y[perm], 16.0, 0.2, 0.05, tol=1e-8)
        probe = rng.normal(size=(5, 3))
        pa = svr_predict_batch(model_a, probe)
        pb = svr_predict_batch(model_b, probe)
        assert np.allclose(pa, pb, atol=1e-6)

    def test_identical_rows_different_labels_still_trains(self):
        x = np.ones((4, 2))
        y = np.array([1.0, 2.0, 3.0, 4.0])
        model = svr_train(x, y, 4.0, 0.5, 0.1)
        assert np.isfinite(svr_predict(model, np.ones(2)))

    def test_input_validation(self):
        with pytest.raises(ValueError, match="at least 2"):
            svr_train(np.ones((1, 2)), np.ones(1))
        with pytest.raises(ValueError, match="finite"):
            svr_train(np.ones((3, 2)), np.array([1.0, np.nan, 2.0]))


class TestPrediction:
    def test_support_vector_within_tube(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(20, 3))
        y = x @ np.array([2.0, -1.0, 0.5])
        eps = 0.05
        model = svr_train(x, y, 1000.0, 0.5, eps)
        pred = svr_predict_batch(model, x)
        # hard fit: every training point within the tube plus KKT slack
        assert np.all(np.abs(pred - y) <= eps + 1e-2)

    def test_prediction_deterministic(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(12, 3))
        y = rng.normal(size=12)
        model = svr_train(x, y, 4.0, 0.3, 0.1)
        probe = rng.normal(size=3)
        assert svr_predict(model, probe) == svr_predict(model, probe)

    def test_matches_direct_kernel_expansion(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(15, 4))
        y = np.sin(x[:, 0]) + 0.1 * rng.normal(size=15)
        model = svr_train(x, y, 8.0, 0.25, 0.05)
        probe = rng.normal(size=4)
        ps = model.scaler.apply(probe)
        expected = model.bias
        for coef, sv in zip(model.coefficients, model.support_vectors):
            expected += coef * np.exp(-model.gamma * np.sum((sv - ps) ** 2))
        assert svr_predict(model, probe) == pytest.approx(expected, abs=1e-9)

    def test_length_mismatch(self):
        model = svr_train(np.zeros((3, 2)) + np.arange(3)[:, None], np.arange(3.0), 1.0, 0.5, 0.1)
        with pytest.raises(ValueError, match="length mismatch"):
            svr_predict(model, np.zeros(5))


class TestSerialization:
    def test_round_trip_identical_predictions(self, tmp_path):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(20, 5))
        y = x @ rng.normal(size=5) + 0.2 * rng.normal(size=20)
        model = svr_train(x, y, 12.0, 0.2, 0.05)
        p = tmp_path / "model.json"
        save_model(model, p)
        back = load_model(p)
        probe = rng.normal(size=(6, 5))
        assert np.max(np.abs(svr_predict_batch(back, probe) - svr_predict_batch(model, probe))) <= 1e-12

    def test_truncated_file(self, tmp_path):
        p = tmp_path / "model.json"
        x = np.arange(6.0).reshape(3, 2)
        save_model(svr_train(x, np.arange(3.0), 1.0, 0.5, 0.1), p)
        p.write_text(p.read_text()[:40])
        with pytest.raises(ValueError, match="malformed model file"):
            load_model(p)

    def test_format_mismatch(self, tmp_path):
        p = tmp_path / "model.json"
        p.write_text('{"format": "other-v9"}')
        with pytest.raises(ValueError, match="format mismatch"):
            load_model(p)

    def test_zero_sv_model_is_constant(self, tmp_path):
        x = np.random.default_rng(9).normal(size=(8, 3))
        model = svr_train(x, np.full(8, 2.25), 4.0, 0.5, 0.2)
        assert len(model.coefficients) == 0
        p = tmp_path / "m.json"
        save_model(model, p)
        back = load_model(p)
        assert svr_predict(back, np.zeros(3)) == model.bias


class TestGridSearch:
    def test_picks_from_grid(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(30, 3))
        y = x @ np.array([1.0, 0.0, -1.0])
        c, gamma = grid_search(
            x, y, epsilon=0.05, c_grid=(1.0, 64.0), gamma_grid=(0.01, 0.5), n_folds=3, seed=0
        )
        assert c in (1.0, 64.0)
        assert gamma in (0.01, 0.5)

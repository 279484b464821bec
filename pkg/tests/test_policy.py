import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxsense.info_loss import InfoLossModel, n_features
from ctxsense.policy import (
    ObjectiveConfig,
    brute_force_policy,
    objective,
    optimize_policy,
    projected_gradient_norm,
    round_policy,
    sampling_cost,
)

N_CTX = 2


def _model(m, n=N_CTX, b_d=None, b_sd=None, b_cd=None, b_c=None):
    coef = np.zeros(n_features(n, m))
    if b_c is not None:
        coef[:n] = b_c
    if b_d is not None:
        coef[n : n + m] = b_d
    if b_sd is not None:
        coef[2 * n + m : 2 * n + 2 * m] = b_sd
    if b_cd is not None:
        coef[2 * n + 2 * m :] = np.ravel(b_cd)
    return InfoLossModel(coef, 0.0, n, m)


CTX = np.array([0.5, 0.5])


def _random_instance(rng):
    m = int(rng.integers(1, 4))
    md = int(rng.integers(2, 9))
    n = 3
    coef = rng.uniform(0, 1, n_features(n, m)) * (rng.uniform(size=n_features(n, m)) < 0.5)
    model = InfoLossModel(coef, 0.0, n, m)
    cfg = ObjectiveConfig(float(rng.choice([0.1, 1, 5, 10, 20])), md, tuple(rng.uniform(0, 10, m)))
    return rng.dirichlet(np.ones(n)), model, cfg


class TestCost:
    def test_example(self):
        assert sampling_cost([10, 0], [2, 1]) == 5.0

    def test_extremes(self):
        assert sampling_cost([3, 4], [1, 1]) == 7.0
        assert sampling_cost([3, 5], [8, 8]) == 1.0

    def test_below_one_rejected(self):
        with pytest.raises(ValueError):
            sampling_cost([1.0], [0.5])


class TestObjective:
    def test_alpha_zero_is_cost(self):
        model = _model(2, b_d=[1, 1])
        cfg = ObjectiveConfig(0.0, 8, (4.0, 2.0))
        assert objective(CTX, [2, 4], cfg, model) == sampling_cost(cfg.costs, [2, 4])

    def test_zero_model_is_cost(self):
        cfg = ObjectiveConfig(7.0, 8, (4.0, 2.0))
        assert objective(CTX, [2, 4], cfg, _model(2)) == 2.5

    def test_hand_example(self):
        cfg = ObjectiveConfig(1.0, 32, (4.0,))
        assert objective(CTX, [2.0], cfg, _model(1, b_d=[1.0])) == 4.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ObjectiveConfig(-1.0, 8, (1.0,))
        with pytest.raises(ValueError):
            ObjectiveConfig(1.0, 0, (1.0,))
        with pytest.raises(ValueError):
            ObjectiveConfig(1.0, 8, ())


class TestOptimize:
    def test_closed_form_single_sensor(self):
        sol, policy = optimize_policy(CTX, _model(1, b_d=[1.0]), ObjectiveConfig(1.0, 32, (4.0,)))
        assert sol.distances[0] == pytest.approx(2.0, abs=1e-3)
        assert sol.converged
        assert policy.tolist() == [2]

    def test_zero_cost_sensor_gets_one(self):
        sol, policy = optimize_policy(CTX, _model(2, b_d=[0.5, 0.5]), ObjectiveConfig(1.0, 8, (10.0, 0.0)))
        assert policy[1] == 1
        assert sol.distances[1] == pytest.approx(1.0, abs=1e-9)

    def test_cost_only_sensor_gets_max(self):
        _, policy = optimize_policy(CTX, _model(2, b_d=[0.0, 1.0]), ObjectiveConfig(5.0, 8, (10.0, 1.0)))
        assert policy[0] == 8

    def test_flat_coordinate_goes_to_max(self):
        _, policy = optimize_policy(CTX, _model(1), ObjectiveConfig(1.0, 8, (0.0,)))
        assert policy.tolist() == [8]

    def test_stationarity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            c, model, cfg = _random_instance(rng)
            sol, _ = optimize_policy(c, model, cfg)
            assert projected_gradient_norm(c, sol.distances, model, cfg) < 1e-5

    def test_oracle_agreement(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            c, model, cfg = _random_instance(rng)
            _, policy = optimize_policy(c, model, cfg)
            best = brute_force_policy(c, model, cfg)
            assert objective(c, policy, cfg, model) <= 1.05 * objective(c, best, cfg, model)

    def test_alpha_monotone(self):
        rng = np.random.default_rng(3)
        model = InfoLossModel(rng.uniform(0.01, 1, n_features(3, 4)), 0.0, 3, 4)
        c = rng.dirichlet(np.ones(3))
        prev = None
        for a in (0.1, 1, 5, 10, 20):
            sol, _ = optimize_policy(c, model, ObjectiveConfig(a, 32, (10.0, 4.0, 2.0, 0.5)))
            if prev is not None:
                assert np.all(sol.distances <= prev + 1e-6)
            prev = sol.distances

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            optimize_policy(CTX, _model(2), ObjectiveConfig(1.0, 8, (1.0,)))


class TestBruteForce:
    def test_single_sensor(self):
        assert brute_force_policy(CTX, _model(1, b_d=[1.0]), ObjectiveConfig(1.0, 32, (4.0,))).tolist() == [2]

    def test_alpha_zero_all_max(self):
        cfg = ObjectiveConfig(0.0, 6, (1.0, 2.0, 0.0))
        assert brute_force_policy(CTX, _model(3, b_d=[1, 1, 1]), cfg).tolist() == [6, 6, 6]

    def test_symmetric(self):
        cfg = ObjectiveConfig(1.0, 8, (3.0, 3.0))
        p = brute_force_policy(CTX, _model(2, b_d=[0.7, 0.7]), cfg)
        assert p[0] == p[1]

    def test_grid_limit(self):
        with pytest.raises(ValueError):
            brute_force_policy(CTX, _model(5), ObjectiveConfig(1.0, 8, (1.0,) * 5))


def test_round_half_up():
    np.testing.assert_array_equal(round_policy([1.5, 2.49, 2.5, 0.2, 40.0], 8), [2, 2, 3, 1, 8])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), t=st.floats(0, 1))
def test_convexity_witness(seed, t):
    rng = np.random.default_rng(seed)
    c, model, cfg = _random_instance(rng)
    d1 = rng.uniform(1, cfg.max_dist, cfg.m)
    d2 = rng.uniform(1, cfg.max_dist, cfg.m)
    mid = 0.5 * (d1 + d2)
    lhs = objective(c, mid, cfg, model)
    assert lhs <= 0.5 * (objective(c, d1, cfg, model) + objective(c, d2, cfg, model)) + 1e-9


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_solution_feasible(seed):
    c, model, cfg = _random_instance(np.random.default_rng(seed))
    sol, policy = optimize_policy(c, model, cfg)
    assert np.all((sol.distances >= 1) & (sol.distances <= cfg.max_dist))
    assert np.all((policy >= 1) & (policy <= cfg.max_dist))
    assert np.isfinite(sol.objective_value)

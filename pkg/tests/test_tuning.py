"""Tuning oracles: EI closed-form values, GP interpolation behaviour,
Latin-hypercube stratification, penalty bookkeeping, and convergence
on analytic objectives."""

import math

import numpy as np
import pytest

from slipbench.tuning import (
    BOOTSTRAP_PENALTY,
    GpSurrogate,
    ParamSpace,
    Trial,
    bootstrap_count,
    expected_improvement,
    latin_hypercube,
    load_trials,
    run_optimization,
    save_trials,
)
from slipbench.vehicle import DivergenceError


def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def _space_1d():
    return ParamSpace(names=("x",), lows=(0.0,), highs=(1.0,))


# ---------------------------------------------------------------------------
# Space and sampling


def test_param_space_roundtrip_linear_and_log():
    space = ParamSpace(
        names=("a", "b"), lows=(2.0, 1e-3), highs=(6.0, 1e1), scales=("linear", "log")
    )
    params = space.to_physical(np.array([0.25, 0.5]))
    assert abs(params["a"] - 3.0) < 1e-12
    assert abs(params["b"] - 10 ** ((math.log10(1e-3) + math.log10(10)) / 2)) < 1e-12
    unit = space.to_unit(params)
    np.testing.assert_allclose(unit, [0.25, 0.5], atol=1e-12)


def test_param_space_validation():
    with pytest.raises(ValueError, match="low < high"):
        ParamSpace(names=("x",), lows=(1.0,), highs=(1.0,))
    with pytest.raises(ValueError, match="positive"):
        ParamSpace(names=("x",), lows=(-1.0,), highs=(1.0,), scales=("log",))
    with pytest.raises(ValueError, match="equal length"):
        ParamSpace(names=("x", "y"), lows=(0.0,), highs=(1.0,))


def test_latin_hypercube_stratification():
    for dim in (1, 3):
        pts = latin_hypercube(8, dim, _rng(0))
        assert pts.shape == (8, dim)
        for j in range(dim):
            strata = np.floor(pts[:, j] * 8).astype(int)
            assert sorted(strata) == list(range(8))  # one point per stratum


def test_bootstrap_count_floor():
    assert bootstrap_count(1) == 5
    assert bootstrap_count(4) == 5
    assert bootstrap_count(9) == 10


# ---------------------------------------------------------------------------
# Expected improvement


def test_expected_improvement_closed_form_values():
    # mu = best, sigma = 1: EI == pdf(0) = 1/sqrt(2*pi)
    ei = expected_improvement(np.array([0.0]), np.array([1.0]), best=0.0)
    assert abs(ei[0] - 1.0 / math.sqrt(2 * math.pi)) < 1e-12
    # deterministic posterior: EI is the plain improvement, floored at 0
    ei = expected_improvement(np.array([0.3, -0.2]), np.array([0.0, 0.0]), best=0.0)
    assert ei[0] == 0.0
    assert abs(ei[1] - 0.2) < 1e-15


def test_expected_improvement_monotone_in_sigma():
    sigmas = np.array([0.1, 0.5, 1.0, 2.0])
    ei = expected_improvement(np.full(4, 1.0), sigmas, best=0.0)
    assert np.all(np.diff(ei) > 0)


# ---------------------------------------------------------------------------
# GP surrogate


def test_gp_interpolates_smooth_data():
    x = np.linspace(0, 1, 9)[:, None]
    y = np.sin(2 * np.pi * x[:, 0])
    gp = GpSurrogate(x, y)
    mu, sigma = gp.predict(x)
    np.testing.assert_allclose(mu, y, atol=0.02)
    # between points the posterior keeps nonzero uncertainty
    mid = np.array([[0.5 / 8 + 0.25]])
    _, sig_mid = gp.predict(mid)
    assert sig_mid[0] > 0


def test_gp_uncertainty_grows_away_from_data():
    x = np.linspace(0.3, 0.5, 5)[:, None]
    y = x[:, 0] ** 2
    gp = GpSurrogate(x, y)
    _, sig_near = gp.predict(np.array([[0.4]]))
    _, sig_far = gp.predict(np.array([[0.95]]))
    assert sig_far[0] > sig_near[0]


def test_gp_handles_constant_targets():
    x = latin_hypercube(6, 2, _rng(1))
    gp = GpSurrogate(x, np.full(6, 3.0))
    mu, sigma = gp.predict(np.array([[0.5, 0.5]]))
    assert abs(mu[0] - 3.0) < 1e-6
    assert np.isfinite(sigma[0])


# ---------------------------------------------------------------------------
# Optimization behaviour


def test_quadratic_1d_found_within_one_percent():
    calls = []

    def objective(x):
        calls.append(x)
        return (x - 0.37) ** 2

    best, trials = run_optimization(objective, _space_1d(), budget=20, seed=2)
    assert len(trials) == 20
    assert abs(best["x"] - 0.37) < 0.01
    assert all(0.0 <= t.params["x"] <= 1.0 for t in trials)  # bounds respected


def test_quadratic_2d_improves_over_bootstrap():
    def objective(x, y):
        return (x - 0.6) ** 2 + (y - 0.25) ** 2

    space = ParamSpace(names=("x", "y"), lows=(0.0, 0.0), highs=(1.0, 1.0))
    best, trials = run_optimization(objective, space, budget=40, seed=3)
    boot = bootstrap_count(2)
    best_boot = min(t.value for t in trials[:boot])
    best_all = min(t.value for t in trials if not t.diverged)
    assert best_all < best_boot  # EI phase beats space-filling phase
    assert best_all < 0.01


def test_budget_five_is_pure_space_filling():
    seen = []

    def objective(x):
        seen.append(x)
        return x

    best, trials = run_optimization(objective, _space_1d(), budget=5, seed=4)
    assert len(trials) == 5
    strata = np.floor(np.array(seen) * 5).astype(int)
    assert sorted(strata) == list(range(5))  # straight LHS, space-filling


def test_divergence_penalty_and_bootstrap_value():
    def objective(x):
        if x < 0.5:
            raise DivergenceError("unstable")
        return 2.0 + x

    # force first trial into the diverging half via seed scan
    best, trials = run_optimization(objective, _space_1d(), budget=12, seed=0)
    diverged = [t for t in trials if t.diverged]
    finite = [t for t in trials if not t.diverged]
    assert diverged and finite
    for t in trials:
        if t.diverged:
            prior_finite = [
                u.value for u in trials[: trials.index(t)] if not u.diverged
            ]
            if prior_finite:
                assert abs(t.value - 10.0 * max(abs(v) for v in prior_finite)) < 1e-12
            else:
                assert t.value == BOOTSTRAP_PENALTY
    assert best["x"] >= 0.5


def test_non_finite_objective_counts_as_divergence():
    def objective(x):
        return math.nan if x > 0.5 else x

    _, trials = run_optimization(objective, _space_1d(), budget=8, seed=1)
    assert any(t.diverged for t in trials)
    assert all(math.isfinite(t.value) for t in trials)


def test_all_divergent_budget_raises():
    def objective(x):
        raise DivergenceError("always")

    with pytest.raises(DivergenceError, match="every trial"):
        run_optimization(objective, _space_1d(), budget=6, seed=0)


def test_history_file_resumes(tmp_path):
    path = tmp_path / "trials.json"
    evals = []

    def objective(x):
        evals.append(x)
        return (x - 0.7) ** 2

    _, first = run_optimization(objective, _space_1d(), budget=7, seed=5, history_path=path)
    assert len(first) == 7 and len(evals) == 7
    _, second = run_optimization(
        objective, _space_1d(), budget=12, seed=5, history_path=path
    )
    assert len(second) == 12
    assert len(evals) == 12  # only 5 new evaluations
    for a, b in zip(first, second[:7]):
        assert a.params == b.params and a.value == b.value
    reloaded = load_trials(path)
    assert len(reloaded) == 12


def test_trials_json_roundtrip(tmp_path):
    trials = [
        Trial(params={"x": 0.5}, value=1.25, diverged=False, wall_time=0.25),
        Trial(params={"x": 0.1}, value=1000.0, diverged=True, wall_time=0.5),
    ]
    path = tmp_path / "t.json"
    save_trials(path, trials)
    loaded = load_trials(path)
    assert loaded == trials
    assert '"status": "failed"' in path.read_text()


def test_budget_below_five_rejected():
    with pytest.raises(ValueError, match=">= 5"):
        run_optimization(lambda x: x, _space_1d(), budget=4)


def test_optimization_is_seed_deterministic():
    def objective(x):
        return math.sin(5 * x) + x**2

    b1, t1 = run_optimization(objective, _space_1d(), budget=15, seed=9)
    b2, t2 = run_optimization(objective, _space_1d(), budget=15, seed=9)
    assert b1 == b2
    assert [t.params for t in t1] == [t.params for t in t2]
    b3, _ = run_optimization(objective, _space_1d(), budget=15, seed=10)
    assert b1 != b3


def test_log_scale_boundary_maps_inside_bounds():
    space = ParamSpace(
        names=("a", "b"),
        lows=(0.005, 1e-4),
        highs=(0.5, 1e-2),
        scales=("log", "log"),
    )
    for u in (np.array([0.0, 0.0]), np.array([1.0, 1.0]), np.array([1e-17, 1.0])):
        assert space.contains(space.to_physical(u))

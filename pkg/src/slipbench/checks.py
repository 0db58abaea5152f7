"""Built-in oracle suites behind the `selftest` command.

Each check exercises production code against an independently coded
reference — a closed-form Kalman filter, Monte-Carlo moment
propagation, central finite differences, analytic filter responses —
and returns a pass/fail verdict with a measured detail string. The
acceptance test suite drives the same checks, so the CLI selftest and
CI agree by construction.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .datapipe import zero_phase_lowpass
from .evaluation import compute_kpis, rmse
from .kalman import (
    AdaptiveNoiseConfig,
    GaussianBelief,
    UkfScaling,
    adapt_tyre_noise,
    ekf_step,
    sigma_points,
    ukf_step,
    unscented_transform,
)
from .neural import NetworkSpec, loss_and_grads, xavier_init
from .vehicle import TyreParams, dugoff_axle_force


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float


def _result(name, passed, detail, start) -> CheckResult:
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


# ---------------------------------------------------------------------------
# 1. Linear-Gaussian equivalence against a closed-form Kalman filter


def _reference_kf(belief, z, a, c, q, r):
    """Textbook Kalman step with explicit matrix inversion."""
    x_pred = a @ belief.mean
    p_pred = a @ belief.cov @ a.T + q
    s = c @ p_pred @ c.T + r
    k = p_pred @ c.T @ np.linalg.inv(s)
    x = x_pred + k @ (z - c @ x_pred)
    p = (np.eye(len(x)) - k @ c) @ p_pred
    return GaussianBelief(mean=x, cov=p)


def check_kf_equivalence(n_seeds: int = 10, n_steps: int = 1000) -> CheckResult:
    start = time.perf_counter()
    worst = 0.0
    for seed in range(n_seeds):
        rng = np.random.Generator(np.random.PCG64(seed))
        n, m = 2, 2
        a = rng.normal(size=(n, n))
        a *= 0.9 / max(abs(np.linalg.eigvals(a)))
        c = rng.normal(size=(m, n)) + np.eye(m)
        q = np.diag(rng.uniform(0.01, 0.1, n))
        r = np.diag(rng.uniform(0.01, 0.1, m))
        transition = lambda x: a @ x  # noqa: E731
        observation = lambda x: c @ x  # noqa: E731

        ref = GaussianBelief(mean=np.zeros(n), cov=np.eye(n))
        bel_e = GaussianBelief(mean=np.zeros(n), cov=np.eye(n))
        bel_u = GaussianBelief(mean=np.zeros(n), cov=np.eye(n))
        x_true = rng.normal(size=n)
        for _ in range(n_steps):
            x_true = a @ x_true + rng.multivariate_normal(np.zeros(n), q)
            z = c @ x_true + rng.multivariate_normal(np.zeros(m), r)
            ref = _reference_kf(ref, z, a, c, q, r)
            bel_e, _ = ekf_step(bel_e, z, transition, observation, q, r)
            bel_u, _ = ukf_step(bel_u, z, transition, observation, q, r)
            worst = max(
                worst,
                float(np.max(np.abs(bel_e.mean - ref.mean))),
                float(np.max(np.abs(bel_u.mean - ref.mean))),
            )
    return _result(
        "linear-KF equivalence",
        worst < 1e-9,
        f"max state deviation {worst:.2e} over {n_seeds} seeds x {n_steps} steps",
        start,
    )


# ---------------------------------------------------------------------------
# 2. Unscented transform vs Monte-Carlo through the tyre force map


def check_ut_monte_carlo(n_samples: int = 1_000_000) -> CheckResult:
    start = time.perf_counter()
    tyre = TyreParams()
    sigma = np.deg2rad(0.1)
    points_deg = (0.5, 2.0, 4.5, 7.0, 12.0)  # linear through saturated slip
    rng = np.random.Generator(np.random.PCG64(2024))
    worst_z = 0.0
    for alpha0_deg in points_deg:
        alpha0 = np.deg2rad(alpha0_deg)
        sps = sigma_points(
            GaussianBelief(mean=np.array([alpha0]), cov=np.array([[sigma**2]])),
            UkfScaling(),
        )
        ut_mean, ut_cov = unscented_transform(
            sps, lambda x: np.array([dugoff_axle_force(float(x[0]), tyre, "front")])
        )
        samples = alpha0 + sigma * rng.standard_normal(n_samples)
        forces = np.array([dugoff_axle_force(float(a), tyre, "front") for a in samples])
        mc_mean = forces.mean()
        mc_var = forces.var(ddof=1)
        se_mean = forces.std(ddof=1) / math.sqrt(n_samples)
        centered = forces - mc_mean
        m4 = np.mean(centered**4)
        se_var = math.sqrt(max(m4 - mc_var**2, 0.0) / n_samples)
        z_mean = abs(ut_mean[0] - mc_mean) / se_mean
        z_var = abs(ut_cov[0, 0] - mc_var) / se_var
        worst_z = max(worst_z, z_mean, z_var)
    return _result(
        "unscented-transform fidelity",
        worst_z < 3.0,
        f"worst moment deviation {worst_z:.2f} standard errors over {len(points_deg)} points",
        start,
    )


# ---------------------------------------------------------------------------
# 3. Gradient correctness via central finite differences


def _fd_grad(params, key, index, batch, targets, spec):
    theta = params[key].flat[index]
    h = 1e-5 * max(1.0, abs(theta))
    plus = {k: v.copy() for k, v in params.items()}
    minus = {k: v.copy() for k, v in params.items()}
    plus[key].flat[index] = theta + h
    minus[key].flat[index] = theta - h
    lp, _ = loss_and_grads(plus, batch, targets, spec, training=False)
    lm, _ = loss_and_grads(minus, batch, targets, spec, training=False)
    return (lp - lm) / (2.0 * h)


def check_gradients(n_seeds: int = 10) -> CheckResult:
    start = time.perf_counter()
    worst = 0.0
    specs = (
        NetworkSpec(kind="ffnn", input_width=5, hidden=(8, 6)),
        NetworkSpec(kind="rnn", input_width=3, hidden=(4, 3), window=5),
    )
    for spec in specs:
        for seed in range(n_seeds):
            rng = np.random.Generator(np.random.PCG64(seed))
            if spec.kind == "ffnn":
                batch = rng.normal(size=(7, spec.input_width))
            else:
                batch = rng.normal(size=(3, spec.window, spec.input_width))
            targets = rng.normal(size=len(batch))
            params = xavier_init(spec, seed)
            _, grads = loss_and_grads(params, batch, targets, spec, training=False)
            probe_rng = np.random.Generator(np.random.PCG64(seed + 999))
            for key in params:
                probes = probe_rng.choice(
                    params[key].size, size=min(5, params[key].size), replace=False
                )
                for index in probes:
                    analytic = grads[key].flat[index]
                    fd = _fd_grad(params, key, int(index), batch, targets, spec)
                    scale = max(abs(analytic), abs(fd))
                    if scale < 1e-6:
                        continue
                    worst = max(worst, abs(analytic - fd) / scale)
    return _result(
        "gradient correctness",
        worst < 1e-4,
        f"worst relative FD deviation {worst:.2e} over {n_seeds} seeds per network",
        start,
    )


# ---------------------------------------------------------------------------
# 4. Adaptive observation-noise law


def check_adaptive_law() -> CheckResult:
    start = time.perf_counter()
    cfg = AdaptiveNoiseConfig()
    nominal = (100.0, 100.0)
    ok = True
    details = []

    # at the trigger the reduction is exactly zero
    (sf, _), _, _ = adapt_tyre_noise(nominal, cfg.trigger_threshold, True, cfg)
    ok &= abs(sf - 100.0) < 1e-6

    # 800 N past the trigger with slope 800: sigma = 100 - 12.5*(1 - e^-0.05)
    expected = 100.0 - cfg.r_max * (1.0 - math.exp(-cfg.exponent_gain * 1.0**2))
    (sf, _), _, _ = adapt_tyre_noise(nominal, 1500.0, True, cfg)
    ok &= abs(sf - expected) < 1e-6
    details.append(f"sigma(1500)={sf:.6f}")

    # asymptote: full r_max reduction
    (sf, _), _, _ = adapt_tyre_noise(nominal, 1e9, True, cfg)
    ok &= abs(sf - (100.0 - cfg.r_max)) < 1e-6

    # single excursion above/below: exactly one on and one off transition
    profile = np.concatenate(
        [np.full(20, 300.0), np.full(30, 900.0), np.full(20, 300.0)]
    )
    active = False
    states = []
    for df in profile:
        _, active, _ = adapt_tyre_noise(nominal, float(df), active, cfg)
        states.append(active)
    transitions = np.diff(np.asarray(states, dtype=int))
    ok &= int((transitions == 1).sum()) == 1 and int((transitions == -1).sum()) == 1
    return _result(
        "adaptive-noise law",
        ok,
        "; ".join(details) + f"; {int((transitions == 1).sum())} on / "
        f"{int((transitions == -1).sum())} off transitions",
        start,
    )


# ---------------------------------------------------------------------------
# 5. Zero-phase filtering


def check_fir() -> CheckResult:
    start = time.perf_counter()
    fs = 100.0
    t = np.arange(2000) / fs
    ok = True

    x1 = np.sin(2 * np.pi * 1.0 * t)
    y1 = zero_phase_lowpass(x1, 5.0, fs)
    basis = np.column_stack([np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)])
    coef, *_ = np.linalg.lstsq(basis[200:-200], y1[200:-200], rcond=None)
    amp1 = float(np.hypot(*coef))
    ok &= abs(amp1 - 1.0) < 0.01
    lags = np.arange(-50, 51)
    xc = [float(np.dot(y1[200 + L : 1800 + L], x1[200:1800])) for L in lags]
    zero_lag = int(lags[int(np.argmax(xc))])
    ok &= zero_lag == 0

    x20 = np.sin(2 * np.pi * 20.0 * t)
    y20 = zero_phase_lowpass(x20, 5.0, fs)
    basis20 = np.column_stack([np.sin(2 * np.pi * 20 * t), np.cos(2 * np.pi * 20 * t)])
    coef20, *_ = np.linalg.lstsq(basis20[200:-200], y20[200:-200], rcond=None)
    amp20 = float(np.hypot(*coef20))
    atten_db = -20.0 * math.log10(max(amp20, 1e-300))
    ok &= atten_db >= 40.0
    return _result(
        "zero-phase filtering",
        ok,
        f"1 Hz amplitude {amp1:.4f}, lag {zero_lag}, 20 Hz attenuation {atten_db:.1f} dB",
        start,
    )


# ---------------------------------------------------------------------------
# 6. KPI arithmetic


def check_kpis() -> CheckResult:
    start = time.perf_counter()
    ok = True
    val = rmse(np.array([0.3, -0.4]))
    ok &= abs(val - math.sqrt(0.125)) < 1e-12
    ok &= abs(val - 0.353553) < 5e-7

    rng = np.random.Generator(np.random.PCG64(7))
    for _ in range(100):
        n = int(rng.integers(2, 300))
        hat = rng.normal(size=n)
        true = rng.normal(size=n)
        ay = rng.uniform(-9, 9, size=n)
        k = compute_kpis(hat, true, ay)
        ok &= k.rmse <= k.max_error + 1e-15
        full = compute_kpis(hat, true, np.full(n, 5.0))  # every frame nonlinear
        ok &= abs(full.rmse_nl - full.rmse) < 1e-12
    return _result("KPI arithmetic", ok, f"rmse(0.3,-0.4) = {val:.6f} deg", start)


# ---------------------------------------------------------------------------


ALL_CHECKS = (
    check_kf_equivalence,
    check_ut_monte_carlo,
    check_gradients,
    check_adaptive_law,
    check_fir,
    check_kpis,
)


def run_selftest() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]

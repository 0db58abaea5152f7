"""EKF and UKF sideslip observers with adaptive tyre-force observation noise.

The step functions are written against generic transition/observation
callables plus explicit noise covariances, so they run unchanged on any
system (the linear-Gaussian equivalence checks exercise exactly that).
`run_filter` wires them to the single-track vehicle model per frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import vehicle
from .dataio import FRAME_COLUMNS
from .vehicle import ControlInput, DivergenceError, TyreParams, VehicleParams, VehicleState


class FilterSingularityError(RuntimeError):
    """Innovation covariance could not be inverted."""


class CovarianceError(ValueError):
    """Covariance violated positive semi-definiteness beyond tolerance."""


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)


@dataclass(frozen=True)
class NoiseParams:
    """Per-step noise stds on the discretized system.

    Process noise (sigma_vy, sigma_yaw_rate) is added to the predicted
    covariance each step; observation stds populate the R diagonal.
    """

    sigma_vy: float = 0.05
    sigma_yaw_rate: float = 0.005
    sigma_ay: float = 0.12
    sigma_yawrate_me: float = 0.004
    sigma_fy_front: float = 400.0
    sigma_fy_rear: float = 400.0

    def __post_init__(self):
        for name in (
            "sigma_vy",
            "sigma_yaw_rate",
            "sigma_ay",
            "sigma_yawrate_me",
            "sigma_fy_front",
            "sigma_fy_rear",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def process_cov(self) -> np.ndarray:
        return np.diag([self.sigma_vy**2, self.sigma_yaw_rate**2])

    def observation_cov(self, obs_set: str, fy_stds: tuple[float, float] | None = None) -> np.ndarray:
        if obs_set == "y1":
            return np.diag([self.sigma_ay**2, self.sigma_yawrate_me**2])
        if obs_set == "y2":
            f, r = fy_stds if fy_stds is not None else (self.sigma_fy_front, self.sigma_fy_rear)
            return np.diag([self.sigma_ay**2, self.sigma_yawrate_me**2, f**2, r**2])
        raise ValueError(f"unknown observation set {obs_set!r}")


@dataclass(frozen=True)
class AdaptiveNoiseConfig:
    trigger_threshold: float = 700.0
    release_threshold: float = 500.0
    r_max: float = 12.5
    slope_sigma: float = 800.0
    exponent_gain: float = 0.05

    def __post_init__(self):
        if not self.release_threshold < self.trigger_threshold:
            raise ValueError("release_threshold must be below trigger_threshold")
        if self.slope_sigma <= 0:
            raise ValueError("slope_sigma must be > 0")
        if self.r_max < 0:
            raise ValueError("r_max must be >= 0")


@dataclass(frozen=True)
class UkfScaling:
    """Scaled unscented-transform parameters; kappa defaults to 3 - n."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None

    def resolved_kappa(self, n: int) -> float:
        return 3.0 - n if self.kappa is None else self.kappa


@dataclass
class SigmaPointSet:
    points: np.ndarray  # (2n+1, n); row 0 is the prior mean
    mean_weights: np.ndarray
    cov_weights: np.ndarray


@dataclass
class StepRecord:
    innovation: np.ndarray
    innovation_cov: np.ndarray
    gain: np.ndarray
    predicted_mean: np.ndarray
    predicted_cov: np.ndarray


@dataclass
class FilterOutput:
    """Per-step filter trace over one manoeuvre."""

    t: np.ndarray
    means: np.ndarray  # (N, 2)
    covs: np.ndarray  # (N, 2, 2)
    beta_hat: np.ndarray  # rad
    beta_true: np.ndarray  # rad
    adapt_flag: np.ndarray  # 0/1
    innovations: list = field(default_factory=list)

    def __len__(self) -> int:
        return self.t.shape[0]

    def to_table(self) -> np.ndarray:
        """Rows: t, beta_hat, beta_true, vy_hat, yawrate_hat, p11, p22, adapt_flag."""
        return np.column_stack(
            [
                self.t,
                self.beta_hat,
                self.beta_true,
                self.means[:, 0],
                self.means[:, 1],
                self.covs[:, 0, 0],
                self.covs[:, 1, 1],
                self.adapt_flag,
            ]
        )


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def numeric_jacobian(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of f at x; step eps relative to |x_i|."""
    x = np.asarray(x, dtype=float)
    y0 = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(y0)):
        raise ValueError("function not finite at the expansion point")
    jac = np.empty((y0.size, x.size))
    for j in range(x.size):
        h = eps * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        yp = np.asarray(f(xp), dtype=float)
        ym = np.asarray(f(xm), dtype=float)
        if not (np.all(np.isfinite(yp)) and np.all(np.isfinite(ym))):
            raise ValueError(f"function not finite when perturbing coordinate {j}")
        jac[:, j] = (yp - ym) / (2.0 * h)
    return jac


def _solve_innovation(s: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(s, rhs)
    except np.linalg.LinAlgError as exc:
        raise FilterSingularityError(f"innovation covariance singular: {exc}") from exc


def ekf_step(
    belief: GaussianBelief,
    measurement: np.ndarray,
    transition,
    observation,
    process_cov: np.ndarray,
    obs_cov: np.ndarray,
    jac_eps: float = 1e-6,
) -> tuple[GaussianBelief, StepRecord]:
    """One EKF predict/update: numeric Jacobians, Joseph-form posterior."""
    x = belief.mean
    f_jac = numeric_jacobian(transition, x, jac_eps)
    x_pred = np.asarray(transition(x), dtype=float)
    p_pred = _symmetrize(f_jac @ belief.cov @ f_jac.T + process_cov)

    h_jac = numeric_jacobian(observation, x_pred, jac_eps)
    z_pred = np.asarray(observation(x_pred), dtype=float)
    innovation = np.asarray(measurement, dtype=float) - z_pred
    s = _symmetrize(h_jac @ p_pred @ h_jac.T + obs_cov)
    gain = _solve_innovation(s, (p_pred @ h_jac.T).T).T

    x_post = x_pred + gain @ innovation
    i_kh = np.eye(x.size) - gain @ h_jac
    p_post = _symmetrize(i_kh @ p_pred @ i_kh.T + gain @ obs_cov @ gain.T)
    record = StepRecord(innovation, s, gain, x_pred, p_pred)
    return GaussianBelief(x_post, p_post), record


def sigma_points(belief: GaussianBelief, scaling: UkfScaling = UkfScaling()) -> SigmaPointSet:
    """Scaled-UT sigma points: mean ± columns of sqrt((n+λ) P)."""
    mean = np.asarray(belief.mean, dtype=float)
    cov = _symmetrize(np.asarray(belief.cov, dtype=float))
    n = mean.size
    kappa = scaling.resolved_kappa(n)
    lam = scaling.alpha**2 * (n + kappa) - n

    w, v = np.linalg.eigh((n + lam) * cov)
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.min(w) < -1e-12 * scale:
        raise CovarianceError(f"covariance not PSD (min eigenvalue {np.min(w):.3e})")
    root = v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T

    points = np.empty((2 * n + 1, n))
    points[0] = mean
    for i in range(n):
        points[1 + i] = mean + root[:, i]
        points[1 + n + i] = mean - root[:, i]

    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = lam / (n + lam) + (1.0 - scaling.alpha**2 + scaling.beta)
    return SigmaPointSet(points, wm, wc)


def unscented_transform(points: SigmaPointSet, f) -> tuple[np.ndarray, np.ndarray]:
    """Propagate sigma points through f; weighted mean and covariance."""
    outputs = np.array([np.asarray(f(p), dtype=float) for p in points.points])
    mean = points.mean_weights @ outputs
    centered = outputs - mean
    cov = (points.cov_weights * centered.T) @ centered
    return mean, _symmetrize(cov)


def ukf_step(
    belief: GaussianBelief,
    measurement: np.ndarray,
    transition,
    observation,
    process_cov: np.ndarray,
    obs_cov: np.ndarray,
    scaling: UkfScaling = UkfScaling(),
) -> tuple[GaussianBelief, StepRecord]:
    """One UKF step; sigma points are redrawn from the predicted belief."""
    sps = sigma_points(belief, scaling)
    x_pred, p_prop = unscented_transform(sps, transition)
    p_pred = _symmetrize(p_prop + process_cov)

    pred_sps = sigma_points(GaussianBelief(x_pred, p_pred), scaling)
    z_out = np.array([np.asarray(observation(p), dtype=float) for p in pred_sps.points])
    z_pred = pred_sps.mean_weights @ z_out
    z_centered = z_out - z_pred
    s = _symmetrize((pred_sps.cov_weights * z_centered.T) @ z_centered + obs_cov)
    x_centered = pred_sps.points - x_pred
    cross = (pred_sps.cov_weights * x_centered.T) @ z_centered

    gain = _solve_innovation(s, cross.T).T
    innovation = np.asarray(measurement, dtype=float) - z_pred
    x_post = x_pred + gain @ innovation
    p_post = _symmetrize(p_pred - gain @ s @ gain.T)
    record = StepRecord(innovation, s, gain, x_pred, p_pred)
    return GaussianBelief(x_post, p_post), record


def adapt_tyre_noise(
    nominal: tuple[float, float],
    delta_fy: float,
    active: bool,
    config: AdaptiveNoiseConfig = AdaptiveNoiseConfig(),
) -> tuple[tuple[float, float], bool, bool]:
    """Hysteresis-gated reduction of the tyre-force observation stds.

    Returns ((sigma_fy_front, sigma_fy_rear), new_state, flag). The stds
    shrink by at most r_max as the force mismatch grows past the trigger.
    """
    if delta_fy < 0:
        raise ValueError("delta_fy is an absolute mismatch, must be >= 0")
    if active:
        active = not delta_fy < config.release_threshold
    else:
        active = delta_fy > config.trigger_threshold
    if not active:
        return (nominal[0], nominal[1]), False, False
    z = (delta_fy - config.trigger_threshold) / config.slope_sigma
    reduction = config.r_max * (1.0 - math.exp(-config.exponent_gain * z * z))
    return (nominal[0] - reduction, nominal[1] - reduction), True, True


_COL = {name: i for i, name in enumerate(FRAME_COLUMNS)}

DEFAULT_INITIAL_COV = np.diag([0.5, 0.05])
DIVERGENCE_TRACE_BOUND = 1e3


def run_filter(
    kind: str,
    frames: np.ndarray,
    noise: NoiseParams = NoiseParams(),
    adaptive: AdaptiveNoiseConfig | None = None,
    obs_set: str = "y1",
    params: VehicleParams = VehicleParams(),
    tyre: TyreParams = TyreParams(),
    scaling: UkfScaling = UkfScaling(),
    dt: float = 0.01,
    initial: GaussianBelief | None = None,
    keep_innovations: bool = False,
) -> FilterOutput:
    """Run an EKF or UKF over one manoeuvre's frames.

    frames: (N, 19) array in the standard column order (a Manoeuvre's
    `.frames`). Adaptation applies only with obs_set='y2' and a config;
    the mismatch driving it is the larger of the two axle errors between
    measured forces and the Dugoff prediction at the current estimate.
    """
    if kind not in ("ekf", "ukf"):
        raise ValueError(f"unknown filter kind {kind!r}")
    if obs_set not in ("y1", "y2"):
        raise ValueError(f"unknown observation set {obs_set!r}")
    frames = np.asarray(frames, dtype=float)
    n = frames.shape[0]

    belief = initial or GaussianBelief(np.zeros(2), DEFAULT_INITIAL_COV.copy())
    q = noise.process_cov()
    active = False

    t = frames[:, _COL["t"]]
    vx_col = frames[:, _COL["vx"]]
    ay_col = frames[:, _COL["ay"]]
    r_col = frames[:, _COL["yaw_rate"]]
    d_col = frames[:, _COL["delta"]]
    fy_front = frames[:, _COL["fy_fl"]] + frames[:, _COL["fy_fr"]]
    fy_rear = frames[:, _COL["fy_rl"]] + frames[:, _COL["fy_rr"]]

    means = np.empty((n, 2))
    covs = np.empty((n, 2, 2))
    beta_hat = np.empty(n)
    flags = np.zeros(n)
    innovations: list = []

    for k in range(n):
        inp = ControlInput(delta=d_col[k], vx=max(vx_col[k], 0.5))

        def transition(x, inp=inp):
            s = vehicle.integrate_step(VehicleState(x[0], x[1]), inp, params, tyre, dt)
            return np.array([s.vy, s.yaw_rate])

        def observation(x, inp=inp):
            return np.array(
                vehicle.observe(VehicleState(x[0], x[1]), inp, params, tyre, obs_set)
            )

        if obs_set == "y1":
            measurement = np.array([ay_col[k], r_col[k]])
            r_cov = noise.observation_cov("y1")
        else:
            measurement = np.array([ay_col[k], r_col[k], fy_front[k], fy_rear[k]])
            if adaptive is not None:
                est = VehicleState(belief.mean[0], belief.mean[1])
                pred = vehicle.axle_forces(est, inp, params, tyre)
                delta_fy = max(
                    abs(fy_front[k] - pred.fy_front), abs(fy_rear[k] - pred.fy_rear)
                )
                stds, active, flag = adapt_tyre_noise(
                    (noise.sigma_fy_front, noise.sigma_fy_rear), delta_fy, active, adaptive
                )
                flags[k] = float(flag)
                r_cov = noise.observation_cov("y2", stds)
            else:
                r_cov = noise.observation_cov("y2")

        if kind == "ekf":
            belief, record = ekf_step(belief, measurement, transition, observation, q, r_cov)
        else:
            belief, record = ukf_step(
                belief, measurement, transition, observation, q, r_cov, scaling
            )

        if not np.all(np.isfinite(belief.mean)) or np.trace(belief.cov) > DIVERGENCE_TRACE_BOUND:
            raise DivergenceError(f"filter diverged at step {k} (t = {t[k]:.2f} s)")

        means[k] = belief.mean
        covs[k] = belief.cov
        beta_hat[k] = math.atan2(belief.mean[0], vx_col[k]) if vx_col[k] > 0 else 0.0
        if keep_innovations:
            innovations.append(record.innovation)

    return FilterOutput(
        t=t.copy(),
        means=means,
        covs=covs,
        beta_hat=beta_hat,
        beta_true=frames[:, _COL["beta_true"]].copy(),
        adapt_flag=flags,
        innovations=innovations,
    )

"""Ground-truth plant: two-track vehicle with load transfer and brush tyres.

This is the data generator the estimators are benchmarked against. It is
deliberately richer than the single-track/Dugoff model in `vehicle.py`:

* two tracks with lateral load transfer driven by a first-order lagged
  lateral acceleration (a crude roll mode),
* a brush-type saturating tyre with load-sensitive cornering stiffness,
* a friction-circle reduction of lateral capacity under braking/driving,
* slightly higher friction and stiffness than the estimator's defaults.

The mismatch between this plant and the estimator model is the point:
it is what the adaptive observation noise reacts to.

Wheel order everywhere: [fl, fr, rl, rr]. Left wheels sit at +y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataio import FRAME_COLUMNS, Manoeuvre
from .vehicle import DivergenceError

MANOEUVRE_KINDS = (
    "j_turn",
    "slalom",
    "double_lane_change",
    "random_steer",
    "spiral",
    "skidpad",
    "brake_in_turn",
    "track_lap",
)

# Reference 23-manoeuvre evaluation mix (counts per kind).
REFERENCE_TEST_MIX = {
    "j_turn": 5,
    "slalom": 4,
    "double_lane_change": 4,
    "random_steer": 2,
    "spiral": 3,
    "skidpad": 2,
    "brake_in_turn": 2,
    "track_lap": 1,
}

PLANT_DT = 0.01  # 100 Hz


@dataclass(frozen=True)
class PlantParams:
    """Two-track plant parameters. Defaults describe the same car as
    `VehicleParams` but with a richer tyre/load model."""

    mass: float = 1970.0
    yaw_inertia: float = 3498.0
    lf: float = 1.47
    lr: float = 1.41
    track_width: float = 1.6
    cg_height: float = 0.55
    gravity: float = 9.81
    # Fraction of the total lateral load transfer carried by the front axle.
    roll_split_front: float = 0.55
    roll_time_constant: float = 0.25
    # Brush tyre: per-wheel stiffness C = k * Fz * (1 - s * Fz / Fz_static).
    friction_mu: float = 1.08
    stiff_per_load_front: float = 13.317
    stiff_per_load_rear: float = 15.950
    load_sensitivity: float = 0.10
    min_wheel_load: float = 150.0
    fx_cap_fraction: float = 0.97

    def __post_init__(self):
        if self.mass <= 0 or self.yaw_inertia <= 0:
            raise ValueError("mass and yaw inertia must be positive")
        if self.lf <= 0 or self.lr <= 0 or self.track_width <= 0:
            raise ValueError("geometry must be positive")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr

    @property
    def static_load_front_wheel(self) -> float:
        return self.mass * self.gravity * self.lr / (2.0 * self.wheelbase)

    @property
    def static_load_rear_wheel(self) -> float:
        return self.mass * self.gravity * self.lf / (2.0 * self.wheelbase)

    def static_axle_stiffness(self, axle: str) -> float:
        """Total axle cornering stiffness at static load (N/rad)."""
        if axle == "front":
            k, fz0 = self.stiff_per_load_front, self.static_load_front_wheel
        else:
            k, fz0 = self.stiff_per_load_rear, self.static_load_rear_wheel
        return 2.0 * k * fz0 * (1.0 - self.load_sensitivity)


@dataclass
class PlantState:
    """Plant state plus the per-wheel quantities derived at that state."""

    vy: float = 0.0
    yaw_rate: float = 0.0
    ay_lt: float = 0.0  # lagged lateral acceleration driving load transfer
    wheel_loads: np.ndarray = field(default_factory=lambda: np.zeros(4))
    wheel_fy: np.ndarray = field(default_factory=lambda: np.zeros(4))
    wheel_fx: np.ndarray = field(default_factory=lambda: np.zeros(4))


def brush_lateral_force(tan_alpha: float, stiffness: float, mu_fz: float) -> float:
    """Cubic brush tyre: F = C t (1 - θ|t| + θ²t²/3), θ = C/(3 μFz),
    saturating exactly at μFz for |t| ≥ 3 μFz / C."""
    if mu_fz <= 0.0:
        return 0.0
    t_sat = 3.0 * mu_fz / stiffness
    if abs(tan_alpha) >= t_sat:
        return math.copysign(mu_fz, tan_alpha)
    theta = stiffness / (3.0 * mu_fz)
    return stiffness * tan_alpha * (
        1.0 - theta * abs(tan_alpha) + theta * theta * tan_alpha * tan_alpha / 3.0
    )


def wheel_loads(ay_lt: float, p: PlantParams) -> tuple[float, float, float, float]:
    """Vertical wheel loads [fl, fr, rl, rr] under lateral transfer.

    Positive lateral acceleration (left turn) loads the right wheels.
    Pair sums are preserved, so Σ loads = m g always.
    """
    transfer = p.mass * ay_lt * p.cg_height / p.track_width
    d_front = p.roll_split_front * transfer
    d_rear = (1.0 - p.roll_split_front) * transfer
    fz0f, fz0r = p.static_load_front_wheel, p.static_load_rear_wheel
    lo = p.min_wheel_load

    def pair(fz0: float, d: float) -> tuple[float, float]:
        left, right = fz0 - d, fz0 + d
        if left < lo:
            left, right = lo, 2.0 * fz0 - lo
        elif right < lo:
            right, left = lo, 2.0 * fz0 - lo
        return left, right

    fl, fr = pair(fz0f, d_front)
    rl, rr = pair(fz0r, d_rear)
    return fl, fr, rl, rr


def _wheel_stiffness(fz: float, k: float, fz0: float, p: PlantParams) -> float:
    c = k * fz * (1.0 - p.load_sensitivity * fz / fz0)
    return max(c, 1e3)


def _forces(
    vy: float,
    r: float,
    ay_lt: float,
    delta: float,
    vx: float,
    ax_cmd: float,
    p: PlantParams,
):
    """Per-wheel forces and the resulting body force/moment sums.

    Returns (fx[4], fy[4], fz[4], sum_fy_body, yaw_moment).
    """
    fz = wheel_loads(ay_lt, p)
    tw2 = 0.5 * p.track_width
    xs = (p.lf, p.lf, -p.lr, -p.lr)
    ys = (tw2, -tw2, tw2, -tw2)
    ks = (p.stiff_per_load_front,) * 2 + (p.stiff_per_load_rear,) * 2
    fz0s = (p.static_load_front_wheel,) * 2 + (p.static_load_rear_wheel,) * 2

    # Drive/brake force demand, distributed proportionally to load.
    f_long = p.mass * (ax_cmd - r * vy)
    total_load = p.mass * p.gravity

    cd, sd = math.cos(delta), math.sin(delta)
    fx = [0.0] * 4
    fy = [0.0] * 4
    sum_fy_body = 0.0
    moment = 0.0
    for w in range(4):
        mu_fz = p.friction_mu * fz[w]
        fx_w = f_long * fz[w] / total_load
        cap = p.fx_cap_fraction * mu_fz
        if fx_w > cap:
            fx_w = cap
        elif fx_w < -cap:
            fx_w = -cap
        ratio = fx_w / mu_fz
        mu_fz_y = mu_fz * math.sqrt(max(0.04, 1.0 - ratio * ratio))

        vxp = vx - r * ys[w]
        vyp = vy + r * xs[w]
        if w < 2:
            alpha = delta - math.atan2(vyp, vxp)
        else:
            alpha = -math.atan2(vyp, vxp)
        c_w = _wheel_stiffness(fz[w], ks[w], fz0s[w], p)
        fy_w = brush_lateral_force(math.tan(alpha), c_w, mu_fz_y)

        if w < 2:  # steered wheels: rotate into the body frame
            fy_b = fy_w * cd + fx_w * sd
            fx_b = fx_w * cd - fy_w * sd
        else:
            fy_b, fx_b = fy_w, fx_w
        sum_fy_body += fy_b
        moment += xs[w] * fy_b - ys[w] * fx_b
        fx[w], fy[w] = fx_w, fy_w
    return fx, fy, fz, sum_fy_body, moment


def _derivative(
    vy: float,
    r: float,
    ay_lt: float,
    delta: float,
    vx: float,
    ax_cmd: float,
    p: PlantParams,
    bank: float = 0.0,
) -> tuple[float, float, float]:
    _, _, _, sum_fy, moment = _forces(vy, r, ay_lt, delta, vx, ax_cmd, p)
    ay_inst = sum_fy / p.mass
    # Road bank pulls the body sideways through gravity. Accelerometers
    # measure specific force (= tyre forces / m), so `ay` channels and the
    # roll lag stay bank-free; only the velocity dynamics feel it.
    dvy = ay_inst - vx * r + p.gravity * math.sin(bank)
    dr = moment / p.yaw_inertia
    day = (ay_inst - ay_lt) / p.roll_time_constant
    return dvy, dr, day


def plant_step(
    state: PlantState,
    delta: float,
    vx: float,
    ax_cmd: float,
    params: PlantParams,
    dt: float = PLANT_DT,
    bank: float = 0.0,
) -> PlantState:
    """One RK4 step; inputs held constant over the step. The returned
    state carries the wheel quantities re-evaluated at the new state."""
    vy, r, ay = _rk4(state.vy, state.yaw_rate, state.ay_lt, delta, vx, ax_cmd, params, dt, bank)
    fx, fy, fz, _, _ = _forces(vy, r, ay, delta, vx, ax_cmd, params)
    return PlantState(
        vy=vy,
        yaw_rate=r,
        ay_lt=ay,
        wheel_loads=np.array(fz),
        wheel_fy=np.array(fy),
        wheel_fx=np.array(fx),
    )


def _rk4(vy, r, ay, delta, vx, ax_cmd, p, dt, bank=0.0):
    k1 = _derivative(vy, r, ay, delta, vx, ax_cmd, p, bank)
    k2 = _derivative(
        vy + 0.5 * dt * k1[0], r + 0.5 * dt * k1[1], ay + 0.5 * dt * k1[2],
        delta, vx, ax_cmd, p, bank,
    )
    k3 = _derivative(
        vy + 0.5 * dt * k2[0], r + 0.5 * dt * k2[1], ay + 0.5 * dt * k2[2],
        delta, vx, ax_cmd, p, bank,
    )
    k4 = _derivative(
        vy + dt * k3[0], r + dt * k3[1], ay + dt * k3[2],
        delta, vx, ax_cmd, p, bank,
    )
    vy += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    r += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    ay += dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return vy, r, ay


# --------------------------------------------------------------------------
# Manoeuvre scripting


@dataclass(frozen=True)
class ManoeuvreScript:
    """Deterministic recipe for one manoeuvre."""

    id: str
    kind: str
    duration: float
    seed: int
    # Piecewise-linear speed profile: ((t0, v0), (t1, v1), ...).
    vx_knots: tuple[tuple[float, float], ...]
    # Kind-specific steering parameters (radians at the wheel).
    steer: dict = field(default_factory=dict)
    # Road description: band-limited bank-angle disturbance, off by default
    # so bare scripts drive a perfectly flat road.
    # Keys: bank_std (rad), bank_cutoff (Hz), bank_max (rad).
    road: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.kind not in MANOEUVRE_KINDS:
            raise ValueError(f"unknown manoeuvre kind {self.kind!r}")


def _band_limited_noise(t: np.ndarray, cutoff: float, rng: np.random.Generator) -> np.ndarray:
    """Unit-std noise, white through a double one-pole low pass."""
    raw = rng.standard_normal(t.size)
    a = math.exp(-2.0 * math.pi * cutoff * PLANT_DT)
    for _ in range(2):
        y = 0.0
        for i in range(raw.size):
            y = a * y + (1.0 - a) * raw[i]
            raw[i] = y
    sd = float(np.std(raw))
    return raw / sd if sd > 0 else raw


def _bank_profile(script: ManoeuvreScript, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Road bank angle over the run (rad). Crown changes, superelevated
    corners and patch repairs make a few degrees of slowly varying bank
    the norm on real roads; scripts opt in through their `road` dict."""
    std = float(script.road.get("bank_std", 0.0))
    if std <= 0.0:
        return np.zeros_like(t)
    cutoff = float(script.road.get("bank_cutoff", 0.3))
    cap = float(script.road.get("bank_max", 0.07))
    bank = std * _band_limited_noise(t, cutoff, rng)
    # ease in so runs still start from an equilibrium straight-line state
    bank *= np.clip(t / 2.0, 0.0, 1.0)
    return np.clip(bank, -cap, cap)


def _sine_lobe(t: np.ndarray, t0: float, width: float) -> np.ndarray:
    """One half-sine pulse on [t0, t0+width], zero elsewhere."""
    u = (t - t0) / width
    out = np.sin(np.pi * np.clip(u, 0.0, 1.0))
    out[(u < 0.0) | (u > 1.0)] = 0.0
    return out


def _steer_profile(script: ManoeuvreScript, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    p = script.steer
    kind = script.kind
    if kind == "j_turn":
        t0, ramp, amp = p["t_start"], p["ramp"], p["amplitude"]
        return amp * np.clip((t - t0) / ramp, 0.0, 1.0)
    if kind == "slalom":
        t0, amp, freq = p["t_start"], p["amplitude"], p["freq"]
        env = np.clip((t - t0) / 1.0, 0.0, 1.0)
        return amp * env * np.sin(2.0 * np.pi * freq * (t - t0)) * (t >= t0)
    if kind == "double_lane_change":
        amp, t0, lobe, gap = p["amplitude"], p["t_start"], p["lobe"], p["gap"]
        out = _sine_lobe(t, t0, lobe) - _sine_lobe(t, t0 + lobe + gap, lobe)
        out += 0.45 * _sine_lobe(t, t0 + 2.0 * (lobe + gap), lobe)
        return amp * out
    if kind == "random_steer":
        out = _band_limited_noise(t, p.get("cutoff", 1.0), rng)
        env = np.clip(t / 1.0, 0.0, 1.0)
        return p["amplitude_std"] * out * env
    if kind == "spiral":
        t0, amp = p["t_start"], p["amplitude"]
        return amp * np.clip((t - t0) / (script.duration - t0), 0.0, 1.0)
    if kind in ("skidpad", "brake_in_turn"):
        t0, ramp, amp = p["t_start"], p["ramp"], p["amplitude"]
        return amp * np.clip((t - t0) / ramp, 0.0, 1.0)
    if kind == "track_lap":
        amp = p["amplitude"]
        n_corners = int(p.get("n_corners", 6))
        out = np.zeros_like(t)
        tc = 1.0
        sign = 1.0
        for _ in range(n_corners):
            width = float(rng.uniform(1.8, 3.2))
            straight = float(rng.uniform(0.6, 1.6))
            scale = float(rng.uniform(0.55, 1.0))
            out += sign * scale * _sine_lobe(t, tc, width)
            if rng.uniform() < 0.75:
                sign = -sign
            tc += width + straight
        return amp * out
    raise ValueError(f"unknown manoeuvre kind {kind!r}")


@dataclass(frozen=True)
class SensorNoiseSpec:
    """Gaussian std + fixed-bias bound per measured channel group."""

    std_ay: float = 0.05
    std_yaw_rate: float = 0.002
    std_delta: float = 0.001
    std_vx: float = 0.05
    std_ax: float = 0.05
    std_force: float = 50.0
    # Bias bounds reflect what survives calibration on production sensors:
    # steering offset from alignment/crown compensation, wheel-speed scale
    # error from tyre radius, accelerometer mount misalignment.
    bias_ay: float = 0.04
    bias_yaw_rate: float = 0.0005
    bias_delta: float = 0.003
    bias_vx: float = 0.12
    bias_ax: float = 0.05
    bias_force: float = 25.0
    # Wheel-speed V_x reads low while the wheels are braked (longitudinal
    # slip): fractional error = gain * max(0, -a_x) / g.
    brake_slip_gain: float = 0.05

    def __post_init__(self):
        for name in ("std_ay", "std_yaw_rate", "std_delta", "std_vx", "std_ax", "std_force"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def zero(cls) -> "SensorNoiseSpec":
        return cls(*([0.0] * 13))


# Column -> (std field, bias field); force columns share one group but get
# independent bias draws.
_NOISE_GROUPS = [
    ("vx", "std_vx", "bias_vx"),
    ("ax", "std_ax", "bias_ax"),
    ("ay", "std_ay", "bias_ay"),
    ("yaw_rate", "std_yaw_rate", "bias_yaw_rate"),
    ("delta", "std_delta", "bias_delta"),
] + [(c, "std_force", "bias_force") for c in FRAME_COLUMNS if c.startswith(("fx_", "fy_", "fz_"))]


def inject_noise(
    clean_frames: np.ndarray, noise: SensorNoiseSpec, rng: np.random.Generator
) -> np.ndarray:
    """Additive Gaussian noise + a per-run constant bias per channel,
    plus the deterministic wheel-speed slip error on V_x under braking.

    `t` and `beta_true` are never touched. Accepts an (N, 19) block; a
    single frame is the (1, 19) case.
    """
    frames = np.array(clean_frames, dtype=float, copy=True)
    n = frames.shape[0]
    cols = {name: i for i, name in enumerate(FRAME_COLUMNS)}
    if noise.brake_slip_gain > 0:
        braking = np.maximum(0.0, -frames[:, cols["ax"]])
        frames[:, cols["vx"]] *= 1.0 - noise.brake_slip_gain * braking / 9.81
    for col, std_name, bias_name in _NOISE_GROUPS:
        std = getattr(noise, std_name)
        bound = getattr(noise, bias_name)
        bias = rng.uniform(-bound, bound) if bound > 0 else 0.0
        frames[:, cols[col]] += bias
        if std > 0:
            frames[:, cols[col]] += std * rng.standard_normal(n)
    return frames


def run_manoeuvre(
    script: ManoeuvreScript,
    plant: PlantParams | None = None,
    noise: SensorNoiseSpec | None = None,
    dt: float = PLANT_DT,
) -> Manoeuvre:
    """Simulate one script and return its measured frames + truth sidecar.

    Frames are sampled at exactly 1/dt Hz. The returned object is fully
    determined by (script, plant, noise): the script seed spawns isolated
    streams for the steering shape and the sensor noise.
    """
    plant = plant or PlantParams()
    noise = noise if noise is not None else SensorNoiseSpec()

    n = int(round(script.duration / dt))
    t = np.arange(n) * dt
    ss = np.random.SeedSequence(script.seed)
    steer_ss, noise_ss, road_ss = ss.spawn(3)
    steer_rng = np.random.Generator(np.random.PCG64(steer_ss))
    noise_rng = np.random.Generator(np.random.PCG64(noise_ss))
    road_rng = np.random.Generator(np.random.PCG64(road_ss))

    delta = _steer_profile(script, t, steer_rng)
    bank = _bank_profile(script, t, road_rng)
    knots = np.array(script.vx_knots, dtype=float)
    vx = np.interp(t, knots[:, 0], knots[:, 1])
    # Commanded longitudinal acceleration = slope of the speed profile.
    ax_cmd = np.gradient(vx, dt) if n > 1 else np.zeros(n)

    frames = np.empty((n, len(FRAME_COLUMNS)))
    truth = np.empty((n, 4))
    vy = r = ay_lt = 0.0
    for k in range(n):
        d_k, vx_k, ax_k = float(delta[k]), float(vx[k]), float(ax_cmd[k])
        fx, fy, fz, sum_fy, _ = _forces(vy, r, ay_lt, d_k, vx_k, ax_k, plant)
        ay_inst = sum_fy / plant.mass
        ax_body = ax_k - r * vy
        frames[k, 0] = t[k]
        frames[k, 1] = vx_k
        frames[k, 2] = ax_body
        frames[k, 3] = ay_inst
        frames[k, 4] = r
        frames[k, 5] = d_k
        frames[k, 6:18:3] = fx
        frames[k, 7:18:3] = fy
        frames[k, 8:18:3] = fz
        frames[k, 18] = math.atan2(vy, vx_k)
        truth[k] = (t[k], ay_inst, vy, r)
        vy, r, ay_lt = _rk4(vy, r, ay_lt, d_k, vx_k, ax_k, plant, dt, float(bank[k]))
        if not (math.isfinite(vy) and math.isfinite(r) and math.isfinite(ay_lt)):
            raise DivergenceError(
                f"plant state became non-finite at t = {t[k] + dt:.2f} s "
                f"in manoeuvre {script.id!r}"
            )
    noisy = inject_noise(frames, noise, noise_rng)
    noisy[:, 0] = frames[:, 0]
    return Manoeuvre(id=script.id, kind=script.kind, frames=noisy, truth=truth)


# --------------------------------------------------------------------------
# Catalogue construction

_KIND_DURATION = {
    "j_turn": 8.0,
    "slalom": 12.0,
    "double_lane_change": 8.0,
    "random_steer": 15.0,
    "spiral": 15.0,
    "skidpad": 15.0,
    "brake_in_turn": 10.0,
    "track_lap": 20.0,
}

_KIND_SPEED = {  # (lo, hi) m/s
    "j_turn": (16.0, 24.0),
    "slalom": (15.0, 22.0),
    "double_lane_change": (16.0, 24.0),
    "random_steer": (12.0, 20.0),
    "spiral": (14.0, 20.0),
    "skidpad": (10.0, 18.0),
    "brake_in_turn": (18.0, 24.0),
    "track_lap": (14.0, 20.0),
}

_KIND_TARGET_AY = {  # (lo, hi) m/s² — desired peak (std for random_steer)
    "j_turn": (3.0, 8.4),
    "slalom": (3.0, 7.8),
    "double_lane_change": (3.5, 8.2),
    "random_steer": (1.2, 2.6),
    "spiral": (6.5, 9.0),
    "skidpad": (2.0, 8.2),
    "brake_in_turn": (4.0, 7.5),
    "track_lap": (4.0, 7.5),
}

# Dynamic overshoot correction applied to the steady-state steer gain.
_KIND_SHAPE = {
    "j_turn": 1.05,
    "slalom": 1.10,
    "double_lane_change": 1.12,
    "random_steer": 1.0,
    "spiral": 1.0,
    "skidpad": 1.0,
    "brake_in_turn": 1.0,
    "track_lap": 1.05,
}

_MAX_STEER = 0.45  # rad, road-wheel angle cap

# Catalogue roads carry a realistic bank disturbance (~1.7 deg std, capped
# at 4 deg ≈ 7% superelevation — crown changes, camber, banked corners).
# The estimators' single-track model knows nothing about it, so dead
# reckoning drifts and the measurement fusion has to earn its keep.
_CATALOGUE_ROAD = {"bank_std": 0.03, "bank_cutoff": 0.6, "bank_max": 0.07}


def _axle_slip_for_force(demand: float, wheels: list[tuple[float, float]]) -> float:
    """tan(slip) at which an axle's wheels — (stiffness, mu*Fz) pairs sharing
    one slip angle — jointly produce `demand` N. Demand is clipped just
    inside the combined friction limit so the bisection stays posed."""
    capacity = sum(mu_fz for _, mu_fz in wheels)
    demand = min(demand, 0.98 * capacity)
    if demand <= 0.0:
        return 0.0
    lo, hi = 0.0, max(3.0 * mu_fz / c for c, mu_fz in wheels)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if sum(brush_lateral_force(mid, c, mu_fz) for c, mu_fz in wheels) < demand:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def steer_for_lateral_accel(ay: float, vx: float, p: PlantParams) -> float:
    """Steady-state road-wheel angle that yields `ay`, found by inverting
    the brush axle curves at the laterally transferred wheel loads.

    Exact where a steady state exists; demand past the friction limit is
    clipped just inside it so the angle stays finite. Used to scale
    manoeuvre amplitudes (shape factors then cover transient overshoot)."""
    wl = p.wheelbase
    fl, fr, rl, rr = wheel_loads(ay, p)
    fz0f, fz0r = p.static_load_front_wheel, p.static_load_rear_wheel

    def axle(loads: tuple[float, float], k: float, fz0: float) -> list[tuple[float, float]]:
        return [(_wheel_stiffness(fz, k, fz0, p), p.friction_mu * fz) for fz in loads]

    t_f = _axle_slip_for_force(p.mass * ay * p.lr / wl, axle((fl, fr), p.stiff_per_load_front, fz0f))
    t_r = _axle_slip_for_force(p.mass * ay * p.lf / wl, axle((rl, rr), p.stiff_per_load_rear, fz0r))
    return ay * wl / (vx * vx) + math.atan(t_f) - math.atan(t_r)


@dataclass(frozen=True)
class CatalogueConfig:
    """How many manoeuvres of each kind to script, and with which seed."""

    total: int = 60
    seed: int = 1234
    counts: tuple[tuple[str, int], ...] | None = None

    @classmethod
    def reference_mix(cls, seed: int = 1234) -> "CatalogueConfig":
        counts = tuple(sorted(REFERENCE_TEST_MIX.items()))
        return cls(total=sum(REFERENCE_TEST_MIX.values()), seed=seed, counts=counts)


def _scaled_counts(total: int) -> dict[str, int]:
    """Scale the reference mix to `total` by largest remainder
    (alphabetical tie-break for determinism)."""
    ref_total = sum(REFERENCE_TEST_MIX.values())
    quotas = {k: total * v / ref_total for k, v in REFERENCE_TEST_MIX.items()}
    counts = {k: int(math.floor(q)) for k, q in quotas.items()}
    leftover = total - sum(counts.values())
    by_remainder = sorted(quotas, key=lambda k: (-(quotas[k] - counts[k]), k))
    for k in by_remainder[:leftover]:
        counts[k] += 1
    return counts


def build_catalogue(config: CatalogueConfig | None = None, plant: PlantParams | None = None) -> list[ManoeuvreScript]:
    """Script a deterministic manoeuvre catalogue.

    Without explicit counts, scales the reference kind mix to
    `config.total`. Amplitudes sweep each kind's target lateral
    acceleration range so the catalogue covers both the linear and the
    saturated tyre regime.
    """
    config = config or CatalogueConfig()
    plant = plant or PlantParams()
    if config.counts is not None:
        counts = dict(config.counts)
    else:
        counts = _scaled_counts(config.total)
    for kind in counts:
        if kind not in MANOEUVRE_KINDS:
            raise ValueError(f"unknown manoeuvre kind {kind!r}")
        if counts[kind] < 0:
            raise ValueError("counts must be >= 0")

    ss = np.random.SeedSequence(config.seed)
    rng = np.random.Generator(np.random.PCG64(ss.spawn(1)[0]))
    total = sum(counts.values())
    children = np.random.SeedSequence(config.seed).spawn(total + 1)[1:]

    scripts: list[ManoeuvreScript] = []
    idx = 0
    for kind in MANOEUVRE_KINDS:
        c = counts.get(kind, 0)
        ay_lo, ay_hi = _KIND_TARGET_AY[kind]
        v_lo, v_hi = _KIND_SPEED[kind]
        duration = _KIND_DURATION[kind]
        for j in range(c):
            frac = (j + 0.5) / c + float(rng.uniform(-0.04, 0.04))
            frac = min(max(frac, 0.02), 0.98)
            target_ay = ay_lo + frac * (ay_hi - ay_lo)
            vx0 = float(rng.uniform(v_lo, v_hi))
            amp = _KIND_SHAPE[kind] * steer_for_lateral_accel(target_ay, vx0, plant)
            amp = min(amp, _MAX_STEER)
            steer: dict = {}
            if kind == "j_turn":
                steer = {"amplitude": amp, "t_start": 0.5, "ramp": 0.3}
                vx_knots = ((0.0, vx0), (duration, vx0))
            elif kind == "slalom":
                freq = float(rng.uniform(0.35, 0.6))
                steer = {"amplitude": amp, "t_start": 0.5, "freq": freq}
                vx_knots = ((0.0, vx0), (duration, vx0))
            elif kind == "double_lane_change":
                steer = {"amplitude": amp, "t_start": 0.8, "lobe": 1.1, "gap": 0.5}
                vx_knots = ((0.0, vx0), (duration, vx0))
            elif kind == "random_steer":
                steer = {"amplitude_std": amp, "cutoff": 1.0}
                vx_knots = ((0.0, vx0), (duration, vx0))
            elif kind == "spiral":
                steer = {"amplitude": amp, "t_start": 0.5}
                vx_knots = ((0.0, vx0), (duration, vx0))
            elif kind == "skidpad":
                steer = {"amplitude": amp, "t_start": 0.5, "ramp": 1.0}
                vx_knots = ((0.0, vx0), (duration, vx0))
            elif kind == "brake_in_turn":
                steer = {"amplitude": amp, "t_start": 0.5, "ramp": 1.0}
                vx_knots = (
                    (0.0, vx0),
                    (0.40 * duration, vx0),
                    (0.70 * duration, 0.50 * vx0),
                    (duration, 0.50 * vx0),
                )
            elif kind == "track_lap":
                n_corners = int(rng.integers(5, 8))
                steer = {"amplitude": amp, "n_corners": n_corners}
                v_low = 0.62 * vx0
                vx_knots = (
                    (0.0, vx0),
                    (0.20 * duration, vx0),
                    (0.28 * duration, v_low),
                    (0.50 * duration, v_low),
                    (0.60 * duration, vx0),
                    (0.85 * duration, vx0),
                    (0.93 * duration, v_low),
                    (duration, v_low),
                )
            seed = int(children[idx].generate_state(1, np.uint64)[0])
            scripts.append(
                ManoeuvreScript(
                    id=f"m{idx:03d}_{kind}",
                    kind=kind,
                    duration=duration,
                    seed=seed,
                    vx_knots=vx_knots,
                    steer=steer,
                    road=dict(_CATALOGUE_ROAD),
                )
            )
            idx += 1
    return scripts


# A plant spin shows up as sideslip running away well past anything the
# steady-state amplitude calibration intends. Legitimate near-limit
# content on this plant stays inside ~6 deg.
_SPIN_BETA_LIMIT = math.radians(12.0)
_SPIN_RETRIES = 4


def _scaled_script(script: ManoeuvreScript, factor: float) -> ManoeuvreScript:
    steer = dict(script.steer)
    for key in ("amplitude", "amplitude_std"):
        if key in steer:
            steer[key] = factor * steer[key]
    return replace(script, steer=steer)


def _run_with_spin_guard(
    script: ManoeuvreScript,
    plant: PlantParams | None,
    noise: SensorNoiseSpec | None,
) -> Manoeuvre:
    """Run a script, backing the steering amplitude off 15% at a time
    (deterministically — same seed each retry) if the plant spins."""
    m = None
    for _ in range(_SPIN_RETRIES + 1):
        try:
            m = run_manoeuvre(script, plant, noise)
        except DivergenceError:
            m = None
        else:
            if float(np.max(np.abs(m.col("beta_true")))) <= _SPIN_BETA_LIMIT:
                return m
        script = _scaled_script(script, 0.85)
    if m is None:
        # still diverging at 0.85**4 of the calibrated amplitude: give up
        return run_manoeuvre(script, plant, noise)
    return m


def generate_dataset(
    config: CatalogueConfig | None = None,
    plant: PlantParams | None = None,
    noise: SensorNoiseSpec | None = None,
) -> list[Manoeuvre]:
    """Run the whole catalogue. Scripts are independent and could be run
    concurrently; streams are isolated per script by construction."""
    scripts = build_catalogue(config, plant)
    return [_run_with_spin_guard(s, plant, noise) for s in scripts]

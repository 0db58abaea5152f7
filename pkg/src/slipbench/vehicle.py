"""Single-track vehicle model with Dugoff axle tyre forces.

Process and observation models shared by the EKF and UKF sideslip
observers. All quantities are SI (m, s, rad, N, kg); the hot path is
scalar `math` arithmetic because the filters call these functions tens
of thousands of times per run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "VehicleParams",
    "TyreParams",
    "VehicleState",
    "ControlInput",
    "AxleForces",
    "InvalidStateError",
    "DivergenceError",
    "slip_angles",
    "dugoff_axle_force",
    "body_derivative",
    "process_derivative",
    "observe",
    "integrate_step",
]

# |tan(alpha)| below this is treated as zero slip (linear branch, zero force)
_TAN_ALPHA_EPS = 1e-9


class InvalidStateError(ValueError):
    """Model evaluated at a state/input that produced non-finite values."""


class DivergenceError(RuntimeError):
    """Integration left the finite domain."""


@dataclass(frozen=True)
class VehicleParams:
    """Chassis constants of the planar single-track model.

    mass: kg, yaw_inertia: kg*m^2, lf/lr: m from CG to front/rear axle.
    """

    mass: float = 1970.0
    yaw_inertia: float = 3498.0
    lf: float = 1.47
    lr: float = 1.41
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("mass", "yaw_inertia", "lf", "lr", "gravity"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"VehicleParams.{name} must be > 0")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


@dataclass(frozen=True)
class TyreParams:
    """Axle-lumped Dugoff tyre parameters.

    Stiffnesses in N/rad, vertical loads in N. Loads must carry the
    full weight; `from_static_loads` builds the static front/rear split.
    """

    cornering_stiffness_front: float = 105e3
    cornering_stiffness_rear: float = 120e3
    friction_mu: float = 1.0
    fz_front: float = 9461.540625
    fz_rear: float = 9864.159375

    def __post_init__(self):
        if self.cornering_stiffness_front <= 0 or self.cornering_stiffness_rear <= 0:
            raise ValueError("cornering stiffnesses must be > 0")
        if not 0.0 < self.friction_mu <= 1.5:
            raise ValueError("friction_mu must be in (0, 1.5]")
        if self.fz_front <= 0 or self.fz_rear <= 0:
            raise ValueError("axle loads must be > 0")

    @classmethod
    def from_static_loads(
        cls,
        vehicle: VehicleParams,
        cornering_stiffness_front: float = 105e3,
        cornering_stiffness_rear: float = 120e3,
        friction_mu: float = 1.0,
    ) -> "TyreParams":
        """Static axle loads: Fz_F = m*g*lr/L, Fz_R = m*g*lf/L."""
        weight = vehicle.mass * vehicle.gravity
        return cls(
            cornering_stiffness_front=cornering_stiffness_front,
            cornering_stiffness_rear=cornering_stiffness_rear,
            friction_mu=friction_mu,
            fz_front=weight * vehicle.lr / vehicle.wheelbase,
            fz_rear=weight * vehicle.lf / vehicle.wheelbase,
        )

    def check_carries_weight(self, vehicle: VehicleParams, rel_tol: float = 1e-6) -> None:
        weight = vehicle.mass * vehicle.gravity
        if abs(self.fz_front + self.fz_rear - weight) > rel_tol * weight:
            raise ValueError("axle loads do not sum to mass*gravity")


@dataclass(frozen=True)
class VehicleState:
    """Filter state: lateral velocity (m/s) and yaw rate (rad/s)."""

    vy: float = 0.0
    yaw_rate: float = 0.0


@dataclass(frozen=True)
class ControlInput:
    """Exogenous inputs: road wheel angle (rad) and longitudinal speed (m/s)."""

    delta: float = 0.0
    vx: float = 10.0


@dataclass(frozen=True)
class AxleForces:
    """Lateral axle forces (N)."""

    fy_front: float = 0.0
    fy_rear: float = 0.0


def slip_angles(
    state: VehicleState, inp: ControlInput, params: VehicleParams
) -> tuple[float, float]:
    """Axle slip angles (rad) of the single-track kinematics.

    alpha_F = delta - atan((vy + lf*r)/vx), alpha_R = -atan((vy - lr*r)/vx).
    """
    if inp.vx <= 0.0:
        raise InvalidStateError(f"slip angles need vx > 0, got {inp.vx}")
    alpha_f = inp.delta - math.atan((state.vy + params.lf * state.yaw_rate) / inp.vx)
    alpha_r = -math.atan((state.vy - params.lr * state.yaw_rate) / inp.vx)
    if not (math.isfinite(alpha_f) and math.isfinite(alpha_r)):
        raise InvalidStateError(f"non-finite slip angles at state={state}, input={inp}")
    return alpha_f, alpha_r


def dugoff_axle_force(alpha: float, tyre: TyreParams, axle: str) -> float:
    """Pure-lateral Dugoff axle force (N) for slip angle `alpha` (rad).

    F_y = C*tan(a)*f(lam), lam = mu*Fz / (2*C*|tan a|),
    f(lam) = lam*(2 - lam) for lam < 1, else 1. Saturates at mu*Fz.
    """
    if axle == "front":
        c_alpha, fz = tyre.cornering_stiffness_front, tyre.fz_front
    elif axle == "rear":
        c_alpha, fz = tyre.cornering_stiffness_rear, tyre.fz_rear
    else:
        raise ValueError(f"axle must be 'front' or 'rear', got {axle!r}")

    tan_a = math.tan(alpha)
    abs_tan = abs(tan_a)
    if abs_tan < _TAN_ALPHA_EPS:
        return c_alpha * tan_a
    lam = tyre.friction_mu * fz / (2.0 * c_alpha * abs_tan)
    if lam >= 1.0:
        return c_alpha * tan_a
    return c_alpha * tan_a * lam * (2.0 - lam)


def body_derivative(
    fy_front: float,
    fy_rear: float,
    state: VehicleState,
    inp: ControlInput,
    params: VehicleParams,
) -> tuple[float, float]:
    """Planar body dynamics given the lateral axle forces.

    dvy = (F_yF*cos(d) + F_yR)/m - vx*r
    dr  = (lf*F_yF*cos(d) - lr*F_yR)/Izz
    """
    cos_d = math.cos(inp.delta)
    dvy = (fy_front * cos_d + fy_rear) / params.mass - inp.vx * state.yaw_rate
    dr = (params.lf * fy_front * cos_d - params.lr * fy_rear) / params.yaw_inertia
    return dvy, dr


def process_derivative(
    state: VehicleState,
    inp: ControlInput,
    params: VehicleParams,
    tyre: TyreParams,
) -> tuple[float, float]:
    """Continuous-time state derivative (dvy, dyaw_rate) of the model."""
    alpha_f, alpha_r = slip_angles(state, inp, params)
    fy_f = dugoff_axle_force(alpha_f, tyre, "front")
    fy_r = dugoff_axle_force(alpha_r, tyre, "rear")
    return body_derivative(fy_f, fy_r, state, inp, params)


def axle_forces(
    state: VehicleState,
    inp: ControlInput,
    params: VehicleParams,
    tyre: TyreParams,
) -> AxleForces:
    """Model-predicted lateral axle forces at the given operating point."""
    alpha_f, alpha_r = slip_angles(state, inp, params)
    return AxleForces(
        fy_front=dugoff_axle_force(alpha_f, tyre, "front"),
        fy_rear=dugoff_axle_force(alpha_r, tyre, "rear"),
    )


def observe(
    state: VehicleState,
    inp: ControlInput,
    params: VehicleParams,
    tyre: TyreParams,
    obs_set: str,
) -> list[float]:
    """Observation vector for measurement set "y1" or "y2".

    y1 -> [a_y, yaw_rate]; y2 -> [a_y, yaw_rate, F_yF, F_yR], with
    a_y = (F_yF*cos(d) + F_yR)/m.
    """
    alpha_f, alpha_r = slip_angles(state, inp, params)
    fy_f = dugoff_axle_force(alpha_f, tyre, "front")
    fy_r = dugoff_axle_force(alpha_r, tyre, "rear")
    ay = (fy_f * math.cos(inp.delta) + fy_r) / params.mass
    if obs_set == "y1":
        return [ay, state.yaw_rate]
    if obs_set == "y2":
        return [ay, state.yaw_rate, fy_f, fy_r]
    raise ValueError(f"obs_set must be 'y1' or 'y2', got {obs_set!r}")


def integrate_step(
    state: VehicleState,
    inp: ControlInput,
    params: VehicleParams,
    tyre: TyreParams,
    dt: float,
) -> VehicleState:
    """One RK4 step of the process model with the input held constant."""
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")

    def deriv(vy: float, r: float) -> tuple[float, float]:
        return process_derivative(VehicleState(vy, r), inp, params, tyre)

    vy0, r0 = state.vy, state.yaw_rate
    k1v, k1r = deriv(vy0, r0)
    k2v, k2r = deriv(vy0 + 0.5 * dt * k1v, r0 + 0.5 * dt * k1r)
    k3v, k3r = deriv(vy0 + 0.5 * dt * k2v, r0 + 0.5 * dt * k2r)
    k4v, k4r = deriv(vy0 + dt * k3v, r0 + dt * k3r)
    vy = vy0 + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    r = r0 + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    if not (math.isfinite(vy) and math.isfinite(r)):
        raise DivergenceError(f"state diverged during integration from {state}")
    return VehicleState(vy, r)


def sideslip_angle(vy: float, vx: float) -> float:
    """beta = atan(vy/vx), rad."""
    return math.atan2(vy, vx)

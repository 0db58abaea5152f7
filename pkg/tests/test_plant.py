"""Plant simulator tests: tyre/load physics, scripting, noise, determinism."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipbench import vehicle as vm
from slipbench.dataio import FRAME_COLUMNS, write_manoeuvre
from slipbench.plant import (
    REFERENCE_TEST_MIX,
    CatalogueConfig,
    ManoeuvreScript,
    PlantParams,
    PlantState,
    SensorNoiseSpec,
    brush_lateral_force,
    build_catalogue,
    inject_noise,
    plant_step,
    run_manoeuvre,
    steer_for_lateral_accel,
    wheel_loads,
)
from slipbench.vehicle import DivergenceError

P = PlantParams()
NO_NOISE = SensorNoiseSpec.zero()


def _skidpad(target_ay, vx, duration=15.0, seed=3):
    return ManoeuvreScript(
        id="sk",
        kind="skidpad",
        duration=duration,
        seed=seed,
        vx_knots=((0.0, vx), (duration, vx)),
        steer={
            "amplitude": steer_for_lateral_accel(target_ay, vx, P),
            "t_start": 0.5,
            "ramp": 1.0,
        },
    )


def _j_turn(target_ay, vx, duration=8.0, seed=7):
    return ManoeuvreScript(
        id="jt",
        kind="j_turn",
        duration=duration,
        seed=seed,
        vx_knots=((0.0, vx), (duration, vx)),
        steer={
            "amplitude": 1.05 * steer_for_lateral_accel(target_ay, vx, P),
            "t_start": 0.5,
            "ramp": 0.3,
        },
    )


# --------------------------------------------------------------------------
# Brush tyre


def brush_oracle(tan_a, c, mu_fz):
    # Independent normalized form: F = mu_fz * g(x), x = C t / (mu Fz),
    # g(x) = x - x^2/3 + x^3/27 up to x = 3, then 1.
    x = c * abs(tan_a) / mu_fz
    g = 1.0 if x >= 3.0 else x - x * x / 3.0 + x**3 / 27.0
    return math.copysign(mu_fz * g, tan_a)


def test_brush_matches_normalized_oracle():
    c, mu_fz = 6.0e4, 5.0e3
    for t in (0.0, 0.01, 0.03, 0.08, 0.2, 0.24, 0.3, -0.05, -0.26):
        assert brush_lateral_force(t, c, mu_fz) == pytest.approx(
            brush_oracle(t, c, mu_fz), rel=1e-12, abs=1e-9
        )


@given(st.floats(-0.5, 0.5), st.floats(2e4, 2e5), st.floats(2e3, 1.2e4))
def test_brush_saturation_and_symmetry(t, c, mu_fz):
    f = brush_lateral_force(t, c, mu_fz)
    assert abs(f) <= mu_fz * (1 + 1e-12)
    assert brush_lateral_force(-t, c, mu_fz) == pytest.approx(-f, abs=1e-9)


def test_brush_saturates_exactly_past_limit():
    c, mu_fz = 1.2e5, 9.0e3
    t_sat = 3.0 * mu_fz / c
    assert brush_lateral_force(t_sat, c, mu_fz) == mu_fz
    assert brush_lateral_force(2 * t_sat, c, mu_fz) == mu_fz
    # continuity: just below the limit, within a few ulp of mu_fz
    below = brush_lateral_force(math.nextafter(t_sat, 0.0), c, mu_fz)
    assert abs(below - mu_fz) < 1e-9 * mu_fz


def test_brush_zero_capacity_is_zero_force():
    assert brush_lateral_force(0.1, 5e4, 0.0) == 0.0


# --------------------------------------------------------------------------
# Wheel loads


@given(st.floats(-12.0, 12.0))
def test_wheel_loads_conserve_weight(ay):
    fz = wheel_loads(ay, P)
    assert sum(fz) == pytest.approx(P.mass * P.gravity, rel=1e-12)
    assert all(f >= P.min_wheel_load - 1e-9 for f in fz)


def test_wheel_loads_direction():
    # left turn (ay > 0) loads the right (outer) wheels
    fl, fr, rl, rr = wheel_loads(5.0, P)
    assert fr > fl and rr > rl
    fl2, fr2, rl2, rr2 = wheel_loads(-5.0, P)
    assert fl2 > fr2 and rl2 > rr2


def test_wheel_loads_clamp_preserves_pair_sums():
    # absurd lateral acceleration forces the clamp branch
    fl, fr, rl, rr = wheel_loads(60.0, P)
    assert fl == P.min_wheel_load and rl == P.min_wheel_load
    assert fl + fr == pytest.approx(2 * P.static_load_front_wheel, rel=1e-12)
    assert rl + rr == pytest.approx(2 * P.static_load_rear_wheel, rel=1e-12)


def test_static_axle_stiffness_values():
    # C_axle = 2 k Fz0 (1 - s), straight from the definition
    fz0 = P.static_load_front_wheel
    assert P.static_axle_stiffness("front") == pytest.approx(
        2 * P.stiff_per_load_front * fz0 * (1 - P.load_sensitivity), rel=1e-12
    )


# --------------------------------------------------------------------------
# Stepping


def test_rest_is_equilibrium():
    s = plant_step(PlantState(), 0.0, 20.0, 0.0, P)
    assert s.vy == 0.0 and s.yaw_rate == 0.0 and s.ay_lt == 0.0
    assert np.all(s.wheel_fy == 0.0)


def test_plant_step_records_consistent_wheel_fields():
    s = plant_step(PlantState(), 0.05, 20.0, 0.0, P)
    assert s.wheel_loads.sum() == pytest.approx(P.mass * P.gravity, rel=1e-12)
    fz = wheel_loads(s.ay_lt, P)
    assert np.allclose(s.wheel_loads, fz, rtol=1e-12)


def test_constant_steer_reaches_steady_yaw_rate():
    m = run_manoeuvre(_skidpad(4.0, 15.0), noise=NO_NOISE)
    r = m.truth_col("yawrate_true")
    tail = r[-200:]
    assert np.std(tail) < 1e-6
    assert abs(np.mean(tail)) > 0.1


def test_divergence_raises_with_timestamp():
    # a negative roll time constant makes the lag state explode
    bad = PlantParams(roll_time_constant=-0.005)
    with pytest.raises(DivergenceError, match="t = "):
        run_manoeuvre(_j_turn(6.0, 18.0), plant=bad, noise=NO_NOISE)


# --------------------------------------------------------------------------
# run_manoeuvre contracts


def test_zero_steer_constant_speed_is_exactly_straight():
    s = ManoeuvreScript(
        id="straight",
        kind="j_turn",
        duration=5.0,
        seed=1,
        vx_knots=((0.0, 20.0), (5.0, 20.0)),
        steer={"amplitude": 0.0, "t_start": 0.5, "ramp": 0.3},
    )
    m = run_manoeuvre(s, noise=NO_NOISE)
    assert np.all(m.col("beta_true") == 0.0)
    assert np.all(m.col("ay") == 0.0)
    assert np.all(m.truth_col("ay_true") == 0.0)


def test_frames_at_exactly_100_hz():
    m = run_manoeuvre(_skidpad(3.0, 12.0, duration=7.5), noise=NO_NOISE)
    assert len(m) == 750
    assert np.array_equal(m.col("t"), np.arange(750) * 0.01)
    assert m.frames.shape[1] == len(FRAME_COLUMNS)


def test_low_lateral_acceleration_skidpad_keeps_beta_small():
    m = run_manoeuvre(_skidpad(1.5, 10.0), noise=NO_NOISE)
    assert np.max(np.abs(np.rad2deg(m.col("beta_true")))) < 2.0


def test_same_seed_byte_identical(tmp_path):
    script = _j_turn(6.0, 18.0)
    a = run_manoeuvre(script)
    b = run_manoeuvre(script)
    assert np.array_equal(a.frames, b.frames)
    assert np.array_equal(a.truth, b.truth)
    pa = write_manoeuvre(tmp_path / "a", a)
    pb = write_manoeuvre(tmp_path / "b", b)
    assert pa.read_bytes() == pb.read_bytes()


def test_different_seeds_differ():
    s1 = _j_turn(6.0, 18.0, seed=1)
    s2 = _j_turn(6.0, 18.0, seed=2)
    assert not np.array_equal(run_manoeuvre(s1).frames, run_manoeuvre(s2).frames)


def test_forces_within_friction_circle_under_braking():
    sc = ManoeuvreScript(
        id="brk",
        kind="brake_in_turn",
        duration=10.0,
        seed=5,
        vx_knots=((0.0, 18.0), (4.0, 18.0), (7.8, 10.4), (10.0, 10.4)),
        steer={
            "amplitude": steer_for_lateral_accel(5.0, 18.0, P),
            "t_start": 0.5,
            "ramp": 1.0,
        },
    )
    m = run_manoeuvre(sc, noise=NO_NOISE)
    for w in ("fl", "fr", "rl", "rr"):
        fx, fy, fz = m.col(f"fx_{w}"), m.col(f"fy_{w}"), m.col(f"fz_{w}")
        assert np.all(np.hypot(fx, fy) <= P.friction_mu * fz * (1 + 1e-9))
    # braking actually happens
    t = m.col("t")
    braking = (t > 4.3) & (t < 7.5)
    assert np.mean(m.col("ax")[braking]) < -1.0
    assert m.col("vx")[-1] < m.col("vx")[0] - 5.0


def test_load_transfer_conserves_weight_in_aggressive_turn():
    m = run_manoeuvre(_j_turn(8.0, 18.0), noise=NO_NOISE)
    total = m.col("fz_fl") + m.col("fz_fr") + m.col("fz_rl") + m.col("fz_rr")
    assert np.allclose(total, P.mass * P.gravity, rtol=1e-12)
    # transfer is visible: outer wheels load up
    peak = np.argmax(np.abs(m.truth_col("ay_true")))
    assert abs(m.col("fz_fl")[peak] - m.col("fz_fr")[peak]) > 1000.0


def test_plant_exceeds_dugoff_prediction_when_aggressive():
    """Model-mismatch direction: near the limit the plant's axle forces
    systematically exceed what the estimator's Dugoff model predicts at
    the true state, and the mismatch grows toward saturation."""
    m = run_manoeuvre(_j_turn(8.0, 18.0), noise=NO_NOISE)
    ay = m.truth_col("ay_true")
    vy, r = m.truth_col("vy_true"), m.truth_col("yawrate_true")
    vx, d = m.col("vx"), m.col("delta")
    params, tyre = vm.VehicleParams(), vm.TyreParams()
    fy_front = m.col("fy_fl") + m.col("fy_fr")
    fy_rear = m.col("fy_rl") + m.col("fy_rr")
    mis_f = np.empty(len(m))
    mis_r = np.empty(len(m))
    for k in range(len(m)):
        af, ar = vm.slip_angles(
            vm.VehicleState(vy[k], r[k]), vm.ControlInput(d[k], vx[k]), params
        )
        mis_f[k] = abs(fy_front[k]) - abs(vm.dugoff_axle_force(af, tyre, "front"))
        mis_r[k] = abs(fy_rear[k]) - abs(vm.dugoff_axle_force(ar, tyre, "rear"))
    window = np.abs(ay) > 5.0
    assert window.sum() > 300
    for mis in (mis_f, mis_r):
        assert np.mean(mis[window]) > 100.0
        assert np.mean(mis[window] > 0) > 0.8
    # growth: deep-saturation mismatch well above the moderate band's
    deep = np.abs(ay) > 7.5
    moderate = (np.abs(ay) > 3.0) & (np.abs(ay) < 5.0)
    combined = np.maximum(mis_f, mis_r)
    assert np.mean(combined[deep]) > np.mean(combined[moderate]) + 300.0


# --------------------------------------------------------------------------
# Noise injection


def test_zero_noise_is_identity():
    clean = run_manoeuvre(_skidpad(3.0, 12.0), noise=NO_NOISE).frames
    rng = np.random.Generator(np.random.PCG64(0))
    assert np.array_equal(inject_noise(clean, NO_NOISE, rng), clean)


def test_noise_std_statistical():
    clean = np.zeros((100_000, len(FRAME_COLUMNS)))
    spec = SensorNoiseSpec.zero()
    spec = SensorNoiseSpec(
        std_ay=0.1, std_yaw_rate=0.0, std_delta=0.0, std_vx=0.0, std_ax=0.0,
        std_force=0.0, bias_ay=0.0, bias_yaw_rate=0.0, bias_delta=0.0,
        bias_vx=0.0, bias_ax=0.0, bias_force=0.0,
    )
    rng = np.random.Generator(np.random.PCG64(42))
    noisy = inject_noise(clean, spec, rng)
    ay = noisy[:, FRAME_COLUMNS.index("ay")]
    assert abs(np.std(ay) - 0.1) < 0.002
    # every other column untouched
    untouched = [i for i, c in enumerate(FRAME_COLUMNS) if c != "ay"]
    assert np.all(noisy[:, untouched] == 0.0)


def test_beta_and_time_never_corrupted():
    m_clean = run_manoeuvre(_j_turn(5.0, 16.0), noise=NO_NOISE)
    m_noisy = run_manoeuvre(_j_turn(5.0, 16.0))  # default noise
    assert np.array_equal(m_noisy.col("beta_true"), m_clean.col("beta_true"))
    assert np.array_equal(m_noisy.col("t"), m_clean.col("t"))
    assert not np.array_equal(m_noisy.col("ay"), m_clean.col("ay"))


def test_bias_is_constant_per_run():
    spec = SensorNoiseSpec(
        std_ay=0.0, std_yaw_rate=0.0, std_delta=0.0, std_vx=0.0, std_ax=0.0,
        std_force=0.0, bias_ay=0.5, bias_yaw_rate=0.0, bias_delta=0.0,
        bias_vx=0.0, bias_ax=0.0, bias_force=0.0,
    )
    clean = np.zeros((50, len(FRAME_COLUMNS)))
    rng = np.random.Generator(np.random.PCG64(3))
    noisy = inject_noise(clean, spec, rng)
    col = noisy[:, FRAME_COLUMNS.index("ay")]
    assert np.all(col == col[0])
    assert 0 < abs(col[0]) <= 0.5


def test_negative_std_rejected():
    with pytest.raises(ValueError):
        SensorNoiseSpec(std_ay=-0.1)


# --------------------------------------------------------------------------
# Catalogue


def test_default_catalogue_is_60_with_every_kind():
    scripts = build_catalogue()
    assert len(scripts) == 60
    counts = {}
    for s in scripts:
        counts[s.kind] = counts.get(s.kind, 0) + 1
    assert counts == {
        "j_turn": 13,
        "slalom": 10,
        "double_lane_change": 11,
        "random_steer": 5,
        "spiral": 8,
        "skidpad": 5,
        "brake_in_turn": 5,
        "track_lap": 3,
    }
    assert len({s.id for s in scripts}) == 60
    assert len({s.seed for s in scripts}) == 60


def test_reference_mix_catalogue():
    scripts = build_catalogue(CatalogueConfig.reference_mix())
    assert len(scripts) == 23
    counts = {}
    for s in scripts:
        counts[s.kind] = counts.get(s.kind, 0) + 1
    assert counts == REFERENCE_TEST_MIX


def test_zero_counts_gives_empty_catalogue():
    cfg = CatalogueConfig(total=0, counts=(("j_turn", 0), ("slalom", 0)))
    assert build_catalogue(cfg) == []


def test_catalogue_deterministic():
    a = build_catalogue(CatalogueConfig(total=12, seed=9))
    b = build_catalogue(CatalogueConfig(total=12, seed=9))
    assert a == b
    c = build_catalogue(CatalogueConfig(total=12, seed=10))
    assert a != c


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        build_catalogue(CatalogueConfig(total=1, counts=(("wheelie", 1),)))
    with pytest.raises(ValueError):
        ManoeuvreScript(
            id="x", kind="wheelie", duration=1.0, seed=0, vx_knots=((0.0, 10.0), (1.0, 10.0))
        )


@settings(deadline=None, max_examples=10)
@given(st.integers(8, 80))
def test_scaled_counts_sum_to_total(total):
    cfg = CatalogueConfig(total=total)
    scripts = build_catalogue(cfg)
    assert len(scripts) == total


def test_random_steer_is_band_limited():
    sc = [s for s in build_catalogue() if s.kind == "random_steer"][0]
    m = run_manoeuvre(sc, noise=NO_NOISE)
    d = m.col("delta")
    spec = np.abs(np.fft.rfft(d - d.mean())) ** 2
    freqs = np.fft.rfftfreq(len(d), 0.01)
    nonzero = freqs > 0
    centroid = (freqs[nonzero] * spec[nonzero]).sum() / spec[nonzero].sum()
    assert centroid < 1.2
    assert spec[nonzero & (freqs <= 3.0)].sum() > 0.95 * spec[nonzero].sum()
    low = spec[nonzero & (freqs < 1.5)].sum()
    high = spec[freqs > 3.0].sum()
    assert low > 20 * high

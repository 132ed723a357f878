import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from imudiff.corpus import generate_motion, smpl22_skeleton
from imudiff.imu import (
    DEFAULT_PLACEMENTS,
    GravityConfig,
    ImuSignal,
    Placement,
    SensorTrajectory,
    add_noise,
    attach_sensors,
    dynamic_acceleration,
    gravity_component,
    joint_frames,
    load_imu,
    motion_to_imu,
    prefilter_width,
    quat_from_axis_angle,
    quat_mul,
    quat_rotate,
    resample,
    save_imu,
    synthesize_accelerometer,
    synthesize_gyroscope,
    synthesize_imu,
)
from imudiff.motion import MotionSequence, Skeleton

G = 9.81
IDENT = np.array([1.0, 0.0, 0.0, 0.0])


def traj(pos, q=None, fps=100.0):
    pos = np.asarray(pos, dtype=float)
    if q is None:
        q = np.tile(IDENT, (len(pos), 1))
    return SensorTrajectory(pos, q, fps)


def circle(fps, seconds=1.0, r=1.0, w=2 * math.pi):
    t = np.arange(int(round(seconds * fps)) + 1) / fps
    return traj(np.stack([r * np.cos(w * t), np.zeros_like(t), r * np.sin(w * t)], 1), fps=fps)


def spin(axis, rate, fps=100.0, n=101):
    t = np.arange(n) / fps
    q = quat_from_axis_angle(np.tile(axis, (n, 1)), rate * t)
    return traj(np.zeros((n, 3)), q, fps)


# --- types ---------------------------------------------------------------------------


def test_trajectory_validation():
    with pytest.raises(ValueError):
        traj(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        SensorTrajectory(np.zeros((4, 3)), np.tile([1.0, 0, 0, 0.1], (4, 1)), 100)
    with pytest.raises(ValueError):
        GravityConfig(up_axis=(0, 2, 0))
    with pytest.raises(ValueError):
        ImuSignal(np.zeros((3, 3)), np.zeros((4, 3)), 20)


# --- sensor attachment ---------------------------------------------------------------


def two_bone_skeleton():
    return Skeleton(np.array([-1, 0, 1]), np.array([[0, 0, 0], [0, 0.5, 0], [0, 0.5, 0]], float), ("a", "b", "c"))


def test_attach_zero_offset_matches_joint(rng):
    skel = two_bone_skeleton()
    frames = rng.standard_normal((6, 3, 3))
    [tr] = attach_sensors(MotionSequence(frames), skel, [Placement("s", "b", ("b", "c"), (1.0, 0, 0))])
    np.testing.assert_array_equal(tr.positions, frames[:, 1])


def test_attach_offset_along_upright_bone():
    skel = two_bone_skeleton()
    frames = np.tile([[0, 0, 0], [0, 0.5, 0], [0, 1.0, 0]], (4, 1, 1)).astype(float)
    [tr] = attach_sensors(MotionSequence(frames), skel, [Placement("s", "b", ("b", "c"), (1.0, 0, 0), (0, 0.1, 0))])
    np.testing.assert_allclose(tr.positions, np.tile([0, 0.6, 0], (4, 1)), atol=1e-15)


def test_attach_rotating_bone_traces_circle():
    skel = two_bone_skeleton()
    t = np.arange(50) / 50
    ang = 2 * math.pi * t
    frames = np.zeros((50, 3, 3))
    frames[:, 1] = (0, 1, 0)
    frames[:, 2] = np.stack([np.cos(ang), np.ones(50), np.sin(ang)], 1)
    [tr] = attach_sensors(MotionSequence(frames, 50.0), skel,
                          [Placement("s", "b", ("b", "c"), (0, 1.0, 0), (0, 0.3, 0))])
    rad = np.linalg.norm(tr.positions - frames[:, 1], axis=1)
    np.testing.assert_allclose(rad, 0.3, atol=1e-12)
    np.testing.assert_allclose(tr.positions[:, 1], 1.0, atol=1e-12)


def test_joint_frames_orthonormal_and_fallback(rng):
    y = rng.standard_normal((20, 3))
    y[0] = (0, 1, 0)  # parallel to the world-up reference
    R = joint_frames(y, (0.0, 1.0, 0.0))
    np.testing.assert_allclose(R @ R.transpose(0, 2, 1), np.broadcast_to(np.eye(3), R.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        joint_frames(np.zeros((2, 3)), (1.0, 0, 0))


def test_default_placements_on_generated_motion():
    rng = np.random.default_rng(0)
    m = generate_motion("running", 3.0, 20.0, rng)
    sigs = motion_to_imu(m, smpl22_skeleton())
    assert [s.placement_name for s in sigs] == [p.name for p in DEFAULT_PLACEMENTS]
    assert len(DEFAULT_PLACEMENTS) == 9
    for s in sigs:
        assert len(s) == m.n_frames - 2 and np.all(np.isfinite(s.channels))


# --- accelerometer -------------------------------------------------------------------


def test_dynamic_acceleration_zero_cases(rng):
    assert np.all(dynamic_acceleration(traj(np.ones((10, 3)))) == 0)
    v = rng.standard_normal(3)
    lin = np.arange(10)[:, None] * v
    np.testing.assert_allclose(dynamic_acceleration(traj(lin)), 0, atol=1e-9)


def test_circle_centripetal_magnitude():
    a = np.linalg.norm(dynamic_acceleration(circle(100.0)), axis=1)
    assert np.all(np.abs(a - (2 * math.pi) ** 2) < 0.01 * 39.478)


def test_gravity_identity_and_flipped():
    tr = traj(np.zeros((5, 3)))
    np.testing.assert_array_equal(gravity_component(tr), np.tile([0, G, 0], (5, 1)))
    q = quat_from_axis_angle(np.tile([1.0, 0, 0], (5, 1)), np.full(5, math.pi))
    np.testing.assert_allclose(gravity_component(traj(np.zeros((5, 3)), q)), np.tile([0, -G, 0], (5, 1)), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gravity_norm_is_g(seed):
    q = Rotation.random(7, random_state=seed).as_quat()[:, [3, 0, 1, 2]]
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    g = gravity_component(traj(np.zeros((7, 3)), q))
    np.testing.assert_allclose(np.linalg.norm(g, axis=1), G, atol=1e-9)


def test_static_accelerometer():
    acc = synthesize_accelerometer(traj(np.zeros((10, 3))))
    assert np.max(np.abs(acc - [0, G, 0])) < 1e-9


def test_free_fall_reads_zero():
    t = np.arange(101) / 100
    pos = np.stack([np.zeros_like(t), 10 - 0.5 * G * t**2, np.zeros_like(t)], 1)
    acc = synthesize_accelerometer(traj(pos))
    assert np.max(np.linalg.norm(acc, axis=1)) < 0.02 * G


def test_circle_with_gravity():
    acc = synthesize_accelerometer(circle(100.0))
    np.testing.assert_allclose(acc[:, 1], G, atol=1e-9)
    horiz = np.linalg.norm(acc[:, [0, 2]], axis=1)
    assert np.all(np.abs(horiz - 39.478) < 0.01 * 39.478)


def test_second_order_convergence():
    errs = []
    for fps in (50.0, 100.0):
        a = np.linalg.norm(dynamic_acceleration(circle(fps)), axis=1)
        errs.append(np.max(np.abs(a - (2 * math.pi) ** 2)))
    assert 3 <= errs[0] / errs[1] <= 5


def test_frame_covariance(rng):
    n = 30
    t = np.arange(n) / 30
    pos = np.stack([np.sin(3 * t), t**2, np.cos(2 * t)], 1)
    q = Rotation.from_rotvec(np.stack([t, 0.5 * t, -t], 1)).as_quat()[:, [3, 0, 1, 2]]
    R = Rotation.from_rotvec(rng.standard_normal(3))
    qR = R.as_quat()[[3, 0, 1, 2]]
    a1 = synthesize_accelerometer(SensorTrajectory(pos, q, 30.0))
    pos2 = R.apply(pos)
    q2 = quat_mul(np.tile(qR, (n, 1)), q)
    up2 = R.apply([0.0, 1.0, 0.0])
    a2 = synthesize_accelerometer(SensorTrajectory(pos2, q2 / np.linalg.norm(q2, axis=1, keepdims=True), 30.0),
                                  GravityConfig(G, tuple(up2 / np.linalg.norm(up2))))
    np.testing.assert_allclose(a1, a2, atol=1e-9)


# --- gyroscope -----------------------------------------------------------------------


def test_gyro_constant_orientation():
    q = np.tile(quat_from_axis_angle(np.array([0.3, 0.4, 0.5]) / np.linalg.norm([0.3, 0.4, 0.5]), 0.7), (10, 1))
    assert np.max(np.abs(synthesize_gyroscope(traj(np.zeros((10, 3)), q)))) < 1e-12


def test_gyro_about_z():
    w = synthesize_gyroscope(spin(np.array([0.0, 0, 1]), 1.0))
    np.testing.assert_allclose(w, np.tile([0, 0, 1.0], (len(w), 1)), rtol=0, atol=0.01)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_gyro_arbitrary_axis(seed, rate):
    u = np.random.default_rng(seed).standard_normal(3)
    u /= np.linalg.norm(u)
    w = synthesize_gyroscope(spin(u, rate))
    assert np.max(np.linalg.norm(w - rate * u, axis=1)) <= 0.01 * rate


def test_gyro_sign_flip_invariance(rng):
    t = np.arange(40) / 20
    q = Rotation.from_rotvec(np.stack([np.sin(t), t, 0.3 * t], 1)).as_quat()[:, [3, 0, 1, 2]]
    w1 = synthesize_gyroscope(traj(np.zeros((40, 3)), q, 20.0))
    flips = np.where(rng.random(40) < 0.5, -1.0, 1.0)[:, None]
    w2 = synthesize_gyroscope(traj(np.zeros((40, 3)), -q, 20.0))
    w3 = synthesize_gyroscope(traj(np.zeros((40, 3)), q * flips, 20.0))
    np.testing.assert_allclose(w1, w2, atol=1e-12)
    np.testing.assert_allclose(w1, w3, atol=1e-12)


def test_synthesize_imu_alignment():
    s = synthesize_imu(spin(np.array([0.0, 1, 0]), 2.0, n=21))
    assert len(s) == 19 and s.t0 == pytest.approx(0.01)
    np.testing.assert_allclose(s.gyro[:, 1], 2.0, rtol=1e-3)


# --- resampling ----------------------------------------------------------------------


def sig(acc, fps):
    acc = np.asarray(acc, dtype=float)
    return ImuSignal(acc, acc[:, ::-1].copy(), fps, "s")


def test_resample_same_rate_and_constant():
    s = sig(np.random.default_rng(0).standard_normal((50, 3)), 50.0)
    assert resample(s, 50.0) is s
    c = resample(sig(np.full((100, 3), 3.0), 50.0), 20.0)
    np.testing.assert_allclose(c.accel, 3.0, atol=1e-12)
    assert c.fps == 20.0
    r1 = resample(s, 20.0)
    assert resample(r1, 20.0) is r1


def test_resample_sine_peak():
    t = np.arange(500) / 50
    x = np.sin(2 * math.pi * 2 * t)
    out = resample(sig(np.stack([x, x, x], 1), 50.0), 20.0)
    y = out.accel[:200, 0]
    spec = np.abs(np.fft.rfft(y)) * 2 / len(y)
    freqs = np.fft.rfftfreq(len(y), 1 / 20)
    k = int(np.argmax(spec[1:])) + 1
    assert freqs[k] == pytest.approx(2.0)
    assert spec[k] == pytest.approx(1.0, rel=0.05)


def test_prefilter_width_is_odd():
    assert prefilter_width(50, 20) == 3
    assert prefilter_width(100, 20) == 5
    assert prefilter_width(40, 20) == 1
    with pytest.raises(ValueError):
        resample(sig(np.zeros((5, 3)), 50.0), 0)


# --- noise and files -----------------------------------------------------------------


def test_add_noise_is_seeded():
    s = sig(np.zeros((100, 3)), 20.0)
    a, b = add_noise(s, 0.5, 0.1, seed=3), add_noise(s, 0.5, 0.1, seed=3)
    np.testing.assert_array_equal(a.accel, b.accel)
    assert a.accel.std() == pytest.approx(0.5, rel=0.15)


def test_signal_file_roundtrip(tmp_path):
    s = ImuSignal(np.random.default_rng(1).standard_normal((30, 3)), np.random.default_rng(2).standard_normal((30, 3)),
                  20.0, "chest", 0.05)
    save_imu(tmp_path / "x.csv", s, "m.motion", GravityConfig(), {"label": "walking"})
    assert (tmp_path / "x.csv").read_text().splitlines()[0] == "t,ax,ay,az,gx,gy,gz"
    back, meta = load_imu(tmp_path / "x.csv")
    np.testing.assert_array_equal(back.accel, s.accel)
    np.testing.assert_array_equal(back.gyro, s.gyro)
    assert back.t0 == s.t0 and back.fps == 20.0
    assert meta["placement"] == "chest" and meta["source_motion"] == "m.motion" and meta["label"] == "walking"
    assert meta["gravity_config"] == {"g": 9.81, "up_axis": [0.0, 1.0, 0.0]}


def test_quaternion_rotation_matches_scipy(rng):
    rv = rng.standard_normal((5, 3))
    q = Rotation.from_rotvec(rv).as_quat()[:, [3, 0, 1, 2]]
    v = rng.standard_normal((5, 3))
    np.testing.assert_allclose(quat_rotate(q, v), Rotation.from_rotvec(rv).apply(v), atol=1e-12)

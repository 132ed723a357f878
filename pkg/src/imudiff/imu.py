"""Virtual IMU synthesis from motion.

Sensors are rigidly attached to skeleton joints. For every sensor we build a
position trajectory ``k(t)`` and an orientation ``q_S^G(t)`` (sensor to
global, unit quaternion in ``(w, x, y, z)`` order), then derive

* accelerometer: specific force in the sensor frame,
  ``a = R^T (d^2 k / dt^2 + g j)``, where ``j`` is the world up axis, so a
  sensor at rest reads ``+g`` along up and a free-falling one reads zero;
* gyroscope: body-frame angular rate ``w = 2 vec(q* (x) dq/dt)``.

Accelerations use central differences on interior frames (``N - 2`` rows);
the gyroscope is evaluated between frames (``N - 1`` rows) and, inside
:func:`synthesize_imu`, averaged onto the same interior frames so both
streams share one time base.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import savgol_filter
from scipy.spatial.transform import Rotation

from .motion import MotionSequence, Representation, Skeleton, forward_kinematics

QUAT_TOL = 1e-9
IMU_COLUMNS = ("t", "ax", "ay", "az", "gx", "gy", "gz")

# ---------------------------------------------------------------------------
# quaternions, (w, x, y, z)


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_mul(p, q):
    """Hamilton product, broadcasting over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ], axis=-1)


def quat_rotate(q, v):
    """Rotate vectors ``v`` by unit quaternions ``q`` (``q v q*``)."""
    v = np.asarray(v, dtype=float)
    qv = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return quat_mul(quat_mul(q, qv), quat_conj(q))[..., 1:]


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_from_matrix(R):
    xyzw = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    return np.concatenate([xyzw[..., 3:], xyzw[..., :3]], axis=-1)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    return Rotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1)).as_matrix()


def align_signs(q):
    """Flip quaternions so consecutive samples lie in the same hemisphere."""
    q = np.array(q, dtype=float)
    for i in range(1, len(q)):
        if np.dot(q[i - 1], q[i]) < 0:
            q[i] = -q[i]
    return q


def _check_unit(q):
    err = np.abs(np.linalg.norm(q, axis=-1) - 1.0)
    if err.size and err.max() > QUAT_TOL:
        raise ValueError(f"orientation quaternions must be unit norm (max error {err.max():.3g})")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class GravityConfig:
    g: float = 9.81
    up_axis: tuple = (0.0, 1.0, 0.0)

    def __post_init__(self):
        up = np.asarray(self.up_axis, dtype=float)
        if up.shape != (3,) or abs(np.linalg.norm(up) - 1.0) > 1e-9:
            raise ValueError("up_axis must be a unit 3-vector")
        if not self.g > 0:
            raise ValueError("g must be positive")
        object.__setattr__(self, "up_axis", tuple(float(u) for u in up))
        object.__setattr__(self, "g", float(self.g))

    def to_dict(self) -> dict:
        return {"g": self.g, "up_axis": list(self.up_axis)}

    @classmethod
    def from_dict(cls, d: dict) -> "GravityConfig":
        return cls(d.get("g", 9.81), tuple(d.get("up_axis", (0.0, 1.0, 0.0))))


@dataclass(frozen=True)
class SensorTrajectory:
    positions: np.ndarray
    orientations: np.ndarray
    fps: float
    placement_name: str = "sensor"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        q = np.asarray(self.orientations, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must be (N, 3)")
        if q.shape != (pos.shape[0], 4):
            raise ValueError("orientations must be (N, 4) matching positions")
        if pos.shape[0] < 3:
            raise ValueError("a sensor trajectory needs at least 3 frames")
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(q))):
            raise ValueError("trajectory contains non-finite values")
        _check_unit(q)
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "orientations", q)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ImuSignal:
    """Accelerometer (m/s^2) and gyroscope (rad/s) streams; sample k is at ``t0 + k / fps``."""

    accel: np.ndarray
    gyro: np.ndarray
    fps: float
    placement_name: str = "sensor"
    t0: float = 0.0

    def __post_init__(self):
        acc = np.asarray(self.accel, dtype=float)
        gyr = np.asarray(self.gyro, dtype=float)
        if acc.ndim != 2 or acc.shape[1] != 3 or gyr.shape != acc.shape:
            raise ValueError("accel and gyro must both be (M, 3)")
        if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(gyr))):
            raise ValueError("signal contains non-finite values")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        object.__setattr__(self, "accel", acc)
        object.__setattr__(self, "gyro", gyr)
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "t0", float(self.t0))

    def __len__(self) -> int:
        return self.accel.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.fps

    @property
    def channels(self) -> np.ndarray:
        """``(M, 6)`` array: accel then gyro."""
        return np.hstack([self.accel, self.gyro])


@dataclass(frozen=True)
class Placement:
    """A sensor rigidly bound to ``joint``.

    The joint frame has its y axis along ``bone = (a, b)`` (pointing from
    joint ``a`` to joint ``b``); x is the reference direction ``ref``
    orthogonalised against y, and z = x cross y. ``ref`` is either a fixed
    world vector or a pair of joint names ``(c, d)`` meaning ``p_d - p_c``.
    The sensor sits at ``offset`` in that frame and is further rotated by
    ``local_rotation`` (w, x, y, z).
    """

    name: str
    joint: str
    bone: tuple
    ref: tuple = (0.0, 1.0, 0.0)
    offset: tuple = (0.0, 0.0, 0.0)
    local_rotation: tuple = (1.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(
            d["name"], d["joint"], tuple(d["bone"]), tuple(d.get("ref", (0.0, 1.0, 0.0))),
            tuple(d.get("offset", (0.0, 0.0, 0.0))), tuple(d.get("local_rotation", (1.0, 0.0, 0.0, 0.0))),
        )


_HIPS = ("right_hip", "left_hip")

# Nine sites on the SMPL-22 skeleton. Limb and trunk bones are close to
# vertical, so the frame reference is the body's own hip axis instead of
# world up (which would be degenerate for an upright bone).
DEFAULT_PLACEMENTS = (
    Placement("head", "head", ("neck", "head"), _HIPS, (0.0, 0.05, 0.05)),
    Placement("chest", "spine3", ("spine2", "spine3"), _HIPS, (0.0, 0.0, 0.12)),
    Placement("left_upper_arm", "left_shoulder", ("left_shoulder", "left_elbow"), _HIPS, (0.04, 0.13, 0.0)),
    Placement("right_upper_arm", "right_shoulder", ("right_shoulder", "right_elbow"), _HIPS, (-0.04, 0.13, 0.0)),
    Placement("left_forearm", "left_elbow", ("left_elbow", "left_wrist"), _HIPS, (0.03, 0.12, 0.0)),
    Placement("right_forearm", "right_elbow", ("right_elbow", "right_wrist"), _HIPS, (-0.03, 0.12, 0.0)),
    Placement("waist", "pelvis", ("pelvis", "spine1"), _HIPS, (0.0, 0.0, 0.12)),
    Placement("left_shin", "left_knee", ("left_knee", "left_ankle"), _HIPS, (0.0, 0.2, 0.05)),
    Placement("right_shin", "right_knee", ("right_knee", "right_ankle"), _HIPS, (0.0, 0.2, 0.05)),
)

_FALLBACK_REFS = np.eye(3)[[1, 0, 2]]  # up, then x, then z


def _unit(v, eps=1e-9):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > eps, n, 1.0), n[..., 0] > eps


def joint_frames(y_dir, ref):
    """Orthonormal frames (N, 3, 3), columns (x, y, z), y along ``y_dir``.

    Where ``ref`` is (near) parallel to ``y_dir`` the next fallback axis
    (world up, x, z) is used for that frame.
    """
    y, ok = _unit(np.asarray(y_dir, dtype=float))
    if not ok.all():
        raise ValueError("bone has zero length in some frames")
    ref = np.broadcast_to(np.asarray(ref, dtype=float), y.shape)
    x = ref - np.sum(ref * y, axis=-1, keepdims=True) * y
    x, good = _unit(x, eps=1e-6)
    for alt in _FALLBACK_REFS:
        if good.all():
            break
        xa = alt - np.sum(alt * y, axis=-1, keepdims=True) * y
        xa, ga = _unit(xa, eps=1e-6)
        fix = ~good & ga
        x[fix] = xa[fix]
        good = good | ga
    z = np.cross(x, y)
    return np.stack([x, y, z], axis=-1)


def _ref_vectors(ref, pos, skeleton):
    if len(ref) == 2 and all(isinstance(r, str) for r in ref):
        a, b = (skeleton.index(r) for r in ref)
        return pos[:, b] - pos[:, a]
    return np.asarray(ref, dtype=float)


def attach_sensors(motion: MotionSequence, skeleton: Skeleton, placements: Sequence[Placement] = DEFAULT_PLACEMENTS) -> list[SensorTrajectory]:
    """Build one :class:`SensorTrajectory` per placement."""
    if motion.representation is Representation.JointRotations:
        motion = forward_kinematics(skeleton, motion)
    pos = motion.frames
    if pos.shape[1] != skeleton.n_joints:
        raise ValueError("motion and skeleton joint counts differ")
    out = []
    for pl in placements:
        j = skeleton.index(pl.joint)
        a, b = (skeleton.index(n) for n in pl.bone)
        R = joint_frames(pos[:, b] - pos[:, a], _ref_vectors(pl.ref, pos, skeleton))
        p = pos[:, j] + R @ np.asarray(pl.offset, dtype=float)
        local = np.asarray(pl.local_rotation, dtype=float)
        local = local / np.linalg.norm(local)
        q = align_signs(quat_mul(quat_from_matrix(R), local))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        out.append(SensorTrajectory(p, q, motion.fps, pl.name))
    return out


# ---------------------------------------------------------------------------
# synthesis


def dynamic_acceleration(traj: SensorTrajectory) -> np.ndarray:
    """Central second difference of positions over ``dt^2``, interior frames (N-2, 3)."""
    k = traj.positions
    if len(k) < 3:
        raise ValueError("need at least 3 frames")
    return (k[2:] - 2.0 * k[1:-1] + k[:-2]) * traj.fps**2


def gravity_component(traj: SensorTrajectory, cfg: GravityConfig = GravityConfig()) -> np.ndarray:
    """``g * R^T j`` per frame: the up axis seen from the sensor, scaled by g (N, 3)."""
    _check_unit(traj.orientations)
    up = np.broadcast_to(np.asarray(cfg.up_axis), traj.positions.shape)
    return cfg.g * quat_rotate(quat_conj(traj.orientations), up)


def synthesize_accelerometer(traj: SensorTrajectory, cfg: GravityConfig = GravityConfig()) -> np.ndarray:
    """Sensor-frame specific force on interior frames (N-2, 3)."""
    a_d = dynamic_acceleration(traj)
    q = traj.orientations[1:-1]
    return quat_rotate(quat_conj(q), a_d) + gravity_component(traj, cfg)[1:-1]


def synthesize_gyroscope(traj: SensorTrajectory) -> np.ndarray:
    """Body-frame angular rate between consecutive frames (N-1, 3).

    ``q_dot`` is the forward difference; it is paired with the normalised
    midpoint quaternion so the estimate is centred on ``t + dt/2``.
    """
    q = traj.orientations
    _check_unit(q)
    q = align_signs(q)
    q_dot = (q[1:] - q[:-1]) * traj.fps
    q_mid, _ = _unit(q[1:] + q[:-1])
    return 2.0 * quat_mul(quat_conj(q_mid), q_dot)[:, 1:]


def synthesize_imu(traj: SensorTrajectory, cfg: GravityConfig = GravityConfig()) -> ImuSignal:
    """Accelerometer and gyroscope on the interior frames 1..N-2."""
    acc = synthesize_accelerometer(traj, cfg)
    gyr = synthesize_gyroscope(traj)
    gyr = 0.5 * (gyr[1:] + gyr[:-1])
    return ImuSignal(acc, gyr, traj.fps, traj.placement_name, t0=1.0 / traj.fps)


def smooth_motion(motion: MotionSequence, skeleton: Skeleton, window: int, order: int = 2) -> MotionSequence:
    """Savitzky-Golay smoothing of joint positions along time.

    Generated motion carries frame-to-frame jitter that double
    differentiation amplifies by fps^2; a short quadratic filter removes it
    while keeping polynomial trends up to ``order`` exactly. ``window`` <= 1
    returns the motion unchanged (as positions).
    """
    if motion.representation is Representation.JointRotations:
        motion = forward_kinematics(skeleton, motion)
    if window <= 1:
        return motion
    if window % 2 == 0 or window <= order:
        raise ValueError("smoothing window must be odd and larger than the polynomial order")
    if motion.n_frames < window:
        return motion
    return motion.with_frames(savgol_filter(motion.frames, window, order, axis=0, mode="interp"))


def motion_to_imu(motion: MotionSequence, skeleton: Skeleton, placements=DEFAULT_PLACEMENTS,
                  cfg: GravityConfig = GravityConfig()) -> list[ImuSignal]:
    return [synthesize_imu(tr, cfg) for tr in attach_sensors(motion, skeleton, placements)]


def add_noise(signal: ImuSignal, accel_sigma: float = 0.0, gyro_sigma: float = 0.0, seed=0) -> ImuSignal:
    """Additive white Gaussian noise (augmentation; off by default)."""
    rng = np.random.default_rng(seed)
    acc = signal.accel + accel_sigma * rng.standard_normal(signal.accel.shape)
    gyr = signal.gyro + gyro_sigma * rng.standard_normal(signal.gyro.shape)
    return ImuSignal(acc, gyr, signal.fps, signal.placement_name, signal.t0)


def prefilter_width(source_fps: float, target_fps: float) -> int:
    """Odd moving-average width used before downsampling, 1 when not needed."""
    factor = source_fps / target_fps
    if factor <= 2.0:
        return 1
    return 2 * int(factor // 2) + 1


def resample(signal: ImuSignal, target_fps: float) -> ImuSignal:
    """Linear interpolation onto ``t0 + k / target_fps``.

    Downsampling by more than 2x first applies a centred moving average of
    odd width close to ``source_fps / target_fps`` samples.
    """
    if not target_fps > 0:
        raise ValueError("target_fps must be positive")
    if len(signal) == 0:
        raise ValueError("cannot resample an empty signal")
    if target_fps == signal.fps:
        return signal
    data = signal.channels
    w = prefilter_width(signal.fps, target_fps)
    if w > 1:
        data = uniform_filter1d(data, size=w, axis=0, mode="nearest")
    src_t = np.arange(len(signal)) / signal.fps
    n_out = int(np.floor(src_t[-1] * target_fps + 1e-9)) + 1
    dst_t = np.arange(n_out) / target_fps
    out = np.column_stack([np.interp(dst_t, src_t, data[:, c]) for c in range(6)])
    return ImuSignal(out[:, :3], out[:, 3:], target_fps, signal.placement_name, signal.t0)


# ---------------------------------------------------------------------------
# files


def dumps_imu(signal: ImuSignal) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(IMU_COLUMNS)
    for t, row in zip(signal.times, signal.channels):
        w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
    return buf.getvalue()


def loads_imu(text: str, fps: float | None = None, placement: str = "sensor") -> ImuSignal:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != IMU_COLUMNS:
        raise ValueError(f"IMU CSV must start with header {','.join(IMU_COLUMNS)}")
    data = np.array(rows[1:], dtype=float).reshape(-1, 7)
    if fps is None:
        if len(data) < 2:
            raise ValueError("cannot infer fps from fewer than 2 rows")
        fps = 1.0 / np.median(np.diff(data[:, 0]))
    t0 = data[0, 0] if len(data) else 0.0
    return ImuSignal(data[:, 1:4], data[:, 4:7], fps, placement, t0)


def save_imu(path, signal: ImuSignal, source_motion: str = "", gravity: GravityConfig | None = None, extra: dict | None = None):
    """Write ``<path>`` (CSV) and its ``.json`` sidecar manifest."""
    path = Path(path)
    path.write_text(dumps_imu(signal))
    meta = {
        "fps": signal.fps,
        "placement": signal.placement_name,
        "source_motion": source_motion,
        "gravity_config": gravity.to_dict() if gravity else None,
        "t0": signal.t0,
        "n_samples": len(signal),
    }
    meta.update(extra or {})
    path.with_suffix(".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def load_imu(path) -> tuple[ImuSignal, dict]:
    path = Path(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    sig = loads_imu(path.read_text(), meta.get("fps"), meta.get("placement", path.stem))
    return sig, meta

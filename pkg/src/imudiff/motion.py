"""Motion sequences, skeleton forward kinematics and finite differences.

Frames are stored as an ``(N, J, D)`` float array. Two representations are
supported:

* ``JointPositions3D``: ``D == 3`` joint positions in meters.
* ``JointRotations``: one axis-angle vector per joint plus a trailing root
  translation slot, so the array is ``(N, J + 1, 3)``.

The vertical axis is +Y by default (``UP_AXIS``).
"""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

UP_AXIS = 1
ROOT_TRANSLATION = "root_translation"


class Representation(str, enum.Enum):
    JointPositions3D = "JointPositions3D"
    JointRotations = "JointRotations"


@dataclass(frozen=True)
class Skeleton:
    """Kinematic tree: ``parent[j]`` is -1 for the root."""

    parent: np.ndarray
    offsets: np.ndarray
    joint_names: tuple = ()

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=int)
        offsets = np.asarray(self.offsets, dtype=float)
        if offsets.shape != (len(parent), 3):
            raise ValueError(f"offsets must be ({len(parent)}, 3), got {offsets.shape}")
        if not np.all(np.isfinite(offsets)):
            raise ValueError("offsets must be finite")
        roots = np.flatnonzero(parent < 0)
        if len(roots) != 1:
            raise ValueError(f"skeleton needs exactly one root, found {len(roots)}")
        # every joint must reach the root without revisiting a node
        for j in range(len(parent)):
            seen, k = set(), j
            while k >= 0:
                if k in seen or k >= len(parent):
                    raise ValueError(f"parent array is cyclic or out of range at joint {j}")
                seen.add(k)
                k = parent[k]
        names = tuple(self.joint_names) or tuple(f"joint_{j}" for j in range(len(parent)))
        if len(names) != len(parent):
            raise ValueError("joint_names length does not match parent array")
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "joint_names", names)

    @property
    def n_joints(self) -> int:
        return len(self.parent)

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    def topological_order(self) -> list[int]:
        depth = np.zeros(self.n_joints, dtype=int)
        for j in range(self.n_joints):
            k = j
            while self.parent[k] >= 0:
                depth[j] += 1
                k = self.parent[k]
        return [int(j) for j in np.argsort(depth, kind="stable")]

    def descendants(self, j: int) -> list[int]:
        out = []
        for k in range(self.n_joints):
            p = self.parent[k]
            while p >= 0:
                if p == j:
                    out.append(k)
                    break
                p = self.parent[p]
        return out

    def index(self, name: str) -> int:
        try:
            return self.joint_names.index(name)
        except ValueError:
            raise KeyError(f"unknown joint {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "parent": self.parent.tolist(),
            "offsets": self.offsets.tolist(),
            "joint_names": list(self.joint_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        return cls(np.array(d["parent"]), np.array(d["offsets"], dtype=float), tuple(d["joint_names"]))


@dataclass(frozen=True)
class MotionSequence:
    frames: np.ndarray
    fps: float = 20.0
    representation: Representation = Representation.JointPositions3D
    joint_names: tuple = ()

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        rep = Representation(self.representation)
        if frames.ndim != 3:
            raise ValueError(f"frames must be (N, J, D), got shape {frames.shape}")
        if frames.shape[0] < 3:
            raise ValueError(f"need at least 3 frames, got {frames.shape[0]}")
        if rep is Representation.JointPositions3D and frames.shape[2] != 3:
            raise ValueError("JointPositions3D requires D == 3")
        if rep is Representation.JointRotations and frames.shape[2] != 3:
            raise ValueError("JointRotations uses axis-angle, D must be 3")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain non-finite values")
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        names = tuple(self.joint_names) or tuple(f"joint_{j}" for j in range(frames.shape[1]))
        if len(names) != frames.shape[1]:
            raise ValueError("joint_names length does not match frames")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "representation", rep)
        object.__setattr__(self, "joint_names", names)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps

    def with_frames(self, frames) -> "MotionSequence":
        return MotionSequence(frames, self.fps, self.representation, self.joint_names)


@dataclass(frozen=True)
class FootContactMask:
    mask: np.ndarray
    foot_joints: tuple = field(default=())

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise ValueError("mask must be (N, J)")
        if not np.all((mask == 0) | (mask == 1)):
            raise ValueError("mask entries must be 0 or 1")
        mask = mask.astype(np.int8)
        if self.foot_joints:
            others = np.ones(mask.shape[1], dtype=bool)
            others[list(self.foot_joints)] = False
            if mask[:, others].any():
                raise ValueError("mask is nonzero outside the declared foot joints")
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "foot_joints", tuple(int(j) for j in self.foot_joints))


# ---------------------------------------------------------------------------
# rotations


def _skew(v):
    v = np.asarray(v)
    z = np.zeros(v.shape[:-1])
    return np.stack(
        [
            np.stack([z, -v[..., 2], v[..., 1]], -1),
            np.stack([v[..., 2], z, -v[..., 0]], -1),
            np.stack([-v[..., 1], v[..., 0], z], -1),
        ],
        -2,
    )


def axis_angle_to_matrix(aa):
    """Rodrigues formula, vectorised over leading axes."""
    aa = np.asarray(aa, dtype=float)
    theta = np.linalg.norm(aa, axis=-1)[..., None, None]
    k = _skew(aa)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * k + b * (k @ k)


def _right_jacobian(aa):
    """Right Jacobian of SO(3): R(aa + d) ~= R(aa) exp(J_r d)."""
    aa = np.asarray(aa, dtype=float)
    theta = np.linalg.norm(aa, axis=-1)[..., None, None]
    k = _skew(aa)
    small = theta < 1e-6
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    b = np.where(small, 1.0 / 6.0 - theta**2 / 120.0, (safe - np.sin(safe)) / safe**3)
    return np.eye(3) - a * k + b * (k @ k)


# ---------------------------------------------------------------------------
# forward kinematics


def _check_rotation_layout(skeleton: Skeleton, frames):
    if frames.shape[-2] != skeleton.n_joints + 1:
        raise ValueError(
            f"rotation motion has {frames.shape[-2]} slots, skeleton expects "
            f"{skeleton.n_joints} joints + root translation"
        )


def _fk_arrays(skeleton: Skeleton, frames):
    """Positions and global rotations for ``(..., J+1, 3)`` rotation frames."""
    _check_rotation_layout(skeleton, frames)
    J = skeleton.n_joints
    local = axis_angle_to_matrix(frames[..., :J, :])
    glob = np.empty_like(local)
    pos = np.empty(frames.shape[:-2] + (J, 3))
    root = skeleton.root
    for j in skeleton.topological_order():
        p = skeleton.parent[j]
        if j == root:
            glob[..., j, :, :] = local[..., j, :, :]
            pos[..., j, :] = frames[..., J, :] + skeleton.offsets[j]
        else:
            glob[..., j, :, :] = glob[..., p, :, :] @ local[..., j, :, :]
            pos[..., j, :] = pos[..., p, :] + glob[..., p, :, :] @ skeleton.offsets[j]
    return pos, glob


def fk_positions(skeleton: Skeleton | None, frames, representation) -> np.ndarray:
    """Array-level FK: identity for positions, tree traversal for rotations."""
    if Representation(representation) is Representation.JointPositions3D:
        frames = np.asarray(frames, dtype=float)
        if skeleton is not None and frames.shape[-2] != skeleton.n_joints:
            raise ValueError(
                f"motion has {frames.shape[-2]} joints, skeleton has {skeleton.n_joints}"
            )
        return frames
    if skeleton is None:
        raise ValueError("a skeleton is required for JointRotations")
    return _fk_arrays(skeleton, np.asarray(frames, dtype=float))[0]


def fk_vjp(skeleton: Skeleton | None, frames, representation, grad_pos) -> np.ndarray:
    """Pull a gradient on FK positions back to the motion parameters."""
    if Representation(representation) is Representation.JointPositions3D:
        return np.asarray(grad_pos, dtype=float)
    frames = np.asarray(frames, dtype=float)
    pos, glob = _fk_arrays(skeleton, frames)
    J = skeleton.n_joints
    out = np.zeros_like(frames)
    # translation moves every joint rigidly
    out[..., J, :] = grad_pos.sum(axis=-2)
    jr = _right_jacobian(frames[..., :J, :])
    for j in range(J):
        desc = skeleton.descendants(j)
        if not desc:
            continue
        rel = pos[..., desc, :] - pos[..., j : j + 1, :]
        w = np.cross(rel, grad_pos[..., desc, :]).sum(axis=-2)
        # dphi_world = G_j J_r d(theta)  =>  grad_theta = J_r^T G_j^T w
        w_local = np.einsum("...ji,...j->...i", glob[..., j, :, :], w)
        out[..., j, :] = np.einsum("...ji,...j->...i", jr[..., j, :, :], w_local)
    return out


def forward_kinematics(skeleton: Skeleton | None, motion: MotionSequence) -> MotionSequence:
    """Joint positions for ``motion``; identity on JointPositions3D input."""
    if motion.representation is Representation.JointPositions3D:
        if skeleton is not None and motion.frames.shape[1] != skeleton.n_joints:
            raise ValueError(
                f"motion has {motion.frames.shape[1]} joints, skeleton has {skeleton.n_joints}"
            )
        return motion
    pos = fk_positions(skeleton, motion.frames, motion.representation)
    return MotionSequence(pos, motion.fps, Representation.JointPositions3D, skeleton.joint_names)


# ---------------------------------------------------------------------------
# finite differences


def _frames(motion):
    return motion.frames if isinstance(motion, MotionSequence) else np.asarray(motion, dtype=float)


def finite_diff_velocity(motion) -> np.ndarray:
    """Forward first difference ``x[i+1] - x[i]`` in per-frame units."""
    x = _frames(motion)
    if x.shape[0] < 2:
        raise ValueError("velocity needs at least 2 frames")
    return kernels.first_diff(x)


def finite_diff_acceleration(motion) -> np.ndarray:
    """Second difference ``x[i+2] - 2 x[i+1] + x[i]``; ``N - 2`` rows."""
    x = _frames(motion)
    if x.shape[0] < 3:
        raise ValueError("acceleration needs at least 3 frames")
    return kernels.second_diff(x)


def derive_foot_contact(
    motion: MotionSequence,
    foot_joints: Sequence[int],
    height_eps: float = 0.05,
    speed_eps: float = 0.1,
    up_axis: int = UP_AXIS,
) -> FootContactMask:
    """Binary contact: foot low (< height_eps m) and slow (< speed_eps m/s).

    A frame counts as slow when either of its one-sided speeds (to the frame
    before or after it) is below ``speed_eps``, so touch-down and lift-off
    frames are in contact. End frames use their single neighbour.
    """
    if motion.representation is not Representation.JointPositions3D:
        raise ValueError("foot contact needs joint positions")
    if height_eps <= 0 or speed_eps <= 0:
        raise ValueError("thresholds must be positive")
    J = motion.frames.shape[1]
    for j in foot_joints:
        if not 0 <= j < J:
            raise IndexError(f"foot joint {j} out of range for {J} joints")
    feet = list(foot_joints)
    x = motion.frames[:, feet, :]
    step = np.linalg.norm(np.diff(x, axis=0), axis=-1) * motion.fps
    speed = np.minimum(np.concatenate([step, step[-1:]]), np.concatenate([step[:1], step]))
    contact = (x[:, :, up_axis] < height_eps) & (speed < speed_eps)
    mask = np.zeros((motion.n_frames, J), dtype=np.int8)
    mask[:, feet] = contact
    return FootContactMask(mask, tuple(feet))


# ---------------------------------------------------------------------------
# file format: one JSON header line followed by CSV rows (joint-major columns)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dumps_motion(motion: MotionSequence, skeleton: Skeleton | None = None, extra: dict | None = None) -> str:
    header = {
        "fps": motion.fps,
        "representation": motion.representation.value,
        "joint_names": list(motion.joint_names),
        "shape": list(motion.frames.shape),
    }
    if skeleton is not None:
        header["skeleton"] = skeleton.to_dict()
    if extra:
        header.update(extra)
    buf = io.StringIO()
    buf.write(json.dumps(header, sort_keys=True) + "\n")
    n = motion.n_frames
    for row in motion.frames.reshape(n, -1):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def loads_motion(text: str) -> tuple[MotionSequence, Skeleton | None, dict]:
    first, _, body = text.partition("\n")
    try:
        header = json.loads(first)
        shape = header["shape"]
        rows = [[float(v) for v in row] for row in csv.reader(io.StringIO(body)) if row]
        frames = np.array(rows, dtype=float).reshape(shape)
    except (ValueError, KeyError, TypeError) as exc:
        raise ValueError(f"malformed motion file: {exc}") from exc
    skel = Skeleton.from_dict(header["skeleton"]) if "skeleton" in header else None
    motion = MotionSequence(frames, header["fps"], header["representation"], tuple(header["joint_names"]))
    return motion, skel, header


def save_motion(path, motion: MotionSequence, skeleton: Skeleton | None = None, extra: dict | None = None):
    Path(path).write_text(dumps_motion(motion, skeleton, extra))


def load_motion(path):
    return loads_motion(Path(path).read_text())


def save_mask(path, mask: FootContactMask):
    lines = [json.dumps({"foot_joints": list(mask.foot_joints), "shape": list(mask.mask.shape)})]
    lines += [",".join(str(int(v)) for v in row) for row in mask.mask]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mask(path) -> FootContactMask:
    first, _, body = Path(path).read_text().partition("\n")
    header = json.loads(first)
    rows = [[int(v) for v in line.split(",")] for line in body.splitlines() if line]
    return FootContactMask(np.array(rows, dtype=np.int8).reshape(header["shape"]), tuple(header["foot_joints"]))

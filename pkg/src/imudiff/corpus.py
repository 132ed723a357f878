"""Parametric motion families standing in for a text-motion dataset.

Every clip is produced by driving a 22-joint skeleton with smooth
joint-angle curves and running forward kinematics. High-dynamic families
(running, jumping) carry far more acceleration energy than the
low-dynamic ones (walking, sitting, standing). Locomotion is in place, as
on a treadmill: a constant forward velocity would not change any IMU
reading.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diffusion import Condition
from .motion import (
    FootContactMask,
    MotionSequence,
    Representation,
    Skeleton,
    derive_foot_contact,
    fk_positions,
    load_mask,
    load_motion,
    save_mask,
    save_motion,
)
from .text import Embedder

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
)
PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19)
# +Y up, +X to the body's left, +Z forward; arms hang down at rest
OFFSETS = (
    (0.0, 0.0, 0.0), (0.06, -0.09, 0.0), (-0.06, -0.09, 0.0), (0.0, 0.11, 0.0),
    (0.0, -0.38, 0.0), (0.0, -0.38, 0.0), (0.0, 0.13, 0.0), (0.0, -0.40, 0.0),
    (0.0, -0.40, 0.0), (0.0, 0.06, 0.0), (0.0, -0.05, 0.1), (0.0, -0.05, 0.1),
    (0.0, 0.21, 0.0), (0.07, 0.12, 0.0), (-0.07, 0.12, 0.0), (0.0, 0.09, 0.03),
    (0.11, 0.03, 0.0), (-0.11, 0.03, 0.0), (0.0, -0.26, 0.0), (0.0, -0.26, 0.0),
    (0.0, -0.25, 0.0), (0.0, -0.25, 0.0),
)
FOOT_JOINTS = (10, 11)
STAND_HEIGHT = 0.92

J = {name: i for i, name in enumerate(JOINT_NAMES)}


def smpl22_skeleton() -> Skeleton:
    return Skeleton(np.array(PARENTS), np.array(OFFSETS), JOINT_NAMES)


HIGH_DYNAMIC_FAMILIES = ("running", "jumping")
LOW_DYNAMIC_FAMILIES = ("walking", "sitting", "standing")
FAMILIES = HIGH_DYNAMIC_FAMILIES + LOW_DYNAMIC_FAMILIES


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    classes: tuple = FAMILIES
    count_per_class: int = 20
    min_seconds: float = 3.0
    max_seconds: float = 10.0
    fps: float = 20.0
    position_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.classes) - set(FAMILIES)
        if unknown:
            raise ValueError(f"no generator for classes {sorted(unknown)}")
        if self.count_per_class < 1:
            raise ValueError("count_per_class must be >= 1")
        if not 0 < self.min_seconds <= self.max_seconds:
            raise ValueError("invalid length range")


# ---------------------------------------------------------------------------
# joint-angle programs: each returns (N, 22, 3) axis-angles and (N, 3) root


def _rx(theta):
    out = np.zeros(np.shape(theta) + (3,))
    out[..., 0] = theta
    return out


def _rz(theta):
    out = np.zeros(np.shape(theta) + (3,))
    out[..., 2] = theta
    return out


def _locomotion(t, p, stride_hz, hip_amp, knee_base, knee_amp, arm_amp, elbow, lean, bob):
    w = 2 * np.pi * stride_hz
    ph = w * t + p["phase"]
    n = t.size
    aa = np.zeros((n, 22, 3))
    aa[:, J["left_hip"]] = _rx(-hip_amp * np.sin(ph))
    aa[:, J["right_hip"]] = _rx(-hip_amp * np.sin(ph + np.pi))
    # knee flexes most during swing, shin trails behind the thigh
    aa[:, J["left_knee"]] = _rx(knee_base + knee_amp * (0.5 + 0.5 * np.sin(ph - 0.6 * np.pi / 2)) ** 2)
    aa[:, J["right_knee"]] = _rx(knee_base + knee_amp * (0.5 + 0.5 * np.sin(ph + np.pi - 0.6 * np.pi / 2)) ** 2)
    aa[:, J["left_ankle"]] = _rx(-0.2 * hip_amp * np.sin(ph + 0.5))
    aa[:, J["right_ankle"]] = _rx(-0.2 * hip_amp * np.sin(ph + np.pi + 0.5))
    aa[:, J["left_shoulder"]] = _rx(-arm_amp * np.sin(ph + np.pi))
    aa[:, J["right_shoulder"]] = _rx(-arm_amp * np.sin(ph))
    aa[:, J["left_elbow"]] = _rx(elbow - 0.3 * arm_amp * (1 + np.sin(ph + np.pi)))
    aa[:, J["right_elbow"]] = _rx(elbow - 0.3 * arm_amp * (1 + np.sin(ph)))
    aa[:, J["spine1"]] = _rx(lean + 0.03 * np.sin(2 * ph)) + _rz(0.05 * hip_amp * np.sin(ph))
    aa[:, J["spine3"]] = _rz(-0.08 * hip_amp * np.sin(ph))
    aa[:, J["neck"]] = _rx(-0.5 * lean * np.ones(n))
    root = np.zeros((n, 3))
    # vertical bob twice per stride; dip at foot strike
    root[:, 1] = STAND_HEIGHT - bob * (0.5 + 0.5 * np.cos(2 * ph)) - 0.03 * knee_base
    root[:, 0] = 0.02 * hip_amp * np.sin(ph)
    return aa, root


def _running(t, p):
    s = p["scale"]
    return _locomotion(t, p, 1.4 * p["freq"], 0.75 * s, 0.3, 1.5 * s, 0.7 * s, -1.4, -0.18, 0.07 * s)


def _walking(t, p):
    s = p["scale"]
    aa, root = _locomotion(t, p, 0.9 * p["freq"], 0.35 * s, 0.05, 0.55 * s, 0.25 * s, -0.15, -0.03, 0.02 * s)
    # slow periodic shift along the walkway
    root[:, 2] += 0.15 * np.sin(2 * np.pi * 0.15 * t + p["phase2"])
    return aa, root


def _jumping(t, p):
    s = p["scale"]
    w = 2 * np.pi * 1.1 * p["freq"]
    n = t.size
    ph = w * t + p["phase"]
    # smooth but sharply peaked flight/crouch profile
    lift = ((1 - np.cos(ph)) / 2) ** 2
    crouch = ((1 + np.cos(ph)) / 2) ** 3
    aa = np.zeros((n, 22, 3))
    for side in ("left", "right"):
        aa[:, J[f"{side}_hip"]] = _rx(-0.9 * crouch * s)
        aa[:, J[f"{side}_knee"]] = _rx(1.5 * crouch * s)
        aa[:, J[f"{side}_ankle"]] = _rx(-0.5 * crouch * s + 0.4 * lift)
        aa[:, J[f"{side}_shoulder"]] = _rx(-2.2 * lift * s + 0.5 * crouch)
        aa[:, J[f"{side}_elbow"]] = _rx(-0.3 * crouch)
    aa[:, J["spine1"]] = _rx(0.35 * crouch * s)
    aa[:, J["neck"]] = _rx(-0.2 * crouch * s)
    root = np.zeros((n, 3))
    knee_drop = 0.38 * (1 - np.cos(0.9 * crouch * s)) + 0.40 * (1 - np.cos(0.6 * crouch * s))
    root[:, 1] = STAND_HEIGHT + 0.3 * s * lift - 0.9 * knee_drop
    return aa, root


def _static_sway(t, p, amp):
    n = t.size
    w = 2 * np.pi * 0.25 * p["freq"]
    aa = np.zeros((n, 22, 3))
    aa[:, J["spine1"]] = _rx(amp * np.sin(w * t + p["phase"])) + _rz(0.5 * amp * np.sin(0.7 * w * t + p["phase2"]))
    aa[:, J["neck"]] = _rx(0.8 * amp * np.sin(0.5 * w * t + p["phase2"]))
    for side, sgn in (("left", 1), ("right", -1)):
        aa[:, J[f"{side}_shoulder"]] = _rx(0.5 * amp * np.sin(0.8 * w * t + p["phase"] + sgn))
        aa[:, J[f"{side}_elbow"]] = _rx(-0.2 - 0.5 * amp * np.sin(0.6 * w * t + p["phase2"]))
    return aa


def _standing(t, p):
    aa = _static_sway(t, p, 0.03 * p["scale"])
    root = np.zeros((t.size, 3))
    root[:, 1] = STAND_HEIGHT
    root[:, 0] = 0.01 * np.sin(2 * np.pi * 0.1 * t + p["phase2"])
    return aa, root


def _sitting(t, p):
    aa = _static_sway(t, p, 0.025 * p["scale"])
    for side in ("left", "right"):
        aa[:, J[f"{side}_hip"]] += _rx(-np.pi / 2)
        aa[:, J[f"{side}_knee"]] += _rx(np.pi / 2)
        aa[:, J[f"{side}_shoulder"]] += _rx(-0.4)
        aa[:, J[f"{side}_elbow"]] += _rx(-1.0)
    root = np.zeros((t.size, 3))
    # thigh horizontal, shin vertical: foot joint rests on the floor
    root[:, 1] = 0.09 + 0.40 + 0.05
    root[:, 2] = 0.005 * np.sin(2 * np.pi * 0.08 * t + p["phase"])
    return aa, root


GENERATORS = {
    "running": _running,
    "walking": _walking,
    "jumping": _jumping,
    "standing": _standing,
    "sitting": _sitting,
}


def generate_motion(family: str, seconds: float, fps: float, rng, position_noise: float = 0.0,
                    skeleton: Skeleton | None = None) -> MotionSequence:
    """One clip of ``family`` with randomised tempo, amplitude and phase."""
    skeleton = skeleton or smpl22_skeleton()
    p = {
        "freq": rng.uniform(0.85, 1.15),
        "scale": rng.uniform(0.8, 1.2),
        "phase": rng.uniform(0, 2 * np.pi),
        "phase2": rng.uniform(0, 2 * np.pi),
    }
    n = int(round(seconds * fps))
    t = np.arange(n) / fps
    aa, root = GENERATORS[family](t, p)
    frames = np.concatenate([aa, root[:, None, :]], axis=1)
    pos = fk_positions(skeleton, frames, Representation.JointRotations)
    # rest the lowest foot point on the floor for static families
    if family in ("sitting", "standing"):
        pos[..., 1] -= pos[:, FOOT_JOINTS, 1].min()
    if position_noise > 0:
        pos = pos + rng.normal(0.0, position_noise, pos.shape)
    return MotionSequence(pos, fps, Representation.JointPositions3D, skeleton.joint_names)


# ---------------------------------------------------------------------------
# prompts


def default_prompts() -> dict:
    from importlib import resources

    return json.loads(resources.files("imudiff").joinpath("data/prompts.json").read_text())


@dataclass
class CorpusItem:
    item_id: str
    family: str
    prompt: str
    motion: MotionSequence
    mask: FootContactMask
    seed: int
    condition: Condition | None = None


def generate_corpus(spec: SyntheticCorpusSpec, embedder: Embedder | None = None, prompts: dict | None = None) -> list[CorpusItem]:
    """Deterministic corpus: each clip draws from its own child seed."""
    embedder = embedder or Embedder()
    prompts = prompts or default_prompts()
    skel = smpl22_skeleton()
    items = []
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(len(spec.classes) * spec.count_per_class)
    k = 0
    for family in spec.classes:
        for i in range(spec.count_per_class):
            child = children[k]
            k += 1
            rng = np.random.default_rng(child)
            seconds = rng.uniform(spec.min_seconds, spec.max_seconds)
            motion = generate_motion(family, seconds, spec.fps, rng, spec.position_noise, skel)
            plist = prompts[family]
            prompt = plist[int(rng.integers(len(plist)))]
            mask = derive_foot_contact(motion, FOOT_JOINTS)
            seed_id = int(child.generate_state(1)[0])
            items.append(CorpusItem(f"{family}_{i:04d}", family, prompt, motion, mask, seed_id,
                                    Condition(embedder(prompt), family)))
    return items


def crop_items(items, n_frames: int, stride: int | None = None, max_per_item: int | None = None):
    """Equal-length training tuples (motion, condition, mask) from clips."""
    stride = stride or n_frames
    out = []
    for it in items:
        n = it.motion.n_frames
        starts = list(range(0, n - n_frames + 1, stride))
        if max_per_item:
            starts = starts[:max_per_item]
        for s in starts:
            m = it.motion.with_frames(it.motion.frames[s : s + n_frames])
            mask = FootContactMask(it.mask.mask[s : s + n_frames], it.mask.foot_joints)
            out.append((m, it.condition, mask))
    return out


# ---------------------------------------------------------------------------
# on-disk layout: <dir>/manifest.json, motions/<id>.motion, masks/<id>.mask,
# embeddings.json


def spec_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_corpus(items, out_dir, spec: SyntheticCorpusSpec, embedder: Embedder, extra: dict | None = None):
    out = Path(out_dir)
    (out / "motions").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(exist_ok=True)
    skel = smpl22_skeleton()
    records = []
    for it in items:
        mpath = out / "motions" / f"{it.item_id}.motion"
        kpath = out / "masks" / f"{it.item_id}.mask"
        save_motion(mpath, it.motion, skel, {"label": it.family, "prompt": it.prompt})
        save_mask(kpath, it.mask)
        records.append({
            "id": it.item_id, "label": it.family, "prompt": it.prompt, "seed": it.seed,
            "motion": f"motions/{it.item_id}.motion", "mask": f"masks/{it.item_id}.mask",
            "frames": it.motion.n_frames,
        })
    embedder.dump(out / "embeddings.json", sorted({it.prompt for it in items}))
    manifest = {"kind": "motion-corpus", "spec": asdict(spec), "config_hash": spec_hash(asdict(spec)), "items": records}
    manifest.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def read_corpus(corpus_dir) -> list[CorpusItem]:
    root = Path(corpus_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    emb = Embedder.from_file(root / "embeddings.json")
    items = []
    for rec in manifest["items"]:
        motion, _, _ = load_motion(root / rec["motion"])
        mask = load_mask(root / rec["mask"])
        items.append(CorpusItem(rec["id"], rec["label"], rec["prompt"], motion, mask, rec["seed"],
                                Condition(emb(rec["prompt"]), rec["label"])))
    return items

"""Gaussian diffusion over motion clips with a small residual-MLP denoiser.

The denoiser predicts the clean motion directly from a noised clip, the
timestep and a condition vector. Timesteps are 1-based throughout:
``schedule.alpha(t)`` and ``schedule.alpha_bar(t)`` for ``t in 1..T`` with
``alpha_bar(0) == 1``.
"""

from __future__ import annotations

import base64
import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .losses import LossBreakdown, LossWeights, acc_terms, total_terms
from .motion import FootContactMask, MotionSequence, Representation

CHECKPOINT_VERSION = 1

# named presets; "long" is a 6000-step schedule kept for reference only
SCHEDULE_PRESETS = {
    "test": dict(T=100, kind="linear", beta_min=1e-4, beta_max=0.02),
    "experiment": dict(T=1000, kind="linear", beta_min=1e-4, beta_max=0.02),
    "desk": dict(T=200, kind="linear", beta_min=1e-4, beta_max=0.1),
    "long": dict(T=6000, kind="linear", beta_min=1e-4, beta_max=0.02),
}


class TrainingDiverged(FloatingPointError):
    pass


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class NoiseSchedule:
    alphas: np.ndarray
    kind: str = "custom"
    beta_min: float | None = None
    beta_max: float | None = None

    def __post_init__(self):
        a = np.asarray(self.alphas, dtype=float).reshape(-1)
        if a.size < 1:
            raise ValueError("schedule needs at least one step")
        if not np.all((a > 0) & (a <= 1)):
            raise ValueError("alphas must lie in (0, 1]")
        object.__setattr__(self, "alphas", a)
        object.__setattr__(self, "alpha_bars", np.cumprod(a))

    @property
    def T(self) -> int:
        return self.alphas.size

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    def _check(self, t):
        t = np.asarray(t)
        if np.any(t < 1) or np.any(t > self.T):
            raise ValueError(f"timestep out of range 1..{self.T}: {t}")

    def alpha(self, t):
        self._check(t)
        return self.alphas[np.asarray(t) - 1]

    def alpha_bar(self, t):
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep out of range 0..{self.T}: {t}")
        padded = np.concatenate([[1.0], self.alpha_bars])
        return padded[t]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "T": self.T, "beta_min": self.beta_min, "beta_max": self.beta_max}
        if self.kind == "custom":
            d["alphas"] = self.alphas.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        if d.get("kind", "custom") == "custom":
            return cls(np.array(d["alphas"]))
        return make_schedule(d["T"], d["kind"], d["beta_min"], d["beta_max"])


def make_schedule(T: int = 100, kind: str = "linear", beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Linear or cosine noise schedule; cosine betas are clipped to the range."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < beta_min <= beta_max < 1:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    if kind == "linear":
        betas = np.linspace(beta_min, beta_max, T)
    elif kind == "cosine":
        s = 0.008
        steps = np.arange(T + 1) / T
        f = np.cos((steps + s) / (1 + s) * math.pi / 2) ** 2
        ab = f / f[0]
        betas = np.clip(1.0 - ab[1:] / ab[:-1], beta_min, beta_max)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(1.0 - betas, kind, float(beta_min), float(beta_max))


def preset_schedule(name: str) -> NoiseSchedule:
    return make_schedule(**SCHEDULE_PRESETS[name])


# ---------------------------------------------------------------------------
# forward process


def _wrap(x, like):
    return like.with_frames(x) if isinstance(like, MotionSequence) else x


def _data(x):
    return x.frames if isinstance(x, MotionSequence) else np.asarray(x, dtype=float)


def q_step(x_prev, t: int, schedule: NoiseSchedule, rng_seed=None):
    """One forward step: sample N(sqrt(a_t) x_prev, (1 - a_t) I)."""
    a = float(schedule.alpha(t))
    x = _data(x_prev)
    noise = _rng(rng_seed).standard_normal(x.shape)
    return _wrap(math.sqrt(a) * x + math.sqrt(1.0 - a) * noise, x_prev)


def q_marginal(x0, t: int, schedule: NoiseSchedule, rng_seed=None):
    """t composed forward steps in closed form: N(sqrt(ab_t) x0, (1 - ab_t) I)."""
    schedule._check(t)
    ab = float(schedule.alpha_bar(t))
    x = _data(x0)
    noise = _rng(rng_seed).standard_normal(x.shape)
    return _wrap(math.sqrt(ab) * x + math.sqrt(1.0 - ab) * noise, x0)


def posterior_coefficients(t, schedule: NoiseSchedule):
    """(coef on x0_hat, coef on x_t, variance) of q(x_{t-1} | x_t, x0)."""
    schedule._check(t)
    a = schedule.alpha(t)
    ab = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(np.asarray(t) - 1)
    beta = 1.0 - a
    denom = 1.0 - ab
    # alpha_bar == 1 only when every alpha so far is 1: the step is noiseless
    safe = np.where(denom > 0, denom, 1.0)
    c0 = np.where(denom > 0, np.sqrt(ab_prev) * beta / safe, 1.0)
    ct = np.where(denom > 0, np.sqrt(a) * (1.0 - ab_prev) / safe, 0.0)
    var = np.where(denom > 0, beta * (1.0 - ab_prev) / safe, 0.0)
    return c0, ct, var


def posterior_step(x_t, x_hat0, t: int, schedule: NoiseSchedule, rng_seed=None):
    """Sample x_{t-1} from the DDPM posterior; t == 1 returns its mean."""
    c0, ct, var = (float(v) for v in posterior_coefficients(t, schedule))
    xt, xh = _data(x_t), _data(x_hat0)
    mean = c0 * xh + ct * xt
    if t == 1 or var == 0.0:
        return _wrap(mean, x_t)
    noise = _rng(rng_seed).standard_normal(mean.shape)
    return _wrap(mean + math.sqrt(var) * noise, x_t)


# ---------------------------------------------------------------------------
# denoiser


@dataclass(frozen=True)
class Condition:
    embedding: np.ndarray
    label: str | None = None

    def __post_init__(self):
        e = np.asarray(self.embedding, dtype=float).reshape(-1)
        if not np.all(np.isfinite(e)):
            raise ValueError("condition embedding must be finite")
        object.__setattr__(self, "embedding", e)


@dataclass(frozen=True)
class DenoiserConfig:
    n_frames: int
    n_joints: int = 22
    dim: int = 3
    cond_dim: int = 32
    hidden: int = 256
    n_blocks: int = 2
    temb_dim: int = 32
    representation: str = Representation.JointPositions3D.value

    @property
    def motion_size(self) -> int:
        return self.n_frames * self.n_joints * self.dim

    @property
    def input_size(self) -> int:
        return self.motion_size + self.temb_dim + self.cond_dim

    def shapes(self) -> list[tuple[int, ...]]:
        h = self.hidden
        out = [(self.input_size, h), (h,)]
        for _ in range(self.n_blocks):
            out += [(h, h), (h,)]
        out += [(h, self.motion_size), (self.motion_size,)]
        return out


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    arrays: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.config.shapes()
        if len(self.arrays) != len(shapes):
            raise ValueError("wrong number of parameter arrays")
        for a, s in zip(self.arrays, shapes):
            if a.shape != s:
                raise ValueError(f"parameter shape {a.shape} != expected {s}")

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    @classmethod
    def from_flat(cls, config: DenoiserConfig, flat, meta=None) -> "DenoiserParams":
        flat = np.asarray(flat, dtype=float)
        arrays, i = [], 0
        for s in config.shapes():
            n = int(np.prod(s))
            arrays.append(flat[i : i + n].reshape(s).copy())
            i += n
        if i != flat.size:
            raise ValueError("flat parameter vector has the wrong length")
        return cls(config, arrays, dict(meta or {}))

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.config, [a.copy() for a in self.arrays], json.loads(json.dumps(self.meta)))


def init_params(config: DenoiserConfig, seed=0) -> DenoiserParams:
    rng = _rng(seed)
    arrays = []
    for s in config.shapes():
        if len(s) == 1:
            arrays.append(np.zeros(s))
        else:
            arrays.append(rng.standard_normal(s) / math.sqrt(s[0]))
    # residual branches start small so the network begins near a plain MLP
    for k in range(config.n_blocks):
        arrays[2 + 2 * k] *= 0.5
    return DenoiserParams(config, arrays, {})


def timestep_embedding(t, dim: int, T: int) -> np.ndarray:
    t = np.asarray(t, dtype=float).reshape(-1) * (1000.0 / T)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    ang = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if emb.shape[1] < dim:
        emb = np.pad(emb, ((0, 0), (0, dim - emb.shape[1])))
    return emb


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _forward(params: DenoiserParams, x_t, t, cond, schedule: NoiseSchedule):
    cfg = params.config
    b = x_t.shape[0]
    z = np.concatenate([x_t.reshape(b, -1), timestep_embedding(t, cfg.temb_dim, schedule.T), cond], axis=1)
    W = params.arrays
    a = z @ W[0] + W[1]
    s = _sigmoid(a)
    h = a * s
    cache = [(z, a, s)]
    for k in range(cfg.n_blocks):
        Wk, bk = W[2 + 2 * k], W[3 + 2 * k]
        a = h @ Wk + bk
        s = _sigmoid(a)
        cache.append((h, a, s))
        h = h + a * s
    out = h @ W[-2] + W[-1]
    cache.append(h)
    return out.reshape(x_t.shape), cache


def _backward(params: DenoiserParams, cache, grad_out):
    cfg = params.config
    W = params.arrays
    b = grad_out.shape[0]
    g = grad_out.reshape(b, -1)
    grads = [None] * len(W)
    h = cache[-1]
    grads[-2] = h.T @ g
    grads[-1] = g.sum(axis=0)
    gh = g @ W[-2].T
    for k in reversed(range(cfg.n_blocks)):
        h_in, a, s = cache[1 + k]
        ga = gh * (s * (1.0 + a * (1.0 - s)))
        grads[2 + 2 * k] = h_in.T @ ga
        grads[3 + 2 * k] = ga.sum(axis=0)
        gh = gh + ga @ W[2 + 2 * k].T
    z, a, s = cache[0]
    ga = gh * (s * (1.0 + a * (1.0 - s)))
    grads[0] = z.T @ ga
    grads[1] = ga.sum(axis=0)
    return grads


def _cond_matrix(cond, b: int | None, dim: int):
    if isinstance(cond, Condition):
        c = cond.embedding[None, :]
    elif isinstance(cond, (list, tuple)) and cond and isinstance(cond[0], Condition):
        c = np.stack([x.embedding for x in cond])
    else:
        c = np.asarray(cond, dtype=float).reshape(-1, dim)
    if c.shape[1] != dim:
        raise ValueError(f"condition dimension {c.shape[1]} != model's {dim}")
    if b is None:
        return c
    if c.shape[0] == 1 and b > 1:
        c = np.repeat(c, b, axis=0)
    if c.shape[0] != b:
        raise ValueError("one condition per sample is required")
    return c


def denoise_predict(params: DenoiserParams, x_t, t, c, schedule: NoiseSchedule | None = None):
    """Clean-motion estimate G(x_t, t, c); accepts one clip or a batch.

    ``schedule`` defaults to the one stored in the parameters' metadata.
    """
    cfg = params.config
    if schedule is None:
        if "schedule" not in params.meta:
            raise ValueError("no schedule given and none stored with the parameters")
        schedule = NoiseSchedule.from_dict(params.meta["schedule"])
    x = _data(x_t)
    single = x.ndim == 3
    xb = x[None] if single else x
    if xb.shape[1:] != (cfg.n_frames, cfg.n_joints, cfg.dim):
        raise ValueError(f"motion shape {xb.shape[1:]} does not match model {(cfg.n_frames, cfg.n_joints, cfg.dim)}")
    tb = np.broadcast_to(np.asarray(t), (xb.shape[0],))
    out, _ = _forward(params, xb, tb, _cond_matrix(c, xb.shape[0], cfg.cond_dim), schedule)
    return _wrap(out[0] if single else out, x_t)


# ---------------------------------------------------------------------------
# sampling


def sample_batch(params: DenoiserParams, conds, n_frames: int, schedule: NoiseSchedule, rng_seed=0) -> np.ndarray:
    """Ancestral sampling for a batch of conditions; returns (B, N, J, D)."""
    cfg = params.config
    if n_frames < 3:
        raise ValueError("need at least 3 frames")
    if n_frames != cfg.n_frames:
        raise ValueError(f"model generates {cfg.n_frames}-frame clips, requested {n_frames}")
    rng = _rng(rng_seed)
    c = _cond_matrix(conds, None, cfg.cond_dim)
    b = c.shape[0]
    shape = (b, cfg.n_frames, cfg.n_joints, cfg.dim)
    x = rng.standard_normal(shape)
    for t in range(schedule.T, 0, -1):
        tb = np.full(b, t)
        x_hat, _ = _forward(params, x, tb, c, schedule)
        c0, ct, var = (float(v) for v in posterior_coefficients(t, schedule))
        x = c0 * x_hat + ct * x
        if t > 1 and var > 0:
            x = x + math.sqrt(var) * rng.standard_normal(shape)
    if not np.all(np.isfinite(x)):
        raise TrainingDiverged("sampling produced non-finite values")
    return x


def sample(params: DenoiserParams, c: Condition, N: int, schedule: NoiseSchedule, rng_seed=0, fps: float = 20.0) -> MotionSequence:
    x = sample_batch(params, [c], N, schedule, rng_seed)[0]
    return MotionSequence(x, fps, params.config.representation)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainHyper:
    steps: int = 2000
    batch: int = 32
    lr: float = 1e-3
    seed: int = 0
    optimizer: str = "sgd"
    momentum: float = 0.9
    beta2: float = 0.999
    clip_norm: float | None = None
    lr_schedule: str = "constant"
    hidden: int = 256
    n_blocks: int = 2
    temb_dim: int = 32


class _Optimizer:
    """Momentum SGD or Adam over a list of arrays; state lives here only."""

    def __init__(self, hyper: TrainHyper, arrays):
        self.h = hyper
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays] if hyper.optimizer == "adam" else None
        self.k = 0
        if hyper.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {hyper.optimizer!r}")
        if hyper.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {hyper.lr_schedule!r}")

    def lr_at(self, k: int) -> float:
        """Learning rate for 1-based step ``k``; cosine decays to 0 at ``steps``."""
        h = self.h
        if h.lr_schedule == "cosine":
            return h.lr * 0.5 * (1.0 + math.cos(math.pi * (k - 1) / max(h.steps, 1)))
        return h.lr

    def step(self, arrays, grads):
        h = self.h
        self.k += 1
        lr = self.lr_at(self.k)
        if h.clip_norm:
            norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
            if norm > h.clip_norm:
                grads = [g * (h.clip_norm / norm) for g in grads]
        if h.optimizer == "sgd":
            for a, g, m in zip(arrays, grads, self.m):
                kernels.momentum_update(a, g, m, lr, h.momentum)
        else:
            c1 = 1.0 - h.momentum**self.k
            c2 = 1.0 - h.beta2**self.k
            for a, g, m, v in zip(arrays, grads, self.m, self.v):
                kernels.adam_update(a, g, m, v, lr, h.momentum, h.beta2, c1, c2)


def _stack_dataset(dataset):
    if not dataset:
        raise ValueError("dataset is empty")
    xs, cs, ms = [], [], []
    shape = None
    rep = None
    for item in dataset:
        motion, cond = item[0], item[1]
        mask = item[2] if len(item) > 2 else None
        if shape is None:
            shape, rep = motion.frames.shape, motion.representation
        elif motion.frames.shape != shape:
            raise ValueError("all training clips must share (N, J, D)")
        xs.append(motion.frames)
        cs.append(cond.embedding)
        if mask is None:
            ms.append(np.zeros(shape[:2]))
        else:
            ms.append(mask.mask if isinstance(mask, FootContactMask) else np.asarray(mask))
    return np.stack(xs), np.stack(cs), np.stack(ms).astype(float), rep


def batch_loss_and_grad(params, x0, cond, masks, t, noise, schedule, weights, skeleton=None, representation=Representation.JointPositions3D):
    """Mean total loss over a batch and its gradient in the parameters."""
    ab = schedule.alpha_bar(t)[:, None, None, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * noise
    x_hat, cache = _forward(params, x_t, t, cond, schedule)
    vals, g = total_terms(x0, x_hat, masks, skeleton, weights, representation)
    b = x0.shape[0]
    grads = _backward(params, cache, g / b)
    means = {k: float(np.mean(v)) for k, v in vals.items()}
    return means, grads


def _run(params, dataset, weights, hyper, schedule, skeleton, phase):
    X, C, M, rep = _stack_dataset(dataset)
    rng = _rng(hyper.seed)
    opt = _Optimizer(hyper, params.arrays)
    history = []
    for step in range(hyper.steps):
        idx = rng.integers(0, X.shape[0], size=hyper.batch)
        t = rng.integers(1, schedule.T + 1, size=hyper.batch)
        noise = rng.standard_normal((hyper.batch,) + X.shape[1:])
        with np.errstate(over="ignore", invalid="ignore"):
            means, grads = batch_loss_and_grad(params, X[idx], C[idx], M[idx], t, noise, schedule, weights, skeleton, rep)
        if not math.isfinite(means["total"]) or not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDiverged(f"{phase}: non-finite loss at step {step} ({means})")
        if hyper.lr != 0:
            opt.step(params.arrays, grads)
        history.append(LossBreakdown(**means))
    return history


def train(dataset, weights: LossWeights, hyper: TrainHyper, schedule: NoiseSchedule, skeleton=None, cond_dim: int | None = None):
    """Train a fresh denoiser; returns (params, per-step LossBreakdown list)."""
    X, C, _, rep = _stack_dataset(dataset)
    cfg = DenoiserConfig(
        n_frames=X.shape[1], n_joints=X.shape[2], dim=X.shape[3],
        cond_dim=cond_dim or C.shape[1], hidden=hyper.hidden,
        n_blocks=hyper.n_blocks, temb_dim=hyper.temb_dim, representation=rep.value,
    )
    params = init_params(cfg, seed=hyper.seed)
    history = _run(params, dataset, weights, hyper, schedule, skeleton, "train")
    params.meta = {
        "schedule": schedule.to_dict(),
        "phases": [{"phase": "train", "steps": hyper.steps, "seed": hyper.seed, "weights": asdict(weights), "hyper": asdict(hyper)}],
    }
    return params, history


def pretrain(dataset, weights: LossWeights, hyper: TrainHyper, schedule: NoiseSchedule, settle_steps: int = 0,
             settle_lr: float | None = None, skeleton=None):
    """Base training: :func:`train`, then an optional lower-lr "settle" phase.

    The settle phase uses the same loss weights, a fresh optimizer and seed
    ``hyper.seed + 50``. With a constant learning rate the first phase stops
    with a timestep-independent residual wobble in x0 predictions; settling
    at a lower rate removes most of it, so later comparisons measure the
    loss change rather than leftover optimisation noise.
    """
    params, history = train(dataset, weights, hyper, schedule, skeleton)
    if settle_steps:
        h2 = replace(hyper, steps=settle_steps, lr=hyper.lr if settle_lr is None else settle_lr, seed=hyper.seed + 50)
        history = history + _run(params, dataset, weights, h2, schedule, skeleton, "settle")
        params.meta["phases"].append({"phase": "settle", "steps": h2.steps, "seed": h2.seed, "weights": asdict(weights),
                                      "hyper": asdict(h2)})
    return params, history


def finetune(params: DenoiserParams, dataset, weights_with_acc: LossWeights, hyper: TrainHyper, schedule: NoiseSchedule,
             skeleton=None, heldout=None, allow_zero_acc: bool = True, eval_seed: int = 0):
    """Continue training from ``params`` with new loss weights.

    The optimizer state starts fresh. When ``heldout`` is given, its mean
    L_acc before and after is stored in the returned params' metadata.
    """
    prior = [p["weights"]["lambda_acc"] for p in params.meta.get("phases", [])]
    if prior and prior[0] != 0:
        raise ValueError("finetuning expects a base model trained with lambda_acc = 0")
    if weights_with_acc.lambda_acc <= 0 and not allow_zero_acc:
        raise ValueError("finetuning requires lambda_acc > 0")
    out = params.copy()
    before = heldout_acc(out, heldout, schedule, seed=eval_seed).mean() if heldout else None
    history = _run(out, dataset, weights_with_acc, hyper, schedule, skeleton, "finetune")
    rec = {"phase": "finetune", "steps": hyper.steps, "seed": hyper.seed, "weights": asdict(weights_with_acc), "hyper": asdict(hyper)}
    if heldout:
        rec["heldout_lacc_before"] = float(before)
        rec["heldout_lacc_after"] = float(heldout_acc(out, heldout, schedule, seed=eval_seed).mean())
    out.meta.setdefault("phases", []).append(rec)
    out.meta["schedule"] = schedule.to_dict()
    return out, history


def t_grid(T: int, n: int = 10) -> np.ndarray:
    """Evaluation timesteps {T/n, 2T/n, ..., T} (rounded, at least 1)."""
    return np.unique(np.maximum(1, np.round(np.arange(1, n + 1) * T / n).astype(int)))


def heldout_acc(params: DenoiserParams, items, schedule: NoiseSchedule, grid=None, seed: int = 0) -> np.ndarray:
    """Per-item L_acc of x0 predictions, averaged over a fixed timestep grid.

    Noise draws depend only on ``seed`` so two models see identical inputs.
    """
    X, C, _, _ = _stack_dataset(items)
    grid = t_grid(schedule.T) if grid is None else np.asarray(grid)
    rng = _rng(seed)
    out = np.zeros(X.shape[0])
    for t in grid:
        noise = rng.standard_normal(X.shape)
        ab = float(schedule.alpha_bar(int(t)))
        x_t = math.sqrt(ab) * X + math.sqrt(1.0 - ab) * noise
        x_hat, _ = _forward(params, x_t, np.full(X.shape[0], int(t)), C, schedule)
        out += acc_terms(X, x_hat)[0]
    return out / len(grid)


# ---------------------------------------------------------------------------
# persistence


def save_checkpoint(path, params: DenoiserParams, schedule: NoiseSchedule | None = None):
    meta = dict(params.meta)
    if schedule is not None:
        meta["schedule"] = schedule.to_dict()
    flat = params.flat().astype("<f8")
    doc = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(params.config),
        "shapes": [list(s) for s in params.config.shapes()],
        "params_b64": base64.b64encode(flat.tobytes()).decode("ascii"),
        "meta": meta,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def load_checkpoint(path) -> tuple[DenoiserParams, NoiseSchedule | None]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = DenoiserConfig(**doc["config"])
    flat = np.frombuffer(base64.b64decode(doc["params_b64"]), dtype="<f8")
    params = DenoiserParams.from_flat(cfg, flat, doc.get("meta"))
    sched = NoiseSchedule.from_dict(doc["meta"]["schedule"]) if "schedule" in doc.get("meta", {}) else None
    return params, sched


def write_loss_curves(path, history: Sequence[LossBreakdown], start_step: int = 0):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "simple", "pos", "foot", "vel", "acc", "total"])
        for i, rec in enumerate(history):
            w.writerow([start_step + i] + [format(getattr(rec, k), ".17g") for k in ("simple", "pos", "foot", "vel", "acc", "total")])

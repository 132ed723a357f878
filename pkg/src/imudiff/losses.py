"""Training losses on clean-motion predictions and their analytic gradients.

Each loss compares a ground-truth motion ``x0`` with a prediction ``x0_hat``
of identical shape. Squared norms are taken over the whole ``J x D`` frame.
The array-level ``*_terms`` functions are batched over leading axes and
return per-sample values together with the gradient in ``x0_hat``; the
public ``loss_*`` functions wrap them for single motions.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .motion import FootContactMask, MotionSequence, Representation, Skeleton, fk_positions, fk_vjp

LOSS_IDS = ("simple", "pos", "foot", "vel", "acc", "total")


@dataclass(frozen=True)
class LossWeights:
    lambda_pos: float = 1.0
    lambda_vel: float = 1.0
    lambda_foot: float = 1.0
    lambda_acc: float = 1.0

    def __post_init__(self):
        for name, v in asdict(self).items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def replace(self, **kw) -> "LossWeights":
        return LossWeights(**{**asdict(self), **kw})


@dataclass(frozen=True)
class LossBreakdown:
    simple: float
    pos: float
    foot: float
    vel: float
    acc: float
    total: float

    def to_json(self, weights: LossWeights | None = None) -> str:
        rec = asdict(self)
        if weights is not None:
            rec["weights"] = asdict(weights)
        return json.dumps(rec, sort_keys=True)


def _sum_frame(x):
    """Sum of squares over (N, J, D), keeping leading batch axes."""
    return np.einsum("...ijk,...ijk->...", x, x)


def _check_pair(x0, xh):
    if x0.shape != xh.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {xh.shape}")


# ---------------------------------------------------------------------------
# array-level terms: return (value, d value / d x0_hat)


def simple_terms(x0, xh):
    _check_pair(x0, xh)
    n = x0.shape[-3]
    r = xh - x0
    return _sum_frame(r) / n, (2.0 / n) * r


def pos_terms(x0, xh, skeleton, representation):
    _check_pair(x0, xh)
    n = x0.shape[-3]
    r = fk_positions(skeleton, xh, representation) - fk_positions(skeleton, x0, representation)
    return _sum_frame(r) / n, fk_vjp(skeleton, xh, representation, (2.0 / n) * r)


def foot_terms(xh, mask, skeleton, representation):
    n = xh.shape[-3]
    if n < 2:
        raise ValueError("foot loss needs at least 2 frames")
    p = fk_positions(skeleton, xh, representation)
    m = np.asarray(mask, dtype=float)
    if m.shape[-2:] != p.shape[-3:-1]:
        raise ValueError(f"mask shape {m.shape} does not match motion {p.shape[:-1]}")
    # only f_1 .. f_{N-1} enter the sum
    v = kernels.first_diff(p) * m[..., :-1, :, None]
    val = _sum_frame(v) / (n - 1)
    g_v = (2.0 / (n - 1)) * v * m[..., :-1, :, None]
    return val, fk_vjp(skeleton, xh, representation, kernels.first_diff_adjoint(g_v))


def vel_terms(x0, xh):
    _check_pair(x0, xh)
    n = x0.shape[-3]
    if n < 2:
        raise ValueError("velocity loss needs at least 2 frames")
    d = kernels.first_diff(xh - x0)
    return _sum_frame(d) / (n - 1), (2.0 / (n - 1)) * kernels.first_diff_adjoint(d)


def acc_terms(x0, xh):
    _check_pair(x0, xh)
    n = x0.shape[-3]
    if n < 3:
        raise ValueError("acceleration loss needs at least 3 frames")
    # N - 2 summands but normalised by N - 1
    return kernels.acc_loss_grad(x0, xh, 1.0 / (n - 1))


def total_terms(x0, xh, mask, skeleton, weights: LossWeights, representation=Representation.JointPositions3D):
    """All five terms and the weighted total, batched.

    Returns ``(values, grad)`` where ``values`` maps each loss id to an
    array of per-sample values.
    """
    rep = Representation(representation)
    s, gs = simple_terms(x0, xh)
    if rep is Representation.JointPositions3D:
        p, gp = s, gs
    else:
        p, gp = pos_terms(x0, xh, skeleton, rep)
    v, gv = vel_terms(x0, xh)
    a, ga = acc_terms(x0, xh)
    grad = gs + weights.lambda_pos * gp + weights.lambda_vel * gv
    if weights.lambda_acc:
        grad = grad + weights.lambda_acc * ga
    if mask is not None:
        f, gf = foot_terms(xh, mask, skeleton, rep)
        grad = grad + weights.lambda_foot * gf
    else:
        f = np.zeros_like(s)
    total = s + weights.lambda_pos * p + weights.lambda_vel * v + weights.lambda_foot * f + weights.lambda_acc * a
    return {"simple": s, "pos": p, "foot": f, "vel": v, "acc": a, "total": total}, grad


# ---------------------------------------------------------------------------
# public single-motion API


def _unpack(x0, x0_hat):
    a = x0.frames if isinstance(x0, MotionSequence) else np.asarray(x0, dtype=float)
    b = x0_hat.frames if isinstance(x0_hat, MotionSequence) else np.asarray(x0_hat, dtype=float)
    _check_pair(a, b)
    rep = x0.representation if isinstance(x0, MotionSequence) else Representation.JointPositions3D
    return a, b, rep


def _mask_array(mask):
    if mask is None:
        return None
    return mask.mask if isinstance(mask, FootContactMask) else np.asarray(mask)


def loss_simple(x0, x0_hat) -> float:
    a, b, _ = _unpack(x0, x0_hat)
    return float(simple_terms(a, b)[0])


def loss_pos(x0, x0_hat, skeleton: Skeleton | None = None) -> float:
    a, b, rep = _unpack(x0, x0_hat)
    return float(pos_terms(a, b, skeleton, rep)[0])


def loss_foot(x0_hat, mask, skeleton: Skeleton | None = None) -> float:
    b = x0_hat.frames if isinstance(x0_hat, MotionSequence) else np.asarray(x0_hat, dtype=float)
    rep = x0_hat.representation if isinstance(x0_hat, MotionSequence) else Representation.JointPositions3D
    return float(foot_terms(b, _mask_array(mask), skeleton, rep)[0])


def loss_vel(x0, x0_hat) -> float:
    a, b, _ = _unpack(x0, x0_hat)
    return float(vel_terms(a, b)[0])


def loss_acc(x0, x0_hat) -> float:
    a, b, _ = _unpack(x0, x0_hat)
    return float(acc_terms(a, b)[0])


def total_loss(x0, x0_hat, mask, skeleton, weights: LossWeights) -> LossBreakdown:
    a, b, rep = _unpack(x0, x0_hat)
    vals, _ = total_terms(a, b, _mask_array(mask), skeleton, weights, rep)
    return LossBreakdown(**{k: float(v) for k, v in vals.items()})


def _value_grad(loss_id, a, b, rep, m, skeleton, weights):
    if loss_id == "simple":
        v, g = simple_terms(a, b)
    elif loss_id == "pos":
        v, g = pos_terms(a, b, skeleton, rep)
    elif loss_id == "foot":
        v, g = foot_terms(b, m, skeleton, rep)
    elif loss_id == "vel":
        v, g = vel_terms(a, b)
    elif loss_id == "acc":
        v, g = acc_terms(a, b)
    elif loss_id == "total":
        vals, g = total_terms(a, b, m, skeleton, weights or LossWeights(), rep)
        v = vals["total"]
    else:
        raise KeyError(f"unknown loss {loss_id!r}; expected one of {LOSS_IDS}")
    return float(v), g


def loss_and_grad(loss_id, x0, x0_hat, mask=None, skeleton=None, weights: LossWeights | None = None):
    """Value and analytic gradient in ``x0_hat`` for one of ``LOSS_IDS``."""
    a, b, rep = _unpack(x0, x0_hat)
    return _value_grad(loss_id, a, b, rep, _mask_array(mask), skeleton, weights)


def grad_check(loss_id, x0, x0_hat, mask=None, skeleton=None, weights=None, h=1e-5, floor=1e-8):
    """Max relative error between analytic and central-difference gradients.

    Relative error per element is ``|g - g_fd| / max(|g|, |g_fd|, floor)``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    a, b, rep = _unpack(x0, x0_hat)
    m = _mask_array(mask)
    value, g = _value_grad(loss_id, a, b, rep, m, skeleton, weights)
    if not np.isfinite(value):
        raise FloatingPointError("loss is not finite")
    g_fd = np.zeros_like(b)
    xp = b.copy()
    for idx in np.ndindex(b.shape):
        orig = xp[idx]
        xp[idx] = orig + h
        fp = _value_grad(loss_id, a, xp, rep, m, skeleton, weights)[0]
        xp[idx] = orig - h
        fm = _value_grad(loss_id, a, xp, rep, m, skeleton, weights)[0]
        xp[idx] = orig
        g_fd[idx] = (fp - fm) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(g), np.abs(g_fd)), floor)
    return float(np.max(np.abs(g - g_fd) / denom))

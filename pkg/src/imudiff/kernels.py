"""Hot-loop kernels with a compiled backend and a numpy fallback.

The Cython extension ``imudiff._ckernels`` is used when it was built;
otherwise the numpy versions in ``imudiff._pykernels`` are used. Set
``IMUDIFF_PURE_PYTHON=1`` to force the fallback.

All wrappers accept any leading batch shape and float-like input.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("IMUDIFF_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND
N_TIME_FEATURES = _pykernels.N_TIME_FEATURES


def available_backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"numpy": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out


def _as3d(x):
    """View ``(..., N, F)`` or ``(..., N, J, D)`` data as contiguous ``(B, N, F)``.

    Returns the 3-d array plus a function restoring the original layout for
    an output with a different time length.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError("expected at least (N, F) data")
    if x.ndim == 2:
        lead, n, tail = (), x.shape[0], x.shape[1:]
    else:
        # (..., N, J, D) motion layout: time axis is third from last
        lead, n, tail = x.shape[:-3], x.shape[-3], x.shape[-2:]
    flat = np.ascontiguousarray(x.reshape((-1, n, int(np.prod(tail)))))

    def restore(y):
        return y.reshape(lead + (y.shape[1],) + tail)

    return flat, restore


def first_diff(x):
    flat, restore = _as3d(x)
    return restore(_impl.first_diff(flat))


def first_diff_adjoint(y):
    flat, restore = _as3d(y)
    return restore(_impl.first_diff_adjoint(flat))


def second_diff(x):
    flat, restore = _as3d(x)
    return restore(_impl.second_diff(flat))


def second_diff_adjoint(y):
    flat, restore = _as3d(y)
    return restore(_impl.second_diff_adjoint(flat))


def acc_loss_grad(x0, xh, scale=1.0):
    """Fused ``scale * ||D2(xh - x0)||^2`` per sample, with its gradient."""
    a, restore = _as3d(x0)
    b, _ = _as3d(xh)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    loss, grad = _impl.acc_loss_grad(a, b, float(scale))
    lead = np.asarray(x0).shape[:-3] if np.ndim(x0) > 2 else ()
    return loss.reshape(lead), restore(grad)


def window_time_features(x):
    """Time-domain feature block for each row of a ``(B, W)`` array."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.window_time_features(x)


def adam_update(param, grad, m, v, lr, beta1, beta2, c1, c2, eps=1e-8):
    """Fused in-place Adam step; all arrays must be C-contiguous float64."""
    _impl.adam_update(param.reshape(-1), np.ascontiguousarray(grad).reshape(-1), m.reshape(-1), v.reshape(-1),
                      float(lr), float(beta1), float(beta2), float(c1), float(c2), float(eps))


def momentum_update(param, grad, m, lr, mu):
    """Fused in-place momentum SGD step."""
    _impl.momentum_update(param.reshape(-1), np.ascontiguousarray(grad).reshape(-1), m.reshape(-1), float(lr), float(mu))

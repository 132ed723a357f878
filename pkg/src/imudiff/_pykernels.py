"""Pure-numpy reference kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature. Arrays are float64; batched kernels take ``(B, N, F)`` input.
"""

import numpy as np

BACKEND = "numpy"

# number of columns returned by window_time_features
N_TIME_FEATURES = 15


def first_diff(x):
    return x[:, 1:] - x[:, :-1]


def first_diff_adjoint(y):
    b, m, f = y.shape
    out = np.zeros((b, m + 1, f))
    out[:, 1:] += y
    out[:, :-1] -= y
    return out


def second_diff(x):
    # written as a difference of differences so it equals first_diff twice bit for bit
    d = x[:, 1:] - x[:, :-1]
    return d[:, 1:] - d[:, :-1]


def second_diff_adjoint(y):
    b, m, f = y.shape
    out = np.zeros((b, m + 2, f))
    out[:, 2:] += y
    out[:, 1:-1] -= 2.0 * y
    out[:, :-2] += y
    return out


def acc_loss_grad(x0, xh, scale):
    """Per-sample ``scale * ||D2 (xh - x0)||^2`` and its gradient in ``xh``."""
    d = second_diff(xh - x0)
    loss = scale * np.einsum("bnf,bnf->b", d, d)
    grad = (2.0 * scale) * second_diff_adjoint(d)
    return loss, grad


def _acf(y, denom, lag):
    w = y.shape[1]
    if lag >= w:
        return np.zeros(y.shape[0])
    num = np.einsum("bi,bi->b", y[:, :-lag], y[:, lag:])
    return np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)


def window_time_features(x):
    """Time-domain features for each row of a ``(B, W)`` batch.

    Column order: mean, std, min, max, rms, mean |d1|, mean |d2|,
    zero-crossing rate, line length, acf(1), acf(5), acf(10),
    first lag with acf < 1/e, longest run above mean, local maxima count.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    b, w = x.shape
    out = np.zeros((b, N_TIME_FEATURES))
    mean = x.mean(axis=1)
    const = x.max(axis=1) == x.min(axis=1)
    y = np.where(const[:, None], 0.0, x - mean[:, None])
    ss = np.einsum("bi,bi->b", y, y)
    d1 = np.diff(x, axis=1)
    d2 = np.diff(x, n=2, axis=1)

    out[:, 0] = mean
    out[:, 1] = np.sqrt(ss / w)
    out[:, 2] = x.min(axis=1)
    out[:, 3] = x.max(axis=1)
    out[:, 4] = np.sqrt(np.einsum("bi,bi->b", x, x) / w)
    out[:, 5] = np.abs(d1).mean(axis=1)
    out[:, 6] = np.abs(d2).mean(axis=1) if w > 2 else 0.0
    out[:, 7] = (y[:, :-1] * y[:, 1:] < 0).sum(axis=1) / (w - 1)
    out[:, 8] = np.abs(d1).sum(axis=1)
    out[:, 9] = _acf(y, ss, 1)
    out[:, 10] = _acf(y, ss, 5)
    out[:, 11] = _acf(y, ss, 10)

    thresh = np.exp(-1.0)
    first = np.full(b, float(w))
    for lag in range(w - 1, 0, -1):
        below = _acf(y, ss, lag) < thresh
        first = np.where(below, float(lag), first)
    first = np.where(ss > 0, first, 1.0)
    out[:, 12] = first

    above = y > 0
    run = np.zeros(b)
    best = np.zeros(b)
    for i in range(w):
        run = np.where(above[:, i], run + 1.0, 0.0)
        best = np.maximum(best, run)
    out[:, 13] = best

    mid = x[:, 1:-1]
    out[:, 14] = ((mid > x[:, :-2]) & (mid > x[:, 2:])).sum(axis=1)
    return out


def adam_update(param, grad, m, v, lr, beta1, beta2, c1, c2, eps):
    """In-place Adam step on flat float64 arrays; c1, c2 are bias corrections."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def momentum_update(param, grad, m, lr, mu):
    """In-place heavy-ball step: ``m = mu m + g; p -= lr m``."""
    m *= mu
    m += grad
    param -= lr * m

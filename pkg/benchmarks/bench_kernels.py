"""Compare the compiled (Cython) and numpy kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20] [--json out.json]

For each kernel the script checks that both backends agree, then reports
the best-of-``repeat`` wall time per call and the speed-up. Shapes match the
ones used in training (batch 32 x 60 frames x 22 joints x 3) and evaluation
(batches of 40-sample windows).
"""

from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from imudiff.kernels import available_backends


def _cases(rng):
    x = rng.standard_normal((32, 60, 66))
    y = rng.standard_normal((32, 60, 66))
    w = rng.standard_normal((2048, 40))
    p = rng.standard_normal(66 * 60 * 256)
    g = rng.standard_normal(p.size)

    def adam(mod):
        param, m, v = p.copy(), np.zeros_like(p), np.zeros_like(p)
        return lambda: mod.adam_update(param, g, m, v, 1e-3, 0.9, 0.999, 0.1, 0.001, 1e-8)

    def momentum(mod):
        param, m = p.copy(), np.zeros_like(p)
        return lambda: mod.momentum_update(param, g, m, 1e-3, 0.9)

    return {
        "first_diff (32x60x66)": (lambda mod: lambda: mod.first_diff(x), True),
        "second_diff (32x60x66)": (lambda mod: lambda: mod.second_diff(x), True),
        "second_diff_adjoint (32x58x66)": (lambda mod: lambda: mod.second_diff_adjoint(x[:, :58].copy()), True),
        "acc_loss_grad (32x60x66)": (lambda mod: lambda: mod.acc_loss_grad(x, y, 1.0 / 59), True),
        "window_time_features (2048x40)": (lambda mod: lambda: mod.window_time_features(w), True),
        "adam_update (1.0M params)": (adam, False),
        "momentum_update (1.0M params)": (momentum, False),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-12)


def run(repeat: int = 20, seed: int = 0) -> list[dict]:
    backends = available_backends()
    rows = []
    for name, (make, check) in _cases(np.random.default_rng(seed)).items():
        row = {"kernel": name}
        outs = {}
        for bname, mod in backends.items():
            fn = make(mod)
            if check:
                outs[bname] = fn()
            n = max(1, int(0.05 / max(min(timeit.repeat(fn, number=1, repeat=3)), 1e-7)))
            row[f"{bname}_us"] = min(timeit.repeat(fn, number=n, repeat=repeat)) / n * 1e6
        if "cython_us" in row:
            row["speedup"] = row["numpy_us"] / row["cython_us"]
            if check:
                row["agree"] = bool(_same(outs["numpy"], outs["cython"]))
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--json", metavar="PATH", help="also write the rows as JSON")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'kernel':34s} {'numpy us':>12s} {'cython us':>12s} {'speed-up':>9s}  agree")
    for r in rows:
        print(f"{r['kernel']:34s} {r['numpy_us']:12.1f} {r.get('cython_us', float('nan')):12.1f} "
              f"{r.get('speedup', float('nan')):9.2f}  {r.get('agree', '-')}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()

"""Acceptance criteria, one test (or small group) per criterion.

The experiment-scale criteria (4, 5, 9, 10) share one module-scoped run of
the full pipeline over five seeds, driven through the command-line verbs.
"""

import hashlib
import json
import math
import time

import numpy as np
import pytest

from imudiff.cli import EXIT_OK, main
from imudiff.diffusion import NoiseSchedule, heldout_acc, load_checkpoint, make_schedule, q_marginal, q_step
from imudiff.evaluation import (
    OTHER,
    CategorySet,
    DynamicClass,
    assign_category,
    loss_delta_report,
    segment_windows,
)
from imudiff.imu import (
    GravityConfig,
    SensorTrajectory,
    dynamic_acceleration,
    quat_from_axis_angle,
    synthesize_accelerometer,
    synthesize_gyroscope,
)
from imudiff.losses import LOSS_IDS, LossWeights, grad_check, loss_acc, loss_foot, loss_pos, loss_simple, loss_vel, total_loss
from imudiff.pipeline import embedder_from_config, load_training_set
from imudiff.config import load_config

from imudiff.motion import MotionSequence, Representation

from conftest import chain_skeleton, write_realworld_like

SEEDS = (0, 1, 2, 3, 4)
HAR_FAMILIES = ("walking", "running", "sitting")


# --- 1. gradients --------------------------------------------------------------------


def test_c1_gradient_correctness(record):
    t0 = time.perf_counter()
    r = np.random.default_rng(2024)
    worst = {k: 0.0 for k in LOSS_IDS}
    skel = chain_skeleton(3, (0.2, 0.5, 0.0))
    for i in range(20):
        # even instances: joint positions; odd: joint rotations (3 joints + root row) through FK
        a, b = r.standard_normal((2, 8, 4, 3))
        rot = i % 2 == 1
        if rot:
            a, b = (MotionSequence(0.6 * x, 20.0, Representation.JointRotations) for x in (a, b))
        mask = (r.random((8, 3 if rot else 4)) < 0.5).astype(int)
        for k in LOSS_IDS:
            worst[k] = max(worst[k], grad_check(k, a, b, mask, skel if rot else None, LossWeights(), h=1e-5))
    dt = time.perf_counter() - t0
    record("C1", f"C1 gradients: max rel err {max(worst.values()):.2e} over 20 instances (10 positions, 10 rotations) "
                 f"({', '.join(f'{k}={v:.1e}' for k, v in worst.items())}); {dt:.2f} s")
    assert set(LOSS_IDS) >= {"simple", "pos", "vel", "foot", "acc", "total"}
    assert max(worst.values()) < 1e-4
    assert dt < 10


# --- 2. loss identities --------------------------------------------------------------


def test_c2_loss_identities(record):
    r = np.random.default_rng(7)
    worst_h = 0.0
    for _ in range(20):
        x0 = r.standard_normal((8, 4, 3))
        mask = (r.random((8, 4)) < 0.5).astype(int)
        still = x0.copy()
        still[:, mask.any(axis=0)] = still[0, mask.any(axis=0)]  # masked feet never move
        z = total_loss(still, still, mask, None, LossWeights())
        assert z.simple == z.pos == z.vel == z.acc == z.foot == 0
        i = np.arange(8)[:, None, None]
        affine = r.standard_normal((4, 3)) + i * r.standard_normal((4, 3))
        e = r.standard_normal((8, 4, 3))
        assert loss_acc(x0, x0 + e + affine) == pytest.approx(loss_acc(x0, x0 + e), rel=1e-10)
        shift = r.standard_normal((4, 3))
        assert loss_vel(x0, x0 + e + shift) == pytest.approx(loss_vel(x0, x0 + e), rel=1e-10)
        c = float(r.uniform(-5, 5))
        for f, args in ((loss_simple, (x0, x0 + c * e)), (loss_pos, (x0, x0 + c * e)), (loss_vel, (x0, x0 + c * e)),
                        (loss_acc, (x0, x0 + c * e))):
            base = f(x0, x0 + e)
            worst_h = max(worst_h, abs(f(*args) - c * c * base) / (c * c * base))
        worst_h = max(worst_h, abs(loss_foot(c * e, mask) - c * c * loss_foot(e, mask)) / max(c * c * loss_foot(e, mask), 1e-300))
    record("C2", f"C2 identities: zero at x_hat=x0, affine/translation invariance hold; max homogeneity rel err {worst_h:.1e}")
    assert worst_h < 1e-10


# --- 3. diffusion process ------------------------------------------------------------


def test_c3_forward_process(record):
    t0 = time.perf_counter()
    one = NoiseSchedule(np.ones(3))
    x = np.random.default_rng(0).standard_normal((5, 4, 3))
    assert np.array_equal(q_step(x, 2, one, rng_seed=1), x)

    sched = make_schedule(100)
    n, t = 10_000, 5
    x0 = np.full(n, 0.8)
    xs = x0.copy()
    for k in range(1, t + 1):
        xs = q_step(xs, k, sched, rng_seed=100 + k)
    xm = q_marginal(x0, t, sched, rng_seed=7)
    ab = float(sched.alpha_bar(t))
    mean, var = math.sqrt(ab) * 0.8, 1.0 - ab
    se_mean, se_var = math.sqrt(var / n), var * math.sqrt(2.0 / (n - 1))
    z = {
        "chain mean": (xs.mean() - mean) / se_mean,
        "chain var": (xs.var(ddof=1) - var) / se_var,
        "marginal mean": (xm.mean() - mean) / se_mean,
        "marginal var": (xm.var(ddof=1) - var) / se_var,
        "chain-marginal mean": (xs.mean() - xm.mean()) / (math.sqrt(2) * se_mean),
        "chain-marginal var": (xs.var(ddof=1) - xm.var(ddof=1)) / (math.sqrt(2) * se_var),
    }
    dt = time.perf_counter() - t0
    record("C3", f"C3 diffusion: alpha=1 step is identity; 5-fold q_step vs q_marginal max |z| "
                 f"{max(abs(v) for v in z.values()):.2f} (limit 3) over 10000 draws; {dt:.2f} s")
    assert all(abs(v) < 3 for v in z.values()), z
    assert dt < 30


# --- 6. IMU oracles ------------------------------------------------------------------


def test_c6_imu_oracles(record):
    t0 = time.perf_counter()
    up = np.array([1.0, 0.0, 0.0, 0.0])
    # static
    n = 50
    tr = SensorTrajectory(np.zeros((n, 3)), np.tile(up, (n, 1)), 100.0)
    static = synthesize_accelerometer(tr)
    static_err = np.max(np.abs(static - [0, 9.81, 0]))
    # circle r=1, 2 pi rad/s at 100 Hz
    fps = 100.0
    tt = np.arange(200) / fps
    w = 2 * np.pi
    circ = SensorTrajectory(np.column_stack([np.cos(w * tt), np.zeros_like(tt), np.sin(w * tt)]),
                            np.tile(up, (200, 1)), fps)
    mag = np.linalg.norm(dynamic_acceleration(circ), axis=1)
    circle_err = np.max(np.abs(mag - 39.478)) / 39.478
    # free fall
    ff = SensorTrajectory(np.column_stack([np.zeros_like(tt), -0.5 * 9.81 * tt**2, np.zeros_like(tt)]),
                          np.tile(up, (200, 1)), fps)
    ff_err = np.max(np.linalg.norm(synthesize_accelerometer(ff), axis=1)) / 9.81
    # constant-axis rotation at 1.3 rad/s about a tilted axis
    axis = np.array([0.3, 0.8, -0.52])
    axis /= np.linalg.norm(axis)
    q = quat_from_axis_angle(np.tile(axis, (200, 1)), 1.3 * tt)
    gyro = synthesize_gyroscope(SensorTrajectory(np.zeros((200, 3)), q, fps))
    gyro_err = np.max(np.abs(np.linalg.norm(gyro, axis=1) - 1.3)) / 1.3

    # convergence order of the circle's dynamic acceleration error under fps doubling
    def circle_error(f):
        t = np.arange(int(2 * f)) / f
        c = SensorTrajectory(np.column_stack([np.cos(w * t), np.zeros_like(t), np.sin(w * t)]),
                             np.tile(up, (len(t), 1)), f)
        return np.max(np.abs(np.linalg.norm(dynamic_acceleration(c), axis=1) - w * w))

    ratio = circle_error(50.0) / circle_error(100.0)
    dt = time.perf_counter() - t0
    record("C6", f"C6 IMU: static err {static_err:.1e}, circle rel err {circle_err:.2e}, free fall {ff_err:.1e} g, "
                 f"gyro rel err {gyro_err:.1e}, convergence ratio {ratio:.2f}; {dt:.2f} s")
    assert static_err < 1e-9
    assert circle_err < 0.01
    assert ff_err < 0.02
    assert gyro_err < 0.01
    assert 3 <= ratio <= 5
    assert dt < 5


# --- 7. windowing --------------------------------------------------------------------


def test_c7_windowing(record):
    ds = segment_windows(np.arange(100.0)[:, None], 40, 0.5)
    starts = ds.windows[:, 0, 0].astype(int).tolist()
    record("C7", f"C7 windowing: {len(ds)} windows at starts {starts}")
    assert starts == [0, 20, 40, 60]


# --- 8. category assignment ----------------------------------------------------------


def test_c8_category_assignment(record):
    names = ("running", "walking", "sitting")
    cats = CategorySet(names, np.eye(6)[:3], threshold=0.45)
    checks = {
        "exact": assign_category(np.eye(6)[1], cats) == "walking",
        "argmax": assign_category(np.array([0.5, 0.3, 0.3, 0.75, 0, 0]), cats) == "running",
        "below tau": assign_category(np.array([0.44, 0.3, 0.3, 0.79, 0, 0]), cats) == OTHER,
        "at tau": assign_category(np.array([0.45, 0, 0, math.sqrt(1 - 0.45**2), 0, 0]), cats) == "running",
        "orthogonal": all(assign_category(np.eye(6)[k], cats) == OTHER for k in range(3, 6)),
    }
    record("C8", f"C8 categories: {sum(checks.values())}/{len(checks)} constructed cases correct "
                 f"(all-orthogonal -> {OTHER})")
    assert all(checks.values()), checks


# --- shared experiment for 4, 5, 9, 10 ----------------------------------------------


def tree_digest(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def cli(out, seed, *args, config=None):
    argv = ["--out", str(out), "--seed", str(seed)] + (["--config", str(config)] if config else [])
    code = main(argv + [str(a) for a in args])
    assert code == EXIT_OK, (args, code)


def run_seed(root, seed, config):
    """Corpus -> base -> refined (lambda_acc=1) and control (lambda_acc=0) -> samples -> IMU -> HAR."""
    out = root / f"seed{seed}"
    timings = {}
    t0 = time.perf_counter()
    cli(out, seed, "gen-corpus", config=config)
    cli(out, seed, "train", config=config)
    cli(out, seed, "finetune", config=config)
    cli(out, seed, "finetune", "--lambda-acc", "0", "--allow-zero-acc", "--name", "control", config=config)
    timings["training"] = time.perf_counter() - t0

    # held-out clips from unseen generator seeds
    held = root / f"held{seed}"
    cli(held, 5000 + seed, "gen-corpus", config=config)
    cfg = load_config(config, seed=seed)
    _, held_items = load_training_set(cfg, held / "corpus")
    ck = out / "checkpoints"
    base, sched = load_checkpoint(ck / "base.json")
    refined, _ = load_checkpoint(ck / "refined.json")
    control, _ = load_checkpoint(ck / "control.json")
    lacc = {name: heldout_acc(p, held_items, sched) for name, p in (("base", base), ("refined", refined), ("control", control))}
    cats = CategorySet.from_embedder(embedder_from_config(cfg), threshold=cfg["eval"]["tau"])
    delta = {ref: loss_delta_report(other, refined, held_items, cats, sched)
             for ref, other in (("base", base), ("control", control))}
    timings["loss_eval"] = time.perf_counter() - t0 - timings["training"]

    # HAR: synthetic windows from each model, tested on a noisy real-like corpus
    t1 = time.perf_counter()
    prompts = root / "har_prompts.json"
    rw = write_realworld_like(root / f"rw{seed}", HAR_FAMILIES, count=6, seed=9000 + seed, fps=50.0, noise=0.5,
                              n_placements=9, seconds=(8.0, 12.0))
    cli(out, seed, "ingest-realworld", "--input", rw, "--dest", out / "real", config=config)
    har = {}
    for name in ("base", "refined"):
        cli(out, seed, "sample", "--checkpoint", ck / f"{name}.json", "--prompts", prompts,
            "--dest", out / "samples" / name, config=config)
        cli(out, seed, "imu", "--motions", out / "samples" / name, "--dest", out / "imu" / name, config=config)
        extra = ["--base", ck / "base.json", "--refined", ck / "refined.json", "--heldout", held / "corpus"] if name == "refined" else []
        cli(out, seed, "eval", "--synthetic", out / "imu" / name, "--real", out / "real", "--dest", out / "eval" / name,
            *extra, config=config)
        har[name] = json.loads((out / "eval" / name / "report.json").read_text())["balanced_accuracy"]["mean"]
    timings["har"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0
    return {"seed": seed, "out": out, "lacc": lacc, "delta": delta, "har": har, "timings": timings, "config": config}


@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    config = root / "experiment.json"
    # synthetic IMU windows get the same white-noise level as the real-like sensors
    config.write_text(json.dumps({"sample": {"per_prompt": 4}, "imu": {"accel_noise": 0.5}}))
    from imudiff.corpus import default_prompts

    p = default_prompts()
    (root / "har_prompts.json").write_text(json.dumps({f: p[f] for f in HAR_FAMILIES}))
    runs = [run_seed(root, s, config) for s in SEEDS]
    return root, runs


@pytest.mark.slow
def test_c4_acc_finetuning_reduces_heldout_lacc(experiment, record):
    _, runs = experiment
    rel_control = [1 - r["lacc"]["refined"].mean() / r["lacc"]["control"].mean() for r in runs]
    rel_base = [1 - r["lacc"]["refined"].mean() / r["lacc"]["base"].mean() for r in runs]
    minutes = sum(r["timings"]["training"] + r["timings"]["loss_eval"] for r in runs) / 60
    record("C4", f"C4 held-out L_acc reduction vs lambda_acc=0 continuation: mean {np.mean(rel_control):.1%} "
                 f"(per seed {', '.join(f'{v:.1%}' for v in rel_control)}); vs base: mean {np.mean(rel_base):.1%}; "
                 f"{minutes:.1f} min for 5 seeds")
    assert np.mean(rel_control) >= 0.05
    assert minutes < 15


@pytest.mark.slow
def test_c5_high_dynamic_classes_change_more(experiment, record):
    _, runs = experiment
    out = {}
    for ref in ("base", "control"):
        hi = [r["delta"][ref].group_abs_delta(DynamicClass.High) for r in runs]
        lo = [r["delta"][ref].group_abs_delta(DynamicClass.Low) for r in runs]
        out[ref] = (float(np.mean(hi)), float(np.mean(lo)), sum(h > l for h, l in zip(hi, lo)))
    b, c = out["base"], out["control"]
    record("C5", f"C5 |dL_acc| refined-base: high {b[0]:.4f} vs low {b[1]:.4f} (high>low on {b[2]}/5 seeds); "
                 f"refined-control: high {c[0]:.4f} vs low {c[1]:.4f} ({c[2]}/5 seeds)")
    assert b[0] > b[1]


@pytest.mark.slow
def test_c9_har_on_refined_synthetic_windows(experiment, record):
    _, runs = experiment
    ref = [r["har"]["refined"] for r in runs]
    base = [r["har"]["base"] for r in runs]
    wins = sum(a >= b for a, b in zip(ref, base))
    minutes = max(r["timings"]["total"] for r in runs) / 60
    record("C9", f"C9 HAR balanced accuracy, refined: {', '.join(f'{v:.3f}' for v in ref)} (mean {np.mean(ref):.3f}, "
                 f">=0.9 on {sum(v >= 0.9 for v in ref)}/5); base: {', '.join(f'{v:.3f}' for v in base)}; "
                 f"refined>=base on {wins}/5; pipeline {minutes:.1f} min per seed")
    assert wins >= 4
    assert minutes < 20
    assert min(ref) >= 0.9


@pytest.mark.slow
def test_c10_pipeline_is_byte_reproducible(experiment, record):
    root, runs = experiment
    first = runs[0]
    out, seed, config = first["out"], first["seed"], first["config"]
    subs = ("corpus", "checkpoints", "samples")
    before = {s: tree_digest(out / s) for s in subs}
    cli(out, seed, "gen-corpus", config=config)
    cli(out, seed, "train", config=config)
    cli(out, seed, "finetune", config=config)
    cli(out, seed, "finetune", "--lambda-acc", "0", "--allow-zero-acc", "--name", "control", config=config)
    for name in ("base", "refined"):
        cli(out, seed, "sample", "--checkpoint", out / "checkpoints" / f"{name}.json", "--prompts",
            root / "har_prompts.json", "--dest", out / "samples" / name, config=config)
    after = {s: tree_digest(out / s) for s in subs}
    n = sum(len(v) for v in before.values())
    same = sum(before[s].get(k) == v for s in subs for k, v in after[s].items())
    record("C10", f"C10 determinism: {same}/{n} files byte-identical after rerunning gen-corpus, train, finetune, sample")
    assert after == before

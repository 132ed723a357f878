"""Orchestration behind the command-line verbs.

Each function takes a validated config dict (see :mod:`imudiff.config`)
plus explicit directories, writes CSV/JSON outputs and a ``manifest.json``
carrying the command, seed, config hash, inputs and outputs. Nothing here
records wall-clock time, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import fnmatch
import hashlib
import io
import json
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import __version__
from .config import ConfigError, config_hash
from .corpus import SyntheticCorpusSpec, crop_items, default_prompts, generate_corpus, read_corpus, smpl22_skeleton, write_corpus
from .diffusion import (
    Condition,
    TrainHyper,
    finetune,
    load_checkpoint,
    make_schedule,
    preset_schedule,
    pretrain,
    sample,
    save_checkpoint,
    write_loss_curves,
)
from .evaluation import (
    CategorySet,
    EvalReport,
    WindowedDataset,
    assign_category,
    balanced_accuracy,
    confusion_matrix,
    features_matrix,
    fit_projection,
    loss_delta_report,
    segment_windows,
    train_classifier,
)
from .imu import (
    DEFAULT_PLACEMENTS,
    GravityConfig,
    ImuSignal,
    Placement,
    add_noise,
    load_imu,
    motion_to_imu,
    prefilter_width,
    resample,
    save_imu,
    smooth_motion,
)
from .losses import LossWeights
from .motion import dumps_motion, load_motion
from .text import Embedder


class DataError(RuntimeError):
    """Missing or malformed input data (exit code 2)."""


# ---------------------------------------------------------------------------
# config helpers


def schedule_from_config(cfg):
    s = cfg["schedule"]
    if "preset" in s:
        return preset_schedule(s["preset"])
    return make_schedule(s["T"], s.get("kind", "linear"), s.get("beta_min", 1e-4), s.get("beta_max", 0.02))


def weights_from_config(cfg, lambda_acc=None) -> LossWeights:
    w = LossWeights(**cfg["loss_weights"])
    return w if lambda_acc is None else w.replace(lambda_acc=float(lambda_acc))


def hyper_from_config(cfg, seed: int, **over) -> TrainHyper:
    t = {k: v for k, v in cfg["train"].items() if k not in ("n_frames", "crop_stride", "settle_steps", "settle_lr")}
    t.update(over)
    return TrainHyper(seed=seed, **t)


def embedder_from_config(cfg, fallback_table=None) -> Embedder:
    if cfg.get("embeddings"):
        path = Path(cfg["embeddings"])
        if not path.exists():
            raise DataError(f"embeddings file not found: {path}")
        return Embedder.from_file(path, cfg["allow_stub"])
    if fallback_table is not None and Path(fallback_table).exists():
        return Embedder.from_file(fallback_table, cfg["allow_stub"])
    return Embedder(allow_stub=cfg["allow_stub"])


def placements_from_config(cfg):
    pl = cfg["imu"]["placements"]
    return DEFAULT_PLACEMENTS if pl is None else tuple(Placement.from_dict(p) for p in pl)


def derived_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary printable parts."""
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def write_manifest(out_dir, command: str, cfg, inputs: dict, outputs, extra: dict | None = None) -> dict:
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg["seed"],
        "config_hash": config_hash(cfg),
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": list(outputs),
    }
    doc.update(extra or {})
    Path(out_dir, "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return doc


def _require_dir(path, what):
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"{what} directory not found: {p}")
    return p


def _require_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{what} not found: {p}")
    return p


# ---------------------------------------------------------------------------
# corpus, training, sampling


def gen_corpus(cfg, out_dir) -> dict:
    c = cfg["corpus"]
    spec = SyntheticCorpusSpec(
        classes=tuple(c["classes"]), count_per_class=c["count_per_class"], min_seconds=c["min_seconds"],
        max_seconds=c["max_seconds"], fps=c["fps"], position_noise=c["position_noise"], seed=cfg["seed"],
    )
    embedder = embedder_from_config(cfg)
    items = generate_corpus(spec, embedder)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return write_corpus(items, out, spec, embedder, {
        "command": "gen-corpus", "version": __version__, "seed": cfg["seed"], "run_config_hash": config_hash(cfg),
    })


def load_training_set(cfg, corpus_dir):
    root = _require_dir(corpus_dir, "corpus")
    if not (root / "manifest.json").exists():
        raise DataError(f"no manifest.json in corpus directory {root}")
    try:
        items = read_corpus(root)
    except (OSError, ValueError, KeyError) as e:
        raise DataError(f"cannot read corpus {root}: {e}") from e
    data = crop_items(items, cfg["train"]["n_frames"], cfg["train"]["crop_stride"])
    if not data:
        raise DataError(f"no clip in {root} has {cfg['train']['n_frames']} frames")
    return items, data


def train_model(cfg, corpus_dir, ckpt_dir, name: str = "base"):
    _, data = load_training_set(cfg, corpus_dir)
    sched = schedule_from_config(cfg)
    weights = weights_from_config(cfg)
    hyper = hyper_from_config(cfg, cfg["seed"])
    tc = cfg["train"]
    params, history = pretrain(data, weights, hyper, sched, tc["settle_steps"], tc["settle_lr"], skeleton=smpl22_skeleton())
    out = Path(ckpt_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{name}.json"
    save_checkpoint(ckpt, params, sched)
    write_loss_curves(out / f"{name}_loss.csv", history)
    _write_ckpt_manifest(out, name, "train", cfg, {"corpus": corpus_dir}, len(data))
    return params, ckpt


def finetune_model(cfg, corpus_dir, ckpt_dir, base_ckpt, name: str = "refined", lambda_acc=None, allow_zero_acc=None):
    base = _require_file(base_ckpt, "base checkpoint")
    lam = cfg["finetune"]["lambda_acc"] if lambda_acc is None else float(lambda_acc)
    allow = cfg["finetune"]["allow_zero_acc"] if allow_zero_acc is None else allow_zero_acc
    if lam <= 0 and not allow:
        raise ConfigError("finetuning needs lambda_acc > 0 (pass --allow-zero-acc for a lambda_acc = 0 control run)")
    _, data = load_training_set(cfg, corpus_dir)
    try:
        params, sched = load_checkpoint(base)
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read checkpoint {base}: {e}") from e
    sched = sched or schedule_from_config(cfg)
    hyper = hyper_from_config(cfg, cfg["seed"] + 100, steps=cfg["finetune"]["steps"], lr=cfg["finetune"]["lr"])
    try:
        out_params, history = finetune(params, data, weights_from_config(cfg, lam), hyper, sched, skeleton=smpl22_skeleton())
    except ValueError as e:
        raise ConfigError(str(e)) from e
    out = Path(ckpt_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / f"{name}.json"
    save_checkpoint(ckpt, out_params, sched)
    write_loss_curves(out / f"{name}_loss.csv", history)
    _write_ckpt_manifest(out, name, "finetune", cfg, {"corpus": corpus_dir, "base": base}, len(data), {"lambda_acc": lam})
    return out_params, ckpt


def _write_ckpt_manifest(out, name, command, cfg, inputs, n_clips, extra=None):
    doc = {
        "command": command, "version": __version__, "seed": cfg["seed"], "config_hash": config_hash(cfg),
        "inputs": {k: str(v) for k, v in inputs.items()}, "outputs": [f"{name}.json", f"{name}_loss.csv"],
        "training_clips": n_clips,
    }
    doc.update(extra or {})
    Path(out, f"{name}.manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def read_prompts(path=None):
    """``[(prompt, family or None)]`` from a JSON list, a JSON ``{family: [..]}`` map or a text file."""
    if path is None:
        data = default_prompts()
    else:
        p = _require_file(path, "prompts file")
        text = p.read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError:
            data = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if isinstance(data, dict):
        return [(s, fam) for fam, lst in data.items() if not fam.startswith("_") for s in lst]
    if isinstance(data, list) and all(isinstance(s, str) for s in data):
        return [(s, None) for s in data]
    raise DataError("prompts must be a list of strings or a map of label -> list of strings")


def sample_motions(cfg, ckpt_path, out_dir, prompts, embedder: Embedder | None = None) -> dict:
    ckpt = _require_file(ckpt_path, "checkpoint")
    try:
        params, sched = load_checkpoint(ckpt)
    except (ValueError, KeyError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read checkpoint {ckpt}: {e}") from e
    sched = sched or schedule_from_config(cfg)
    n_frames = cfg["sample"]["n_frames"]
    if n_frames != params.config.n_frames:
        raise ConfigError(f"model generates {params.config.n_frames}-frame clips; sample.n_frames is {n_frames}")
    embedder = embedder or embedder_from_config(cfg)
    cats = CategorySet.from_embedder(embedder, threshold=cfg["eval"]["tau"])
    fps = cfg["corpus"]["fps"]
    skel = smpl22_skeleton() if params.config.n_joints == 22 else None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, (prompt, family) in enumerate(prompts):
        try:
            emb = embedder(prompt)
        except KeyError as e:
            raise DataError(str(e)) from e
        if emb.size != params.config.cond_dim:
            raise DataError(f"embedding size {emb.size} does not match the model's condition size {params.config.cond_dim}")
        label = assign_category(emb, cats)
        for k in range(cfg["sample"]["per_prompt"]):
            seed = derived_seed(cfg["seed"], prompt, k)
            motion = sample(params, Condition(emb, label), n_frames, sched, rng_seed=seed, fps=fps)
            name = f"sample_{i:04d}_{k:02d}.motion"
            extra = {"prompt": prompt, "label": label, "family": family, "seed": seed, "checkpoint": ckpt.name}
            (out / name).write_text(dumps_motion(motion, skel, extra))
            records.append({"file": name, "prompt": prompt, "label": label, "family": family, "seed": seed})
    return write_manifest(out, "sample", cfg, {"checkpoint": ckpt}, [r["file"] for r in records], {"items": records})


# ---------------------------------------------------------------------------
# IMU synthesis


def _imu_job(job):
    path, out_dir, placements, gravity, target_fps, acc_sigma, gyr_sigma, smooth, seed = job
    try:
        motion, skel, header = load_motion(path)
    except (OSError, ValueError) as e:
        return path.name, None, f"malformed motion file {path.name}: {e}"
    skel = skel or smpl22_skeleton()
    try:
        signals = motion_to_imu(smooth_motion(motion, skel, smooth), skel, placements, gravity)
    except (KeyError, ValueError) as e:
        return path.name, None, f"cannot place sensors on {path.name}: {e}"
    rows = []
    for sig in signals:
        if acc_sigma or gyr_sigma:
            sig = add_noise(sig, acc_sigma, gyr_sigma, derived_seed(seed, path.name, sig.placement_name))
        if target_fps:
            sig = resample(sig, target_fps)
        name = f"{path.stem}__{sig.placement_name}.csv"
        meta = {"label": header.get("label"), "prompt": header.get("prompt"), "family": header.get("family")}
        save_imu(Path(out_dir) / name, sig, path.name, gravity, meta)
        rows.append({"file": name, "source_motion": path.name, "placement": sig.placement_name,
                     "label": meta["label"], "samples": len(sig)})
    return path.name, rows, None


def _map_jobs(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def synthesize_dir(cfg, motion_dir, out_dir) -> dict:
    src = _require_dir(motion_dir, "motion")
    files = sorted(src.glob("*.motion"))
    if not files:
        raise DataError(f"no .motion files in {src}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ic = cfg["imu"]
    gravity = GravityConfig(ic["gravity"]["g"], tuple(ic["gravity"]["up_axis"]))
    placements = placements_from_config(cfg)
    jobs = [(f, out, placements, gravity, ic["target_fps"], ic["accel_noise"], ic["gyro_noise"],
             ic["smooth_window"], cfg["seed"]) for f in files]
    records = []
    for name, rows, err in _map_jobs(_imu_job, jobs, cfg["workers"]):
        if err:
            raise DataError(err)
        records.extend(rows)
    return write_manifest(out, "imu", cfg, {"motions": src}, [r["file"] for r in records],
                          {"gravity_config": gravity.to_dict(), "placements": [p.to_dict() for p in placements], "items": records})


# ---------------------------------------------------------------------------
# RealWorld-style ingestion

_TIME_COLS = ("attr_time", "timestamp", "time", "t")
_AXIS_COLS = (("attr_x", "x"), ("attr_y", "y"), ("attr_z", "z"))
_TIME_SCALE = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}
# activity names used by the RealWorld recordings -> category names
ACTIVITY_ALIASES = {"climbingup": "stair climbing", "climbingdown": "stair climbing", "climbing": "stair climbing"}


def _pick(header, names):
    low = [h.strip().lower() for h in header]
    for n in names:
        if n in low:
            return low.index(n)
    return None


def read_sensor_csv(path, time_unit="ms"):
    """``(times_s, xyz, stats)`` with duplicate and out-of-order rows dropped."""
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError(f"{path} is empty")
    header = rows[0]
    ti = _pick(header, _TIME_COLS)
    ax = [_pick(header, names) for names in _AXIS_COLS]
    if ti is None or None in ax:
        raise DataError(f"{path}: need a time column ({'/'.join(_TIME_COLS)}) and x/y/z columns")
    try:
        data = np.array([[float(r[ti])] + [float(r[i]) for i in ax] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as e:
        raise DataError(f"{path}: non-numeric value ({e})") from e
    if data.size == 0:
        raise DataError(f"{path} has no data rows")
    keep = np.zeros(len(data), dtype=bool)
    dup = nonmono = 0
    last = -np.inf
    for i, t in enumerate(data[:, 0]):
        if t > last:
            keep[i] = True
            last = t
        elif t == last:
            dup += 1
        else:
            nonmono += 1
    data = data[keep]
    return data[:, 0] * _TIME_SCALE[time_unit], data[:, 1:], {"duplicates": dup, "non_monotonic": nonmono}


def _resample_irregular(t, x, grid):
    dt = np.median(np.diff(t)) if len(t) > 1 else 1.0
    w = prefilter_width(1.0 / dt, 1.0 / (grid[1] - grid[0]) if len(grid) > 1 else 1.0 / dt)
    if w > 1:
        x = uniform_filter1d(x, size=w, axis=0, mode="nearest")
    return np.column_stack([np.interp(grid, t, x[:, c]) for c in range(x.shape[1])])


def parse_realworld_name(stem: str, prefix: str):
    """``acc_walking_chest`` -> (``walking``, ``chest``).

    Activity names carry no underscore; the placement may (``left_forearm``).
    """
    body = stem[len(prefix):] if stem.startswith(prefix) else stem
    parts = body.split("_", 1)
    if len(parts) < 2 or not all(parts):
        raise DataError(f"cannot parse activity/placement from file name {stem!r}")
    return parts[0], parts[1]


def _ingest_job(job):
    acc_path, gyr_path, out_dir, rw, name, label, placement, subject = job
    ta, acc, sa = read_sensor_csv(acc_path, rw["time_unit"])
    stats = {"acc_" + k: v for k, v in sa.items()}
    if gyr_path is not None:
        tg, gyr, sg = read_sensor_csv(gyr_path, rw["time_unit"])
        stats.update({"gyr_" + k: v for k, v in sg.items()})
        start, stop = max(ta[0], tg[0]), min(ta[-1], tg[-1])
    else:
        start, stop = ta[0], ta[-1]
    if stop <= start:
        return name, None, f"{acc_path.name}: accelerometer and gyroscope recordings do not overlap"
    fps = float(rw["target_fps"])
    n = int(np.floor((stop - start) * fps + 1e-9)) + 1
    grid = start + np.arange(n) / fps
    acc = _resample_irregular(ta, acc, grid)
    gyr = _resample_irregular(tg, gyr, grid) if gyr_path is not None else np.zeros_like(acc)
    if rw["acc_unit"] == "g":
        acc = acc * 9.81
    if rw["gyr_unit"] == "deg/s":
        gyr = np.deg2rad(gyr)
    M = rw["axis_map"].get(placement)
    if M is not None:
        M = np.asarray(M, dtype=float)
        acc, gyr = acc @ M.T, gyr @ M.T
    sig = ImuSignal(acc, gyr, fps, placement, 0.0)
    meta = {"label": label, "activity": name.split("__")[1], "subject": subject, "gyro_present": gyr_path is not None,
            "source_files": [str(acc_path.name)] + ([gyr_path.name] if gyr_path is not None else []), **stats}
    save_imu(Path(out_dir) / f"{name}.csv", sig, "", None, meta)
    return name, {"file": f"{name}.csv", "label": label, "placement": placement, "subject": subject,
                  "samples": len(sig), **stats}, None


def _safe(s):
    return re.sub(r"[^A-Za-z0-9.-]+", "-", s).strip("-") or "x"


def ingest_realworld(cfg, csv_dir, out_dir) -> dict:
    root = _require_dir(csv_dir, "RealWorld CSV")
    rw = cfg["realworld"]
    acc_files = sorted(p for p in root.rglob("*.csv") if fnmatch.fnmatch(p.name, rw["acc_pattern"]))
    if not acc_files:
        raise DataError(f"no files matching {rw['acc_pattern']} under {root}")
    acc_prefix = rw["acc_pattern"].split("*")[0]
    gyr_prefix = rw["gyr_pattern"].split("*")[0]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for ap in acc_files:
        rel = ap.relative_to(root)
        activity, placement = parse_realworld_name(ap.stem, acc_prefix)
        # gyroscope twin: same relative path with the prefix swapped in every component
        gp = root.joinpath(*[part.replace(acc_prefix, gyr_prefix, 1) if part.startswith(acc_prefix) else part for part in rel.parts])
        subject = rel.parts[0] if len(rel.parts) > 1 else "subject"
        label = ACTIVITY_ALIASES.get(activity.lower(), activity.lower())
        name = "__".join(_safe(s) for s in (subject, activity, placement))
        jobs.append((ap, gp if gp.exists() else None, out, rw, name, label, placement, subject))
    records, warned = [], 0
    for name, rec, err in _map_jobs(_ingest_job, jobs, cfg["workers"]):
        if err:
            raise DataError(err)
        records.append(rec)
        warned += sum(v for k, v in rec.items() if k.endswith(("duplicates", "non_monotonic")))
    if warned:
        warnings.warn(f"dropped {warned} duplicate or out-of-order rows during ingestion")
    return write_manifest(out, "ingest-realworld", cfg, {"csv_dir": root}, [r["file"] for r in records],
                          {"items": records, "dropped_rows": warned, "target_fps": rw["target_fps"]})


# ---------------------------------------------------------------------------
# evaluation


def load_signal_dir(path):
    """All ``*.csv`` signals in a directory with their sidecar metadata, by name."""
    root = _require_dir(path, "signal")
    out = []
    for p in sorted(root.glob("*.csv")):
        try:
            sig, meta = load_imu(p)
        except (OSError, ValueError) as e:
            raise DataError(f"malformed signal file {p.name}: {e}") from e
        out.append((p.name, sig, meta))
    if not out:
        raise DataError(f"no signal files in {root}")
    return out


def windows_from_signals(signals, W, overlap, channels="accel", label_map=None) -> WindowedDataset:
    parts = []
    for name, sig, meta in signals:
        label = meta.get("label")
        if label is None or len(sig) < W:
            continue
        label = (label_map or {}).get(label, label)
        parts.append(segment_windows(sig, W, overlap, label, name, channels))
    if not parts:
        raise DataError(f"no labelled signal is at least {W} samples long")
    return WindowedDataset.concat(parts)


def har_experiment(train_ds: WindowedDataset, test_ds: WindowedDataset, repeats: int, seed: int,
                   kind: str = "logistic", fraction: float = 0.8):
    """Train on (a seeded class-stratified subsample of) ``train_ds``; test on ``test_ds``.

    Returns per-repeat balanced accuracies, the first repeat's predictions
    and both feature matrices.
    """
    Xtr, Xte = features_matrix(train_ds.windows), features_matrix(test_ds.windows)
    ytr, yte = np.asarray(train_ds.labels, dtype=str), np.asarray(test_ds.labels, dtype=str)
    scores, first = [], None
    for r in range(repeats):
        rng = np.random.default_rng(derived_seed(seed, "har", r))
        idx = []
        for c in sorted(set(ytr.tolist())):
            members = np.flatnonzero(ytr == c)
            k = max(1, int(round(fraction * len(members))))
            idx.extend(np.sort(rng.choice(members, size=k, replace=False)))
        idx = np.array(idx)
        model = train_classifier(Xtr[idx], ytr[idx], kind=kind, seed=derived_seed(seed, "clf", r))
        pred = model.predict(Xte)
        scores.append(balanced_accuracy(pred, yte))
        if first is None:
            first = pred
    return scores, first, Xtr, Xte


def evaluate(cfg, synthetic_dir, real_dir, out_dir, base_ckpt=None, refined_ckpt=None, heldout_dir=None) -> EvalReport:
    ev = cfg["eval"]
    synth = load_signal_dir(synthetic_dir)
    real = load_signal_dir(real_dir)
    real_ds = windows_from_signals(real, ev["window"], ev["overlap"], ev["channels"], ev["class_map"])
    syn_ds = windows_from_signals(synth, ev["window"], ev["overlap"], ev["channels"])
    real_classes = sorted(set(real_ds.labels))
    syn_classes = set(syn_ds.labels)
    missing = [c for c in real_classes if c not in syn_classes]
    if missing:
        raise ConfigError(f"real classes {missing} have no synthetic counterpart; map them with eval.class_map")
    keep = [i for i, lab in enumerate(syn_ds.labels) if lab in set(real_classes)]
    syn_ds = WindowedDataset(syn_ds.windows[keep], [syn_ds.labels[i] for i in keep], [syn_ds.sources[i] for i in keep],
                             syn_ds.window_len, syn_ds.overlap)
    if len(set(syn_ds.labels)) < 2:
        raise DataError("need at least two shared classes between synthetic and real data")
    scores, pred, Xs, Xr = har_experiment(syn_ds, real_ds, ev["repeats"], cfg["seed"], ev["classifier"])
    labels, M = confusion_matrix(pred, real_ds.labels, real_classes)

    # 2-D projection of both sources, deterministically thinned
    X = np.vstack([Xs, Xr])
    tags = ["synthetic"] * len(Xs) + ["real"] * len(Xr)
    labs = list(syn_ds.labels) + list(real_ds.labels)
    step = max(1, int(np.ceil(len(X) / ev["max_projection_points"])))
    sel = np.arange(0, len(X), step)
    Z = fit_projection(X[sel]).transform(X[sel])
    projection = [(float(z[0]), float(z[1]), tags[i], labs[i]) for z, i in zip(Z, sel)]

    delta = None
    if base_ckpt and refined_ckpt:
        if heldout_dir is None:
            raise ConfigError("a held-out corpus (--heldout) is needed for the loss-change report")
        base, sched = load_checkpoint(_require_file(base_ckpt, "base checkpoint"))
        refined, _ = load_checkpoint(_require_file(refined_ckpt, "refined checkpoint"))
        _, held = load_training_set(cfg, heldout_dir)
        cats = CategorySet.from_embedder(embedder_from_config(cfg, Path(heldout_dir) / "embeddings.json"), threshold=ev["tau"])
        delta = loss_delta_report(base, refined, held, cats, sched or schedule_from_config(cfg))
    report = EvalReport(scores, labels, M, delta, projection, {
        "classes": real_classes, "train_windows": len(syn_ds), "test_windows": len(real_ds),
        "config_hash": config_hash(cfg), "seed": cfg["seed"], "classifier": ev["classifier"],
    })
    report.write(out_dir)
    write_manifest(out_dir, "eval", cfg, {"synthetic": synthetic_dir, "real": real_dir},
                   ["report.json", "confusion.csv", "projection.csv"] + (["loss_delta.csv"] if delta else []))
    return report


def summarize(report_dirs, out_dir) -> list:
    rows = []
    for d in report_dirs:
        p = _require_file(Path(d) / "report.json", "report")
        doc = json.loads(p.read_text())
        ld = doc.get("loss_delta") or {}
        rows.append({
            "run": str(d),
            "balanced_accuracy_mean": doc["balanced_accuracy"]["mean"],
            "balanced_accuracy_std": doc["balanced_accuracy"]["std"],
            "repeats": len(doc["balanced_accuracy"]["runs"]),
            "overall_delta_lacc": ld.get("overall_delta"),
            "relative_change_lacc": ld.get("relative_change"),
        })
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    (out / "summary.json").write_text(json.dumps(rows, indent=1) + "\n")
    return rows

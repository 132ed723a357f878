import numpy as np
import pytest

from imudiff.motion import MotionSequence, Representation, Skeleton


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_motion(rng, N=8, J=4, D=3, rep=Representation.JointPositions3D, scale=1.0):
    return MotionSequence(scale * rng.standard_normal((N, J, D)), 20.0, rep)


def chain_skeleton(n=4, offset=(0.0, 1.0, 0.0)):
    """Simple chain: joint k hangs off joint k-1 at ``offset``."""
    parent = np.arange(-1, n - 1)
    offsets = np.tile(np.asarray(offset, dtype=float), (n, 1))
    offsets[0] = 0.0
    return Skeleton(parent, offsets)


def write_realworld_like(root, families=("walking", "running", "sitting"), count=2, seed=0, fps=50.0, noise=0.5,
                         n_placements=2, seconds=(8.0, 12.0)):
    """Write generator motions as RealWorld-style CSV recordings.

    Layout: ``<root>/subjectK/{acc,gyr}_<activity>_<placement>.csv`` with
    ``id,attr_time,attr_x,attr_y,attr_z`` rows and millisecond timestamps.
    Accelerometer rows get white noise of ``noise`` m/s^2.
    """
    from pathlib import Path

    from imudiff.corpus import SyntheticCorpusSpec, generate_corpus, smpl22_skeleton
    from imudiff.imu import DEFAULT_PLACEMENTS, motion_to_imu

    root = Path(root)
    spec = SyntheticCorpusSpec(classes=tuple(families), count_per_class=count, seed=seed, fps=fps,
                               min_seconds=seconds[0], max_seconds=seconds[1])
    rng = np.random.default_rng(seed + 1)
    for it in generate_corpus(spec):
        subject = root / f"subject{int(it.item_id[-4:])}"
        subject.mkdir(parents=True, exist_ok=True)
        for sig in motion_to_imu(it.motion, smpl22_skeleton(), DEFAULT_PLACEMENTS[:n_placements]):
            t = np.round(sig.times * 1000).astype(int)
            for prefix, data in (("acc", sig.accel + rng.normal(0.0, noise, sig.accel.shape)), ("gyr", sig.gyro)):
                np.savetxt(subject / f"{prefix}_{it.family}_{sig.placement_name}.csv",
                           np.column_stack([np.arange(len(t)), t, data]), delimiter=",",
                           header="id,attr_time,attr_x,attr_y,attr_z", comments="",
                           fmt=["%d", "%d", "%.6f", "%.6f", "%.6f"])
    return root


# one summary line per acceptance criterion, printed after the test run
ACCEPTANCE_LINES = {}


@pytest.fixture
def record():
    def _record(key, text):
        ACCEPTANCE_LINES[key] = text
        print(text)

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k.split()[0].lstrip("C"))):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])

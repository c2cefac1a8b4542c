import numpy as np
import pytest

from lart.tracklets import (
    ActionClass,
    AppearanceFeature,
    APPEARANCE_DIM,
    Clip,
    NUM_JOINTS,
    PersonPose,
    PersonVector,
    Tracklet,
    canonical_floats,
)


def rotation_from_quaternion(q) -> np.ndarray:
    """Closed-form unit-quaternion to rotation matrix. Test-side oracle."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_rotation(rng) -> np.ndarray:
    return rotation_from_quaternion(rng.standard_normal(4))


def make_pose(rng, canonical=False) -> PersonPose:
    theta = np.stack([random_rotation(rng) for _ in range(NUM_JOINTS)])
    psi = random_rotation(rng)
    beta = rng.standard_normal(10)
    location = np.array([rng.uniform(-3, 3), rng.uniform(0, 2), rng.uniform(3, 10)])
    if canonical:
        theta = canonical_floats(theta)
        psi = canonical_floats(psi)
        beta = canonical_floats(beta)
        location = canonical_floats(location)
    return PersonPose(theta=theta, psi=psi, beta=beta, location=location)


def make_box(rng, canonical=False) -> np.ndarray:
    x0, y0 = rng.uniform(0, 500, 2)
    b = np.array([x0, y0, x0 + rng.uniform(5, 100), y0 + rng.uniform(5, 100)])
    return canonical_floats(b) if canonical else b


SMALL_CATALOG = (
    ActionClass("stand", "PM"),
    ActionClass("walk", "PM"),
    ActionClass("carry_object", "OM"),
    ActionClass("hug", "PI"),
    ActionClass("talk", "PI"),
)


def make_clip(rng, n_tracks=2, num_frames=8, gap_frames=(), with_appearance=False,
              catalog=SMALL_CATALOG, canonical=False, fps=4):
    """Small random but valid clip for structural tests."""
    k = len(catalog)
    pm_idx = [i for i, c in enumerate(catalog) if c.category == "PM"]
    tracklets = []
    labels = {}
    for tid in range(n_tracks):
        entries, boxes = [], []
        for f in range(num_frames):
            if (tid, f) in gap_frames:
                entries.append(None)
                boxes.append(None)
                continue
            app = None
            if with_appearance:
                u = rng.standard_normal(APPEARANCE_DIM)
                app = AppearanceFeature(
                    u=canonical_floats(u) if canonical else u, source_frame=f
                )
            entries.append(PersonVector(pose=make_pose(rng, canonical), appearance=app))
            boxes.append(make_box(rng, canonical))
        tracklets.append(
            Tracklet(track_id=tid, start_frame=0, entries=tuple(entries), boxes=tuple(boxes))
        )
        per_frame = {}
        for f in range(num_frames):
            if (tid, f) in gap_frames:
                continue
            v = np.zeros(k, dtype=bool)
            v[pm_idx[int(rng.integers(0, len(pm_idx)))]] = True
            per_frame[f] = v
        labels[tid] = per_frame
    return Clip(
        clip_id=f"clip-{rng.integers(0, 10**6)}",
        fps=fps,
        num_frames=num_frames,
        tracklets=tuple(tracklets),
        labels=labels,
        class_catalog=catalog,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

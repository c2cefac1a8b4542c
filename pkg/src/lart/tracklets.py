"""Core tracklet data model and its on-disk format.

A clip holds a fixed-fps frame range and a set of tracklets. Each tracklet is
one person's per-frame sequence of optional person-vectors (absent entries are
occlusions or missed detections) plus a 2D box wherever an entry is present.
A person-vector is a 3D pose (23 joint rotations, global orientation, shape,
camera-frame location) and an optional appearance feature vector.

Serialization ("lart-clip/1") is line-delimited JSON, one clip per file:

    line 1          {"format": "lart-clip/1"}
    line 2          clip header: clip_id, fps, num_frames, class_catalog,
                    n_tracklets
    lines 3..3+n    one line per tracklet: track_id, start_frame,
                    appearance_table (deduplicated vectors), entries
                    (null for absent frames, else pose as a flat 229-vector,
                    appearance table index, box), labels, and optional
                    pseudo_labels / occluded_labels slices for that track

All floats are canonicalized to 9 significant digits before writing. Values
that are already canonical (everything the scene generator emits) round-trip
bit-exactly; arbitrary floats are snapped once on the first save and are
stable thereafter.

Pose flattening order is fixed: 207 joint-rotation values in row-major joint
order, then the 9 global-orientation values, then 10 shape values, then the
3 location values, 229 total.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .seeds import substream

CLIP_FORMAT = "lart-clip/1"

NUM_JOINTS = 23
POSE_DIM = NUM_JOINTS * 9 + 9 + 10 + 3  # 229
APPEARANCE_DIM = 1152

ROTATION_TOL = 1e-5

CATEGORIES = ("PM", "OM", "PI")
# Per labeled frame: exactly one pose-movement class, at most 3 of each
# interaction category.
MAX_OM = 3
MAX_PI = 3


class InvariantError(ValueError):
    """A domain invariant was violated while building or loading a type."""


class NonFiniteError(InvariantError):
    """Non-finite values where finite ones are required."""


class ClipFormatError(ValueError):
    """Clip file is malformed (bad JSON, missing fields, bad shapes)."""


class UnsupportedVersionError(ClipFormatError):
    """Clip file declares a format version this code does not read."""


def canonical_floats(a) -> np.ndarray:
    """Snap an array to 9-significant-digit floats (the serialized precision).

    Idempotent: snapping a snapped array is the identity. Snapped values
    survive JSON round trips bit-exactly because their shortest repr has at
    most 9 significant digits.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.size == 0:
        return arr.copy()
    out = np.char.mod("%.9g", arr).astype(np.float64)
    return out.reshape(arr.shape)


def _frozen_array(x, dtype=np.float64) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.flags.writeable = False
    return arr


def _require_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite values")


def validate_rotation(m) -> bool:
    """True iff m is a proper rotation: orthonormal within 1e-5, det within 1e-5 of 1.

    Raises NonFiniteError for non-finite input; a finite non-rotation just
    returns False.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3):
        raise InvariantError(f"rotation must be 3x3, got {m.shape}")
    _require_finite(m, "rotation matrix")
    err = np.abs(m.T @ m - np.eye(3)).max()
    if err > ROTATION_TOL:
        return False
    det = float(np.linalg.det(m))
    return abs(det - 1.0) <= ROTATION_TOL


@dataclass(frozen=True, eq=False)
class ActionClass:
    """One action class: a name and its category (PM, OM, or PI)."""

    name: str
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise InvariantError(f"unknown category {self.category!r}")
        if not self.name or not isinstance(self.name, str):
            raise InvariantError("class name must be a non-empty string")

    def __eq__(self, other):
        return (
            isinstance(other, ActionClass)
            and self.name == other.name
            and self.category == other.category
        )

    def __hash__(self):
        return hash((self.name, self.category))


@dataclass(frozen=True, eq=False)
class PersonPose:
    """3D pose state of one person at one frame.

    theta: (23, 3, 3) joint rotation matrices
    psi: (3, 3) global orientation
    beta: (10,) shape coefficients
    location: (3,) camera-frame position in meters
    """

    theta: np.ndarray
    psi: np.ndarray
    beta: np.ndarray
    location: np.ndarray

    def __post_init__(self):
        theta = _frozen_array(self.theta)
        psi = _frozen_array(self.psi)
        beta = _frozen_array(self.beta)
        location = _frozen_array(self.location)
        if theta.shape != (NUM_JOINTS, 3, 3):
            raise InvariantError(f"theta must be ({NUM_JOINTS},3,3), got {theta.shape}")
        if psi.shape != (3, 3):
            raise InvariantError(f"psi must be (3,3), got {psi.shape}")
        if beta.shape != (10,):
            raise InvariantError(f"beta must be (10,), got {beta.shape}")
        if location.shape != (3,):
            raise InvariantError(f"location must be (3,), got {location.shape}")
        _require_finite(theta, "theta")
        _require_finite(psi, "psi")
        _require_finite(beta, "beta")
        _require_finite(location, "location")
        # Vectorized rotation check over the 23 joints plus psi.
        rots = np.concatenate([theta, psi[None]], axis=0)
        gram = np.einsum("nij,nik->njk", rots, rots)
        ortho_err = np.abs(gram - np.eye(3)).max(axis=(1, 2))
        dets = np.linalg.det(rots)
        bad = (ortho_err > ROTATION_TOL) | (np.abs(dets - 1.0) > ROTATION_TOL)
        if bad.any():
            idx = int(np.argmax(bad))
            which = "psi" if idx == NUM_JOINTS else f"theta[{idx}]"
            raise InvariantError(f"{which} is not a rotation matrix")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "location", location)

    def __eq__(self, other):
        return (
            isinstance(other, PersonPose)
            and np.array_equal(self.theta, other.theta)
            and np.array_equal(self.psi, other.psi)
            and np.array_equal(self.beta, other.beta)
            and np.array_equal(self.location, other.location)
        )


def flatten_person_pose(p: PersonPose) -> np.ndarray:
    """Flatten a pose to the fixed 229-vector: theta row-major, psi, beta, location."""
    return np.concatenate(
        [p.theta.ravel(), p.psi.ravel(), p.beta, p.location]
    )


def unflatten_person_pose(v) -> np.ndarray:
    """Inverse of flatten_person_pose. Validates the result."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (POSE_DIM,):
        raise InvariantError(f"flattened pose must be ({POSE_DIM},), got {v.shape}")
    theta = v[: NUM_JOINTS * 9].reshape(NUM_JOINTS, 3, 3)
    psi = v[NUM_JOINTS * 9 : NUM_JOINTS * 9 + 9].reshape(3, 3)
    beta = v[NUM_JOINTS * 9 + 9 : NUM_JOINTS * 9 + 19]
    location = v[NUM_JOINTS * 9 + 19 :]
    return PersonPose(theta=theta, psi=psi, beta=beta, location=location)


@dataclass(frozen=True, eq=False)
class AppearanceFeature:
    """Appearance embedding sampled at source_frame, shared by nearby frames."""

    u: np.ndarray
    source_frame: int

    def __post_init__(self):
        u = _frozen_array(self.u)
        if u.shape != (APPEARANCE_DIM,):
            raise InvariantError(f"appearance must be ({APPEARANCE_DIM},), got {u.shape}")
        _require_finite(u, "appearance")
        if int(self.source_frame) < 0:
            raise InvariantError("source_frame must be >= 0")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "source_frame", int(self.source_frame))

    def __eq__(self, other):
        return (
            isinstance(other, AppearanceFeature)
            and self.source_frame == other.source_frame
            and np.array_equal(self.u, other.u)
        )


@dataclass(frozen=True, eq=False)
class PersonVector:
    """Per-frame person state: pose plus optional appearance."""

    pose: PersonPose
    appearance: Optional[AppearanceFeature] = None

    def __post_init__(self):
        if not isinstance(self.pose, PersonPose):
            raise InvariantError("pose must be a PersonPose")
        if self.appearance is not None and not isinstance(self.appearance, AppearanceFeature):
            raise InvariantError("appearance must be an AppearanceFeature or None")

    def __eq__(self, other):
        return (
            isinstance(other, PersonVector)
            and self.pose == other.pose
            and self.appearance == other.appearance
        )


def _validate_box(b) -> np.ndarray:
    box = _frozen_array(b)
    if box.shape != (4,):
        raise InvariantError(f"box must be (4,), got {box.shape}")
    _require_finite(box, "box")
    if not (box[0] < box[2] and box[1] < box[3]):
        raise InvariantError(f"box must satisfy x0<x1, y0<y1, got {box.tolist()}")
    return box


@dataclass(frozen=True, eq=False)
class Tracklet:
    """One person's contiguous frame range with per-frame optional entries.

    entries[k] is the person-vector at absolute frame start_frame + k, or None
    for an occluded/missed frame. boxes is aligned with entries and present
    exactly where entries are.
    """

    track_id: int
    start_frame: int
    entries: tuple
    boxes: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        boxes = tuple(None if b is None else _validate_box(b) for b in self.boxes)
        if len(entries) == 0:
            raise InvariantError("tracklet must span at least one frame")
        if len(entries) != len(boxes):
            raise InvariantError("entries and boxes must have equal length")
        if self.start_frame < 0:
            raise InvariantError("start_frame must be >= 0")
        for k, (e, b) in enumerate(zip(entries, boxes)):
            if e is not None and not isinstance(e, PersonVector):
                raise InvariantError(f"entry {k} is not a PersonVector")
            if (e is None) != (b is None):
                raise InvariantError(f"box/entry presence mismatch at offset {k}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "track_id", int(self.track_id))
        object.__setattr__(self, "start_frame", int(self.start_frame))

    def __len__(self):
        return len(self.entries)

    @property
    def end_frame(self) -> int:
        """One past the last spanned frame."""
        return self.start_frame + len(self.entries)

    def entry_at(self, frame: int):
        """Entry at an absolute frame index, or None if outside the span or absent."""
        k = frame - self.start_frame
        if k < 0 or k >= len(self.entries):
            return None
        return self.entries[k]

    def box_at(self, frame: int):
        k = frame - self.start_frame
        if k < 0 or k >= len(self.boxes):
            return None
        return self.boxes[k]

    def present_mask(self) -> np.ndarray:
        """Boolean (len,) array, True where an entry is present."""
        return np.array([e is not None for e in self.entries], dtype=bool)

    def pose_matrix(self) -> np.ndarray:
        """(len, 229) flattened poses, zeros at absent frames. Cached."""
        cached = getattr(self, "_pose_matrix", None)
        if cached is None:
            m = np.zeros((len(self.entries), POSE_DIM))
            for k, e in enumerate(self.entries):
                if e is not None:
                    m[k] = flatten_person_pose(e.pose)
            m.flags.writeable = False
            object.__setattr__(self, "_pose_matrix", m)
            cached = m
        return cached

    def appearance_matrix(self) -> np.ndarray:
        """(len, 1152) appearance vectors, zeros where absent. Cached."""
        cached = getattr(self, "_appearance_matrix", None)
        if cached is None:
            m = np.zeros((len(self.entries), APPEARANCE_DIM))
            for k, e in enumerate(self.entries):
                if e is not None and e.appearance is not None:
                    m[k] = e.appearance.u
            m.flags.writeable = False
            object.__setattr__(self, "_appearance_matrix", m)
            cached = m
        return cached

    def __eq__(self, other):
        if not isinstance(other, Tracklet):
            return False
        if (
            self.track_id != other.track_id
            or self.start_frame != other.start_frame
            or len(self.entries) != len(other.entries)
        ):
            return False
        for a, b in zip(self.entries, other.entries):
            if a != b:
                return False
        for a, b in zip(self.boxes, other.boxes):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def check_label_rule(vec: np.ndarray, catalog) -> None:
    """Raise InvariantError unless vec obeys the category rule.

    Exactly one PM bit, at most MAX_OM OM bits, at most MAX_PI PI bits.
    """
    cats = np.array([c.category for c in catalog])
    vec = np.asarray(vec, dtype=bool)
    n_pm = int(vec[cats == "PM"].sum())
    n_om = int(vec[cats == "OM"].sum())
    n_pi = int(vec[cats == "PI"].sum())
    if n_pm != 1:
        raise InvariantError(f"label vector must set exactly one PM class, got {n_pm}")
    if n_om > MAX_OM:
        raise InvariantError(f"label vector sets {n_om} OM classes, max {MAX_OM}")
    if n_pi > MAX_PI:
        raise InvariantError(f"label vector sets {n_pi} PI classes, max {MAX_PI}")


def _freeze_labels(labels, k: int, name: str):
    out = {}
    for tid, per_frame in labels.items():
        frames = {}
        for f, vec in per_frame.items():
            v = np.asarray(vec, dtype=bool)
            if v.shape != (k,):
                raise InvariantError(f"{name}[{tid}][{f}] must have length {k}")
            v = v.copy()
            v.flags.writeable = False
            frames[int(f)] = v
        out[int(tid)] = frames
    return out


@dataclass(frozen=True, eq=False)
class Clip:
    """A frame range, its tracklets, and per-(track, frame) multi-hot labels.

    labels: ground truth, only on frames where the track has a present entry,
        each vector obeying the category rule.
    pseudo_labels: optional teacher labels with the same keying; bit flips may
        break the category rule, so only structural checks apply.
    occluded_labels: ground truth retained for frames that an occlusion pass
        removed; keyed like labels but pointing at absent frames. These are
        never evaluated.
    """

    clip_id: str
    fps: int
    num_frames: int
    tracklets: tuple
    labels: dict
    class_catalog: tuple
    pseudo_labels: Optional[dict] = None
    occluded_labels: Optional[dict] = None

    def __post_init__(self):
        if not self.clip_id or not isinstance(self.clip_id, str):
            raise InvariantError("clip_id must be a non-empty string")
        if int(self.fps) <= 0:
            raise InvariantError("fps must be positive")
        if int(self.num_frames) <= 0:
            raise InvariantError("num_frames must be positive")
        catalog = tuple(self.class_catalog)
        if not catalog:
            raise InvariantError("class catalog must be non-empty")
        for c in catalog:
            if not isinstance(c, ActionClass):
                raise InvariantError("class_catalog entries must be ActionClass")
        if len({c.name for c in catalog}) != len(catalog):
            raise InvariantError("class names must be unique")
        k = len(catalog)

        tracklets = tuple(self.tracklets)
        ids = [t.track_id for t in tracklets]
        if len(set(ids)) != len(ids):
            raise InvariantError("track ids must be unique within a clip")
        by_id = {}
        for t in tracklets:
            if not isinstance(t, Tracklet):
                raise InvariantError("tracklets must be Tracklet instances")
            if t.start_frame < 0 or t.end_frame > int(self.num_frames):
                raise InvariantError(
                    f"tracklet {t.track_id} spans [{t.start_frame},{t.end_frame}) "
                    f"outside clip frames [0,{self.num_frames})"
                )
            by_id[t.track_id] = t

        labels = _freeze_labels(self.labels, k, "labels")
        for tid, per_frame in labels.items():
            if tid not in by_id:
                raise InvariantError(f"labels reference unknown track {tid}")
            for f, vec in per_frame.items():
                if by_id[tid].entry_at(f) is None:
                    raise InvariantError(
                        f"label at (track {tid}, frame {f}) has no present detection"
                    )
                check_label_rule(vec, catalog)

        pseudo = None
        if self.pseudo_labels is not None:
            pseudo = _freeze_labels(self.pseudo_labels, k, "pseudo_labels")
            for tid, per_frame in pseudo.items():
                if tid not in by_id:
                    raise InvariantError(f"pseudo_labels reference unknown track {tid}")
                for f in per_frame:
                    if by_id[tid].entry_at(f) is None:
                        raise InvariantError(
                            f"pseudo label at (track {tid}, frame {f}) has no detection"
                        )

        occluded = None
        if self.occluded_labels is not None:
            occluded = _freeze_labels(self.occluded_labels, k, "occluded_labels")
            for tid, per_frame in occluded.items():
                if tid not in by_id:
                    raise InvariantError(f"occluded_labels reference unknown track {tid}")
                for f in per_frame:
                    if by_id[tid].entry_at(f) is not None:
                        raise InvariantError(
                            f"occluded label at (track {tid}, frame {f}) points at a"
                            " present detection"
                        )

        object.__setattr__(self, "clip_id", str(self.clip_id))
        object.__setattr__(self, "fps", int(self.fps))
        object.__setattr__(self, "num_frames", int(self.num_frames))
        object.__setattr__(self, "tracklets", tracklets)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_catalog", catalog)
        object.__setattr__(self, "pseudo_labels", pseudo)
        object.__setattr__(self, "occluded_labels", occluded)
        object.__setattr__(self, "_by_id", by_id)

    @property
    def num_classes(self) -> int:
        return len(self.class_catalog)

    def tracklet(self, track_id: int) -> Tracklet:
        return self._by_id[track_id]

    def track_ids(self):
        return [t.track_id for t in self.tracklets]

    def __eq__(self, other):
        if not isinstance(other, Clip):
            return False
        if (
            self.clip_id != other.clip_id
            or self.fps != other.fps
            or self.num_frames != other.num_frames
            or self.class_catalog != other.class_catalog
            or self.tracklets != other.tracklets
        ):
            return False
        return (
            _labels_equal(self.labels, other.labels)
            and _labels_equal(self.pseudo_labels, other.pseudo_labels)
            and _labels_equal(self.occluded_labels, other.occluded_labels)
        )


def _labels_equal(a, b) -> bool:
    if (a is None) != (b is None):
        return False
    if a is None:
        return True
    if set(a) != set(b):
        return False
    for tid in a:
        if set(a[tid]) != set(b[tid]):
            return False
        for f in a[tid]:
            if not np.array_equal(a[tid][f], b[tid][f]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class PredictionTrack:
    """Per-frame class probabilities for one tracklet, plus pooled scores.

    probs: (num_frames, K) probabilities for every clip frame (gap frames are
        infilled at inference time, so every frame has a value).
    pooled: {annotated frame -> (K,) pooled probabilities}.
    """

    track_id: int
    probs: np.ndarray
    pooled: dict

    def __post_init__(self):
        probs = _frozen_array(self.probs)
        if probs.ndim != 2:
            raise InvariantError("probs must be (num_frames, K)")
        _require_finite(probs, "probs")
        if probs.size and (probs.min() < 0.0 or probs.max() > 1.0):
            raise InvariantError("probabilities must lie in [0, 1]")
        pooled = {}
        for f, v in self.pooled.items():
            v = _frozen_array(v)
            if v.shape != (probs.shape[1],):
                raise InvariantError("pooled vectors must have length K")
            _require_finite(v, "pooled probs")
            pooled[int(f)] = v
        object.__setattr__(self, "track_id", int(self.track_id))
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "pooled", pooled)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _labels_to_json(per_frame: dict) -> list:
    # [[frame, [set class indices]], ...] sorted by frame
    out = []
    for f in sorted(per_frame):
        idx = np.flatnonzero(per_frame[f]).tolist()
        out.append([int(f), idx])
    return out


def _labels_from_json(rows, k: int) -> dict:
    out = {}
    for f, idx in rows:
        v = np.zeros(k, dtype=bool)
        v[np.asarray(idx, dtype=int)] = True
        out[int(f)] = v
    return out


def _tracklet_to_json(t: Tracklet, clip: Clip) -> dict:
    # Deduplicate appearance vectors: entries that share a feature object (or
    # an equal vector) reference one appearance_table row.
    table = []
    table_index = {}
    entries = []
    for e in t.entries:
        if e is None:
            entries.append(None)
            continue
        app_idx = None
        if e.appearance is not None:
            key = (e.appearance.source_frame, e.appearance.u.tobytes())
            app_idx = table_index.get(key)
            if app_idx is None:
                app_idx = len(table)
                table_index[key] = app_idx
                table.append(
                    {
                        "source_frame": e.appearance.source_frame,
                        "u": canonical_floats(e.appearance.u).tolist(),
                    }
                )
        entries.append(
            {
                "pose": canonical_floats(flatten_person_pose(e.pose)).tolist(),
                "appearance": app_idx,
            }
        )
    boxes = [None if b is None else canonical_floats(b).tolist() for b in t.boxes]
    row = {
        "track_id": t.track_id,
        "start_frame": t.start_frame,
        "appearance_table": table,
        "entries": entries,
        "boxes": boxes,
        "labels": _labels_to_json(clip.labels.get(t.track_id, {})),
    }
    if clip.pseudo_labels is not None:
        row["pseudo_labels"] = _labels_to_json(clip.pseudo_labels.get(t.track_id, {}))
    if clip.occluded_labels is not None:
        row["occluded_labels"] = _labels_to_json(clip.occluded_labels.get(t.track_id, {}))
    return row


def clip_to_text(c: Clip) -> str:
    """Serialize a clip to its line-delimited text form."""
    lines = [json.dumps({"format": CLIP_FORMAT}, sort_keys=True, separators=(",", ":"))]
    header = {
        "clip_id": c.clip_id,
        "fps": c.fps,
        "num_frames": c.num_frames,
        "class_catalog": [[a.name, a.category] for a in c.class_catalog],
        "n_tracklets": len(c.tracklets),
        "has_pseudo_labels": c.pseudo_labels is not None,
        "has_occluded_labels": c.occluded_labels is not None,
    }
    lines.append(json.dumps(header, sort_keys=True, separators=(",", ":")))
    for t in c.tracklets:
        lines.append(
            json.dumps(_tracklet_to_json(t, c), sort_keys=True, separators=(",", ":"))
        )
    return "\n".join(lines) + "\n"


def save_clip(c: Clip, path) -> None:
    """Write a clip file. See the module docstring for the layout."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(clip_to_text(c))


def _parse_tracklet_row(row: dict, k: int, line_no: int):
    try:
        table = [
            AppearanceFeature(u=np.array(a["u"], dtype=np.float64), source_frame=a["source_frame"])
            for a in row["appearance_table"]
        ]
        entries = []
        for e in row["entries"]:
            if e is None:
                entries.append(None)
                continue
            pose = unflatten_person_pose(np.array(e["pose"], dtype=np.float64))
            app = table[e["appearance"]] if e["appearance"] is not None else None
            entries.append(PersonVector(pose=pose, appearance=app))
        boxes = [None if b is None else np.array(b, dtype=np.float64) for b in row["boxes"]]
        t = Tracklet(
            track_id=row["track_id"],
            start_frame=row["start_frame"],
            entries=tuple(entries),
            boxes=tuple(boxes),
        )
        labels = _labels_from_json(row["labels"], k)
        pseudo = _labels_from_json(row["pseudo_labels"], k) if "pseudo_labels" in row else None
        occluded = (
            _labels_from_json(row["occluded_labels"], k) if "occluded_labels" in row else None
        )
        return t, labels, pseudo, occluded
    except (KeyError, IndexError, TypeError) as exc:
        raise ClipFormatError(f"line {line_no}: malformed tracklet row ({exc})") from exc


def clip_from_text(text: str) -> Clip:
    lines = text.splitlines()
    if not lines:
        raise ClipFormatError("line 1: empty clip file")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ClipFormatError(f"line 1: not valid JSON ({exc})") from exc
    version = head.get("format") if isinstance(head, dict) else None
    if version != CLIP_FORMAT:
        raise UnsupportedVersionError(
            f"unsupported clip format {version!r}, expected {CLIP_FORMAT!r}"
        )
    if len(lines) < 2:
        raise ClipFormatError("line 2: missing clip header")
    try:
        header = json.loads(lines[1])
        clip_id = header["clip_id"]
        fps = header["fps"]
        num_frames = header["num_frames"]
        catalog = tuple(ActionClass(name=n, category=cat) for n, cat in header["class_catalog"])
        n_tracklets = header["n_tracklets"]
        has_pseudo = header.get("has_pseudo_labels", False)
        has_occluded = header.get("has_occluded_labels", False)
    except json.JSONDecodeError as exc:
        raise ClipFormatError(f"line 2: not valid JSON ({exc})") from exc
    except (KeyError, TypeError) as exc:
        raise ClipFormatError(f"line 2: malformed clip header ({exc})") from exc

    if len(lines) != 2 + n_tracklets:
        raise ClipFormatError(
            f"expected {2 + n_tracklets} lines for {n_tracklets} tracklets, got {len(lines)}"
        )
    k = len(catalog)
    tracklets = []
    labels = {}
    pseudo_labels = {} if has_pseudo else None
    occluded_labels = {} if has_occluded else None
    for i, line in enumerate(lines[2:], start=3):
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ClipFormatError(f"line {i}: not valid JSON ({exc})") from exc
        t, lab, pseudo, occ = _parse_tracklet_row(row, k, i)
        tracklets.append(t)
        if lab:
            labels[t.track_id] = lab
        if pseudo_labels is not None and pseudo:
            pseudo_labels[t.track_id] = pseudo
        if occluded_labels is not None and occ:
            occluded_labels[t.track_id] = occ
    return Clip(
        clip_id=clip_id,
        fps=fps,
        num_frames=num_frames,
        tracklets=tuple(tracklets),
        labels=labels,
        class_catalog=catalog,
        pseudo_labels=pseudo_labels,
        occluded_labels=occluded_labels,
    )


def load_clip(path) -> Clip:
    """Read a clip file written by save_clip. Validates all invariants."""
    with open(path, "r", encoding="utf-8") as fh:
        return clip_from_text(fh.read())


def trim_tracklet(t: Tracklet, window: int, rng_seed: int) -> Tracklet:
    """Random contiguous window of at most ``window`` frames from a tracklet.

    The start offset is chosen uniformly from starts whose window contains at
    least one present entry. Identity when the tracklet already fits.
    """
    if window < 1:
        raise InvariantError("window must be >= 1")
    n = len(t.entries)
    if n <= window:
        return t
    present = t.present_mask()
    csum = np.concatenate([[0], np.cumsum(present)])
    starts = [o for o in range(n - window + 1) if csum[o + window] - csum[o] > 0]
    if not starts:
        starts = list(range(n - window + 1))
    rng = substream(rng_seed, "trim", t.track_id)
    o = starts[int(rng.integers(0, len(starts)))]
    return Tracklet(
        track_id=t.track_id,
        start_frame=t.start_frame + o,
        entries=t.entries[o : o + window],
        boxes=t.boxes[o : o + window],
    )

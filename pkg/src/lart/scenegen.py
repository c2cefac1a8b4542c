"""Deterministic synthetic scene generator.

Scenes are scripted: each actor gets a primary movement class, an optional
object overlay, and optionally a partner plus a person-interaction program
that runs during a contact window. Pose trajectories are sums of per-joint
axis-angle oscillators with class-distinct amplitudes, frequencies, and
static offsets, so every label is a deterministic function of scene state:

* movement classes (stand/sit/walk/run) are decidable from a single actor's
  joint angles and location trajectory;
* interaction labels require BOTH a matching program and a partner within
  the interaction radius, and `listen` is special: the listener performs no
  program of their own, so the label is decidable only from the partner's
  `talk` signature plus proximity;
* `carry_object` never touches the pose. It is injected only into the
  appearance channel, which gives pose-only models a hard information
  ceiling on that class.

Everything is driven by named substreams of one seed, so datasets are
reproducible byte-for-byte.
"""

import math
from dataclasses import dataclass, replace, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .seeds import substream
from .tracklets import (
    ActionClass,
    AppearanceFeature,
    APPEARANCE_DIM,
    Clip,
    InvariantError,
    NUM_JOINTS,
    PersonPose,
    PersonVector,
    Tracklet,
    canonical_floats,
)

# The fixed 12-class catalog: 4 movement, 2 object, 6 interaction classes.
ACTION_CATALOG = (
    ActionClass("stand", "PM"),
    ActionClass("sit", "PM"),
    ActionClass("walk", "PM"),
    ActionClass("run", "PM"),
    ActionClass("carry_object", "OM"),
    ActionClass("answer_phone", "OM"),
    ActionClass("hug", "PI"),
    ActionClass("handshake", "PI"),
    ActionClass("fight", "PI"),
    ActionClass("dance", "PI"),
    ActionClass("listen", "PI"),
    ActionClass("talk", "PI"),
)

CLASS_INDEX = {c.name: i for i, c in enumerate(ACTION_CATALOG)}
PM_CLASSES = ("stand", "sit", "walk", "run")
OM_CLASSES = ("carry_object", "answer_phone")
PI_CLASSES = ("hug", "handshake", "fight", "dance", "listen", "talk")

# Body map for the 23 joints (a fixed naming convention for this generator).
L_HIP, R_HIP, SPINE1, L_KNEE, R_KNEE, SPINE2 = 0, 1, 2, 3, 4, 5
L_ANKLE, R_ANKLE, SPINE3, L_FOOT, R_FOOT, NECK = 6, 7, 8, 9, 10, 11
L_COLLAR, R_COLLAR, HEAD, L_SHOULDER, R_SHOULDER = 12, 13, 14, 15, 16
L_ELBOW, R_ELBOW, L_WRIST, R_WRIST, L_HAND, R_HAND = 17, 18, 19, 20, 21, 22

_AXES = {"x": 0, "y": 1, "z": 2}

# Pose programs. static: {(joint, axis): angle}. osc: [(joint, axis,
# amplitude, frequency_hz, phase)]. Classes are separated by which joints
# move, how far, and how fast.
_PM_PROGRAMS = {
    "stand": {
        "static": {(L_SHOULDER, "z"): 0.08, (R_SHOULDER, "z"): -0.08},
        "osc": [],
        "speed": 0.0,
        "center_y": 0.92,
        "body_h": 1.75,
    },
    "sit": {
        "static": {
            (L_HIP, "x"): -1.25,
            (R_HIP, "x"): -1.25,
            (L_KNEE, "x"): 1.25,
            (R_KNEE, "x"): 1.25,
        },
        "osc": [],
        "speed": 0.0,
        "center_y": 0.55,
        "body_h": 1.25,
    },
    "walk": {
        "static": {},
        "osc": [
            (L_HIP, "x", 0.50, 1.4, 0.0),
            (R_HIP, "x", 0.50, 1.4, math.pi),
            (L_KNEE, "x", 0.35, 1.4, math.pi / 2),
            (R_KNEE, "x", 0.35, 1.4, 3 * math.pi / 2),
            (L_ELBOW, "x", 0.25, 1.4, math.pi),
            (R_ELBOW, "x", 0.25, 1.4, 0.0),
        ],
        "speed": 1.2,
        "center_y": 0.92,
        "body_h": 1.75,
    },
    "run": {
        "static": {(L_ELBOW, "x"): 1.1, (R_ELBOW, "x"): 1.1},
        "osc": [
            (L_HIP, "x", 0.95, 2.8, 0.0),
            (R_HIP, "x", 0.95, 2.8, math.pi),
            (L_KNEE, "x", 0.85, 2.8, math.pi / 2),
            (R_KNEE, "x", 0.85, 2.8, 3 * math.pi / 2),
            (L_ELBOW, "x", 0.50, 2.8, math.pi),
            (R_ELBOW, "x", 0.50, 2.8, 0.0),
        ],
        "speed": 3.2,
        "center_y": 0.98,
        "body_h": 1.75,
    },
}

_PI_PROGRAMS = {
    "hug": {
        "static": {
            (L_SHOULDER, "x"): 1.35,
            (R_SHOULDER, "x"): 1.35,
            (L_ELBOW, "x"): 0.90,
            (R_ELBOW, "x"): 0.90,
        },
        "osc": [(SPINE1, "x", 0.06, 0.5, 0.0)],
    },
    "handshake": {
        "static": {(R_SHOULDER, "x"): 0.95},
        "osc": [(R_ELBOW, "x", 0.40, 1.9, 0.0)],
    },
    "fight": {
        "static": {
            (L_SHOULDER, "x"): 1.05,
            (R_SHOULDER, "x"): 1.05,
            (L_ELBOW, "x"): 0.50,
            (R_ELBOW, "x"): 0.50,
        },
        "osc": [
            (L_ELBOW, "x", 0.85, 3.1, 0.0),
            (R_ELBOW, "x", 0.85, 3.1, math.pi),
        ],
    },
    "dance": {
        "static": {},
        "osc": [
            (L_SHOULDER, "x", 0.75, 1.05, 0.0),
            (R_SHOULDER, "x", 0.75, 1.05, math.pi),
            (SPINE1, "z", 0.45, 1.05, math.pi / 2),
            (HEAD, "z", 0.20, 1.05, 0.0),
        ],
    },
    "talk": {
        "static": {(R_SHOULDER, "x"): 0.35},
        "osc": [
            (HEAD, "x", 0.32, 2.3, 0.0),
            (R_ELBOW, "x", 0.30, 1.15, 0.0),
        ],
    },
}

_PHONE_PROGRAM = {
    "static": {(R_SHOULDER, "x"): 0.45, (R_ELBOW, "x"): 2.25, (HEAD, "z"): 0.28},
    "osc": [],
}

# Scene bounds in meters: x right, y up, z away from the camera.
_X_RANGE = (-3.5, 3.5)
_Z_RANGE = (3.5, 10.5)
_FOCAL, _CX, _CY = 500.0, 320.0, 240.0
_BODY_W = 0.55
_CAMERA_HEIGHT = 1.0


@dataclass(frozen=True)
class GeneratorConfig:
    """Scene sampling parameters. One seed drives everything."""

    n_people: int = 4
    num_frames: int = 64
    fps: int = 12
    occlusion_rate: float = 0.0       # expected gap episodes per track
    occlusion_mean_gap: float = 4.0   # mean episode length, frames
    interaction_radius: float = 1.0   # meters
    teacher_flip_p: float = 0.1
    appearance_hz: float = 1.0        # appearance sample frequency f_s
    appearance_sigma: float = 0.5     # stddev of the 8 appearance noise dims
    seed: int = 0
    # content mix
    pair_fraction: float = 0.5        # fraction of the cast placed into PI pairs
    solo_motion_rate: float = 0.15    # solo actors running a partner-less PI program
    carry_rate: float = 0.25
    phone_rate: float = 0.15
    with_appearance: bool = False
    with_teacher: bool = False

    def __post_init__(self):
        if self.n_people < 1:
            raise InvariantError("n_people must be >= 1")
        if self.num_frames < 1 or self.fps < 1:
            raise InvariantError("num_frames and fps must be >= 1")
        if self.appearance_hz <= 0 or self.appearance_hz > self.fps:
            raise InvariantError("appearance_hz must lie in (0, fps]")
        if not (0.0 <= self.teacher_flip_p < 1.0):
            raise InvariantError("teacher_flip_p must lie in [0, 1)")
        if self.interaction_radius <= 0:
            raise InvariantError("interaction_radius must be positive")


@dataclass(frozen=True)
class AppearanceProviderSpec:
    """Fixed random linear map (pose summary 32 + context 8 + noise 8) -> 1152."""

    seed: int = 0
    half_window: int = 6  # M, frames pooled on each side of a sample time


@dataclass(frozen=True)
class ActorScript:
    """Complete per-actor recipe for one clip.

    performs: PI program this actor runs (None for listeners and plain actors).
    partner: index of the paired actor, or None.
    window: (start, end) frames during which the PI program is active.
    """

    pm: str
    base_xz: tuple
    heading: float
    carry: bool = False
    phone: bool = False
    performs: Optional[str] = None
    partner: Optional[int] = None
    window: tuple = (0, 0)
    phase: float = 0.0
    amp_scale: float = 1.0
    beta: tuple = (0.0,) * 10


def anchor_frames(num_frames: int, fps: int) -> list:
    """The 1 Hz annotated frames: the first frame of each whole second."""
    return list(range(0, num_frames, fps))


def _positions(script: ActorScript, cfg: GeneratorConfig) -> np.ndarray:
    """(T, 3) world positions. Moving actors fold back at the scene bounds."""
    T = cfg.num_frames
    speed = _PM_PROGRAMS[script.pm]["speed"]
    y = _PM_PROGRAMS[script.pm]["center_y"]
    x0, z0 = script.base_xz
    t = np.arange(T) / cfg.fps
    if speed == 0.0:
        x = np.full(T, x0)
        z = np.full(T, z0)
    else:
        dx = speed * math.sin(script.heading)
        dz = speed * math.cos(script.heading)
        x = _fold(x0 + dx * t, *_X_RANGE)
        z = _fold(z0 + dz * t, *_Z_RANGE)
    return np.stack([x, np.full(T, y), z], axis=1)


def _fold(v: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Reflect an unbounded coordinate into [lo, hi] (triangle-wave fold)."""
    width = hi - lo
    u = np.mod(v - lo, 2 * width)
    return lo + np.where(u <= width, u, 2 * width - u)


def _joint_angles(script: ActorScript, cfg: GeneratorConfig) -> np.ndarray:
    """(T, 23, 3) accumulated euler angles (x, y, z per joint)."""
    T = cfg.num_frames
    t = np.arange(T) / cfg.fps
    angles = np.zeros((T, NUM_JOINTS, 3))
    programs = [_PM_PROGRAMS[script.pm]]
    if script.performs is not None:
        prog = _PI_PROGRAMS[script.performs]
        w0, w1 = script.window
        gate = np.zeros(T)
        gate[w0:w1] = 1.0
        programs.append((prog, gate))
    if script.phone:
        programs.append(_PHONE_PROGRAM)
    for entry in programs:
        prog, gate = entry if isinstance(entry, tuple) else (entry, None)
        for (joint, axis), angle in prog["static"].items():
            contrib = np.full(T, angle * script.amp_scale)
            if gate is not None:
                contrib = contrib * gate
            angles[:, joint, _AXES[axis]] += contrib
        for joint, axis, amp, freq, phase in prog["osc"]:
            wave = amp * script.amp_scale * np.sin(
                2 * math.pi * freq * t + phase + script.phase
            )
            if gate is not None:
                wave = wave * gate
            angles[:, joint, _AXES[axis]] += wave
    return angles


def _rotations_from_angles(angles: np.ndarray) -> np.ndarray:
    """(T, 23, 3) euler angles -> (T, 23, 3, 3) rotation matrices."""
    T = angles.shape[0]
    flat = angles.reshape(-1, 3)
    mats = Rotation.from_euler("xyz", flat).as_matrix()
    return mats.reshape(T, NUM_JOINTS, 3, 3)


def _project_box(pos: np.ndarray, body_h: float) -> np.ndarray:
    """Pinhole projection of a body-sized box around a world position."""
    x, y, z = pos
    u = _FOCAL * x / z + _CX
    v = _FOCAL * (_CAMERA_HEIGHT - y) / z + _CY
    hw = _FOCAL * (_BODY_W / 2) / z
    hh = _FOCAL * (body_h / 2) / z
    return np.array([u - hw, v - hh, u + hw, v + hh])


def _pair_distance_ok(p, q, radius):
    return np.linalg.norm(np.asarray(p) - np.asarray(q)) <= radius


def sample_scripts(cfg: GeneratorConfig, rng: np.random.Generator) -> list:
    """Sample a cast of ActorScripts for one clip."""
    n = cfg.n_people
    T = cfg.num_frames
    n_pairs = int(cfg.pair_fraction * n) // 2 if n >= 2 else 0
    pair_classes = [
        ["hug", "handshake", "fight", "dance", "talk_listen"][int(rng.integers(0, 5))]
        for _ in range(n_pairs)
    ]

    # windows: half the pairs interact the whole clip, the rest get a
    # contiguous sub-window covering at least half of it
    windows = []
    for _ in range(n_pairs):
        if rng.random() < 0.5:
            windows.append((0, T))
        else:
            length = int(rng.integers(T // 2, T + 1))
            start = int(rng.integers(0, T - length + 1))
            windows.append((start, start + length))

    # solo roles
    n_solo = n - 2 * n_pairs
    solo_roles = []
    for _ in range(n_solo):
        if rng.random() < cfg.solo_motion_rate:
            solo_roles.append("perform")
        else:
            solo_roles.append("plain")

    # placement: pairs first (two close actors), then solos away from everyone
    placed = []  # (x, z) anchors to stay away from
    scripts = [None] * n
    idx = 0

    def sample_far_point(min_dist):
        best, best_d = None, -1.0
        for _ in range(200):
            p = (
                rng.uniform(_X_RANGE[0] + 0.3, _X_RANGE[1] - 0.3),
                rng.uniform(_Z_RANGE[0] + 0.3, _Z_RANGE[1] - 0.3),
            )
            d = min(
                (math.dist(p, q) for q in placed), default=float("inf")
            )
            if d >= min_dist:
                return p
            if d > best_d:
                best, best_d = p, d
        return best

    for pair_i in range(n_pairs):
        cls = pair_classes[pair_i]
        center = sample_far_point(2.2 * cfg.interaction_radius)
        gap = rng.uniform(0.35, 0.8 * cfg.interaction_radius)
        ang = rng.uniform(0, 2 * math.pi)
        off = (gap / 2 * math.sin(ang), gap / 2 * math.cos(ang))
        pa = (center[0] + off[0], center[1] + off[1])
        pb = (center[0] - off[0], center[1] - off[1])
        heading_a = math.atan2(pb[0] - pa[0], pb[1] - pa[1])
        heading_b = math.atan2(pa[0] - pb[0], pa[1] - pb[1])
        if cls == "talk_listen":
            performs = ("talk", None)
        else:
            performs = (cls, cls)
        for k, (pos, heading, prog) in enumerate(
            [(pa, heading_a, performs[0]), (pb, heading_b, performs[1])]
        ):
            scripts[idx] = ActorScript(
                pm="stand",
                base_xz=pos,
                heading=heading,
                performs=prog,
                partner=idx + 1 if k == 0 else idx - 1,
                window=windows[pair_i],
                carry=bool(rng.random() < cfg.carry_rate / 2),
                phone=False,
                phase=rng.uniform(0, 2 * math.pi),
                amp_scale=rng.uniform(0.9, 1.1),
                beta=tuple(np.round(rng.standard_normal(10), 6)),
            )
            placed.append(pos)
            idx += 1

    for role in solo_roles:
        pos = sample_far_point(1.6 * cfg.interaction_radius)
        placed.append(pos)
        if role == "perform":
            pm = "stand"
            performs = PI_CLASSES[int(rng.integers(0, 4))] if rng.random() < 0.7 else "talk"
            window = (0, T)
            carry = bool(rng.random() < cfg.carry_rate / 2)
            phone = False
        else:
            pm = PM_CLASSES[int(rng.integers(0, 4))]
            performs = None
            window = (0, 0)
            carry = bool(rng.random() < cfg.carry_rate)
            phone = bool(pm in ("stand", "sit") and rng.random() < cfg.phone_rate)
        scripts[idx] = ActorScript(
            pm=pm,
            base_xz=pos,
            heading=rng.uniform(0, 2 * math.pi),
            performs=performs,
            partner=None,
            window=window,
            carry=carry,
            phone=phone,
            phase=rng.uniform(0, 2 * math.pi),
            amp_scale=rng.uniform(0.9, 1.1),
            beta=tuple(np.round(rng.standard_normal(10), 6)),
        )
        idx += 1
    return scripts


def _labels_from_geometry(scripts, positions, cfg) -> np.ndarray:
    """(n, T, K) boolean labels from programs plus pairwise distances.

    Rules, applied frame by frame:
      PM class of the actor is always on (exactly one).
      carry_object / answer_phone follow the script bits.
      symmetric PI c: on iff the actor runs c this frame and some other actor
        also running c is within the interaction radius.
      talk: on iff the actor runs talk this frame and anyone is within radius.
      listen: on iff the actor is standing or sitting, runs nothing, and some
        actor running talk is within radius.
    """
    n = len(scripts)
    T = cfg.num_frames
    k = len(ACTION_CATALOG)
    labels = np.zeros((n, T, k), dtype=bool)

    # active program per actor per frame
    active = np.full((n, T), "", dtype=object)
    for i, s in enumerate(scripts):
        labels[i, :, CLASS_INDEX[s.pm]] = True
        if s.carry:
            labels[i, :, CLASS_INDEX["carry_object"]] = True
        if s.phone:
            labels[i, :, CLASS_INDEX["answer_phone"]] = True
        if s.performs is not None:
            w0, w1 = s.window
            active[i, w0:w1] = s.performs

    # pairwise distances in the ground plane plus height
    diffs = positions[:, None, :, :] - positions[None, :, :, :]  # (n, n, T, 3)
    dists = np.linalg.norm(diffs, axis=-1)
    near = dists <= cfg.interaction_radius
    np.einsum("iit->it", near)[...] = False  # an actor is not near itself

    for i, s in enumerate(scripts):
        for t in range(T):
            prog = active[i, t]
            if prog and prog != "talk":
                # symmetric class: needs a co-performer within radius
                if any(near[i, j, t] and active[j, t] == prog for j in range(n)):
                    labels[i, t, CLASS_INDEX[prog]] = True
            elif prog == "talk":
                if near[i, :, t].any():
                    labels[i, t, CLASS_INDEX["talk"]] = True
            elif s.pm in ("stand", "sit"):
                if any(near[i, j, t] and active[j, t] == "talk" for j in range(n)):
                    labels[i, t, CLASS_INDEX["listen"]] = True
    return labels


def generate_clip_from_scripts(scripts, cfg: GeneratorConfig, clip_id: str) -> Clip:
    """Deterministically realize a scripted cast into a Clip (no appearance)."""
    T = cfg.num_frames
    positions = np.stack([_positions(s, cfg) for s in scripts])  # (n, T, 3)
    labels_arr = _labels_from_geometry(scripts, positions, cfg)

    tracklets = []
    labels = {}
    for i, s in enumerate(scripts):
        angles = _joint_angles(s, cfg)
        theta = _rotations_from_angles(angles)  # (T, 23, 3, 3)
        # heading: moving actors face their velocity, which flips at folds
        pos = positions[i]
        if _PM_PROGRAMS[s.pm]["speed"] > 0:
            d = np.diff(pos[:, [0, 2]], axis=0)
            d = np.vstack([d, d[-1:]])
            headings = np.arctan2(d[:, 0], d[:, 1])
        else:
            headings = np.full(T, s.heading)
        psi = Rotation.from_euler("y", headings).as_matrix()  # (T, 3, 3)

        theta = canonical_floats(theta)
        psi = canonical_floats(psi)
        pos_c = canonical_floats(pos)
        beta = canonical_floats(np.asarray(s.beta))
        body_h = _PM_PROGRAMS[s.pm]["body_h"]

        entries, boxes = [], []
        for t in range(T):
            pose = PersonPose(
                theta=theta[t], psi=psi[t], beta=beta, location=pos_c[t]
            )
            entries.append(PersonVector(pose=pose))
            boxes.append(canonical_floats(_project_box(pos[t], body_h)))
        tracklets.append(
            Tracklet(track_id=i, start_frame=0, entries=tuple(entries), boxes=tuple(boxes))
        )
        labels[i] = {t: labels_arr[i, t] for t in range(T)}

    return Clip(
        clip_id=clip_id,
        fps=cfg.fps,
        num_frames=T,
        tracklets=tuple(tracklets),
        labels=labels,
        class_catalog=ACTION_CATALOG,
    )


def generate_clip(cfg: GeneratorConfig, index: int) -> Clip:
    """Sample scripts for clip ``index`` under cfg.seed and realize them."""
    rng = substream(cfg.seed, "gen", index)
    scripts = sample_scripts(cfg, rng)
    return generate_clip_from_scripts(scripts, cfg, clip_id=f"clip_{index:05d}")


# ---------------------------------------------------------------------------
# Appearance provider
# ---------------------------------------------------------------------------

_POSE_SUMMARY_PROJ = 16  # mean + std of this many pose projections = 32 dims
_CONTEXT_DIM = 8
_NOISE_DIM = 8
_INPUT_DIM = 2 * _POSE_SUMMARY_PROJ + _CONTEXT_DIM + _NOISE_DIM  # 48


def _provider_maps(spec: AppearanceProviderSpec):
    rng = substream(spec.seed, "appearance-map")
    proj = rng.standard_normal((_POSE_SUMMARY_PROJ, NUM_JOINTS * 9)) / math.sqrt(
        NUM_JOINTS * 9
    )
    w = rng.standard_normal((APPEARANCE_DIM, _INPUT_DIM)) / math.sqrt(_INPUT_DIM)
    return proj, w


def synth_appearance(c: Clip, spec: AppearanceProviderSpec, cfg: GeneratorConfig) -> Clip:
    """Attach appearance features to every present entry of every tracklet.

    Sample times are spaced fps/appearance_hz frames apart from each track's
    start; every present frame gets the vector of its nearest sample time
    (ties to the earlier sample). Inputs per sample: 32 pooled joint-angle
    features over the +-half_window frames, an 8-dim context (carry bit,
    neighbor count, nearest and second-nearest distances, body height, the
    rest reserved), and 8 gaussian noise dims; one fixed random linear map
    sends them to 1152 dims.
    """
    proj, w_map = _provider_maps(spec)
    k_carry = CLASS_INDEX["carry_object"]
    step = cfg.fps / cfg.appearance_hz

    # world positions per track for neighbor context (nan where absent)
    pos = {}
    for t in c.tracklets:
        p = np.full((c.num_frames, 3), np.nan)
        for k, e in enumerate(t.entries):
            if e is not None:
                p[t.start_frame + k] = e.pose.location
        pos[t.track_id] = p

    new_tracklets = []
    for t in c.tracklets:
        L = len(t.entries)
        present = t.present_mask()
        n_samples = max(1, math.ceil(L / step))
        sample_offsets = np.arange(n_samples) * step
        # nearest sample per offset; ties go to the earlier sample
        offs = np.arange(L)
        dist = np.abs(offs[:, None] - sample_offsets[None, :])
        nearest = np.argmin(dist, axis=1)

        rng = substream(spec.seed, "appearance", c.clip_id, t.track_id)
        theta_flat = t.pose_matrix()[:, : NUM_JOINTS * 9]  # (L, 207)
        features = {}
        for s_i in range(n_samples):
            anchor_off = int(round(sample_offsets[s_i]))
            anchor_off = min(anchor_off, L - 1)
            lo = max(0, anchor_off - spec.half_window)
            hi = min(L, anchor_off + spec.half_window + 1)
            win = np.arange(lo, hi)
            win = win[present[lo:hi]]
            if win.size:
                proj_vals = theta_flat[win] @ proj.T  # (n_win, 16)
                summary = np.concatenate([proj_vals.mean(axis=0), proj_vals.std(axis=0)])
            else:
                summary = np.zeros(2 * _POSE_SUMMARY_PROJ)

            anchor_frame = t.start_frame + anchor_off
            own = pos[t.track_id][anchor_frame]
            dists = []
            for other in c.tracklets:
                if other.track_id == t.track_id:
                    continue
                q = pos[other.track_id][anchor_frame]
                if np.all(np.isfinite(q)) and np.all(np.isfinite(own)):
                    dists.append(float(np.linalg.norm(own - q)))
            dists.sort()
            n_near = sum(1 for d in dists if d <= cfg.interaction_radius)
            labels_t = c.labels.get(t.track_id, {})
            carry = 0.0
            for f in range(t.start_frame + lo, t.start_frame + hi):
                if f in labels_t and labels_t[f][k_carry]:
                    carry = 1.0
                    break
            height = own[1] if np.isfinite(own[1]) else 0.0
            context = np.array(
                [
                    carry,
                    n_near / 4.0,
                    min(dists[0], 5.0) / 5.0 if dists else 1.0,
                    min(dists[1], 5.0) / 5.0 if len(dists) > 1 else 1.0,
                    height,
                    0.0,
                    0.0,
                    0.0,
                ]
            )
            noise = rng.normal(0.0, cfg.appearance_sigma, _NOISE_DIM)
            inp = np.concatenate([summary, context, noise])
            u = canonical_floats(w_map @ inp)
            features[s_i] = AppearanceFeature(u=u, source_frame=anchor_frame)

        entries = []
        for k, e in enumerate(t.entries):
            if e is None:
                entries.append(None)
            else:
                entries.append(PersonVector(pose=e.pose, appearance=features[int(nearest[k])]))
        new_tracklets.append(
            Tracklet(
                track_id=t.track_id,
                start_frame=t.start_frame,
                entries=tuple(entries),
                boxes=t.boxes,
            )
        )
    return Clip(
        clip_id=c.clip_id,
        fps=c.fps,
        num_frames=c.num_frames,
        tracklets=tuple(new_tracklets),
        labels=c.labels,
        class_catalog=c.class_catalog,
        pseudo_labels=c.pseudo_labels,
        occluded_labels=c.occluded_labels,
    )


# ---------------------------------------------------------------------------
# Teacher and occlusions
# ---------------------------------------------------------------------------


def teacher_pseudo_label(c: Clip, flip_p: float, seed: int) -> dict:
    """Noisy teacher: flip each ground-truth bit with probability flip_p, then
    broadcast each 1-second anchor frame's vector to all labeled frames of
    its second. Seconds without a labeled anchor keep their flipped bits.
    """
    rng = substream(seed, "teacher", c.clip_id)
    k = c.num_classes
    out = {}
    for tid in sorted(c.labels):
        per_frame = c.labels[tid]
        flipped = {}
        for f in sorted(per_frame):
            flips = rng.random(k) < flip_p
            flipped[f] = np.logical_xor(per_frame[f], flips)
        # broadcast anchors over their seconds
        final = {}
        for f in sorted(flipped):
            anchor = (f // c.fps) * c.fps
            final[f] = flipped[anchor].copy() if anchor in flipped else flipped[f].copy()
        out[tid] = final
    return out


def with_pseudo_labels(c: Clip, pseudo: dict) -> Clip:
    return Clip(
        clip_id=c.clip_id,
        fps=c.fps,
        num_frames=c.num_frames,
        tracklets=c.tracklets,
        labels=c.labels,
        class_catalog=c.class_catalog,
        pseudo_labels=pseudo,
        occluded_labels=c.occluded_labels,
    )


def apply_occlusions(c: Clip, cfg: GeneratorConfig, seed: int) -> Clip:
    """Remove seeded contiguous gap episodes from tracklets.

    Ground-truth labels on removed frames move to occluded_labels (kept but
    never evaluated); pseudo labels on removed frames are dropped. A track is
    never fully emptied.
    """
    rng = substream(seed, "occlusion", c.clip_id)
    new_tracklets = []
    labels = {tid: dict(per) for tid, per in c.labels.items()}
    pseudo = (
        {tid: dict(per) for tid, per in c.pseudo_labels.items()}
        if c.pseudo_labels is not None
        else None
    )
    occluded = (
        {tid: dict(per) for tid, per in c.occluded_labels.items()}
        if c.occluded_labels is not None
        else {}
    )

    for t in c.tracklets:
        L = len(t.entries)
        n_episodes = int(rng.poisson(cfg.occlusion_rate))
        removed = np.zeros(L, dtype=bool)
        present = t.present_mask()
        for _ in range(n_episodes):
            length = 1 + int(rng.geometric(1.0 / max(cfg.occlusion_mean_gap, 1.0)))
            length = min(length, L - 1)
            start = int(rng.integers(0, L - length + 1))
            candidate = removed.copy()
            candidate[start : start + length] = True
            # never remove every present entry
            if np.any(present & ~candidate):
                removed = candidate
        if not removed.any():
            new_tracklets.append(t)
            continue
        entries = list(t.entries)
        boxes = list(t.boxes)
        for k in np.flatnonzero(removed):
            f = t.start_frame + int(k)
            if entries[k] is not None:
                entries[k] = None
                boxes[k] = None
                if f in labels.get(t.track_id, {}):
                    occluded.setdefault(t.track_id, {})[f] = labels[t.track_id].pop(f)
                if pseudo is not None and f in pseudo.get(t.track_id, {}):
                    pseudo[t.track_id].pop(f)
        new_tracklets.append(
            Tracklet(
                track_id=t.track_id,
                start_frame=t.start_frame,
                entries=tuple(entries),
                boxes=tuple(boxes),
            )
        )

    labels = {tid: per for tid, per in labels.items() if per}
    if pseudo is not None:
        pseudo = {tid: per for tid, per in pseudo.items() if per}
    return Clip(
        clip_id=c.clip_id,
        fps=c.fps,
        num_frames=c.num_frames,
        tracklets=tuple(new_tracklets),
        labels=labels,
        class_catalog=c.class_catalog,
        pseudo_labels=pseudo,
        occluded_labels=occluded if occluded else None,
    )


def generate_dataset(cfg: GeneratorConfig, n_clips: int) -> list:
    """Generate a list of clips under cfg: scripts, appearance, teacher,
    occlusions, in that order (appearance and teacher run before entries can
    be removed)."""
    clips = []
    provider = AppearanceProviderSpec(
        seed=int(substream(cfg.seed, "appearance-provider").integers(0, 2**63 - 1)),
        half_window=max(1, cfg.fps // 2),
    )
    for i in range(n_clips):
        clip = generate_clip(cfg, i)
        if cfg.with_appearance:
            clip = synth_appearance(clip, provider, cfg)
        if cfg.with_teacher:
            clip = with_pseudo_labels(
                clip, teacher_pseudo_label(clip, cfg.teacher_flip_p, cfg.seed)
            )
        if cfg.occlusion_rate > 0:
            clip = apply_occlusions(clip, cfg, cfg.seed)
        clips.append(clip)
    return clips

"""Skeleton, per-frame pose layout, kinematic helpers and motion file I/O.

A frame is a flat vector of width D = 3J + 3J + 6J + 4:

    [ global joint positions | joint velocities | 6D joint rotations | foot contacts ]

Positions and velocities are world-space meters (y up, xz ground plane),
velocities in meters/frame. Rotations use the continuous 6D representation
(first two columns of the rotation matrix). The 4 contact features map to
``Skeleton.foot_joint_ids``.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

MOTION_FORMAT_VERSION = 1


def pose_width(J: int) -> int:
    return 12 * J + 4


@dataclass(frozen=True)
class Skeleton:
    joint_names: tuple
    parent: tuple            # -1 for the root (joint 0)
    bone_lengths: tuple      # meters, root entry unused but must be > 0
    foot_joint_ids: tuple    # 4 entries, one per contact feature
    proxy_radii: tuple       # per-joint collision sphere radius, meters

    def __post_init__(self):
        J = len(self.joint_names)
        if len(self.parent) != J or len(self.bone_lengths) != J or len(self.proxy_radii) != J:
            raise ValueError("Skeleton: field lengths disagree")
        if self.parent[0] != -1:
            raise ValueError("Skeleton: joint 0 must be the root")
        for j, p in enumerate(self.parent[1:], start=1):
            if not (0 <= p < j):
                raise ValueError(f"Skeleton: parent of joint {j} must precede it")
        if any(b <= 0 for b in self.bone_lengths) or any(r <= 0 for r in self.proxy_radii):
            raise ValueError("Skeleton: bone lengths and proxy radii must be positive")
        if len(self.foot_joint_ids) != 4:
            raise ValueError("Skeleton: exactly 4 foot contact features required")
        if any(not (0 <= f < J) for f in self.foot_joint_ids):
            raise ValueError("Skeleton: foot joint id out of range")

    @property
    def J(self) -> int:
        return len(self.joint_names)

    @property
    def D(self) -> int:
        return pose_width(self.J)


def default_skeleton() -> Skeleton:
    """Desk-scale 8-joint skeleton. Both contact features of each foot share
    the single foot joint (no separate heel/toe at this scale)."""
    return Skeleton(
        joint_names=("root", "spine", "neck", "head", "l_hand", "r_hand",
                     "l_foot", "r_foot"),
        parent=(-1, 0, 1, 2, 1, 1, 0, 0),
        bone_lengths=(0.10, 0.35, 0.25, 0.15, 0.55, 0.55, 0.90, 0.90),
        foot_joint_ids=(6, 6, 7, 7),
        proxy_radii=(0.14, 0.12, 0.08, 0.10, 0.06, 0.06, 0.07, 0.07),
    )


# -- slicing helpers (shared by numpy and autodiff paths) -------------------


def glo_slice(J: int) -> slice:
    return slice(0, 3 * J)


def vel_slice(J: int) -> slice:
    return slice(3 * J, 6 * J)


def rot_slice(J: int) -> slice:
    return slice(6 * J, 12 * J)


def foot_slice(J: int) -> slice:
    return slice(12 * J, 12 * J + 4)


class MotionSequence:
    """N frames of one person's motion, world space."""

    def __init__(self, skeleton: Skeleton, frames: np.ndarray, fps: float = 20.0,
                 person_id: int = 0):
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError("MotionSequence: frames must be 2-D (N x D)")
        if frames.shape[0] < 2:
            raise ValueError("MotionSequence: need at least 2 frames")
        if frames.shape[1] != skeleton.D:
            raise ValueError(
                f"MotionSequence: frame width {frames.shape[1]} != "
                f"12*J+4 = {skeleton.D} for J={skeleton.J}")
        self.skeleton = skeleton
        self.frames = frames
        self.fps = float(fps)
        self.person_id = int(person_id)

    @property
    def N(self) -> int:
        return self.frames.shape[0]

    @property
    def D(self) -> int:
        return self.frames.shape[1]

    def copy(self) -> "MotionSequence":
        return MotionSequence(self.skeleton, self.frames.copy(), self.fps,
                              self.person_id)

    def joint_positions(self) -> np.ndarray:
        """(N, J, 3) global joint positions."""
        J = self.skeleton.J
        return self.frames[:, glo_slice(J)].reshape(self.N, J, 3)

    def joint_velocities(self) -> np.ndarray:
        J = self.skeleton.J
        return self.frames[:, vel_slice(J)].reshape(self.N, J, 3)

    def joint_rotations(self) -> np.ndarray:
        """(N, J, 6) local rotations in 6D representation."""
        J = self.skeleton.J
        return self.frames[:, rot_slice(J)].reshape(self.N, J, 6)

    def foot_contacts(self) -> np.ndarray:
        J = self.skeleton.J
        return self.frames[:, foot_slice(J)]

    def root_trajectory(self) -> np.ndarray:
        return self.joint_positions()[:, 0, :]

    def translated(self, offset) -> "MotionSequence":
        """Rigid translation of all joints (velocities/rotations untouched)."""
        offset = np.asarray(offset, dtype=np.float64)
        J = self.skeleton.J
        out = self.frames.copy()
        out[:, glo_slice(J)] = (self.joint_positions() + offset).reshape(self.N, -1)
        return MotionSequence(self.skeleton, out, self.fps, self.person_id)


def root_position(seq: MotionSequence, n: int) -> np.ndarray:
    if not (0 <= n < seq.N):
        raise IndexError(f"root_position: frame {n} out of range [0, {seq.N})")
    return seq.joint_positions()[n, 0, :]


def gram_schmidt_6d(r6: np.ndarray) -> np.ndarray:
    """6D rotation -> 3x3 orthonormal right-handed matrix (columns)."""
    r6 = np.asarray(r6, dtype=np.float64)
    a, b = r6[:3], r6[3:]
    na = np.linalg.norm(a)
    if na < 1e-12:
        raise ValueError("gram_schmidt_6d: degenerate first axis")
    c1 = a / na
    b2 = b - np.dot(b, c1) * c1
    nb = np.linalg.norm(b2)
    if nb < 1e-12:
        raise ValueError("gram_schmidt_6d: degenerate second axis")
    c2 = b2 / nb
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=1)


def rotation_to_6d(R: np.ndarray) -> np.ndarray:
    return np.concatenate([R[:, 0], R[:, 1]])


def yaw_rotation(theta: float) -> np.ndarray:
    """Rotation about +y whose forward axis (3rd column) is
    (cos theta, 0, sin theta); theta=pi/2 is the identity's forward +z."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[s, 0.0, c],
                     [0.0, 1.0, 0.0],
                     [-c, 0.0, s]])


def facing_direction(seq: MotionSequence, n: int) -> np.ndarray:
    """Unit ground-plane (x, z) facing direction at frame n, from the root's
    6D rotation. Degenerate projections fall back to the previous frame."""
    if not (0 <= n < seq.N):
        raise IndexError(f"facing_direction: frame {n} out of range")
    rots = seq.joint_rotations()
    for k in range(n, -1, -1):
        R = gram_schmidt_6d(rots[k, 0])
        fwd = R[:, 2]
        d = np.array([fwd[0], fwd[2]])
        nd = np.linalg.norm(d)
        if nd >= 1e-6:
            return d / nd
        if k == 0:
            raise ValueError("facing_direction: degenerate at frame 0, no fallback")
    raise AssertionError("unreachable")


def joint_acceleration(seq: MotionSequence) -> np.ndarray:
    """(N-2, J, 3) second difference of joint positions, meters/frame^2."""
    if seq.N < 3:
        raise ValueError("joint_acceleration: need at least 3 frames")
    p = seq.joint_positions()
    return p[2:] - 2.0 * p[1:-1] + p[:-2]


def repair_velocities(seq: MotionSequence) -> MotionSequence:
    """Rewrite the velocity channels as backward finite differences of the
    stored positions (frame 0 velocity = 0). Applied to clean outputs only."""
    J = seq.skeleton.J
    p = seq.joint_positions()
    v = np.zeros_like(p)
    v[1:] = p[1:] - p[:-1]
    out = seq.frames.copy()
    out[:, vel_slice(J)] = v.reshape(seq.N, -1)
    return MotionSequence(seq.skeleton, out, seq.fps, seq.person_id)


# -- normalization ----------------------------------------------------------


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("NormalizationStats: mean/std must be matching 1-D")
        if np.any(self.std <= 1e-8):
            raise ValueError("NormalizationStats: std underflow (<= 1e-8)")

    @property
    def D(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_frames(cls, frames: np.ndarray, min_std: float = 1e-6):
        frames = np.asarray(frames, dtype=np.float64).reshape(-1, frames.shape[-1])
        return cls(frames.mean(axis=0), np.maximum(frames.std(axis=0), min_std))

    @classmethod
    def reference(cls, skeleton: Skeleton):
        """Hand-set stats for the analytic pipeline: roots spread over a few
        meters, small velocities, O(1) rotation components."""
        J = skeleton.J
        mean = np.zeros(skeleton.D)
        std = np.ones(skeleton.D)
        pos = np.zeros((J, 3))
        pos[:, 1] = 0.9            # typical joint height
        mean[glo_slice(J)] = pos.reshape(-1)
        std[glo_slice(J)] = 1.5    # room-scale position spread
        std[vel_slice(J)] = 0.08
        std[rot_slice(J)] = 0.7
        mean[foot_slice(J)] = 0.5
        std[foot_slice(J)] = 0.5
        return cls(mean, std)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, d: dict):
        return cls(np.array(d["mean"]), np.array(d["std"]))


def normalize(frames, stats: NormalizationStats):
    """(x - mean) / std. Works on numpy arrays and autodiff Vars."""
    if isinstance(frames, ad.Var):
        mu = ad.broadcast_to(ad.constant(stats.mean), frames.shape)
        sd = ad.broadcast_to(ad.constant(stats.std), frames.shape)
        return (frames - mu) / sd
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] != stats.D:
        raise ValueError("normalize: dimension mismatch")
    return (frames - stats.mean) / stats.std


def denormalize(frames, stats: NormalizationStats):
    if isinstance(frames, ad.Var):
        mu = ad.broadcast_to(ad.constant(stats.mean), frames.shape)
        sd = ad.broadcast_to(ad.constant(stats.std), frames.shape)
        return frames * sd + mu
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] != stats.D:
        raise ValueError("denormalize: dimension mismatch")
    return frames * stats.std + stats.mean


# -- motion file format ------------------------------------------------------


def write_motion(seq: MotionSequence, path) -> None:
    """Header line (JSON) + one whitespace-separated row of D reals per frame.
    Floats use repr, so read(write(x)) round-trips bit-exactly."""
    header = {
        "version": MOTION_FORMAT_VERSION,
        "J": seq.skeleton.J,
        "fps": seq.fps,
        "N": seq.N,
        "joint_names": list(seq.skeleton.joint_names),
        "person_id": seq.person_id,
    }
    buf = io.StringIO()
    buf.write(json.dumps(header) + "\n")
    for row in seq.frames:
        buf.write(" ".join(repr(float(v)) for v in row) + "\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())


def read_motion(path, skeleton: Skeleton | None = None) -> MotionSequence:
    with open(path) as f:
        header = json.loads(f.readline())
        if header.get("version") != MOTION_FORMAT_VERSION:
            raise ValueError(f"read_motion: unsupported version {header.get('version')}")
        rows = [
            np.array([float(tok) for tok in line.split()])
            for line in f
            if line.strip()
        ]
    frames = np.stack(rows)
    if frames.shape[0] != header["N"]:
        raise ValueError("read_motion: frame count disagrees with header")
    if skeleton is None:
        skeleton = default_skeleton()
    if header["J"] != skeleton.J or list(skeleton.joint_names) != header["joint_names"]:
        raise ValueError("read_motion: skeleton does not match file header")
    return MotionSequence(skeleton, frames, fps=header["fps"],
                          person_id=header["person_id"])

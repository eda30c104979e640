"""Evaluation metrics for multi-person motion.

All metrics operate on world-space MotionSequences and are pure functions;
summation order is fixed so values match naive loop oracles exactly.
Units: meters, frames (accelerations are meters/frame^2), volumes cm^3.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .motion import MotionSequence, facing_direction, joint_acceleration


def _root_xyz(seq: MotionSequence) -> np.ndarray:
    return seq.root_trajectory()


def pair_overlaps(seq1: MotionSequence, seq2: MotionSequence,
                  threshold: float = 0.25) -> np.ndarray:
    """Per-frame booleans: root distance below the threshold."""
    r1, r2 = _root_xyz(seq1), _root_xyz(seq2)
    if r1.shape != r2.shape:
        raise ValueError("pair_overlaps: sequences differ in length")
    d = np.linalg.norm(r1 - r2, axis=1)
    return d < threshold


def run_has_overlap(sequences, threshold: float = 0.25) -> bool:
    """Any pair at any frame closer than the threshold at the roots."""
    seqs = list(sequences.values()) if isinstance(sequences, dict) else list(sequences)
    for i in range(len(seqs)):
        for j in range(i + 1, len(seqs)):
            if pair_overlaps(seqs[i], seqs[j], threshold).any():
                return True
    return False


def overlap_rate(runs, threshold: float = 0.25) -> float:
    """Fraction of runs where any pair at any frame overlaps."""
    if not runs:
        raise ValueError("overlap_rate: need at least one run")
    return sum(run_has_overlap(r, threshold) for r in runs) / len(runs)


def foot_skate(seq: MotionSequence, h_contact: float = 0.05,
               flag_threshold: float = 0.5) -> float:
    """Mean horizontal foot displacement per frame over contact frames.

    A foot is in contact at frame n when its height is below `h_contact`
    and its contact flag exceeds `flag_threshold`. Displacement is measured
    from the previous frame; frame 0 never counts. Returns 0 when no foot
    is ever in contact.
    """
    p = seq.joint_positions()
    flags = seq.foot_contacts()
    slides = []
    for fi, j in enumerate(seq.skeleton.foot_joint_ids):
        for n in range(1, seq.N):
            if p[n, j, 1] < h_contact and flags[n, fi] > flag_threshold:
                dx = p[n, j, 0] - p[n - 1, j, 0]
                dz = p[n, j, 2] - p[n - 1, j, 2]
                slides.append(np.hypot(dx, dz))
    return float(np.mean(slides)) if slides else 0.0


def max_acceleration(seq: MotionSequence) -> float:
    """Max over frames and joints of the acceleration magnitude."""
    acc = joint_acceleration(seq)
    return float(np.linalg.norm(acc, axis=2).max())


def median_acceleration(seq: MotionSequence) -> float:
    acc = joint_acceleration(seq)
    return float(np.median(np.linalg.norm(acc, axis=2)))


def sphere_lens_volume(r1: float, r2: float, d: float) -> float:
    """Intersection volume of two spheres, closed form, input units cubed."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        r = min(r1, r2)
        return 4.0 / 3.0 * np.pi * r**3
    return (np.pi * (r1 + r2 - d) ** 2 *
            (d * d + 2.0 * d * (r1 + r2) - 3.0 * (r1 - r2) ** 2) / (12.0 * d))


def proxy_penetration_volume(sequences) -> float:
    """Max over frames of the summed cross-person joint-sphere intersection
    volume, in cm^3. Spheres use the skeleton's per-joint proxy radii."""
    seqs = list(sequences.values()) if isinstance(sequences, dict) else list(sequences)
    if len(seqs) < 2:
        return 0.0
    N = seqs[0].N
    radii = [np.asarray(s.skeleton.proxy_radii) for s in seqs]
    pos = [s.joint_positions() for s in seqs]
    worst = 0.0
    for n in range(N):
        total = 0.0
        for a in range(len(seqs)):
            for b in range(a + 1, len(seqs)):
                for i in range(pos[a].shape[1]):
                    for j in range(pos[b].shape[1]):
                        d = float(np.linalg.norm(pos[a][n, i] - pos[b][n, j]))
                        total += sphere_lens_volume(radii[a][i], radii[b][j], d)
        worst = max(worst, total)
    return worst * 1e6  # m^3 -> cm^3


def pose_diversity(runs) -> float:
    """Mean pairwise L2 distance between flattened runs; regression
    tracking only, not comparable to learned diversity metrics."""
    flats = []
    for r in runs:
        seqs = list(r.values()) if isinstance(r, dict) else list(r)
        flats.append(np.concatenate([s.frames.ravel() for s in seqs]))
    if len(flats) < 2:
        return 0.0
    total, count = 0.0, 0
    for i in range(len(flats)):
        for j in range(i + 1, len(flats)):
            total += float(np.linalg.norm(flats[i] - flats[j]))
            count += 1
    return total / count


# -- constraint violation harness ---------------------------------------------


@dataclass
class ScenarioTargets:
    """Ground-truth constraints of one evaluation scenario. Each field is
    optional; omitted kinds never register violations."""
    root_targets: dict = field(default_factory=dict)
    # person -> list of (frame, xyz target)
    regions: dict = field(default_factory=dict)
    # person -> (lower xyz, upper xyz, joint ids or None)
    orientations: dict = field(default_factory=dict)
    # person -> list of (frame, unit xz direction)
    overlap_threshold: float = 0.25


@dataclass
class ViolationReport:
    pos_err_rate: float
    overlap_rate: float
    region_viol_rate: float
    orient_err_rate: float
    pos_threshold: float = 0.20
    region_threshold: float = 0.10
    orient_threshold_deg: float = 20.0

    def __post_init__(self):
        for r in (self.pos_err_rate, self.overlap_rate,
                  self.region_viol_rate, self.orient_err_rate):
            if not (0.0 <= r <= 1.0):
                raise ValueError("ViolationReport: rate outside [0, 1]")

    def rates(self) -> dict:
        return {"position": self.pos_err_rate, "overlap": self.overlap_rate,
                "region": self.region_viol_rate,
                "orientation": self.orient_err_rate}


def _run_violations(run, targets: ScenarioTargets,
                    pos_thr: float, region_thr: float,
                    orient_deg: float) -> dict:
    seqs = run if isinstance(run, dict) else dict(enumerate(run))
    out = {"position": False, "overlap": False, "region": False,
           "orientation": False}
    out["overlap"] = run_has_overlap(seqs, targets.overlap_threshold)
    for pid, entries in targets.root_targets.items():
        roots = _root_xyz(seqs[pid])
        for frame, tgt in entries:
            if np.linalg.norm(roots[frame] - np.asarray(tgt)) > pos_thr:
                out["position"] = True
    for pid, (lower, upper, joints) in targets.regions.items():
        p = seqs[pid].joint_positions()
        joints = range(p.shape[1]) if joints is None else joints
        lower, upper = np.asarray(lower), np.asarray(upper)
        for j in joints:
            excess = np.maximum(lower - p[:, j, :], 0.0) + \
                np.maximum(p[:, j, :] - upper, 0.0)
            if np.linalg.norm(excess, axis=1).max() > region_thr:
                out["region"] = True
    cos_thr = np.cos(np.deg2rad(orient_deg))
    for pid, entries in targets.orientations.items():
        for frame, d_tgt in entries:
            d_tgt = np.asarray(d_tgt, dtype=np.float64)
            d_tgt = d_tgt / np.linalg.norm(d_tgt)
            d = facing_direction(seqs[pid], frame)
            if float(d @ d_tgt) < cos_thr:
                out["orientation"] = True
    return out


def ablation_violations(runs, targets: ScenarioTargets,
                        pos_threshold: float = 0.20,
                        region_threshold: float = 0.10,
                        orient_threshold_deg: float = 20.0) -> ViolationReport:
    """Per-run violation booleans aggregated to rates."""
    if not runs:
        raise ValueError("ablation_violations: need at least one run")
    counts = {"position": 0, "overlap": 0, "region": 0, "orientation": 0}
    for run in runs:
        v = _run_violations(run, targets, pos_threshold, region_threshold,
                            orient_threshold_deg)
        for k in counts:
            counts[k] += bool(v[k])
    n = len(runs)
    return ViolationReport(counts["position"] / n, counts["overlap"] / n,
                           counts["region"] / n, counts["orientation"] / n,
                           pos_threshold, region_threshold,
                           orient_threshold_deg)


# -- pairwise decomposition & reporting ----------------------------------------


def pairwise_decompose(sequences: dict, pivot) -> list:
    """Two-person views (pivot, p) for all p != pivot, for pair metrics."""
    if pivot not in sequences:
        raise KeyError(f"pairwise_decompose: pivot {pivot} not in result")
    if len(sequences) < 2:
        raise ValueError("pairwise_decompose: need at least two persons")
    return [{pivot: sequences[pivot], p: s}
            for p, s in sequences.items() if p != pivot]


@dataclass
class MetricReport:
    overlap_rate: float
    foot_skate: float
    max_acc: float
    proxy_pen_vol: float
    diversity: float
    n_runs: int
    per_run: list = field(default_factory=list)   # dicts, one per run

    def __post_init__(self):
        if not (0.0 <= self.overlap_rate <= 1.0):
            raise ValueError("MetricReport: overlap_rate outside [0, 1]")
        if self.proxy_pen_vol < 0:
            raise ValueError("MetricReport: negative volume")


def evaluate_runs(runs, overlap_threshold: float = 0.25) -> MetricReport:
    """Aggregate the standard metric set over a list of runs (each a dict
    person id -> MotionSequence)."""
    if not runs:
        raise ValueError("evaluate_runs: need at least one run")
    per_run = []
    for ri, run in enumerate(runs):
        seqs = run if isinstance(run, dict) else dict(enumerate(run))
        per_run.append({
            "run": ri,
            "overlap": float(run_has_overlap(seqs, overlap_threshold)),
            "foot_skate": float(np.mean([foot_skate(s) for s in seqs.values()])),
            "max_acc": float(max(max_acceleration(s) for s in seqs.values())),
            "pen_vol": proxy_penetration_volume(seqs),
        })
    return MetricReport(
        overlap_rate=float(np.mean([r["overlap"] for r in per_run])),
        foot_skate=float(np.mean([r["foot_skate"] for r in per_run])),
        max_acc=float(np.mean([r["max_acc"] for r in per_run])),
        proxy_pen_vol=float(np.mean([r["pen_vol"] for r in per_run])),
        diversity=pose_diversity(runs),
        n_runs=len(runs),
        per_run=per_run,
    )


def write_report_csv(report: MetricReport, path) -> None:
    """One row per run plus an aggregate row."""
    cols = ["run", "overlap", "foot_skate", "max_acc", "pen_vol"]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for row in report.per_run:
            w.writerow([row[c] for c in cols])
        w.writerow(["aggregate", report.overlap_rate, report.foot_skate,
                    report.max_acc, report.proxy_pen_vol])

"""Sequential multi-person motion composition with initial-noise optimization.

Pipeline, per scene:

1. first pair: joint sample, then per-person noise refinement against the
   partner's original motion, then joint regeneration from both refined
   noises;
2. each additional person: optimize its initial noise so the masked
   conditional sample (reference slot pinned) minimizes the configured
   penalties against the chosen set of already-generated persons;
3. optional long-duration extension by inpainting, with a boundary
   (acceleration) penalty over the seam window and per-segment label
   switching.

Previously generated sequences are never modified: later steps read them
as constants.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .diffusion import DiffusionSchedule, FrameMask, ddim_sample, \
    inpaint_extend, masked_sample
from .motion import MotionSequence, NormalizationStats, Skeleton, denormalize, \
    normalize, repair_velocities
from .penalties import PenaltyConfig, aggregate
from .scripts import InteractionLabel


@dataclass
class OptimizerConfig:
    lr: float = 0.003
    max_steps: int = 100
    early_stop_loss: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float | None = None
    lr_decay: float = 1.0          # multiplicative per step; 1.0 = constant

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("OptimizerConfig: lr must be positive")
        if self.max_steps < 1:
            raise ValueError("OptimizerConfig: max_steps must be >= 1")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ValueError("OptimizerConfig: lr_decay must be in (0, 1]")

    @classmethod
    def from_json(cls, d: dict) -> "OptimizerConfig":
        return cls(**{k: d[k] for k in
                      ("lr", "max_steps", "early_stop_loss", "beta1", "beta2",
                       "eps", "grad_clip", "lr_decay") if k in d})


@dataclass
class SceneStep:
    target: int                    # person id being generated
    reference: int                 # pivot person id (== target for step 1 slot)
    label: InteractionLabel
    opt_subset: tuple = ()         # already-generated ids entering the loss
    penalties: tuple = ()          # PenaltyConfig list


@dataclass
class ExtensionSegment:
    window: int                    # frames in the new window
    kept: int                      # leading frames clamped to the references
    pairs: tuple = ()              # (person_a, person_b, InteractionLabel)
    penalties: tuple = ()          # extra penalties besides the boundary term
    boundary_frames: int = 25
    boundary_weight: float = 1.0
    mode: str = "noised"


@dataclass
class SceneSpec:
    participants: tuple
    first_label: InteractionLabel
    first_penalties: tuple = ()
    steps: tuple = ()              # SceneStep for persons 3..M
    extension: tuple = ()          # ExtensionSegment list
    seed: int = 0
    n_frames: int = 32

    def __post_init__(self):
        if len(self.participants) < 2:
            raise ValueError("SceneSpec: need at least two participants")
        generated = set(self.participants[:2])
        for step in self.steps:
            if step.reference not in generated:
                raise ValueError(
                    f"SceneSpec: reference {step.reference} not yet generated "
                    f"when adding {step.target}")
            if not set(step.opt_subset) <= generated:
                raise ValueError("SceneSpec: opt_subset contains ungenerated ids")
            generated.add(step.target)
        if set(self.participants) != generated:
            raise ValueError("SceneSpec: steps do not cover the participants")


@dataclass
class StepRecord:
    person: int
    losses: list = field(default_factory=list)       # per-evaluation total
    breakdowns: list = field(default_factory=list)   # per-evaluation LossBreakdown
    best_loss: float = float("inf")
    evaluations: int = 0
    wall_seconds: float = 0.0


@dataclass
class CompositionResult:
    sequences: dict                 # person id -> MotionSequence
    records: list = field(default_factory=list)
    seed: int = 0


class OptimizationDiverged(RuntimeError):
    def __init__(self, msg, breakdown=None):
        super().__init__(msg)
        self.breakdown = breakdown


def optimize_noise(objective, x_init: np.ndarray, config: OptimizerConfig):
    """Adam on the initial noise. `objective(x: Var) -> (loss Var, breakdown)`.

    Returns (best x seen, StepRecord). Stops early once an evaluation's
    total loss drops below `early_stop_loss`; the reported noise is always
    the best-so-far iterate, not the last one.
    """
    record = StepRecord(person=-1)
    t0 = time.perf_counter()
    x = np.array(x_init, dtype=np.float64)
    best_x = x.copy()
    opt = ad.Adam([x.shape], lr=config.lr, beta1=config.beta1,
                  beta2=config.beta2, eps=config.eps)

    def evaluate(arr):
        var = ad.Var(arr)
        loss, breakdown = objective(var)
        val = float(loss.value)
        if not np.isfinite(val):
            raise OptimizationDiverged("loss became non-finite", breakdown)
        record.losses.append(val)
        record.breakdowns.append(breakdown)
        record.evaluations += 1
        return var, loss, val

    var, loss, val = evaluate(x)
    record.best_loss = val
    for _ in range(config.max_steps):
        if val < config.early_stop_loss:
            break
        (g,) = ad.grad(loss, [var])
        if not np.all(np.isfinite(g)):
            raise OptimizationDiverged("gradient became non-finite",
                                       record.breakdowns[-1])
        if config.grad_clip is not None:
            gn = np.linalg.norm(g)
            if gn > config.grad_clip:
                g = g * (config.grad_clip / gn)
        (x,) = opt.step([x], [g])
        opt.lr *= config.lr_decay
        var, loss, val = evaluate(x)
        if val < record.best_loss:
            record.best_loss = val
            best_x = x.copy()
    record.wall_seconds = time.perf_counter() - t0
    return best_x, record


class Composer:
    """Binds a prior, schedule, normalization stats and optimizer config."""

    def __init__(self, prior, schedule: DiffusionSchedule,
                 stats: NormalizationStats, skeleton: Skeleton,
                 opt_config: OptimizerConfig | None = None,
                 fps: float = 20.0, ground_plane_distance: bool = False):
        self.prior = prior
        self.schedule = schedule
        self.stats = stats
        self.skeleton = skeleton
        self.opt = opt_config or OptimizerConfig()
        self.fps = fps
        self.ground_plane = ground_plane_distance

    # seeds: one master seed expands to independent substreams per step so
    # adding a person never perturbs earlier draws
    @staticmethod
    def _substream(seed: int, *key) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence((seed,) + key))

    def _world(self, x_norm):
        return denormalize(x_norm, self.stats)

    def _to_sequence(self, x_norm_value: np.ndarray, person_id: int) -> MotionSequence:
        world = denormalize(x_norm_value, self.stats)
        seq = MotionSequence(self.skeleton, world, fps=self.fps,
                             person_id=person_id)
        return repair_velocities(seq)

    def _loss_fn(self, penalties, world_vars: dict):
        return aggregate(penalties, world_vars, self.skeleton,
                         self.ground_plane)

    def generate_first_pair(self, spec: SceneSpec):
        """Algorithm: draw both persons' initial noise, optimize the stacked
        noise jointly through the coupled sampler, regenerate from the best
        iterate. The loss is evaluated on the same joint sample the final
        regeneration produces, so the reported loss is the true loss."""
        p1, p2 = spec.participants[:2]
        label = spec.first_label
        N, D = spec.n_frames, self.skeleton.D
        rng1 = self._substream(spec.seed, 0, p1)
        rng2 = self._substream(spec.seed, 0, p2)
        xT = np.stack([rng1.standard_normal((N, D)),
                       rng2.standard_normal((N, D))])
        pens = _default_pair_subjects(spec.first_penalties, p1, p2)
        if pens:
            def objective(var):
                o1, o2 = ddim_sample(self.prior, self.schedule,
                                     (var[0, :, :], var[1, :, :]), label)
                world = {p1: self._world(o1), p2: self._world(o2)}
                return self._loss_fn(pens, world)

            xT, rec = optimize_noise(objective, xT, self.opt)
            rec.person = p1
        else:
            rec = StepRecord(person=p1)
        f1, f2 = ddim_sample(self.prior, self.schedule,
                             (ad.constant(xT[0]), ad.constant(xT[1])), label)
        seqs = {p1: self._to_sequence(f1.value, p1),
                p2: self._to_sequence(f2.value, p2)}
        return seqs, [rec]

    def add_person(self, step: SceneStep, sequences: dict, seed: int):
        """Optimize the new person's noise through the masked sampler, then
        generate with the optimized noise. Existing sequences are constants."""
        N, D = next(iter(sequences.values())).N, self.skeleton.D
        ref_seq = sequences[step.reference]
        ref_norm = normalize(ref_seq.frames, self.stats)
        rng = self._substream(seed, 0, step.target)
        xT = rng.standard_normal((N, D))
        mask_seed = int(self._substream(seed, 1, step.target).integers(2**31))
        fixed_world = {i: sequences[i].frames for i in step.opt_subset}

        rec = StepRecord(person=step.target)
        if step.penalties:
            def objective(var):
                out = masked_sample(self.prior, self.schedule, var, ref_norm,
                                    step.label, mask_seed, target_slot=0)
                world = dict(fixed_world)
                world[step.target] = self._world(out)
                return self._loss_fn(step.penalties, world)

            xT, rec = optimize_noise(objective, xT, self.opt)
            rec.person = step.target
        out = masked_sample(self.prior, self.schedule, ad.constant(xT),
                            ref_norm, step.label, mask_seed, target_slot=0)
        return self._to_sequence(out.value, step.target), rec

    def compose(self, spec: SceneSpec) -> CompositionResult:
        sequences, records = self.generate_first_pair(spec)
        for step in spec.steps:
            before = {i: s.frames.tobytes() for i, s in sequences.items()}
            seq, rec = self.add_person(step, sequences, spec.seed)
            for i, h in before.items():
                assert sequences[i].frames.tobytes() == h, \
                    f"history mutated for person {i}"
            sequences[step.target] = seq
            records.append(rec)
        result = CompositionResult(sequences=sequences, records=records,
                                   seed=spec.seed)
        if spec.extension:
            result = self.extend(result, spec.extension, spec.seed)
        return result

    def extend(self, result: CompositionResult, segments, seed: int):
        """Inpainting-based extension; per segment, each listed pair is
        jointly re-sampled over a fresh window whose first `kept` frames are
        clamped to the tail of the current sequences."""
        sequences = dict(result.sequences)
        records = list(result.records)
        for si, seg in enumerate(segments):
            if seg.window <= seg.kept:
                raise ValueError("extension window must exceed kept frames")
            covered = [p for pair in seg.pairs for p in pair[:2]]
            if len(covered) != len(set(covered)):
                raise ValueError(
                    f"extension segment {si}: a person appears in two pairs")
            new_tails = {}
            for pi, (a, b, label) in enumerate(seg.pairs):
                kept_pair = []
                for pid in (a, b):
                    tail = sequences[pid].frames[-seg.kept:]
                    kept_pair.append(normalize(tail, self.stats))
                mask = FrameMask(seg.window, seg.kept)
                rng = self._substream(seed, 2, si, pi)
                xT = rng.standard_normal((2, seg.window, self.skeleton.D))
                zseed = int(self._substream(seed, 3, si, pi).integers(2**31))

                pens = list(seg.penalties)
                for pid in (a, b):
                    pens.append(PenaltyConfig(
                        kind="boundary", weight=seg.boundary_weight,
                        subjects=(pid,),
                        # start one frame before the seam: the acceleration
                        # centered on the last kept frame already depends on
                        # the first generated frame
                        params={"window_start": max(seg.kept - 1, 0),
                                "window_len": seg.boundary_frames}))

                def objective(var, _kept=kept_pair, _a=a, _b=b, _label=label,
                              _mask=mask, _pens=pens):
                    o1, o2 = inpaint_extend(
                        self.prior, self.schedule,
                        (var[0, :, :], var[1, :, :]), _kept, _mask, _label,
                        zseed, mode=seg.mode)
                    world = {_a: self._world(o1), _b: self._world(o2)}
                    return self._loss_fn(_pens, world)

                best, rec = optimize_noise(objective, xT, self.opt)
                rec.person = a
                records.append(rec)
                bv = ad.constant(best)
                o1, o2 = inpaint_extend(self.prior, self.schedule,
                                        (bv[0, :, :], bv[1, :, :]), kept_pair,
                                        mask, label, zseed, mode=seg.mode)
                for pid, out in ((a, o1), (b, o2)):
                    tail_world = denormalize(out.value, self.stats)
                    new_tails[pid] = tail_world[seg.kept:]
            # persons not listed in any pair keep their current sequences
            for pid, tail in new_tails.items():
                frames = np.concatenate([sequences[pid].frames, tail], axis=0)
                seq = MotionSequence(self.skeleton, frames, fps=self.fps,
                                     person_id=pid)
                sequences[pid] = repair_velocities(seq)
        return CompositionResult(sequences=sequences, records=records,
                                 seed=result.seed)


def _default_pair_subjects(pens, p1, p2):
    """First pair: terms with empty subjects act on both persons, pair
    kinds as one (p1, p2) term and single-person kinds as one term each."""
    out = []
    for cfg in pens:
        if cfg.subjects:
            out.append(cfg)
        elif cfg.kind in ("overlap", "relative"):
            out.append(PenaltyConfig(cfg.kind, cfg.weight, (p1, p2),
                                     cfg.frames, cfg.params))
        else:
            for pid in (p1, p2):
                out.append(PenaltyConfig(cfg.kind, cfg.weight, (pid,),
                                         cfg.frames, cfg.params))
    return tuple(out)

"""Two-person composition with and without an overlap penalty.

Generates the same seeded scene twice: once by plain sampling and once with
the initial noise optimized against a root-distance overlap penalty, then
compares the closest approach of the two bodies.
"""

import numpy as np

from groupmotion.composer import Composer, OptimizerConfig, SceneSpec
from groupmotion.diffusion import DiffusionSchedule
from groupmotion.motion import NormalizationStats, default_skeleton
from groupmotion.penalties import PenaltyConfig
from groupmotion.priors import AnalyticPrior
from groupmotion.scripts import label_by_name
from groupmotion import metrics

skeleton = default_skeleton()
stats = NormalizationStats.reference(skeleton)
schedule = DiffusionSchedule(t_train=50, ddim_steps=5)
prior = AnalyticPrior(schedule, stats, skeleton)
composer = Composer(prior, schedule, stats, skeleton, OptimizerConfig())

label = label_by_name("close-approach")
overlap = PenaltyConfig(kind="overlap", weight=1.0, params={"delta": 0.30})

for seed in (0, 1, 2):
    runs = {}
    for name, pens in (("plain", ()), ("optimized", (overlap,))):
        spec = SceneSpec(participants=(1, 2), first_label=label,
                         first_penalties=pens, seed=seed, n_frames=32)
        result = composer.compose(spec)
        runs[name] = result
        r1 = result.sequences[1].root_trajectory()
        r2 = result.sequences[2].root_trajectory()
        closest = np.linalg.norm(r1 - r2, axis=1).min()
        hit = metrics.run_has_overlap(result.sequences)
        print(f"seed {seed} {name:>9}: closest approach {closest:.3f} m, "
              f"overlap(0.25 m) {'yes' if hit else 'no'}")
    rec = runs["optimized"].records[0]
    print(f"          loss {rec.losses[0]:.3e} -> {rec.best_loss:.3e} "
          f"in {rec.evaluations} evaluations")

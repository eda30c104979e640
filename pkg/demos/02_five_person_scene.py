"""Five-person scene built sequentially along a pivot chain.

The first pair is generated jointly; persons 3..5 are added one at a time
by masked sampling conditioned on person 1, each with overlap penalties
against everyone already in the scene. Earlier persons are never modified.
"""

import numpy as np

from groupmotion.composer import Composer, OptimizerConfig, SceneSpec, SceneStep
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


def scene(seed):
    steps = []
    for k in (3, 4, 5):
        others = tuple(range(1, k))
        steps.append(SceneStep(
            target=k, reference=1, label=label_by_name("approach"),
            opt_subset=others,
            penalties=tuple(PenaltyConfig("overlap", 1.0, (k, j),
                                          params={"delta": 0.30})
                            for j in others)))
    return SceneSpec(participants=(1, 2, 3, 4, 5),
                     first_label=label_by_name("close-approach"),
                     first_penalties=(PenaltyConfig("overlap", 1.0, (1, 2),
                                                    params={"delta": 0.30}),),
                     steps=tuple(steps), seed=seed, n_frames=32)


runs = [composer.compose(scene(s)).sequences for s in range(5)]

print("pairwise overlap rate (0.25 m) over 5 seeds:")
for view in metrics.pairwise_decompose(runs[0], pivot=1):
    a, b = sorted(view)
    rate = metrics.overlap_rate([{a: r[a], b: r[b]} for r in runs])
    print(f"  pivot pair ({a},{b}): {rate:.2f}")

skate = np.mean([metrics.foot_skate(s) for r in runs for s in r.values()])
acc = np.mean([metrics.max_acceleration(s) for r in runs for s in r.values()])
print(f"mean foot skate {skate:.4f} m/frame, mean max acc {acc:.4f} m/frame^2")

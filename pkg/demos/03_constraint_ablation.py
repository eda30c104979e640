"""Stacking penalties one at a time and watching violations disappear.

For a fixed seed, derives a root goal, a region box and a facing goal that
the unconstrained scene violates, then re-composes with a growing penalty
set and reports each constraint's violation state.
"""

import numpy as np

from groupmotion.composer import Composer, OptimizerConfig, SceneSpec
from groupmotion.diffusion import DiffusionSchedule
from groupmotion.motion import (NormalizationStats, default_skeleton,
                                facing_direction)
from groupmotion.penalties import PenaltyConfig
from groupmotion.priors import AnalyticPrior
from groupmotion.scripts import label_by_name
from groupmotion import metrics

skeleton = default_skeleton()
stats = NormalizationStats.reference(skeleton)
schedule = DiffusionSchedule(t_train=50, ddim_steps=5)
prior = AnalyticPrior(schedule, stats, skeleton)
composer = Composer(prior, schedule, stats, skeleton, OptimizerConfig())

N, SEED = 32, 4
label = label_by_name("close-approach")


def compose(pens):
    spec = SceneSpec(participants=(1, 2), first_label=label,
                     first_penalties=tuple(pens), seed=SEED, n_frames=N)
    return composer.compose(spec).sequences


# goals shifted away from wherever the unconstrained run ends up
base = compose(())
root_goal = base[1].root_trajectory()[-1] + np.array([0.35, 0.0, 0.0])
p2 = base[2].joint_positions()
lower = p2.min(axis=(0, 1)) + np.array([0.30, 0.0, 0.0])
lower[1] = -0.5
upper = p2.max(axis=(0, 1)) + np.array([0.50, 0.0, 0.50])
upper[1] = 2.5
face = facing_direction(base[1], N - 1)
ang = np.deg2rad(40.0)
face_goal = np.array([np.cos(ang) * face[0] - np.sin(ang) * face[1],
                      np.sin(ang) * face[0] + np.cos(ang) * face[1]])

targets = metrics.ScenarioTargets(
    root_targets={1: [(N - 1, root_goal)]},
    regions={2: (lower, upper, None)},
    orientations={1: [(N - 1, face_goal)]})

penalties = [
    ("root", PenaltyConfig("root", 1.0, (1,), frames=np.array([N - 1]),
                           params={"targets": root_goal.reshape(1, 3)})),
    ("overlap", PenaltyConfig("overlap", 1.0, (1, 2),
                              params={"delta": 0.30})),
    ("region", PenaltyConfig("region", 1.0, (2,),
                             params={"lower": lower, "upper": upper})),
    ("orientation", PenaltyConfig("orientation", 1.0, (1,),
                                  frames=np.array([N - 1]),
                                  params={"targets": face_goal.reshape(1, 2),
                                          "delta": 0.06})),
]

stack = []
print(f"{'penalties':<42}" + "".join(f"{k:>13}" for k in
                                     ("position", "overlap", "region",
                                      "orientation")))
for name, cfg in [("(none)", None)] + penalties:
    if cfg is not None:
        stack.append(cfg)
    run = compose(stack)
    rates = metrics.ablation_violations([run], targets).rates()
    added = "+ " + name if cfg is not None else name
    print(f"{added:<42}" + "".join(f"{rates[k]:>13.2f}" for k in
                                   ("position", "overlap", "region",
                                    "orientation")))

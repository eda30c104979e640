"""Training-free multi-person motion composition on a two-person diffusion
prior: penalties are differentiated through the deterministic sampler back
to the initial noise, which Adam then optimizes."""

from .composer import (CompositionResult, Composer, ExtensionSegment,
                       OptimizerConfig, SceneSpec, SceneStep, optimize_noise)
from .diffusion import DiffusionSchedule, FrameMask
from .metrics import MetricReport, ViolationReport
from .motion import (MotionSequence, NormalizationStats, Skeleton,
                     default_skeleton, read_motion, write_motion)
from .penalties import LossBreakdown, PenaltyConfig
from .priors import AnalyticPrior, MLPPrior
from .scripts import InteractionLabel, default_vocabulary, label_by_name

__version__ = "0.1.0"

__all__ = [
    "AnalyticPrior", "CompositionResult", "Composer", "DiffusionSchedule",
    "ExtensionSegment", "FrameMask", "InteractionLabel", "LossBreakdown",
    "MLPPrior", "MetricReport", "MotionSequence", "NormalizationStats",
    "OptimizerConfig", "PenaltyConfig", "SceneSpec", "SceneStep", "Skeleton",
    "ViolationReport", "default_skeleton", "default_vocabulary",
    "label_by_name", "optimize_noise", "read_motion", "write_motion",
]

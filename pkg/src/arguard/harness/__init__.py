"""Dataset handling, metric computation, fixture capture/replay and reporting."""

from .dataset import ManipulationSample, ObstructionSample, load_dataset
from .metrics import ConfusionCounts, MetricsReport, recognition_match
from .synth import composite_scene, generate_obstruction_dataset

__all__ = [
    "ManipulationSample",
    "ObstructionSample",
    "load_dataset",
    "ConfusionCounts",
    "MetricsReport",
    "recognition_match",
    "composite_scene",
    "generate_obstruction_dataset",
]

"""arguard: edge detection service and evaluation harness for task-detrimental
AR content — obstruction of key real-world objects and information
manipulation by virtual overlays."""

from .imaging import DiffConfig, Image, ImagePair, Mask
from .obstruction import KeyObjectList, ObstructionConfig, ObstructionResult
from .manipulation import ManipulationFactors, ManipulationResult

__version__ = "0.1.0"

__all__ = [
    "DiffConfig",
    "Image",
    "ImagePair",
    "Mask",
    "KeyObjectList",
    "ObstructionConfig",
    "ObstructionResult",
    "ManipulationFactors",
    "ManipulationResult",
    "__version__",
]

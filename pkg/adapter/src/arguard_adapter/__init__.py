"""Model-serving adapter for the arguard wire protocol v1."""

from .config import AdapterConfig
from .app import create_app

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "create_app", "__version__"]

"""qgbench: benchmarking harness for prompt-based question generation."""

from .errors import QGBenchError

__version__ = "0.1.0"

__all__ = ["QGBenchError", "__version__"]

"""Task-vector, E-Vector and LoRA algebra on safetensors checkpoints."""

from ._core import *  # noqa: F401,F403
from ._core import StylevecError, run_cli

__all__ = [name for name in dir() if not name.startswith("_")]

"""Trap-frequency stabilisation: trap physics, chain modes, RF lock, Ramsey tracking, Allan statistics."""
from .errors import TrapStabError

__version__ = "0.1.0"
__all__ = ["TrapStabError", "__version__"]

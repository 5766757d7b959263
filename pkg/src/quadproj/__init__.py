"""Exact and heuristic projections onto central quadrics, and splitting
solvers for the intersection of a box and a quadric."""
from . import bench
from .exact import *  # noqa: F401,F403
from .exact import __all__ as _exact_all
from .exceptions import *  # noqa: F401,F403
from .quadric import *  # noqa: F401,F403
from .quadric import __all__ as _quadric_all
from .quasi import *  # noqa: F401,F403
from .quasi import __all__ as _quasi_all
from .splitting import *  # noqa: F401,F403
from .splitting import __all__ as _splitting_all

__version__ = "0.1.0"

__all__ = ["bench", "__version__", *_quadric_all, *_exact_all, *_quasi_all, *_splitting_all]

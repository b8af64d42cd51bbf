"""Mean-field kinetic particle systems in a sine Galerkin basis."""

from ._core import *  # noqa: F401,F403
from ._core import __version__

__all__ = [name for name in dir() if not name.startswith("_")]

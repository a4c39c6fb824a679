"""Mixed-precision Newton-type minimizers and extended normal-equation solvers."""

from .precision import Tier, unit_roundoff, round_to, fl_op

__all__ = ["Tier", "unit_roundoff", "round_to", "fl_op"]
__version__ = "0.1.0"

"""Invariant sets of discrete-time nonlinear systems through linear immersions."""

__version__ = "0.1.0"

from .geometry import MismatchSet, Polytope  # noqa: E402
from .dynamics import NonlinearSystem, build_sample  # noqa: E402
from .immersion import LiftedModel  # noqa: E402
from .invariance import linear_mais, tightened_mais, run_algorithm1  # noqa: E402

__all__ = ["MismatchSet", "Polytope", "NonlinearSystem", "build_sample", "LiftedModel",
           "linear_mais", "tightened_mais", "run_algorithm1", "__version__"]

"""Quaternionic Monge-Ampere laboratory on the flat torus T^{4n}."""

from .grid import TorusGrid, make_diff
from .hessian import quat_hessian
from .hlinalg import moore_det, su2_average
from .solver import MAProblem, solve

__version__ = "0.1.0"

__all__ = ["TorusGrid", "make_diff", "quat_hessian", "moore_det", "su2_average", "MAProblem", "solve", "__version__"]

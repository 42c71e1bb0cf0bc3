"""Nonlinear control barrier functions with a predictor-corrector QP solver.

Modules: ``linalg`` (dense LU), ``qp`` (interior-point QP), ``barriers``
(NCBF/CLF/CBF/HOCBF constraint rows), ``feasibility`` (pointwise
feasibility theory), ``acc`` (adaptive cruise control case study),
``scenario`` and ``cli``.
"""

from .acc import AccParams, AccState, Barrier, assemble_qp, simulate
from .barriers import (AffineSystem, ClfParams, ControlBounds, NcbfParams, SafetyFunction,
                       ncbf_constraint_row, ncbf_value)
from .qp import QpProblem, QpSolution, SolverConfig, Status, solve

__all__ = [
    "AccParams", "AccState", "Barrier", "assemble_qp", "simulate",
    "AffineSystem", "ClfParams", "ControlBounds", "NcbfParams", "SafetyFunction",
    "ncbf_constraint_row", "ncbf_value",
    "QpProblem", "QpSolution", "SolverConfig", "Status", "solve",
]

"""Sparsity-constrained minimisation by Newton hard-thresholding pursuit."""
from .baselines import BaselineConfig, htp_solve, iht_solve
from .objectives import (CsObjective, LogisticObjective, Objective, RankDeficient,
                         estimate_regularity, fd_gradient, fd_hessian)
from .solver import (DiagnosticConstants, DirectionKind, IterationRecord, SolveReport,
                     SolverConfig, StationarityCertificate, Status, cs_preset, solve)
from .sparse_core import best_s_support, hard_threshold, sth_largest_abs, top_s_indices

__version__ = "0.1.0"

__all__ = [
    "BaselineConfig", "CsObjective", "DiagnosticConstants", "DirectionKind",
    "IterationRecord", "LogisticObjective", "Objective", "RankDeficient", "SolveReport",
    "SolverConfig", "StationarityCertificate", "Status", "best_s_support", "cs_preset",
    "estimate_regularity", "fd_gradient", "fd_hessian", "hard_threshold", "htp_solve",
    "iht_solve", "solve", "sth_largest_abs", "top_s_indices",
]

"""Exotic eigenvalue and eigenvector holonomy of periodic Hermitian families."""

from .csvio import __version__
from .models import (
    ModelError,
    ModelSpec,
    analytic_eigensystem,
    default_spec,
    hamiltonian,
    n_level_rank_one,
    sigma_general,
    three_level,
    two_level,
)
from .flow import EigenPath, FlowPermutation, classify_sigma_flows, extract_flow, track
from .holonomy import (
    GaugeField,
    HolonomyMatrix,
    analytic_field,
    analytic_holonomy,
    cross_validate,
    gauge_potential,
    holonomy_matrix,
)
from .dynamics import Schedule, epsilon_for_gap, evolve, gaps, landau_zener_window
from .complex_plane import (
    BranchCutCurve,
    ExceptionalPoint,
    analytic_exceptional_points,
    branch_cuts,
    mercator_map,
    newton_exceptional_points,
    pole_residue,
)

__all__ = [
    "__version__",
    "ModelError",
    "ModelSpec",
    "analytic_eigensystem",
    "default_spec",
    "hamiltonian",
    "n_level_rank_one",
    "sigma_general",
    "three_level",
    "two_level",
    "EigenPath",
    "FlowPermutation",
    "classify_sigma_flows",
    "extract_flow",
    "track",
    "GaugeField",
    "HolonomyMatrix",
    "analytic_field",
    "analytic_holonomy",
    "cross_validate",
    "gauge_potential",
    "holonomy_matrix",
    "Schedule",
    "epsilon_for_gap",
    "evolve",
    "gaps",
    "landau_zener_window",
    "BranchCutCurve",
    "ExceptionalPoint",
    "analytic_exceptional_points",
    "branch_cuts",
    "mercator_map",
    "newton_exceptional_points",
    "pole_residue",
]

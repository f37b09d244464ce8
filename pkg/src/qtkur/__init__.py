"""Thermokinetic uncertainty relations for multipartite open quantum systems.

Submodules: ``tensor_ops``, ``model``, ``propagate``, ``fcs``, ``thermo``,
``auxiliary``, ``bounds``, ``zoo``, ``mcjump``, ``modelio``, ``sweep``,
``selfcheck`` and ``cli``.
"""

from .auxiliary import correction_and_qfi, ell_schedule, finite_theta_check, solve_phi
from .bounds import evaluate_bounds, f_inverse, fisher_upper_bound, multidim_tkur, tkur_rhs, tur_rhs
from .fcs import CumulantResult, finite_time_cumulants, tilted_oracle_moments
from .mcjump import activity_estimate, sample_current
from .model import CurrentSpec, JumpChannel, LindbladModel, Reservoir, validate
from .propagate import evolve, steady_state
from .tensor_ops import TensorSpace
from .thermo import accumulate, coherence, rates_at
from .zoo import build_clock, build_demon

__version__ = "0.1.0"

__all__ = [
    "CumulantResult", "CurrentSpec", "JumpChannel", "LindbladModel", "Reservoir", "TensorSpace",
    "accumulate", "activity_estimate", "build_clock", "build_demon", "coherence", "correction_and_qfi",
    "ell_schedule", "evaluate_bounds", "evolve", "f_inverse", "finite_theta_check", "finite_time_cumulants",
    "fisher_upper_bound", "multidim_tkur", "rates_at", "sample_current", "solve_phi", "steady_state",
    "tilted_oracle_moments", "tkur_rhs", "tur_rhs", "validate",
]

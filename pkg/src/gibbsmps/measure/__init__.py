"""Shot-based estimators, synthetic noise, gate folding and zero-noise extrapolation."""

from .estimators import (
    Estimate,
    IdentityCheck,
    chi_correlation_identity,
    energy_from_shots,
    specific_heat_from_state,
    susceptibility_from_shots,
    two_point_from_shots,
)
from .folding import fold_counts, fold_gates
from .noise import NoiseModel, noisy_sample
from .zne import ZneEstimate, bootstrap_ci, zne_extrapolate

__all__ = [
    "Estimate",
    "IdentityCheck",
    "NoiseModel",
    "ZneEstimate",
    "bootstrap_ci",
    "chi_correlation_identity",
    "energy_from_shots",
    "fold_counts",
    "fold_gates",
    "noisy_sample",
    "specific_heat_from_state",
    "susceptibility_from_shots",
    "two_point_from_shots",
    "zne_extrapolate",
]

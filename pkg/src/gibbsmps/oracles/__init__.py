"""Reference thermal values: dense diagonalization, free fermions and path-integral Monte Carlo."""

from .bdg import bdg_free_energy, bdg_thermal_energy
from .dense import (
    dense_gibbs,
    exact_correlations,
    exact_energy_density,
    exact_magnetization,
    exact_specific_heat,
    exact_susceptibility,
    gibbs_free_energy,
)
from .qmc import QmcConfig, QmcResult, qmc_tfim2d
from .reference import ThermalReference

__all__ = [
    "QmcConfig",
    "QmcResult",
    "ThermalReference",
    "bdg_free_energy",
    "bdg_thermal_energy",
    "dense_gibbs",
    "exact_correlations",
    "exact_energy_density",
    "exact_magnetization",
    "exact_specific_heat",
    "exact_susceptibility",
    "gibbs_free_energy",
    "qmc_tfim2d",
]

"""Variational Gibbs-state preparation simulated with matrix product states."""

from .circuitir import AnsatzConfig, Circuit, Gate, build_ansatz, simulate
from .config import ExperimentConfig
from .models import HamiltonianSpec, Lattice, chain, grid, tfim, to_mpo, xxz
from .tensornet import MpsState, Mpo
from .varprep import ObjectiveContext, PrepRecord, free_energy, multistart_prepare

__version__ = "0.1.0"

__all__ = [
    "AnsatzConfig",
    "Circuit",
    "ExperimentConfig",
    "Gate",
    "HamiltonianSpec",
    "Lattice",
    "Mpo",
    "MpsState",
    "ObjectiveContext",
    "PrepRecord",
    "build_ansatz",
    "chain",
    "free_energy",
    "grid",
    "multistart_prepare",
    "simulate",
    "tfim",
    "to_mpo",
    "xxz",
]

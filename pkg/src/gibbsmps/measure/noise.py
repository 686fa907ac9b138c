"""Stochastic-Pauli noise on two-qubit gates, sampled by MPS trajectories.

Each shot draws its own error pattern: after every two-qubit gate a
uniformly random non-identity two-qubit Pauli is applied with probability
``p``, which on average is the depolarizing channel of strength
``16 p / 15``. Shots with the same pattern share one trajectory, and every
trajectory restarts from a cached noiseless prefix at its first error.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..circuitir import Circuit, gate_matrix, iter_routed
from ..models import PAULI
from ..shots import ShotTable
from ..tensornet import CHI_MAX_DEFAULT, SVD_CUTOFF_DEFAULT, MpsState, apply_gate, from_product_state, sample_bits

_PAULI_ORDER = ("I", "X", "Y", "Z")
# index k in 1..15 -> P_{k // 4} (x) P_{k % 4}
TWO_QUBIT_PAULIS = [np.kron(PAULI[_PAULI_ORDER[k // 4]], PAULI[_PAULI_ORDER[k % 4]]) for k in range(16)]


@dataclass(frozen=True)
class NoiseModel:
    p: float = 0.0
    readout_flip: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 0.1:
            raise ValueError("two-qubit error rate must lie in [0, 0.1]")
        if not 0.0 <= self.readout_flip <= 0.05:
            raise ValueError("readout flip rate must lie in [0, 0.05]")


@dataclass
class _Step:
    ops: list[tuple[np.ndarray, tuple[int, ...]]]
    core: int  # index in ops of the logical gate itself; errors go right after it
    two_qubit: bool


def _plan(circuit: Circuit, theta: Sequence[float]) -> list[_Step]:
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != circuit.n_params:
        raise ValueError(f"expected {circuit.n_params} parameters, got {theta.shape[0]}")
    steps = []
    for idx, routed in iter_routed(circuit):
        ops = []
        for g in routed:
            m = gate_matrix(g.kind, None if g.slot is None else theta[g.slot])
            ops.append((m.conj().T if g.dagger else m, g.sites))
        steps.append(_Step(ops, (len(ops) - 1) // 2, circuit.gates[idx].is_two_qubit))
    return steps


def _run(state: MpsState, step: _Step, error: int = 0) -> None:
    for k, (matrix, sites) in enumerate(step.ops):
        apply_gate(state, matrix, sites, check=False)
        if k == step.core and error:
            apply_gate(state, TWO_QUBIT_PAULIS[error], sites, check=False)


def noisy_sample(
    circuit: Circuit,
    theta: Sequence[float],
    noise: NoiseModel,
    basis: str,
    n_shots: int,
    seed: int,
    chi_max: int = CHI_MAX_DEFAULT,
    svd_cutoff: float = SVD_CUTOFF_DEFAULT,
    order: Sequence[int] | None = None,
) -> ShotTable:
    """Sample the physical block of ``circuit`` under ``noise``.

    Error patterns, readout flips and the Born-rule draws use separate
    streams derived from ``seed``; the error-free trajectory draws from
    ``default_rng(seed)`` exactly as :func:`~gibbsmps.tensornet.sample_shots`
    does, so a noiseless model returns the same table. ``order`` maps table
    columns to chain positions as in ``sample_shots``.
    """
    if n_shots <= 0:
        raise ValueError("n_shots must be positive")
    steps = _plan(circuit, theta)
    two = [i for i, s in enumerate(steps) if s.two_qubit]

    if noise.p > 0 and two:
        err_rng = np.random.default_rng([seed, 1])
        hits = err_rng.random((n_shots, len(two))) < noise.p
        which = err_rng.integers(1, 16, size=(n_shots, len(two)))
        codes = np.where(hits, which, 0).astype(np.int8)
    else:
        codes = np.zeros((n_shots, 0), dtype=np.int8)
    patterns, counts = np.unique(codes, axis=0, return_counts=True)

    def fresh() -> MpsState:
        return from_product_state("0" * circuit.n_qubits, chi_max=chi_max, svd_cutoff=svd_cutoff)

    # noiseless prefixes: prefix[i] is the state before logical gate i
    prefix: list[MpsState] = []
    state = fresh()
    for step in steps:
        prefix.append(state.copy())
        _run(state, step)
    clean = state
    after_first: dict[tuple[int, int], MpsState] = {}

    chunks = []
    for k, (pattern, count) in enumerate(zip(patterns, counts)):
        hit = np.flatnonzero(pattern)
        if hit.size == 0:
            final = clean
        else:
            errors = {two[h]: int(pattern[h]) for h in hit}
            first = two[hit[0]]
            key = (first, errors[first])
            if key not in after_first:
                st = prefix[first].copy()
                _run(st, steps[first], errors[first])
                after_first[key] = st
            final = after_first[key].copy()
            for i in range(first + 1, len(steps)):
                _run(final, steps[i], errors.get(i, 0))
        rng = np.random.default_rng(seed if hit.size == 0 else [seed, 3, k])
        chunks.append(sample_bits(final, basis, int(count), rng, order))
    bits = np.concatenate(chunks, axis=0)

    if noise.readout_flip > 0:
        flip_rng = np.random.default_rng([seed, 2])
        bits ^= (flip_rng.random(bits.shape) < noise.readout_flip).astype(bits.dtype)
    return ShotTable.from_bits(bits, basis, seed=seed)

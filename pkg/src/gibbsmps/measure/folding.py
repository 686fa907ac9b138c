"""Local unitary folding of two-qubit gates."""

from __future__ import annotations

import math
from numbers import Real

from ..circuitir import Circuit, Gate


def fold_counts(n_two_qubit: int, scale: Real) -> list[int]:
    """Number of ``G^dag G`` pairs inserted after each two-qubit gate.

    With ``k = floor((scale - 1) / 2)`` every gate gets ``k`` pairs and the
    first ``round(((scale - 1) / 2 - k) * n)`` gates in circuit order get one
    more, so the two-qubit count becomes ``scale * n`` whenever that is an
    integer.
    """
    if not scale >= 1:
        raise ValueError(f"scale factor must be >= 1, got {scale}")
    half = (float(scale) - 1.0) / 2.0
    base = math.floor(half + 1e-12)
    extra = int(math.floor((half - base) * n_two_qubit + 0.5 + 1e-9))
    return [base + (1 if k < extra else 0) for k in range(n_two_qubit)]


def fold_gates(circuit: Circuit, scale: Real) -> Circuit:
    """Replace two-qubit gates ``G`` by ``G (G^dag G)^k``; one-qubit gates are kept.

    The folded circuit implements the same unitary with roughly ``scale``
    times as many two-qubit gates.
    """
    two = [i for i, g in enumerate(circuit.gates) if g.is_two_qubit]
    pairs = dict(zip(two, fold_counts(len(two), scale)))
    gates: list[Gate] = []
    for i, g in enumerate(circuit.gates):
        gates.append(g)
        for _ in range(pairs.get(i, 0)):
            gates.extend((g.inverse(), g))
    return Circuit(circuit.n_physical, circuit.n_ancilla, tuple(gates), circuit.n_params, circuit.layout)

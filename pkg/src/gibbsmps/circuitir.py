"""Gate-level circuits, the HEA and TFD ansatz builders, and chain routing.

Rotations follow ``R_P(theta) = exp(-i theta P / 2)`` for every Pauli or
Pauli pair ``P``. Two-qubit matrices use the basis ``|q0 q1>`` with the
first listed site as the more significant qubit; ``CNOT`` lists the control
first.

Register convention: logical qubits ``0 .. n_physical-1`` are the physical
spins, followed by the ancilla block. A circuit's ``layout`` maps logical
qubits to MPS chain positions. Both ansatz builders emit gates directly in
chain positions with the identity layout, so the ancilla block sits at the
right end of the chain and the physical/ancilla cut is bond ``n_physical``.
"""

from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .models import HamiltonianSpec
from .tensornet import CHI_MAX_DEFAULT, SVD_CUTOFF_DEFAULT, MpsState, apply_gate, from_product_state

ONE_QUBIT = frozenset({"RX", "RY", "RZ", "H"})
TWO_QUBIT = frozenset({"RZZ", "RXX", "RYY", "CNOT", "SWAP"})
PARAMETERIZED = frozenset({"RX", "RY", "RZ", "RZZ", "RXX", "RYY"})
GATE_KINDS = ONE_QUBIT | TWO_QUBIT

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_GENERATORS = {
    "RX": _X,
    "RY": _Y,
    "RZ": _Z,
    "RXX": np.kron(_X, _X),
    "RYY": np.kron(_Y, _Y),
    "RZZ": np.kron(_Z, _Z),
}
_FIXED = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}


def gate_matrix(kind: str, angle: float | None = None) -> np.ndarray:
    """Unitary for ``kind``; rotations use ``cos(a/2) I - i sin(a/2) P`` (P squares to I)."""
    if kind in _FIXED:
        return _FIXED[kind]
    if kind not in _GENERATORS:
        raise ValueError(f"unknown gate kind {kind!r}")
    if angle is None:
        raise ValueError(f"{kind} needs an angle")
    c, s = np.cos(angle / 2.0), np.sin(angle / 2.0)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    p = _GENERATORS[kind]
    return c * np.eye(p.shape[0]) - 1j * s * p


@dataclass(frozen=True)
class Gate:
    kind: str
    sites: tuple[int, ...]
    slot: int | None = None
    dagger: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(int(s) for s in self.sites))
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        arity = 1 if self.kind in ONE_QUBIT else 2
        if len(self.sites) != arity or len(set(self.sites)) != arity:
            raise ValueError(f"{self.kind} needs {arity} distinct site(s), got {self.sites}")
        if (self.kind in PARAMETERIZED) != (self.slot is not None):
            raise ValueError(f"{self.kind}: parameter slot mismatch")

    @property
    def is_two_qubit(self) -> bool:
        return self.kind in TWO_QUBIT

    def inverse(self) -> Gate:
        return Gate(self.kind, self.sites, self.slot, not self.dagger)

    def label(self) -> str:
        return self.kind + ("_DG" if self.dagger else "")


@dataclass(frozen=True)
class Circuit:
    n_physical: int
    n_ancilla: int
    gates: tuple[Gate, ...]
    n_params: int
    layout: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        n = self.n_physical + self.n_ancilla
        object.__setattr__(self, "gates", tuple(self.gates))
        layout = tuple(int(x) for x in self.layout) if self.layout else tuple(range(n))
        object.__setattr__(self, "layout", layout)
        if sorted(layout) != list(range(n)):
            raise ValueError("layout must be a permutation of the register")
        used = set()
        for g in self.gates:
            if max(g.sites) >= n or min(g.sites) < 0:
                raise ValueError(f"gate {g} touches a qubit outside the {n}-qubit register")
            if g.slot is not None:
                if not 0 <= g.slot < self.n_params:
                    raise ValueError(f"gate {g} uses slot beyond n_params={self.n_params}")
                used.add(g.slot)
        if used != set(range(self.n_params)):
            raise ValueError("every parameter slot must be used at least once")

    @property
    def n_qubits(self) -> int:
        return self.n_physical + self.n_ancilla

    def two_qubit_count(self) -> int:
        return sum(g.is_two_qubit for g in self.gates)

    def to_text(self) -> str:
        """Line format: header counts, then ``KIND site[,site] [slot]`` per gate.

        An adjoint gate is written with the kind suffixed by ``_DG``.
        """
        lines = [
            f"n_physical {self.n_physical}",
            f"n_ancilla {self.n_ancilla}",
            f"n_params {self.n_params}",
            "layout " + " ".join(map(str, self.layout)),
            f"n_gates {len(self.gates)}",
        ]
        for g in self.gates:
            line = f"{g.label()} {','.join(map(str, g.sites))}"
            if g.slot is not None:
                line += f" {g.slot}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> Circuit:
        lines = text.splitlines()
        head = {}
        for ln in lines[:5]:
            key, _, value = ln.partition(" ")
            head[key] = value
        try:
            n_gates = int(head["n_gates"])
            gates = []
            for ln in lines[5 : 5 + n_gates]:
                parts = ln.split()
                slot = int(parts[2]) if len(parts) > 2 else None
                kind, dagger = parts[0], parts[0].endswith("_DG")
                if dagger:
                    kind = kind[:-3]
                gates.append(Gate(kind, tuple(int(s) for s in parts[1].split(",")), slot, dagger))
            if len(gates) != n_gates:
                raise ValueError(f"expected {n_gates} gates, found {len(gates)}")
            return cls(
                n_physical=int(head["n_physical"]),
                n_ancilla=int(head["n_ancilla"]),
                gates=tuple(gates),
                n_params=int(head["n_params"]),
                layout=tuple(int(x) for x in head["layout"].split()),
            )
        except (KeyError, IndexError) as exc:
            raise ValueError(f"malformed circuit text: {exc}") from None


@dataclass(frozen=True)
class AnsatzConfig:
    family: str
    n_physical: int
    n_ancilla: int
    layers: int
    entangler: str = "CNOT"
    model: HamiltonianSpec | None = None

    def __post_init__(self) -> None:
        if self.family not in ("HEA", "TFDA"):
            raise ValueError(f"unknown ansatz family {self.family!r}")
        if self.entangler not in ("CNOT", "RZZ"):
            raise ValueError(f"unknown entangler {self.entangler!r}")
        if self.family == "TFDA" and self.n_ancilla != self.n_physical:
            raise ValueError("TFDA needs as many ancillas as physical qubits")


def build_hea(cfg: AnsatzConfig) -> Circuit:
    """RY layer, then ``layers`` x (linear entangler chain, RY layer)."""
    if cfg.family != "HEA":
        raise ValueError("build_hea needs family='HEA'")
    if cfg.layers < 1 or cfg.n_ancilla < 1:
        raise ValueError("HEA needs layers >= 1 and n_ancilla >= 1")
    n = cfg.n_physical + cfg.n_ancilla
    gates: list[Gate] = []
    slot = 0

    def ry_layer() -> None:
        nonlocal slot
        for q in range(n):
            gates.append(Gate("RY", (q,), slot))
            slot += 1

    ry_layer()
    for _ in range(cfg.layers):
        for q in range(n - 1):
            if cfg.entangler == "CNOT":
                gates.append(Gate("CNOT", (q, q + 1)))
            else:
                gates.append(Gate("RZZ", (q, q + 1), slot))
                slot += 1
        ry_layer()
    return Circuit(cfg.n_physical, cfg.n_ancilla, tuple(gates), slot)


def build_tfda(cfg: AnsatzConfig) -> Circuit:
    """Bell pairs between each physical qubit and its ancilla, then evolution layers.

    Each layer applies, with one shared angle per group: the model's
    two-site terms on both registers (TFIM: one RZZ group; XXZ: an RXX+RYY
    group and an RZZ group), the TFIM transverse field as an RX group on both
    registers, and finally an RXX coupling on every physical/ancilla pair.
    """
    if cfg.family != "TFDA":
        raise ValueError("build_tfda needs family='TFDA'")
    if cfg.n_ancilla != cfg.n_physical:
        raise ValueError("TFDA needs n_ancilla == n_physical")
    if cfg.model is None:
        raise ValueError("TFDA needs a model")
    if cfg.model.n_sites != cfg.n_physical:
        raise ValueError("model size does not match n_physical")
    n = cfg.n_physical
    pos = cfg.model.lattice.default_layout()
    bonds = [(pos[i], pos[j]) for i, j in cfg.model.lattice.bonds]
    registers = (0, n)

    gates: list[Gate] = []
    for q in range(n):
        gates.append(Gate("H", (q,)))
        gates.append(Gate("CNOT", (q, q + n)))

    slot = 0
    for _ in range(cfg.layers):
        if cfg.model.model == "TFIM":
            groups = [("RZZ",), None]
        elif cfg.model.model == "XXZ":
            groups = [("RXX", "RYY"), ("RZZ",)]
        else:
            raise ValueError(f"no TFDA layer for model {cfg.model.model!r}")
        for group in groups:
            if group is None:
                for off in registers:
                    for q in range(n):
                        gates.append(Gate("RX", (q + off,), slot))
            else:
                for off in registers:
                    for a, b in bonds:
                        for kind in group:
                            gates.append(Gate(kind, (a + off, b + off), slot))
            slot += 1
        for q in range(n):
            gates.append(Gate("RXX", (q, q + n), slot))
        slot += 1
    return Circuit(n, n, tuple(gates), slot)


def build_ansatz(cfg: AnsatzConfig) -> Circuit:
    return build_hea(cfg) if cfg.family == "HEA" else build_tfda(cfg)


class BoundGate(NamedTuple):
    kind: str
    sites: tuple[int, ...]
    matrix: np.ndarray


def bind_parameters(circuit: Circuit, theta: Sequence[float]) -> list[BoundGate]:
    """Resolve every gate to a concrete unitary; sites stay logical."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != circuit.n_params:
        raise ValueError(f"expected {circuit.n_params} parameters, got {theta.shape[0]}")
    out = []
    for g in circuit.gates:
        matrix = gate_matrix(g.kind, None if g.slot is None else theta[g.slot])
        out.append(BoundGate(g.kind, g.sites, matrix.conj().T if g.dagger else matrix))
    return out


def _route_gate(gate: Gate, layout: Sequence[int]) -> list[Gate]:
    """Express one logical gate on chain positions, wrapped in SWAP ladders if needed."""
    sites = tuple(layout[s] for s in gate.sites)
    if len(sites) == 1 or abs(sites[0] - sites[1]) == 1:
        return [Gate(gate.kind, sites, gate.slot, gate.dagger)]
    a, b = sites
    lo, hi = min(a, b), max(a, b)
    # walk the lower qubit up until it neighbours the upper one
    ladder = [Gate("SWAP", (p, p + 1)) for p in range(lo, hi - 1)]
    moved = (hi - 1, hi) if a < b else (hi, hi - 1)
    return ladder + [Gate(gate.kind, moved, gate.slot, gate.dagger)] + ladder[::-1]


def iter_routed(circuit: Circuit) -> Iterator[tuple[int, list[Gate]]]:
    """Yield ``(logical_index, chain_gates)`` for every gate of ``circuit``."""
    for idx, gate in enumerate(circuit.gates):
        yield idx, _route_gate(gate, circuit.layout)


def route_to_chain(circuit: Circuit) -> Circuit:
    """Rewrite all gates on chain positions with only nearest-neighbour two-site gates.

    Sites of the returned circuit are chain positions and its layout is the
    identity. Every SWAP ladder is undone right after its gate, so qubits are
    back in place at the end.
    """
    if all(
        len(g.sites) == 1 or abs(circuit.layout[g.sites[0]] - circuit.layout[g.sites[1]]) == 1
        for g in circuit.gates
    ) and circuit.layout == tuple(range(circuit.n_qubits)):
        return circuit
    gates: list[Gate] = []
    for _, routed in iter_routed(circuit):
        gates.extend(routed)
    return Circuit(circuit.n_physical, circuit.n_ancilla, tuple(gates), circuit.n_params)


def simulate(
    circuit: Circuit,
    theta: Sequence[float],
    chi_max: int = CHI_MAX_DEFAULT,
    svd_cutoff: float = SVD_CUTOFF_DEFAULT,
) -> MpsState:
    """Run ``circuit`` on ``|0...0>`` as an MPS over chain positions."""
    routed = route_to_chain(circuit)
    state = from_product_state("0" * circuit.n_qubits, chi_max=chi_max, svd_cutoff=svd_cutoff)
    for bound in bind_parameters(routed, theta):
        apply_gate(state, bound.matrix, bound.sites, check=False)
    return state

"""Lattices, spin Hamiltonians as Pauli sums, and their MPO compilation.

Energies are in units of the coupling and ``k_B = 1``. Grid sites are
numbered row-major, ``site = r * cols + c``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .tensornet import Mpo

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# a Pauli term: (coefficient, ((site, axis), ...)) with 1 or 2 factors
PauliTerm = tuple[float, tuple[tuple[int, str], ...]]


@dataclass(frozen=True)
class Lattice:
    """Open-boundary chain ``("chain", (n,))`` or grid ``("grid", (rows, cols))``."""

    kind: str
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind == "chain":
            if len(self.dims) != 1:
                raise ValueError("a chain takes a single dimension")
        elif self.kind == "grid":
            if len(self.dims) != 2 or min(self.dims) < 1:
                raise ValueError("a grid takes (rows, cols) >= 1")
        else:
            raise ValueError(f"unknown lattice kind {self.kind!r}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.n_sites < 2:
            raise ValueError("a lattice needs at least two sites")

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    @cached_property
    def bonds(self) -> tuple[tuple[int, int], ...]:
        if self.kind == "chain":
            return tuple((i, i + 1) for i in range(self.dims[0] - 1))
        rows, cols = self.dims
        out = []
        for r in range(rows):
            for c in range(cols):
                s = r * cols + c
                if c + 1 < cols:
                    out.append((s, s + 1))
                if r + 1 < rows:
                    out.append((s, s + cols))
        return tuple(out)

    def default_layout(self) -> tuple[int, ...]:
        """Site -> chain position used to lay the lattice onto an MPS."""
        if self.kind == "chain":
            return tuple(range(self.n_sites))
        return snake_map(*self.dims)


def chain(n: int) -> Lattice:
    return Lattice("chain", (n,))


def grid(rows: int, cols: int) -> Lattice:
    return Lattice("grid", (rows, cols))


@dataclass(frozen=True)
class HamiltonianSpec:
    model: str
    lattice: Lattice
    J: float
    h: float = 0.0
    delta: float = 0.0
    terms: tuple[PauliTerm, ...] = ()

    def __post_init__(self) -> None:
        for coeff, ops in self.terms:
            if isinstance(coeff, complex) or np.iscomplexobj(coeff):
                raise ValueError("complex coefficients are not supported")
            if not 1 <= len(ops) <= 2:
                raise ValueError("Pauli strings must act on one or two sites")
            for site, axis in ops:
                if axis not in "XYZ" or not 0 <= site < self.lattice.n_sites:
                    raise ValueError(f"bad Pauli factor {(site, axis)!r}")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    def is_traceless(self) -> bool:
        """True when every term is a non-identity Pauli string."""
        return all(len(ops) >= 1 and all(axis != "I" for _, axis in ops) for _, ops in self.terms)

    def sum_sq_coefficients(self) -> float:
        """``sum_a c_a**2``; equals ``Tr(H^2) / 2^N`` for distinct Pauli strings."""
        return float(sum(c * c for c, _ in self.terms))


def tfim(lattice: Lattice, J: float = 1.0, h: float = 0.5) -> HamiltonianSpec:
    """``H = -J sum_<ij> Z_i Z_j - h sum_i X_i``."""
    terms: list[PauliTerm] = [(-float(J), ((i, "Z"), (j, "Z"))) for i, j in lattice.bonds]
    terms += [(-float(h), ((i, "X"),)) for i in range(lattice.n_sites)]
    return HamiltonianSpec("TFIM", lattice, float(J), h=float(h), terms=tuple(terms))


def xxz(lattice: Lattice, J: float = 1.0, delta: float = -1.5) -> HamiltonianSpec:
    """``H = -J sum_<ij> (X_i X_j + Y_i Y_j + delta Z_i Z_j)`` on a chain."""
    if lattice.kind != "chain":
        raise ValueError("the XXZ model is only defined on a chain here")
    terms: list[PauliTerm] = []
    for i, j in lattice.bonds:
        terms.append((-float(J), ((i, "X"), (j, "X"))))
        terms.append((-float(J), ((i, "Y"), (j, "Y"))))
        terms.append((-float(J) * float(delta), ((i, "Z"), (j, "Z"))))
    return HamiltonianSpec("XXZ", lattice, float(J), delta=float(delta), terms=tuple(terms))


def snake_map(rows: int, cols: int) -> tuple[int, ...]:
    """Boustrophedon order: entry ``r * cols + c`` is the chain index of site (r, c).

    Even rows run left to right, odd rows right to left.
    """
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    out = [0] * (rows * cols)
    for r in range(rows):
        for c in range(cols):
            offset = c if r % 2 == 0 else cols - 1 - c
            out[r * cols + c] = r * cols + offset
    return tuple(out)


def max_chain_distance(lattice: Lattice, layout: Sequence[int]) -> int:
    """Largest chain separation of any lattice bond under ``layout``."""
    return max(abs(layout[i] - layout[j]) for i, j in lattice.bonds)


def to_mpo(
    spec: HamiltonianSpec,
    layout: Sequence[int] | None = None,
    n_total: int | None = None,
) -> Mpo:
    """Compile the Pauli sum into a finite-state-machine MPO.

    ``layout[site]`` is the chain position of each lattice site (defaults to
    :meth:`Lattice.default_layout`). Chain positions ``>= n_sites`` up to
    ``n_total`` (the ancilla block) carry identities.

    Each two-site term ``c P_a Q_b`` (``a < b`` on the chain) opens a channel
    carrying ``P`` at ``a``; the channel passes identities until every term
    that starts with ``(a, P)`` has been closed with ``c Q`` at its far end.
    A bond therefore holds one "nothing placed yet" state (only while terms
    remain to the right), one "done" state (only once a term can have ended
    to the left), and one state per open channel.
    """
    n = spec.n_sites
    if layout is None:
        layout = spec.lattice.default_layout()
    layout = [int(x) for x in layout]
    if sorted(layout) != list(range(n)):
        raise ValueError("layout must be a permutation of the lattice sites")
    n_total = n if n_total is None else int(n_total)
    if n_total < n:
        raise ValueError("n_total must cover the lattice")

    onsite: dict[int, np.ndarray] = {}
    closings: dict[tuple[int, str], list[tuple[int, float, str]]] = {}
    first_pos, last_pos = n_total, -1
    for coeff, ops in spec.terms:
        placed = sorted((layout[site], axis) for site, axis in ops)
        first_pos = min(first_pos, placed[0][0])
        last_pos = max(last_pos, placed[-1][0])
        if len(placed) == 1:
            pos, axis = placed[0]
            onsite[pos] = onsite.get(pos, 0) + coeff * PAULI[axis]
        else:
            (a, pa), (b, pb) = placed
            if a == b:
                raise ValueError("two-site term acts twice on one site")
            closings.setdefault((a, pa), []).append((b, coeff, pb))
    for key in closings:
        closings[key].sort()

    # bond k sits between chain positions k-1 and k
    bonds: list[dict[object, int]] = []
    for k in range(n_total + 1):
        states: list[object] = []
        if k <= last_pos:
            states.append("start")
        for (a, pa), ends in sorted(closings.items()):
            if a < k <= ends[-1][0]:
                states.append((a, pa))
        if k > first_pos:
            states.append("done")
        if not states:  # an operator with no terms at all
            states.append("start" if k == 0 else "done")
        bonds.append({s: idx for idx, s in enumerate(states)})
    if "done" not in bonds[-1]:
        bonds[-1] = {"done": 0}
    if "start" not in bonds[0]:
        bonds[0] = {"start": 0}

    eye = PAULI["I"]
    tensors = []
    for pos in range(n_total):
        left, right = bonds[pos], bonds[pos + 1]
        w = np.zeros((len(left), 2, 2, len(right)), dtype=complex)

        def put(src: object, dst: object, op: np.ndarray) -> None:
            if src in left and dst in right:
                w[left[src], :, :, right[dst]] += op

        put("start", "start", eye)
        put("done", "done", eye)
        if pos in onsite:
            put("start", "done", onsite[pos])
        for (a, pa), ends in closings.items():
            if a == pos:
                put("start", (a, pa), PAULI[pa])
            elif a < pos:
                for b, coeff, pb in ends:
                    if b == pos:
                        put((a, pa), "done", coeff * PAULI[pb])
                if (a, pa) in right:
                    put((a, pa), (a, pa), eye)
        tensors.append(w)
    return Mpo(tensors)

"""Measurement outcome tables and their text file format.

File layout (one record per line, bitstrings sorted lexicographically)::

    # shot-table v1
    basis ZZZZ
    n_shots 100000
    seed 7
    0000 49876
    1111 50124

Bit ``k`` of every bitstring is physical site ``k``; ``0`` means the +1
eigenvalue of the measured Pauli.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HEADER = "# shot-table v1"


@dataclass(frozen=True)
class ShotTable:
    basis: str
    n_shots: int
    outcomes: Mapping[str, int] = field(repr=False)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.basis or set(self.basis) - {"Z", "X"}:
            raise ValueError(f"basis must be a string over {{Z, X}}, got {self.basis!r}")
        total = 0
        for bits, count in self.outcomes.items():
            if len(bits) != len(self.basis) or set(bits) - {"0", "1"}:
                raise ValueError(f"bitstring {bits!r} does not match basis length {len(self.basis)}")
            if count < 0:
                raise ValueError("negative count")
            total += count
        if total != self.n_shots:
            raise ValueError(f"counts sum to {total}, expected n_shots={self.n_shots}")
        object.__setattr__(self, "outcomes", dict(sorted(self.outcomes.items())))

    @property
    def n_sites(self) -> int:
        return len(self.basis)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(bits, counts)``: an (n_unique, n_sites) 0/1 array and the matching counts."""
        keys = [k for k, c in self.outcomes.items() if c > 0]
        if not keys:
            return np.zeros((0, self.n_sites), dtype=np.int8), np.zeros(0, dtype=np.int64)
        raw = np.frombuffer("".join(keys).encode(), dtype=np.uint8).reshape(len(keys), self.n_sites)
        bits = (raw - ord("0")).astype(np.int8)
        counts = np.array([self.outcomes[k] for k in keys], dtype=np.int64)
        return bits, counts

    def spins(self) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`arrays` but with eigenvalues ``1 - 2 b`` in {+1, -1}."""
        bits, counts = self.arrays()
        return 1 - 2 * bits.astype(np.int64), counts

    @classmethod
    def from_bits(cls, bits: np.ndarray, basis: str, seed: int = 0) -> ShotTable:
        """Build a table from an (n_shots, n_sites) array of 0/1 outcomes."""
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.ndim != 2 or bits.shape[1] != len(basis):
            raise ValueError("bits must have shape (n_shots, len(basis))")
        uniq, counts = np.unique(bits, axis=0, return_counts=True)
        chars = (uniq + ord("0")).astype(np.uint8)
        outcomes = {row.tobytes().decode(): int(c) for row, c in zip(chars, counts)}
        return cls(basis=basis, n_shots=int(bits.shape[0]), outcomes=outcomes, seed=seed)

    def to_text(self) -> str:
        lines = [HEADER, f"basis {self.basis}", f"n_shots {self.n_shots}", f"seed {self.seed}"]
        lines += [f"{bits} {count}" for bits, count in self.outcomes.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ShotTable:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].strip() != HEADER:
            raise ValueError("missing shot-table header")
        head: dict[str, str] = {}
        for ln in lines[1:4]:
            key, _, value = ln.partition(" ")
            head[key] = value.strip()
        try:
            basis, n_shots, seed = head["basis"], int(head["n_shots"]), int(head["seed"])
        except (KeyError, ValueError) as exc:
            raise ValueError(f"bad shot-table header: {exc}") from None
        outcomes: dict[str, int] = {}
        for ln in lines[4:]:
            bits, count = ln.split()
            outcomes[bits] = outcomes.get(bits, 0) + int(count)
        return cls(basis=basis, n_shots=n_shots, outcomes=outcomes, seed=seed)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path: str | Path) -> ShotTable:
        return cls.from_text(Path(path).read_text())

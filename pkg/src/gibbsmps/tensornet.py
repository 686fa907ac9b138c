"""Dense tensor helpers and the open-boundary MPS engine.

Tensors are plain ``numpy`` arrays in C (row-major) order, so a reshape of
an array with shape ``(a, b, c)`` into ``(a * b, c)`` fuses the first two
indices with the *second* index running fastest. Every reshape below relies
on that.

Index conventions:

* MPS site tensor: ``(left_bond, physical, right_bond)``; physical index 0 is
  the +1 eigenstate of sigma^z.
* MPO site tensor: ``(left_bond, phys_out, phys_in, right_bond)``.
* Dense vectors put site 0 on the most significant bit, so the product state
  ``"010"`` is basis vector 2.
* Bond ``k`` sits between sites ``k - 1`` and ``k``; bonds 0 and ``n`` are the
  trivial boundary bonds of dimension 1.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .errors import NumericInputError, RoutingRequiredError
from .shots import ShotTable

CHI_MAX_DEFAULT = 128
SVD_CUTOFF_DEFAULT = 1e-12
SCHMIDT_FLOOR = 1e-14

_HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / np.sqrt(2.0)


def svd_truncated(
    matrix: np.ndarray, chi_max: int = CHI_MAX_DEFAULT, cutoff: float = SVD_CUTOFF_DEFAULT
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Thin SVD keeping at most ``chi_max`` singular values.

    A singular value ``s_i`` survives when ``s_i**2 / sum(s**2) > cutoff``;
    at least one value is always kept. Singular values come back in
    descending order.

    Returns:
        ``(u, s, vh, discarded_weight)`` with ``matrix ~ u @ diag(s) @ vh`` and
        ``discarded_weight`` the sum of squares of the dropped values.
    """
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {matrix.shape}")
    if chi_max < 1:
        raise ValueError("chi_max must be >= 1")
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    if not np.all(np.isfinite(matrix)):
        raise NumericInputError("matrix contains non-finite entries")
    try:
        u, s, vh = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust
        import scipy.linalg

        u, s, vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
    weights = s * s
    total = weights.sum()
    if total > 0:
        keep = int(np.count_nonzero(weights / total > cutoff))
    else:
        keep = 1
    keep = max(1, min(chi_max, keep))
    discarded = float(weights[keep:].sum())
    return u[:, :keep], s[:keep], vh[:keep, :], discarded


def is_unitary(gate: np.ndarray, atol: float = 1e-10) -> bool:
    gate = np.asarray(gate)
    if gate.ndim != 2 or gate.shape[0] != gate.shape[1]:
        return False
    return bool(np.allclose(gate @ gate.conj().T, np.eye(gate.shape[0]), atol=atol, rtol=0))


class MpsState:
    """Open-boundary matrix product state of qubits.

    The state is mutable; gate application and gauge moves update it in
    place. ``canonical_center`` is ``None`` until the tensors are known to
    be in mixed-canonical form.
    """

    def __init__(
        self,
        tensors: Sequence[np.ndarray],
        chi_max: int = CHI_MAX_DEFAULT,
        svd_cutoff: float = SVD_CUTOFF_DEFAULT,
        canonical_center: int | None = None,
    ) -> None:
        if not tensors:
            raise ValueError("an MPS needs at least one site")
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        for k, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site {k}: expected (left, 2, right) tensor, got {t.shape}")
            if k > 0 and self.tensors[k - 1].shape[2] != t.shape[0]:
                raise ValueError(f"bond mismatch between sites {k - 1} and {k}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        self.chi_max = int(chi_max)
        self.svd_cutoff = float(svd_cutoff)
        self.canonical_center = canonical_center
        self.cumulative_discarded_weight = 0.0
        # latest singular values seen at each bond (bond k between sites k-1, k)
        self.schmidt: list[np.ndarray | None] = [None] * (len(self.tensors) + 1)

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [t.shape[2] for t in self.tensors]

    def copy(self) -> MpsState:
        new = MpsState.__new__(MpsState)
        new.tensors = list(self.tensors)  # arrays are replaced, never written in place
        new.chi_max = self.chi_max
        new.svd_cutoff = self.svd_cutoff
        new.canonical_center = self.canonical_center
        new.cumulative_discarded_weight = self.cumulative_discarded_weight
        new.schmidt = list(self.schmidt)
        return new

    # -- gauge ------------------------------------------------------------

    def _shift_right(self, k: int) -> None:
        a = self.tensors[k]
        left, phys, right = a.shape
        q, r = np.linalg.qr(a.reshape(left * phys, right))
        nxt = self.tensors[k + 1]
        self.tensors[k] = q.reshape(left, phys, q.shape[1])
        self.tensors[k + 1] = (r @ nxt.reshape(nxt.shape[0], -1)).reshape(r.shape[0], 2, nxt.shape[2])

    def _shift_left(self, k: int) -> None:
        a = self.tensors[k]
        left, phys, right = a.shape
        q, r = np.linalg.qr(a.reshape(left, phys * right).conj().T)
        prev = self.tensors[k - 1]
        self.tensors[k] = q.conj().T.reshape(q.shape[1], phys, right)
        self.tensors[k - 1] = (prev.reshape(-1, prev.shape[2]) @ r.conj().T).reshape(
            prev.shape[0], 2, r.shape[0]
        )

    def move_center(self, site: int) -> None:
        """Bring the state into mixed-canonical form centred on ``site``."""
        if not 0 <= site < self.n_sites:
            raise ValueError(f"site {site} out of range")
        c = self.canonical_center
        if c is None:
            for k in range(site):
                self._shift_right(k)
            for k in range(self.n_sites - 1, site, -1):
                self._shift_left(k)
        elif c < site:
            for k in range(c, site):
                self._shift_right(k)
        else:
            for k in range(c, site, -1):
                self._shift_left(k)
        self.canonical_center = site

    def norm(self) -> float:
        if self.canonical_center is not None:
            return float(np.linalg.norm(self.tensors[self.canonical_center]))
        return float(np.sqrt(abs(self.overlap(self))))

    def normalize(self) -> MpsState:
        if self.canonical_center is None:
            self.move_center(0)
        c = self.canonical_center
        self.tensors[c] = self.tensors[c] / np.linalg.norm(self.tensors[c])
        return self

    def overlap(self, other: MpsState) -> complex:
        """Return ``<self|other>``."""
        if other.n_sites != self.n_sites:
            raise ValueError("site-count mismatch")
        env = np.ones((1, 1), dtype=complex)
        for a, b in zip(self.tensors, other.tensors):
            env = np.tensordot(env, b, axes=(1, 0))
            env = np.tensordot(a.conj(), env, axes=([0, 1], [0, 1]))
        return complex(env[0, 0])

    def to_dense(self) -> np.ndarray:
        """Full statevector; only sensible for small chains."""
        if self.n_sites > 24:
            raise ValueError("refusing to densify more than 24 sites")
        psi = self.tensors[0].reshape(2, -1)
        for t in self.tensors[1:]:
            psi = np.tensordot(psi, t, axes=(1, 0)).reshape(-1, t.shape[2])
        return psi.reshape(-1)

    def schmidt_values(self, cut: int) -> np.ndarray:
        """Schmidt coefficients across bond ``cut`` (sites ``< cut`` | sites ``>= cut``)."""
        if not 1 <= cut <= self.n_sites - 1:
            raise ValueError(f"cut must lie in [1, {self.n_sites - 1}], got {cut}")
        self.move_center(cut - 1)
        a = self.tensors[cut - 1]
        s = np.linalg.svd(a.reshape(a.shape[0] * 2, a.shape[2]), compute_uv=False)
        s = s / np.linalg.norm(s)
        self.schmidt[cut] = s
        return s

    def check_isometries(self, atol: float = 1e-10) -> bool:
        """True when every non-centre tensor satisfies its isometry condition."""
        c = self.canonical_center
        if c is None:
            return False
        for k, t in enumerate(self.tensors):
            if k < c:
                m = t.reshape(-1, t.shape[2])
                gram = m.conj().T @ m
            elif k > c:
                m = t.reshape(t.shape[0], -1)
                gram = m @ m.conj().T
            else:
                continue
            if not np.allclose(gram, np.eye(gram.shape[0]), atol=atol, rtol=0):
                return False
        return True


class Mpo:
    """Matrix product operator on qubits."""

    def __init__(self, tensors: Sequence[np.ndarray]) -> None:
        if not tensors:
            raise ValueError("an MPO needs at least one site")
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        for k, t in enumerate(self.tensors):
            if t.ndim != 4 or t.shape[1:3] != (2, 2):
                raise ValueError(f"site {k}: expected (left, 2, 2, right) tensor, got {t.shape}")
            if k > 0 and self.tensors[k - 1].shape[3] != t.shape[0]:
                raise ValueError(f"bond mismatch between sites {k - 1} and {k}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have dimension 1")

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [t.shape[3] for t in self.tensors]

    def to_dense(self) -> np.ndarray:
        if self.n_sites > 12:
            raise ValueError("refusing to densify more than 12 sites")
        op = self.tensors[0][0]  # (out, in, right)
        for t in self.tensors[1:]:
            # op: (OUT, IN, bond) x t: (bond, out, in, right)
            op = np.tensordot(op, t, axes=(2, 0))  # OUT, IN, out, in, right
            n_out, n_in = op.shape[0], op.shape[1]
            op = op.transpose(0, 2, 1, 3, 4).reshape(n_out * 2, n_in * 2, -1)
        return op[:, :, 0]

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        dense = self.to_dense()
        return bool(np.allclose(dense, dense.conj().T, atol=atol, rtol=0))


def mpo_product(first: Mpo, second: Mpo) -> Mpo:
    """MPO for the operator product ``first @ second`` (bond dimensions multiply)."""
    if first.n_sites != second.n_sites:
        raise ValueError("site-count mismatch")
    out = []
    for a, b in zip(first.tensors, second.tensors):
        # a: (la, o, m, ra), b: (lb, m, i, rb) -> (la, lb, o, i, ra, rb)
        t = np.einsum("aomr,bmis->aboirs", a, b)
        la, lb, _, _, ra, rb = t.shape
        out.append(t.reshape(la * lb, 2, 2, ra * rb))
    return Mpo(out)


def from_product_state(
    bits: str, chi_max: int = CHI_MAX_DEFAULT, svd_cutoff: float = SVD_CUTOFF_DEFAULT
) -> MpsState:
    """Computational-basis product state, e.g. ``"0101"``."""
    if not bits:
        raise ValueError("bits must be a non-empty string")
    if set(bits) - {"0", "1"}:
        raise ValueError(f"bits must contain only 0/1, got {bits!r}")
    tensors = []
    for b in bits:
        t = np.zeros((1, 2, 1), dtype=complex)
        t[0, int(b), 0] = 1.0
        tensors.append(t)
    state = MpsState(tensors, chi_max=chi_max, svd_cutoff=svd_cutoff, canonical_center=0)
    state.schmidt = [np.ones(1)] * (len(bits) + 1)
    return state


def apply_gate(
    state: MpsState, gate: np.ndarray, sites: Sequence[int], check: bool = True
) -> MpsState:
    """Apply a one- or two-qubit unitary in place and return ``state``.

    Two-qubit gates use the basis ``|q0 q1>`` with ``sites[0]`` as the more
    significant qubit; ``sites`` must be adjacent on the chain in either
    order. The bond between them is re-truncated with the state's
    ``(chi_max, svd_cutoff)`` budget and the lost weight is accumulated in
    ``cumulative_discarded_weight``.
    """
    gate = np.asarray(gate, dtype=complex)
    sites = tuple(int(s) for s in sites)
    if check and not is_unitary(gate):
        raise ValueError("gate is not unitary within 1e-10")
    n = state.n_sites
    for s in sites:
        if not 0 <= s < n:
            raise ValueError(f"site {s} out of range for {n} sites")

    if len(sites) == 1:
        if gate.shape != (2, 2):
            raise ValueError("one-site gate must be 2x2")
        (k,) = sites
        state.tensors[k] = gate @ state.tensors[k]
        return state

    if len(sites) != 2 or gate.shape != (4, 4):
        raise ValueError("expected a 2x2 gate on one site or a 4x4 gate on two sites")
    i, j = sites
    if abs(i - j) != 1:
        raise RoutingRequiredError(f"sites {i} and {j} are not adjacent; route the circuit first")
    if i > j:
        i, j = j, i
        gate = gate.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2).reshape(4, 4)

    state.move_center(i)
    a, b = state.tensors[i], state.tensors[j]
    left, right = a.shape[0], b.shape[2]
    theta = (a.reshape(left * 2, -1) @ b.reshape(b.shape[0], -1)).reshape(left, 4, right)
    theta = (gate @ theta).reshape(left * 2, 2 * right)
    u, s, vh, discarded = svd_truncated(theta, state.chi_max, state.svd_cutoff)
    kept = float(np.dot(s, s))
    if discarded > 0.0:
        state.cumulative_discarded_weight += discarded / (kept + discarded)
    s = s / np.sqrt(kept)
    chi = s.shape[0]
    state.tensors[i] = u.reshape(left, 2, chi)
    state.tensors[j] = (s[:, None] * vh).reshape(chi, 2, right)
    state.canonical_center = j
    state.schmidt[j] = s
    return state


def entanglement_entropy(state: MpsState, cut: int) -> float:
    """Von Neumann entropy ``-sum p ln p`` of the Schmidt spectrum at bond ``cut``.

    Moves the canonical centre to ``cut - 1`` as a side effect.
    """
    s = state.schmidt_values(cut)
    s = s[s > SCHMIDT_FLOOR]
    p = s * s
    p = p / p.sum()
    return float(max(0.0, -np.sum(p * np.log(p))))


def expectation_mpo(state: MpsState, op: Mpo) -> float:
    """Real ``<psi|O|psi>`` for a normalized ``state`` and Hermitian ``op``."""
    if op.n_sites != state.n_sites:
        raise ValueError(f"MPO has {op.n_sites} sites, state has {state.n_sites}")
    env = np.ones((1, 1, 1), dtype=complex)  # (bra, mpo, ket)
    for a, w in zip(state.tensors, op.tensors):
        bra, wl, ket = env.shape
        right = a.shape[2]
        wr = w.shape[3]
        t = (env.reshape(bra * wl, ket) @ a.reshape(ket, -1)).reshape(bra, wl, 2, right)
        t = t.transpose(0, 3, 1, 2).reshape(bra * right, wl * 2)
        t = t @ w.transpose(0, 2, 1, 3).reshape(wl * 2, 2 * wr)  # (bra, ket_r) x (p_out, mpo_r)
        t = t.reshape(bra, right, 2, wr).transpose(0, 2, 1, 3).reshape(bra * 2, right * wr)
        t = a.reshape(bra * 2, -1).conj().T @ t  # bra_r x (ket_r, mpo_r)
        env = t.reshape(-1, right, wr).transpose(0, 2, 1)
    value = complex(env[0, 0, 0])
    if abs(value.imag) > 1e-8 * max(1.0, abs(value.real)):
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}; operator not Hermitian?")
    return value.real


def sample_shots(
    state: MpsState,
    basis: str,
    n_shots: int,
    seed: int,
    order: Sequence[int] | None = None,
    batch: int = 20000,
) -> ShotTable:
    """Draw exact projective-measurement samples from an MPS.

    ``basis[k]`` (``"Z"`` or ``"X"``) is the Pauli measured on chain site
    ``order[k]``, and column ``k`` of the table reports that outcome.
    ``order`` must be a permutation of the leading chain sites and defaults
    to ``0 .. len(basis)-1``; the remaining sites (the ancilla block) are
    traced out. Sampling is sequential and conditional, left to right, on a
    right-canonical copy of the state, so each shot follows the Born rule
    exactly.
    """
    bits = sample_bits(state, basis, n_shots, np.random.default_rng(seed), order, batch)
    return ShotTable.from_bits(bits, basis, seed=seed)


def sample_bits(
    state: MpsState,
    basis: str,
    n_shots: int,
    rng: np.random.Generator,
    order: Sequence[int] | None = None,
    batch: int = 20000,
) -> np.ndarray:
    """Like :func:`sample_shots` but returns the raw ``(n_shots, len(basis))`` 0/1 array."""
    if n_shots <= 0:
        raise ValueError("n_shots must be positive")
    if not basis or set(basis) - {"Z", "X"}:
        raise ValueError(f"basis must be a non-empty string over {{Z, X}}, got {basis!r}")
    if order is None:
        order = list(range(len(basis)))
    order = [int(k) for k in order]
    if len(order) != len(basis) or len(set(order)) != len(order):
        raise ValueError("order must list one distinct site per basis letter")
    if sorted(order) != list(range(len(order))) or len(order) > state.n_sites:
        raise ValueError("measured sites must be the leading block 0..len(basis)-1 of the chain")

    work = state.copy()
    work.move_center(0)
    work.normalize()
    letter_at = {site: letter for site, letter in zip(order, basis)}
    tensors = []
    for k in range(len(order)):
        t = work.tensors[k]
        if letter_at[k] == "X":
            t = np.einsum("ab,lbr->lar", _HADAMARD, t)
        tensors.append(t)

    outcomes = np.zeros((n_shots, len(order)), dtype=np.uint8)
    for start in range(0, n_shots, batch):
        stop = min(n_shots, start + batch)
        m = stop - start
        rows = np.arange(m)
        env = np.ones((m, 1), dtype=complex)
        for k, t in enumerate(tensors):
            v = (env @ t.reshape(t.shape[0], -1)).reshape(m, 2, -1)
            weights = np.einsum("spr,spr->sp", v, v.conj()).real
            p1 = weights[:, 1] / weights.sum(axis=1)
            draw = (rng.random(m) < p1).astype(np.uint8)
            outcomes[start:stop, k] = draw
            env = v[rows, draw] / np.sqrt(weights[rows, draw])[:, None]
    return outcomes[:, order]

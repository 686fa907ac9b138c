"""Dense-matrix ground truth for small systems.

Everything here works on explicit ``2^n`` vectors and matrices and shares no
code path with the MPS engine apart from gate definitions, so it can serve
as an independent check. Site 0 is the most significant bit.
"""

from __future__ import annotations

from collections.abc import Sequence
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from ..circuitir import Circuit, bind_parameters
from ..errors import CapacityError
from ..models import PAULI, HamiltonianSpec

MAX_DENSE_SITES = 12


def _check_capacity(n: int) -> None:
    if n > MAX_DENSE_SITES:
        raise CapacityError(f"dense oracle limited to {MAX_DENSE_SITES} sites, got {n}")


def embed(ops: dict[int, np.ndarray], n: int) -> np.ndarray:
    """Kronecker product with ``ops[k]`` on site ``k`` and identity elsewhere."""
    out = np.ones((1, 1), dtype=complex)
    for k in range(n):
        out = np.kron(out, ops.get(k, PAULI["I"]))
    return out


def pauli_sum_dense(
    spec: HamiltonianSpec, layout: Sequence[int] | None = None, n_total: int | None = None
) -> np.ndarray:
    """Dense Hamiltonian; lattice site ``s`` is placed on qubit ``layout[s]``."""
    n = spec.n_sites
    layout = list(range(n)) if layout is None else [int(x) for x in layout]
    n_total = n if n_total is None else n_total
    _check_capacity(n_total)
    h = np.zeros((2**n_total, 2**n_total), dtype=complex)
    for coeff, ops in spec.terms:
        h += coeff * embed({layout[site]: PAULI[axis] for site, axis in ops}, n_total)
    return h


def magnetization_diagonal(n: int) -> np.ndarray:
    """Diagonal of ``M_tot = sum_i Z_i`` in the computational basis."""
    idx = np.arange(2**n)
    ones = np.zeros(2**n, dtype=np.int64)
    for k in range(n):
        ones += (idx >> k) & 1
    return (n - 2 * ones).astype(float)


def z_diagonals(n: int) -> np.ndarray:
    """(n, 2^n) array whose row ``i`` is the diagonal of ``Z_i``."""
    idx = np.arange(2**n)
    return np.array([1.0 - 2.0 * ((idx >> (n - 1 - i)) & 1) for i in range(n)])


def statevector(circuit: Circuit, theta: Sequence[float]) -> np.ndarray:
    """Dense simulation of ``circuit`` on ``|0...0>``; qubit order = chain positions."""
    n = circuit.n_qubits
    if n > 20:
        raise CapacityError("dense statevector limited to 20 qubits")
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = 1.0
    psi = psi.reshape((2,) * n)
    for bound in bind_parameters(circuit, theta):
        qubits = [circuit.layout[s] for s in bound.sites]
        k = len(qubits)
        g = bound.matrix.reshape((2,) * (2 * k))
        psi = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), qubits))
        psi = np.moveaxis(psi, list(range(k)), qubits)
    return psi.reshape(-1)


def unitary(circuit: Circuit, theta: Sequence[float]) -> np.ndarray:
    """Dense unitary of ``circuit`` (chain-ordered qubits)."""
    n = circuit.n_qubits
    _check_capacity(n)
    u = np.eye(2**n, dtype=complex)
    for bound in bind_parameters(circuit, theta):
        qubits = [circuit.layout[s] for s in bound.sites]
        if len(qubits) == 1:
            full = embed({qubits[0]: bound.matrix}, n)
        else:
            full = _two_qubit_operator(bound.matrix, qubits[0], qubits[1], n)
        u = full @ u
    return u


def _two_qubit_operator(g: np.ndarray, a: int, b: int, n: int) -> np.ndarray:
    # act on identity columns: build the operator by applying g to every basis vector
    dim = 2**n
    basis = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    out = np.tensordot(g.reshape(2, 2, 2, 2), basis, axes=([2, 3], [a, b]))
    out = np.moveaxis(out, [0, 1], [a, b])
    return out.reshape(dim, dim)


def reduced_density_matrix(psi: np.ndarray, n_keep: int) -> np.ndarray:
    """Trace out all but the leading ``n_keep`` qubits of a pure state."""
    psi = np.asarray(psi).reshape(2**n_keep, -1)
    return psi @ psi.conj().T


def von_neumann_entropy(rho: np.ndarray) -> float:
    w = np.linalg.eigvalsh(rho)
    w = w[w > 1e-28]
    return float(-np.sum(w * np.log(w)))


def free_energy_of(rho: np.ndarray, h: np.ndarray, beta: float) -> float:
    """``Tr(rho H) - S(rho) / beta`` for dense matrices."""
    return float(np.real(np.trace(rho @ h))) - von_neumann_entropy(rho) / beta


@lru_cache(maxsize=4)
def _spectrum(spec: HamiltonianSpec) -> tuple[np.ndarray, np.ndarray]:
    _check_capacity(spec.n_sites)
    return np.linalg.eigh(pauli_sum_dense(spec))


def dense_gibbs(spec: HamiltonianSpec, beta: float) -> np.ndarray:
    """``exp(-beta H) / Z`` via the eigendecomposition (safe for degenerate spectra)."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    w, v = _spectrum(spec)
    logw = -beta * w
    p = np.exp(logw - logsumexp(logw))
    return (v * p) @ v.conj().T


def gibbs_free_energy(spec: HamiltonianSpec, beta: float) -> float:
    """Exact ``-ln Z / beta``."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    w, _ = _spectrum(spec)
    return float(-logsumexp(-beta * w) / beta)


def thermal_expectation(rho: np.ndarray, op: np.ndarray) -> float:
    if op.ndim == 1:
        return float(np.real(np.dot(np.diagonal(rho), op)))
    return float(np.real(np.trace(rho @ op)))


def exact_energy_density(spec: HamiltonianSpec, beta: float) -> float:
    w, _ = _spectrum(spec)
    logw = -beta * w
    p = np.exp(logw - logsumexp(logw))
    return float(np.dot(p, w) / spec.n_sites)


def susceptibility_of(rho: np.ndarray, beta: float, n: int) -> float:
    """``beta / N^2 (<M^2> - <M>^2)`` for a dense state on ``n`` spins."""
    m = magnetization_diagonal(n)
    d = np.real(np.diagonal(rho))
    return float(beta / n**2 * (np.dot(d, m * m) - np.dot(d, m) ** 2))


def correlations_of(rho: np.ndarray, n: int) -> np.ndarray:
    """Connected ``C^z_ij``; the diagonal is ``1 - <Z_i>^2``."""
    d = np.real(np.diagonal(rho))
    z = z_diagonals(n)
    mean = z @ d
    second = (z * d) @ z.T
    return second - np.outer(mean, mean)


def exact_susceptibility(spec: HamiltonianSpec, beta: float) -> float:
    return susceptibility_of(dense_gibbs(spec, beta), beta, spec.n_sites)


def exact_specific_heat(spec: HamiltonianSpec, beta: float) -> float:
    """``beta^2 / N^2 (<H^2> - <H>^2)`` from the spectrum."""
    w, _ = _spectrum(spec)
    logw = -beta * w
    p = np.exp(logw - logsumexp(logw))
    mean = np.dot(p, w)
    var = np.dot(p, (w - mean) ** 2)
    return float(beta**2 / spec.n_sites**2 * var)


def exact_correlations(spec: HamiltonianSpec, beta: float) -> np.ndarray:
    return correlations_of(dense_gibbs(spec, beta), spec.n_sites)


def exact_magnetization(spec: HamiltonianSpec, beta: float) -> float:
    rho = dense_gibbs(spec, beta)
    return thermal_expectation(rho, magnetization_diagonal(spec.n_sites))


"""Thermal observables from shot tables and from exact states.

Column ``k`` of every shot table is lattice site ``k``. Bit ``0`` is the
``+1`` eigenvalue of the measured Pauli.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..models import HamiltonianSpec, Lattice, to_mpo
from ..shots import ShotTable
from ..tensornet import Mpo, MpsState, expectation_mpo, mpo_product


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float


def _weighted_mean_err(values: np.ndarray, counts: np.ndarray) -> tuple[float, float]:
    n = counts.sum()
    mean = float(np.dot(counts, values) / n)
    var = float(np.dot(counts, (values - mean) ** 2) / max(n - 1, 1))
    return mean, math.sqrt(var / n)


def _term_products(spins: np.ndarray, terms: list[tuple[float, tuple[int, ...]]]) -> np.ndarray:
    out = np.zeros(spins.shape[0])
    for coeff, sites in terms:
        out += coeff * np.prod(spins[:, list(sites)], axis=1)
    return out


def energy_from_shots(z: ShotTable, x: ShotTable, spec: HamiltonianSpec) -> Estimate:
    """Energy density ``<H>/N`` from a Z-basis and an X-basis table.

    Each table contributes the mean of its per-shot partial energy (all-Z
    terms from ``z``, all-X terms from ``x``). The stderr combines the two
    sample standard errors, which accounts for covariance between terms that
    share shots.

    Raises:
        ValueError: the tables are not all-Z / all-X, have the wrong width,
            or the model contains terms that are neither pure Z nor pure X.
    """
    n = spec.n_sites
    if set(z.basis) != {"Z"} or set(x.basis) != {"X"}:
        raise ValueError("need one all-Z and one all-X shot table")
    if z.n_sites != n or x.n_sites != n:
        raise ValueError(f"shot tables must cover the {n} physical sites")
    groups: dict[str, list[tuple[float, tuple[int, ...]]]] = {"Z": [], "X": []}
    for coeff, ops in spec.terms:
        axes = {axis for _, axis in ops}
        if len(axes) != 1 or not axes <= {"Z", "X"}:
            raise ValueError(f"term {ops} cannot be estimated from Z/X shots")
        groups[axes.pop()].append((coeff, tuple(site for site, _ in ops)))

    total, var = 0.0, 0.0
    for table, terms in ((z, groups["Z"]), (x, groups["X"])):
        if not terms:
            continue
        spins, counts = table.spins()
        mean, err = _weighted_mean_err(_term_products(spins, terms), counts)
        total += mean
        var += err**2
    return Estimate(total / n, math.sqrt(var) / n)


def _resample_counts(counts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = int(counts.sum())
    return rng.multinomial(n, counts / n)


def _bootstrap_stderr(stat, counts: np.ndarray, n_boot: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    values = np.array([stat(_resample_counts(counts, rng)) for _ in range(n_boot)])
    return float(values.std(ddof=1))


def susceptibility_from_shots(
    z: ShotTable, beta: float, n_sites: int | None = None, n_boot: int = 200, seed: int = 0
) -> Estimate:
    """``chi = beta / N^2 (mean(M^2) - mean(M)^2)`` with a shot-bootstrap stderr."""
    if set(z.basis) != {"Z"}:
        raise ValueError("susceptibility needs a Z-basis table")
    n = z.n_sites if n_sites is None else n_sites
    spins, counts = z.spins()
    mag = spins.sum(axis=1).astype(float)

    def stat(c: np.ndarray) -> float:
        total = c.sum()
        m1 = np.dot(c, mag) / total
        return beta / n**2 * (np.dot(c, mag * mag) / total - m1 * m1)

    return Estimate(float(stat(counts)), _bootstrap_stderr(stat, counts, n_boot, seed))


def two_point_from_shots(z: ShotTable, i: int, j: int, n_boot: int = 200, seed: int = 0) -> Estimate:
    """Connected ``C^z_ij = <z_i z_j> - <z_i><z_j>`` with a shot-bootstrap stderr."""
    if set(z.basis) != {"Z"}:
        raise ValueError("correlations need a Z-basis table")
    if i == j:
        raise ValueError("i and j must differ")
    spins, counts = z.spins()
    si, sj = spins[:, i].astype(float), spins[:, j].astype(float)

    def stat(c: np.ndarray) -> float:
        total = c.sum()
        return np.dot(c, si * sj) / total - np.dot(c, si) / total * np.dot(c, sj) / total

    return Estimate(float(stat(counts)), _bootstrap_stderr(stat, counts, n_boot, seed))


def specific_heat_from_state(
    state: MpsState, hamiltonian: Mpo, beta: float, n_sites: int, h2: Mpo | None = None
) -> float:
    """``c_v = beta^2 / N^2 (<H^2> - <H>^2)`` from MPO expectations on the purification."""
    h2 = mpo_product(hamiltonian, hamiltonian) if h2 is None else h2
    mean = expectation_mpo(state, hamiltonian)
    cv = beta**2 / n_sites**2 * (expectation_mpo(state, h2) - mean * mean)
    if cv < 0:
        if cv < -1e-10:
            raise ValueError(f"negative energy variance {cv:.3e}")
        warnings.warn(f"clamping tiny negative specific heat {cv:.2e} to 0", RuntimeWarning, stacklevel=2)
        cv = 0.0
    return float(cv)


def _pauli_mpo(lattice: Lattice, terms, layout, n_total: int) -> Mpo:
    spec = HamiltonianSpec("observable", lattice, 0.0, terms=tuple(terms))
    return to_mpo(spec, layout=layout, n_total=n_total)


def z_moments(state: MpsState, lattice: Lattice, layout=None) -> tuple[np.ndarray, np.ndarray]:
    """``<Z_i>`` and ``<Z_i Z_j>`` (diagonal = 1) of lattice sites on an MPS."""
    n = lattice.n_sites
    layout = lattice.default_layout() if layout is None else layout
    single = np.array(
        [expectation_mpo(state, _pauli_mpo(lattice, [(1.0, ((i, "Z"),))], layout, state.n_sites)) for i in range(n)]
    )
    pair = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            mpo = _pauli_mpo(lattice, [(1.0, ((i, "Z"), (j, "Z")))], layout, state.n_sites)
            pair[i, j] = pair[j, i] = expectation_mpo(state, mpo)
    return single, pair


def magnetization_moments(state: MpsState, lattice: Lattice, layout=None) -> tuple[float, float]:
    """``<M_tot>`` and ``<M_tot^2>`` from the magnetization MPO and its square."""
    layout = lattice.default_layout() if layout is None else layout
    m = _pauli_mpo(lattice, [(1.0, ((i, "Z"),)) for i in range(lattice.n_sites)], layout, state.n_sites)
    return expectation_mpo(state, m), expectation_mpo(state, mpo_product(m, m))


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    gap: float


def chi_correlation_identity(
    source: np.ndarray | MpsState, beta: float, lattice: Lattice | None = None, n_sites: int | None = None
) -> IdentityCheck:
    """Compare ``chi`` from the magnetization variance with ``beta/N^2 sum_ij C^z_ij``.

    ``source`` is a dense density matrix (then ``n_sites`` is required) or an
    MPS purification (then ``lattice`` is required). The diagonal uses
    ``C^z_ii = 1 - <Z_i>^2``.
    """
    if isinstance(source, MpsState):
        if lattice is None:
            raise ValueError("an MPS source needs its lattice")
        n = lattice.n_sites
        m1, m2 = magnetization_moments(source, lattice)
        single, pair = z_moments(source, lattice)
    else:
        from ..oracles.dense import magnetization_diagonal, z_diagonals

        if n_sites is None:
            raise ValueError("a dense source needs n_sites")
        n = n_sites
        d = np.real(np.diagonal(source))
        mdiag = magnetization_diagonal(n)
        m1, m2 = float(np.dot(d, mdiag)), float(np.dot(d, mdiag**2))
        zd = z_diagonals(n)
        single = zd @ d
        pair = (zd * d) @ zd.T
    corr = pair - np.outer(single, single)
    np.fill_diagonal(corr, 1.0 - single**2)
    lhs = beta / n**2 * (m2 - m1 * m1)
    rhs = beta / n**2 * float(corr.sum())
    return IdentityCheck(float(lhs), rhs, abs(float(lhs) - rhs))

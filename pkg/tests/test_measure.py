import numpy as np
import pytest

from gibbsmps.circuitir import AnsatzConfig, Circuit, Gate, build_ansatz, build_tfda, simulate
from gibbsmps.errors import ExtrapolationFailedError
from gibbsmps.measure import (
    NoiseModel,
    bootstrap_ci,
    chi_correlation_identity,
    energy_from_shots,
    fold_counts,
    fold_gates,
    noisy_sample,
    specific_heat_from_state,
    susceptibility_from_shots,
    two_point_from_shots,
    zne_extrapolate,
)
from gibbsmps.measure.noise import TWO_QUBIT_PAULIS
from gibbsmps.models import chain, tfim, to_mpo, xxz
from gibbsmps.oracles.dense import (
    dense_gibbs,
    exact_susceptibility,
    statevector,
    unitary,
)
from gibbsmps.shots import ShotTable
from gibbsmps.tensornet import expectation_mpo, from_product_state, sample_shots


def table(rows, basis, repeat=1):
    bits = np.repeat(np.array([[int(c) for c in r] for r in rows], dtype=np.uint8), repeat, axis=0)
    return ShotTable.from_bits(bits, basis)


def dense_shots(rho, n, n_shots, seed):
    """Z-basis shots drawn from the diagonal of a dense density matrix."""
    probs = np.clip(np.real(np.diagonal(rho)), 0, None)
    idx = np.random.default_rng(seed).choice(2**n, size=n_shots, p=probs / probs.sum())
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return ShotTable.from_bits(bits, "Z" * n, seed=seed)


def prepared_state(n=4, n_anc=2, layers=1, seed=0):
    circuit = build_ansatz(AnsatzConfig("HEA", n, n_anc, layers))
    theta = np.random.default_rng(seed).uniform(-np.pi, np.pi, circuit.n_params)
    return circuit, theta, simulate(circuit, theta)


def ghz(n):
    gates = [Gate("H", (0,))] + [Gate("CNOT", (q, q + 1)) for q in range(n - 1)]
    return simulate(Circuit(n, 0, tuple(gates), 0), [])


# energy


def test_energy_all_zero_z_uniform_x():
    spec = tfim(chain(4), 1.0, 0.5)
    z = table(["0000"], "ZZZZ", 1000)
    rng = np.random.default_rng(0)
    x = ShotTable.from_bits(rng.integers(0, 2, (20_000, 4)), "XXXX")
    est = energy_from_shots(z, x, spec)
    assert abs(est.value + 0.75) < 5 * est.stderr
    # the Z part is deterministic, so only the X part contributes noise
    assert est.stderr == pytest.approx(0.5 / np.sqrt(20_000) * 2 / 4, rel=0.1)


def test_energy_plus_state():
    spec = tfim(chain(4), 1.0, 0.5)
    state = simulate(Circuit(4, 0, tuple(Gate("H", (q,)) for q in range(4)), 0), [])
    z = sample_shots(state, "ZZZZ", 10_000, seed=1)
    x = sample_shots(state, "XXXX", 10_000, seed=2)
    est = energy_from_shots(z, x, spec)
    assert x.outcomes == {"0000": 10_000}
    assert abs(est.value + 0.5) < 5 * est.stderr


def test_energy_matches_mps_expectation():
    spec = tfim(chain(4), 1.0, 0.5)
    _, _, state = prepared_state()
    z = sample_shots(state, "ZZZZ", 100_000, seed=3)
    x = sample_shots(state, "XXXX", 100_000, seed=4)
    est = energy_from_shots(z, x, spec)
    exact = expectation_mpo(state, to_mpo(spec, n_total=state.n_sites)) / 4
    assert abs(est.value - exact) < 5 * est.stderr


def test_energy_basis_errors():
    spec = tfim(chain(2))
    z, x = table(["00"], "ZZ"), table(["00"], "XX")
    with pytest.raises(ValueError):
        energy_from_shots(x, z, spec)
    with pytest.raises(ValueError):
        energy_from_shots(table(["000"], "ZZZ"), table(["000"], "XXX"), spec)
    with pytest.raises(ValueError):
        energy_from_shots(z, x, xxz(chain(2)))


# susceptibility and correlations


def test_susceptibility_all_zero():
    est = susceptibility_from_shots(table(["0000"], "ZZZZ", 100), beta=2.0)
    assert est.value == 0.0 and est.stderr == 0.0


def test_susceptibility_two_point_distribution():
    est = susceptibility_from_shots(table(["0000", "1111"], "ZZZZ", 500), beta=1.7)
    assert est.value == pytest.approx(1.7)


def test_susceptibility_rejects_x_table():
    with pytest.raises(ValueError):
        susceptibility_from_shots(table(["00"], "XX"), 1.0)


def test_susceptibility_from_dense_gibbs_shots():
    spec = tfim(chain(4), 1.0, 0.5)
    est = susceptibility_from_shots(dense_shots(dense_gibbs(spec, 2.0), 4, 100_000, seed=5), 2.0)
    assert abs(est.value - exact_susceptibility(spec, 2.0)) < 5 * est.stderr


def test_two_point_product_state():
    shots = sample_shots(from_product_state("0101"), "ZZZZ", 2000, seed=0)
    est = two_point_from_shots(shots, 0, 3)
    assert abs(est.value) <= 5 * est.stderr + 1e-12


def test_two_point_ghz():
    shots = sample_shots(ghz(4), "ZZZZ", 20_000, seed=6)
    est = two_point_from_shots(shots, 0, 3)
    assert abs(est.value - 1.0) < 5 * est.stderr + 1e-3


def test_two_point_rejects_same_site():
    with pytest.raises(ValueError):
        two_point_from_shots(table(["00"], "ZZ"), 1, 1)


# specific heat


def test_specific_heat_eigenstate_is_zero():
    spec = tfim(chain(4), 1.0, 0.0)
    state = from_product_state("0000")
    assert specific_heat_from_state(state, to_mpo(spec), 3.0, 4) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_specific_heat_maximally_mixed(beta):
    spec = tfim(chain(4), 1.0, 0.5)
    circuit = build_tfda(AnsatzConfig("TFDA", 4, 4, 0, model=spec))
    state = simulate(circuit, [])
    cv = specific_heat_from_state(state, to_mpo(spec, n_total=8), beta, 4)
    assert cv == pytest.approx(beta**2 / 4, abs=1e-10)


# correlation-sum identity


@pytest.mark.parametrize("beta", [0.5, 2.0, 5.0])
def test_identity_dense_gibbs(beta):
    check = chi_correlation_identity(dense_gibbs(tfim(chain(4), 1.0, 0.5), beta), beta, n_sites=4)
    assert check.gap < 1e-10


def test_identity_maximally_mixed():
    check = chi_correlation_identity(np.eye(16) / 16, 1.3, n_sites=4)
    assert check.lhs == pytest.approx(1.3 / 4) and check.rhs == pytest.approx(1.3 / 4)


def test_identity_product_state():
    circuit = Circuit(3, 0, (Gate("RY", (0,), 0), Gate("RY", (1,), 1), Gate("RY", (2,), 2)), 3)
    theta = np.array([0.3, 1.1, -2.0])
    state = simulate(circuit, theta)
    check = chi_correlation_identity(state, 2.0, lattice=chain(3))
    expected = 2.0 / 9 * np.sum(1 - np.cos(theta) ** 2)
    assert check.lhs == pytest.approx(expected, abs=1e-10)
    assert check.gap < 1e-10


def test_identity_mps_matches_dense():
    circuit, theta, state = prepared_state(4, 2, 2, seed=3)
    psi = statevector(circuit, theta).reshape(16, 4)
    rho = psi @ psi.conj().T
    mps = chi_correlation_identity(state, 2.0, lattice=chain(4))
    dense = chi_correlation_identity(rho, 2.0, n_sites=4)
    assert mps.gap < 1e-10
    assert mps.lhs == pytest.approx(dense.lhs, abs=1e-10)


# folding


def random_circuit(n, n_two, seed):
    rng = np.random.default_rng(seed)
    gates, slot = [], 0
    kinds = ["CNOT", "RZZ", "RXX", "RYY"]
    for _ in range(n_two):
        a = int(rng.integers(n - 1))
        kind = kinds[int(rng.integers(4))]
        gates.append(Gate(kind, (a, a + 1), None if kind == "CNOT" else slot))
        slot += kind != "CNOT"
        gates.append(Gate("RY", (int(rng.integers(n)),), slot))
        slot += 1
    return Circuit(n, 0, tuple(gates), slot), rng.uniform(-np.pi, np.pi, slot)


def test_fold_unity_is_unchanged():
    circuit, _ = random_circuit(4, 5, 0)
    assert fold_gates(circuit, 1) == circuit


def test_fold_three_triples_every_gate():
    circuit, _ = random_circuit(4, 5, 1)
    folded = fold_gates(circuit, 3)
    assert folded.two_qubit_count() == 15
    for i, g in enumerate(g for g in circuit.gates if g.is_two_qubit):
        two = [h for h in folded.gates if h.is_two_qubit][3 * i : 3 * i + 3]
        assert two == [g, g.inverse(), g]
    assert sum(not g.is_two_qubit for g in folded.gates) == sum(not g.is_two_qubit for g in circuit.gates)


def test_fold_two_on_ten_gates():
    circuit, theta = random_circuit(4, 10, 2)
    folded = fold_gates(circuit, 2)
    assert folded.two_qubit_count() == 20
    np.testing.assert_allclose(unitary(folded, theta), unitary(circuit, theta), atol=1e-10)


def test_fold_counts_partial():
    assert fold_counts(10, 2) == [1] * 5 + [0] * 5
    assert fold_counts(4, 1.5) == [1, 0, 0, 0]
    assert fold_counts(3, 5) == [2, 2, 2]


def test_fold_rejects_small_scale():
    with pytest.raises(ValueError):
        fold_counts(3, 0.5)


@pytest.mark.parametrize("scale", [1, 2, 3, 4, 5])
@pytest.mark.parametrize("n", [3, 8])
def test_fold_preserves_unitary(scale, n):
    circuit, theta = random_circuit(n, 6, scale + n)
    folded = fold_gates(circuit, scale)
    assert folded.two_qubit_count() == scale * 6
    np.testing.assert_allclose(unitary(folded, theta), unitary(circuit, theta), atol=1e-9)


# noise


def test_noiseless_matches_sample_shots():
    circuit, theta, state = prepared_state()
    for basis in ("ZZZZ", "XXXX"):
        a = noisy_sample(circuit, theta, NoiseModel(), basis, 5000, seed=11)
        assert a == sample_shots(state, basis, 5000, seed=11)


def test_noise_model_ranges():
    with pytest.raises(ValueError):
        NoiseModel(p=0.2)
    with pytest.raises(ValueError):
        NoiseModel(readout_flip=0.1)


def test_single_cnot_channel_matches_dense():
    p = 0.1
    circuit = Circuit(2, 0, (Gate("RY", (0,), 0), Gate("CNOT", (0, 1))), 1)
    theta = [1.0]
    psi = statevector(circuit, theta)
    rho = np.outer(psi, psi.conj())
    noisy = (1 - p) * rho + p / 15 * sum(P @ rho @ P.conj().T for P in TWO_QUBIT_PAULIS[1:])
    z0 = np.diag([1, 1, -1, -1])
    exact = np.real(np.trace(noisy @ z0))
    shots = noisy_sample(circuit, theta, NoiseModel(p=p), "ZZ", 100_000, seed=3)
    spins, counts = shots.spins()
    values = spins[:, 0]
    mean = np.dot(counts, values) / counts.sum()
    sigma = np.sqrt((1 - mean**2) / counts.sum())
    assert abs(mean - exact) < 5 * sigma
    # the channel attenuates the noiseless value
    assert abs(exact) < abs(np.real(np.trace(rho @ z0)))


def test_readout_flips():
    circuit = Circuit(2, 0, (Gate("H", (0,)), Gate("H", (0,))), 0)
    shots = noisy_sample(circuit, [], NoiseModel(readout_flip=0.05), "ZZ", 100_000, seed=0)
    bits, counts = shots.arrays()
    rate = np.dot(counts, bits[:, 1]) / counts.sum()
    assert abs(rate - 0.05) < 5 * np.sqrt(0.05 * 0.95 / 100_000)


def test_noisy_sampling_is_seeded():
    circuit, theta, _ = prepared_state()
    noise = NoiseModel(p=0.05, readout_flip=0.01)
    a = noisy_sample(circuit, theta, noise, "ZZZZ", 3000, seed=4)
    assert a == noisy_sample(circuit, theta, noise, "ZZZZ", 3000, seed=4)
    assert a != noisy_sample(circuit, theta, noise, "ZZZZ", 3000, seed=5)


def test_attenuation_monotone_in_scale():
    circuit = Circuit(4, 0, (Gate("CNOT", (0, 1)), Gate("CNOT", (1, 2)), Gate("CNOT", (2, 3))), 0)
    means, sigmas = [], []
    for scale in (1, 3, 5):
        shots = noisy_sample(fold_gates(circuit, scale), [], NoiseModel(p=0.02), "ZZZZ", 100_000, seed=scale)
        spins, counts = shots.spins()
        values = spins.mean(axis=1)
        mean = np.dot(counts, values) / counts.sum()
        means.append(mean)
        sigmas.append(np.sqrt(np.dot(counts, (values - mean) ** 2) / counts.sum() ** 2))
    for k in range(2):
        assert means[k + 1] < means[k] + 5 * np.hypot(sigmas[k], sigmas[k + 1])
    assert means[2] < means[0]


# zero-noise extrapolation


def test_zne_constant():
    est = zne_extrapolate([(1, 0.7, 0.0), (3, 0.7, 0.0), (5, 0.7, 0.0)])
    assert est.extrapolated == pytest.approx(0.7, abs=1e-12)


@pytest.mark.parametrize("factors", [(1, 3, 5), (2, 3, 4), (1, 2, 3, 4, 5)])
def test_zne_recovers_exponential(factors):
    pairs = [(lam, 2 + 3 * np.exp(-0.5 * lam), 0.0) for lam in factors]
    est = zne_extrapolate(pairs)
    assert est.fit_kind == "exponential"
    assert est.extrapolated == pytest.approx(5.0, abs=1e-6)


def test_zne_two_points_is_linear():
    est = zne_extrapolate([(1, 1.0, 0.0), (3, 2.0, 0.0)])
    assert est.fit_kind == "linear"
    assert est.extrapolated == pytest.approx(0.5)


def test_zne_linear_data_falls_back():
    est = zne_extrapolate([(1, 1.0, 0.0), (2, 1.5, 0.0), (3, 2.0, 0.0)])
    assert est.fit_kind == "linear"
    assert est.extrapolated == pytest.approx(0.5)


def test_zne_input_errors():
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 1.0, 0.0)])
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 1.0, 0.0), (1, 2.0, 0.0)])
    with pytest.raises(ValueError):
        zne_extrapolate([(0.5, 1.0, 0.0), (2, 2.0, 0.0)])
    with pytest.raises(ExtrapolationFailedError):
        zne_extrapolate([(1, np.nan, 0.0), (2, 2.0, 0.0)])


def test_zne_bootstrap_interval():
    pairs = [(lam, 2 + 3 * np.exp(-0.5 * lam), 0.01) for lam in (1, 3, 5)]
    est = zne_extrapolate(pairs, n_resamples=200, seed=1)
    assert est.ci_low < est.extrapolated < est.ci_high
    again = zne_extrapolate(pairs, n_resamples=200, seed=1)
    assert (again.ci_low, again.ci_high) == (est.ci_low, est.ci_high)


# bootstrap


def test_bootstrap_zero_variance():
    low, high = bootstrap_ci(lambda v: float(np.mean(v)), [(1.5, 0.0), (2.5, 0.0)], n_resamples=100)
    assert low == high == pytest.approx(2.0)


def test_bootstrap_rejects_few_resamples():
    with pytest.raises(ValueError):
        bootstrap_ci(np.mean, [(1.0, 0.1)], n_resamples=50)


def test_bootstrap_width_scales_with_sample_size():
    rng = np.random.default_rng(0)
    small = rng.normal(size=1000)
    large = rng.normal(size=4000)

    def mean(arrays):
        return float(arrays[0].mean())

    w1 = np.subtract(*bootstrap_ci(mean, [small], seed=1, mode="samples")[::-1])
    w4 = np.subtract(*bootstrap_ci(mean, [large], seed=1, mode="samples")[::-1])
    assert w1 / w4 == pytest.approx(2.0, rel=0.2)


def test_bootstrap_coverage():
    rng = np.random.default_rng(42)
    hits = 0
    for trial in range(200):
        data = rng.normal(1.0, 2.0, size=50)
        low, high = bootstrap_ci(lambda a: float(a[0].mean()), [data], n_resamples=400, seed=trial, mode="samples")
        hits += low <= 1.0 <= high
    assert abs(hits / 200 - 0.95) <= 0.05


def test_bootstrap_summary_mode_is_deterministic():
    data = [(1.0, 0.1), (2.0, 0.3)]
    assert bootstrap_ci(sum, data, seed=3) == bootstrap_ci(sum, data, seed=3)

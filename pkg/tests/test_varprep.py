import json

import numpy as np
import pytest

from gibbsmps.circuitir import AnsatzConfig, build_ansatz
from gibbsmps import varprep
from gibbsmps.errors import OptimizerAbort, PreparationFailedError
from gibbsmps.models import chain, tfim, to_mpo
from gibbsmps.oracles.dense import free_energy_of, gibbs_free_energy, pauli_sum_dense
from gibbsmps.varprep import (
    ObjectiveContext,
    PrepRecord,
    clamp_beta,
    cobyla_minimize,
    free_energy,
    infidelity,
    initial_theta,
    multistart_prepare,
    prepared_density_matrix,
)


def context(n=4, n_anc=4, layers=2, beta=1.0, family="HEA"):
    spec = tfim(chain(n), 1.0, 0.5)
    circuit = build_ansatz(AnsatzConfig(family, n, n_anc, layers, model=spec))
    return spec, ObjectiveContext(circuit, to_mpo(spec, n_total=circuit.n_qubits), beta)


# beta clamp


def test_clamp_beta():
    assert clamp_beta(0.0) == (1e-5, True)
    assert clamp_beta(2.0) == (2.0, False)
    with pytest.raises(ValueError):
        clamp_beta(-1.0)


def test_context_clamps_and_validates():
    _, ctx = context(beta=0.0)
    assert ctx.beta == 1e-5 and ctx.beta_clamped
    assert ctx.ancilla_cut == 4
    spec = tfim(chain(4))
    with pytest.raises(ValueError):
        ObjectiveContext(ctx.circuit, to_mpo(spec), 1.0)
    with pytest.raises(ValueError):
        ObjectiveContext(ctx.circuit, ctx.hamiltonian, 1.0, ancilla_cut=3)


# objective


@pytest.mark.parametrize("beta", [0.1, 1.0, 5.0])
def test_product_state_objective(beta):
    _, ctx = context(beta=beta)
    res = free_energy(np.zeros(ctx.circuit.n_params), ctx)
    assert res.S == pytest.approx(0.0, abs=1e-12)
    assert res.E == pytest.approx(-3.0)
    assert res.F == pytest.approx(-3.0)
    assert not res.truncation_warning


def test_tfda_infinite_temperature_objective():
    spec, ctx = context(family="TFDA", n_anc=4, beta=0.0)
    res = free_energy(np.zeros(ctx.circuit.n_params), ctx)
    assert res.S == pytest.approx(4 * np.log(2), abs=1e-12)
    norm = np.abs(np.linalg.eigvalsh(pauli_sum_dense(spec))).max()
    assert abs(res.E) <= norm
    assert res.F == pytest.approx(res.E - 4 * np.log(2) / 1e-5, abs=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_dense(seed):
    spec, ctx = context(beta=2.0)
    theta = np.random.default_rng(seed).uniform(-np.pi, np.pi, ctx.circuit.n_params)
    res = free_energy(theta, ctx)
    rho = prepared_density_matrix(ctx.circuit, theta)
    assert res.F == pytest.approx(free_energy_of(rho, pauli_sum_dense(spec), 2.0), abs=1e-8)
    assert res.F == pytest.approx(res.E - res.S / 2.0, abs=1e-10)
    assert 0 <= res.S <= 4 * np.log(2) + 1e-12


def test_objective_dimension_mismatch():
    _, ctx = context()
    with pytest.raises(ValueError):
        free_energy(np.zeros(3), ctx)


def test_truncation_warning_attached():
    spec = tfim(chain(4), 1.0, 0.5)
    circuit = build_ansatz(AnsatzConfig("HEA", 4, 4, 3))
    ctx = ObjectiveContext(circuit, to_mpo(spec, n_total=8), 1.0, chi_max=1)
    theta = np.random.default_rng(0).uniform(-np.pi, np.pi, circuit.n_params)
    res = free_energy(theta, ctx)
    assert res.discarded_weight > 1e-4
    assert res.truncation_warning


# optimizer


def test_cobyla_quadratic():
    res = cobyla_minimize(lambda x: (x[0] - 1.0) ** 2, [0.0], max_iter=500)
    assert res.theta[0] == pytest.approx(1.0, abs=1e-4)


def test_cobyla_rosenbrock():
    def rosen(x):
        return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2

    res = cobyla_minimize(rosen, [0.0, 0.0], max_iter=5000, rho_end=1e-8)
    assert res.fun < 1e-6


def test_cobyla_spd_quadratic():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(10, 10))
    hess = a @ a.T + 10 * np.eye(10)
    b = rng.normal(size=10)
    res = cobyla_minimize(lambda x: 0.5 * x @ hess @ x - b @ x, np.zeros(10), max_iter=10_000, rho_end=1e-8)
    np.testing.assert_allclose(res.theta, np.linalg.solve(hess, b), atol=1e-3)


@pytest.mark.parametrize("method", ["COBYLA", "Nelder-Mead"])
def test_never_worse_than_start(method):
    f = lambda x: np.sum(np.cos(3 * x)) + 0.1 * np.sum(x**2)  # noqa: E731
    x0 = np.array([0.3, -0.2, 1.1])
    res = cobyla_minimize(f, x0, max_iter=200, method=method)
    assert res.fun <= f(x0)
    assert res.iterations <= 200
    assert res.trace[0] == (1, f(x0))
    assert all(b[1] < a[1] for a, b in zip(res.trace, res.trace[1:]))


def test_budget_is_respected():
    calls = []

    def f(x):
        calls.append(1)
        return float(np.sum(np.sin(5 * x)))

    res = cobyla_minimize(f, np.zeros(6), max_iter=40, rho_end=1e-12)
    assert len(calls) == res.iterations <= 40


def test_optimizer_deterministic():
    f = lambda x: np.sum((x - 0.3) ** 4) + np.sum(np.sin(x))  # noqa: E731
    a = cobyla_minimize(f, np.ones(4), max_iter=300)
    b = cobyla_minimize(f, np.ones(4), max_iter=300)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.trace == b.trace


def test_optimizer_rejects_bad_settings():
    with pytest.raises(ValueError):
        cobyla_minimize(lambda x: 0.0, np.zeros(5), max_iter=6)
    with pytest.raises(ValueError):
        cobyla_minimize(lambda x: 0.0, np.zeros(2), rho_begin=1e-7, rho_end=1e-6)
    with pytest.raises(ValueError):
        cobyla_minimize(lambda x: 0.0, np.zeros(2), method="BFGS")


def test_non_finite_objective_aborts():
    with pytest.raises(OptimizerAbort):
        cobyla_minimize(lambda x: np.nan if x[0] > 0.2 else x[0] ** 2, [0.0], max_iter=100)


# multistart


def test_initial_theta_independent_of_restart_count():
    a = initial_theta(12, 3, 0)
    np.testing.assert_array_equal(a, initial_theta(12, 3, 0))
    assert not np.allclose(a, initial_theta(12, 3, 1))
    assert np.all(np.abs(a) <= np.pi)


@pytest.fixture(scope="module")
def small():
    spec = tfim(chain(3), 1.0, 0.5)
    circuit = build_ansatz(AnsatzConfig("HEA", 3, 2, 1))
    return spec, ObjectiveContext(circuit, to_mpo(spec, n_total=5), 2.0)


def test_single_restart_equals_single_run(small):
    _, ctx = small
    rec = multistart_prepare(ctx, restarts=1, seed=4, max_iter=300)
    theta0 = initial_theta(ctx.circuit.n_params, 4, 0)
    run = cobyla_minimize(lambda x: free_energy(x, ctx).F, theta0, max_iter=300)
    np.testing.assert_array_equal(rec.theta_star, run.theta)
    assert rec.F == pytest.approx(run.fun, abs=1e-12)
    assert rec.best_restart == 0


def test_best_of_restarts(small):
    spec, ctx = small
    rec = multistart_prepare(ctx, restarts=3, seed=1, max_iter=300)
    finals = [o["F"] for o in rec.restart_outcomes]
    assert rec.F <= min(finals) + 1e-12
    assert rec.restarts_run == 3 and len(rec.restart_outcomes) == 3
    assert rec.F == pytest.approx(rec.E - rec.S / rec.beta, abs=1e-10)
    assert rec.F >= gibbs_free_energy(spec, 2.0) - 1e-8


def test_more_restarts_never_worse(small):
    _, ctx = small
    two = multistart_prepare(ctx, restarts=2, seed=9, max_iter=200)
    four = multistart_prepare(ctx, restarts=4, seed=9, max_iter=200)
    assert four.F <= two.F


def test_parallel_matches_serial(small):
    _, ctx = small
    serial = multistart_prepare(ctx, restarts=2, seed=2, max_iter=150)
    parallel = multistart_prepare(ctx, restarts=2, seed=2, max_iter=150, workers=2)
    assert serial.to_json() == parallel.to_json()


def test_all_restarts_abort(monkeypatch):
    spec = tfim(chain(2))
    circuit = build_ansatz(AnsatzConfig("HEA", 2, 1, 1))
    ctx = ObjectiveContext(circuit, to_mpo(spec, n_total=3), beta=1.0)
    nan = varprep.FreeEnergy(np.nan, np.nan, 0.0, 0.0, False)
    monkeypatch.setattr(varprep, "free_energy", lambda theta, ctx: nan)
    with pytest.raises(PreparationFailedError) as info:
        multistart_prepare(ctx, restarts=2, seed=0, max_iter=50)
    assert len(info.value.diagnostics) == 2


def test_zero_beta_is_flagged(small):
    _, ctx = small
    zero = ObjectiveContext(ctx.circuit, ctx.hamiltonian, 0.0)
    rec = multistart_prepare(zero, restarts=1, seed=0, max_iter=100, beta_requested=0.0)
    assert rec.beta == 1e-5 and rec.beta_clamped and rec.beta_requested == 0.0


def test_record_json_round_trip(small):
    _, ctx = small
    rec = multistart_prepare(ctx, restarts=1, seed=0, max_iter=100, label="2.0")
    line = rec.to_json()
    data = json.loads(line)
    assert data["kind"] == "prep" and data["schema_version"] == 1
    back = PrepRecord.from_json(line)
    assert back == rec
    assert back.to_json() == line


# infidelity


def test_infidelity_identical():
    rho = np.diag([0.7, 0.3])
    assert infidelity(rho, rho) == pytest.approx(0.0, abs=1e-12)


def test_infidelity_orthogonal():
    assert infidelity(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)


def test_infidelity_mixed_vs_pure():
    assert infidelity(np.eye(2) / 2, np.diag([1.0, 0.0])) == pytest.approx(0.5)


def test_infidelity_rejects_bad_input():
    with pytest.raises(ValueError):
        infidelity(np.diag([1.5, -0.5]), np.eye(2) / 2)
    with pytest.raises(ValueError):
        infidelity(np.eye(2) / 2, np.eye(4) / 4)


def test_prepared_density_matrix_layout():
    circuit = build_ansatz(AnsatzConfig("HEA", 4, 2, 1))
    theta = np.random.default_rng(0).uniform(-np.pi, np.pi, circuit.n_params)
    rho = prepared_density_matrix(circuit, theta)
    swapped = prepared_density_matrix(circuit, theta, site_layout=(1, 0, 2, 3))
    perm = rho.reshape((2,) * 8).transpose(1, 0, 2, 3, 5, 4, 6, 7).reshape(16, 16)
    np.testing.assert_allclose(swapped, perm, atol=1e-14)
    assert np.trace(rho).real == pytest.approx(1.0)

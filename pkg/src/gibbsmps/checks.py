"""Quick deterministic self-checks behind the ``verify`` verb.

Each check is a reduced-size version of one acceptance property, sized so
the whole set runs in well under a minute. Results contain no timings or
absolute paths, so repeated runs produce identical output.
"""

from __future__ import annotations

import dataclasses
import shutil
from pathlib import Path

import numpy as np

from .circuitir import AnsatzConfig, build_ansatz, simulate
from .config import AnsatzBlock, ExperimentConfig, ModelBlock, ObjectiveBlock, OptimizerBlock
from .measure import chi_correlation_identity, energy_from_shots, susceptibility_from_shots, zne_extrapolate
from .measure.estimators import magnetization_moments
from .models import chain, tfim, to_mpo
from .oracles.bdg import bdg_thermal_energy
from .oracles.dense import (
    dense_gibbs,
    exact_energy_density,
    exact_magnetization,
    free_energy_of,
    pauli_sum_dense,
    reduced_density_matrix,
    statevector,
    von_neumann_entropy,
)
from .tensornet import entanglement_entropy, expectation_mpo, sample_shots
from .varprep import ObjectiveContext, free_energy, prepared_density_matrix


def _result(name: str, value: float, tolerance: float, passed: bool | None = None) -> dict:
    ok = value < tolerance if passed is None else passed
    return {"check": name, "passed": bool(ok), "value": float(value), "tolerance": float(tolerance)}


def check_free_energy(seed: int, n_samples: int = 20) -> dict:
    spec = tfim(chain(4), 1.0, 0.5)
    circuit = build_ansatz(AnsatzConfig("HEA", 4, 4, 2, model=spec))
    ctx = ObjectiveContext(circuit, to_mpo(spec, n_total=circuit.n_qubits), beta=2.0)
    h = pauli_sum_dense(spec)
    rng = np.random.default_rng([seed, 101])
    worst = 0.0
    for _ in range(n_samples):
        theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
        dense = free_energy_of(prepared_density_matrix(circuit, theta), h, ctx.beta)
        worst = max(worst, abs(free_energy(theta, ctx).F - dense))
    return _result("free_energy_matches_dense", worst, 1e-8)


def check_entropy(seed: int, n_samples: int = 10) -> dict:
    circuit = build_ansatz(AnsatzConfig("HEA", 4, 4, 3))
    rng = np.random.default_rng([seed, 102])
    worst = 0.0
    for _ in range(n_samples):
        theta = rng.uniform(-np.pi, np.pi, circuit.n_params)
        mps = entanglement_entropy(simulate(circuit, theta), 4)
        dense = von_neumann_entropy(reduced_density_matrix(statevector(circuit, theta), 4))
        worst = max(worst, abs(mps - dense))
    return _result("cut_entropy_matches_dense", worst, 1e-8)


def check_bdg() -> dict:
    worst = 0.0
    for n in (4, 6, 8):
        spec = tfim(chain(n), 1.0, 0.5)
        for beta in (0.0, 0.5, 1.0, 2.0, 5.0):
            worst = max(worst, abs(bdg_thermal_energy(n, 1.0, 0.5, beta) - exact_energy_density(spec, beta)))
    return _result("bdg_matches_dense", worst, 1e-9)


def check_identity_and_symmetry() -> list[dict]:
    gap = mag = 0.0
    for n in (4, 6):
        spec = tfim(chain(n), 1.0, 0.5)
        for beta in (0.5, 2.0, 5.0):
            gap = max(gap, chi_correlation_identity(dense_gibbs(spec, beta), beta, n_sites=n).gap)
            mag = max(mag, abs(exact_magnetization(spec, beta)))
    return [_result("chi_equals_correlation_sum", gap, 1e-10), _result("z2_magnetization_vanishes", mag, 1e-10)]


def check_shots(seed: int, n_shots: int = 20_000) -> list[dict]:
    lattice = chain(4)
    spec = tfim(lattice, 1.0, 0.5)
    circuit = build_ansatz(AnsatzConfig("HEA", 4, 2, 1))
    theta = np.random.default_rng([seed, 103]).uniform(-np.pi, np.pi, circuit.n_params)
    state = simulate(circuit, theta)
    z = sample_shots(state, "ZZZZ", n_shots, seed)
    x = sample_shots(state, "XXXX", n_shots, seed + 1)
    energy = energy_from_shots(z, x, spec)
    exact_e = expectation_mpo(state, to_mpo(spec, n_total=circuit.n_qubits)) / 4
    beta = 1.0
    chi = susceptibility_from_shots(z, beta, 4, seed=seed)
    m1, m2 = magnetization_moments(state, lattice)
    exact_chi = beta / 16 * (m2 - m1 * m1)
    return [
        _result("shot_energy_within_5_sigma", abs(energy.value - exact_e) / energy.stderr, 5.0),
        _result("shot_susceptibility_within_5_sigma", abs(chi.value - exact_chi) / chi.stderr, 5.0),
    ]


def check_zne() -> dict:
    a, b, c = -0.8, 0.3, 0.25
    worst = 0.0
    for factors in ((1, 2, 3), (1, 3, 5), (1, 2, 3, 4, 5)):
        pairs = [(lam, a + b * np.exp(-c * lam), 0.0) for lam in factors]
        worst = max(worst, abs(zne_extrapolate(pairs).extrapolated - (a + b)))
    return _result("zne_recovers_exponential", worst, 1e-6)


def demo_config(seed: int, betas: tuple[float, ...] = (0.0, 1.0, 2.0)) -> ExperimentConfig:
    return ExperimentConfig(
        model=ModelBlock(lattice=(3,)),
        ansatz=AnsatzBlock(n_ancilla=2, layers=1),
        objective=ObjectiveBlock(betas=betas),
        optimizer=OptimizerBlock(max_iter=400, restarts=2, seed=seed),
    )


def check_resume(work_dir: Path, seed: int) -> list[dict]:
    from .pipeline import PREP_FILE, load_prep, run_prepare

    if work_dir.exists():
        shutil.rmtree(work_dir)
    full = demo_config(seed)
    run_prepare(full, work_dir / "full")
    reference = (work_dir / "full" / PREP_FILE).read_bytes()

    # a run killed after the first two beta points, then restarted
    partial = dataclasses.replace(full, objective=dataclasses.replace(full.objective, betas=full.objective.betas[:2]))
    run_prepare(partial, work_dir / "resumed")
    summary = run_prepare(full, work_dir / "resumed")
    resumed = (work_dir / "resumed" / PREP_FILE).read_bytes()
    rerun = run_prepare(full, work_dir / "resumed")

    records = load_prep(work_dir / "full").values()
    bound_gap = min(r.F - r.exact_F for r in records if r.exact_F is not None)
    clamped = [r for r in records if r.beta_requested == 0.0]
    return [
        _result("resume_recomputes_only_missing_beta", len(summary.skipped), 2, passed=summary.skipped == [0.0, 1.0]
                and summary.completed == [2.0]),
        _result("resumed_file_matches_uninterrupted", float(resumed != reference), 0.5),
        _result("rerun_is_a_no_op", len(rerun.completed), 0.5),
        _result("prep_respects_gibbs_bound", -bound_gap, 1e-8),
        _result("zero_beta_clamped_and_flagged", 0.0, 1.0,
                passed=len(clamped) == 1 and clamped[0].beta_clamped and clamped[0].beta == 1e-5),
    ]


def run_checks(work_dir: str | Path, seed: int = 0) -> list[dict]:
    results = [check_free_energy(seed), check_entropy(seed), check_bdg()]
    results += check_identity_and_symmetry()
    results += check_shots(seed)
    results.append(check_zne())
    results += check_resume(Path(work_dir), seed)
    return results

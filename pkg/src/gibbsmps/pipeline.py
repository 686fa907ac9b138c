"""Experiment stages: prepare, oracle, measure, plot data and a self-check.

Every stage appends JSON lines to a file in the output directory and
flushes after each beta point. Rerunning a stage skips the beta values that
already have a record, so an interrupted run resumes where it stopped and a
repeated run leaves the files untouched.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections.abc import Iterable
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import CapacityError, DependencyError, JoinError, PreparationFailedError
from .measure import (
    NoiseModel,
    chi_correlation_identity,
    energy_from_shots,
    fold_gates,
    noisy_sample,
    specific_heat_from_state,
    susceptibility_from_shots,
    zne_extrapolate,
)
from .measure.estimators import magnetization_moments, z_moments
from .models import to_mpo
from .circuitir import simulate
from .oracles import bdg_free_energy, bdg_thermal_energy, qmc_tfim2d
from .oracles.dense import (
    MAX_DENSE_SITES,
    exact_energy_density,
    exact_specific_heat,
    exact_susceptibility,
    gibbs_free_energy,
)
from .oracles.qmc import QmcConfig
from .oracles.reference import ThermalReference
from .shots import ShotTable
from .tensornet import expectation_mpo, mpo_product, sample_shots
from .varprep import SCHEMA_VERSION, ObjectiveContext, PrepRecord, clamp_beta, multistart_prepare

log = logging.getLogger(__name__)

PREP_FILE = "prep.jsonl"
MEASURE_FILE = "measure.jsonl"
ORACLE_FILE = "oracle.jsonl"
DENSE_BOUND_SITES = 10


@dataclass
class StageSummary:
    completed: list[float] = field(default_factory=list)
    skipped: list[float] = field(default_factory=list)
    failed: list[tuple[float, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed


def beta_key(beta: float) -> str:
    return repr(float(beta))


def derived_seed(seed: int, *tags: int) -> int:
    """A 32-bit seed deterministically derived from ``seed`` and integer tags."""
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1)[0])


def read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    for line in path.read_text().splitlines():
        if line.strip():
            out.append(json.loads(line))
    return out


def _append(path: Path, line: str) -> None:
    with path.open("a") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _dump(data: dict) -> str:
    return json.dumps(data, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _hamiltonian(cfg: ExperimentConfig, n_total: int):
    spec = cfg.spec()
    return spec, to_mpo(spec, layout=cfg.lattice.default_layout(), n_total=n_total)


def run_prepare(cfg: ExperimentConfig, out_dir: str | Path, workers: int = 1) -> StageSummary:
    """Optimize every beta of the config and persist one :class:`PrepRecord` per beta."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / PREP_FILE
    done = {r["label"] for r in read_jsonl(path) if r.get("kind") == "prep"}
    circuit = cfg.circuit()
    spec, mpo = _hamiltonian(cfg, circuit.n_qubits)
    opt, obj = cfg.optimizer, cfg.objective
    summary = StageSummary()
    for beta in obj.betas:
        label = beta_key(beta)
        if label in done:
            summary.skipped.append(beta)
            continue
        ctx = ObjectiveContext(circuit, mpo, beta, obj.chi_max, obj.svd_cutoff)
        try:
            record = multistart_prepare(
                ctx,
                restarts=opt.restarts,
                seed=opt.seed,
                max_iter=opt.max_iter,
                rho_begin=opt.rho_begin,
                rho_end=opt.rho_end,
                method=opt.method,
                workers=workers,
                beta_requested=beta,
                label=label,
            )
        except PreparationFailedError as exc:
            log.error("beta=%s: %s", label, exc)
            summary.failed.append((beta, str(exc)))
            continue
        if spec.n_sites <= DENSE_BOUND_SITES:
            record.exact_F = gibbs_free_energy(spec, ctx.beta)
        _append(path, record.to_json())
        log.info("beta=%s F=%.10f E=%.10f S=%.10f", label, record.F, record.E, record.S)
        summary.completed.append(beta)
    return summary


def load_prep(out_dir: str | Path) -> dict[str, PrepRecord]:
    path = Path(out_dir) / PREP_FILE
    out = {}
    for line in path.read_text().splitlines() if path.exists() else []:
        if line.strip() and json.loads(line).get("kind") == "prep":
            rec = PrepRecord.from_json(line)
            out[rec.label] = rec
    return out


def run_oracle(cfg: ExperimentConfig, out_dir: str | Path) -> StageSummary:
    """Reference values per beta from dense ED, free fermions and/or QMC."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / ORACLE_FILE
    done = {(r["source"], r["label"]) for r in read_jsonl(path) if r.get("kind") == "reference"}
    spec = cfg.spec()
    n = spec.n_sites
    is_chain = cfg.lattice.kind == "chain"
    sources = list(cfg.oracle.sources)
    if sources == ["auto"]:
        sources = []
        if n <= MAX_DENSE_SITES:
            sources.append("dense")
        if spec.model == "TFIM" and is_chain:
            sources.append("bdg")
        if spec.model == "TFIM" and not is_chain:
            sources.append("qmc")
    summary = StageSummary()
    tag = {"dense": "DenseED", "bdg": "BdG", "qmc": "QMC"}
    for idx, beta in enumerate(cfg.objective.betas):
        label = beta_key(beta)
        for source in sources:
            if (tag[source], label) in done:
                summary.skipped.append(beta)
                continue
            try:
                extra = _reference(cfg, spec, source, beta, idx)
            except (CapacityError, ValueError) as exc:
                log.error("%s at beta=%s: %s", source, label, exc)
                summary.failed.append((beta, f"{source}: {exc}"))
                continue
            _append(path, _dump({"kind": "reference", "label": label, **extra, "schema_version": SCHEMA_VERSION}))
            summary.completed.append(beta)
    return summary


def _reference(cfg: ExperimentConfig, spec, source: str, beta: float, idx: int) -> dict:
    n = spec.n_sites
    beta = clamp_beta(beta)[0]
    if source == "dense":
        ref = ThermalReference("DenseED", beta, exact_energy_density(spec, beta))
        extra = {
            "susceptibility": exact_susceptibility(spec, beta),
            "specific_heat": exact_specific_heat(spec, beta),
            "free_energy": gibbs_free_energy(spec, beta) / n,
        }
    elif source == "bdg":
        if spec.model != "TFIM" or cfg.lattice.kind != "chain":
            raise ValueError("the free-fermion oracle covers the TFIM chain only")
        ref = ThermalReference("BdG", beta, bdg_thermal_energy(n, spec.J, spec.h, beta))
        extra = {"free_energy": bdg_free_energy(n, spec.J, spec.h, beta) / n}
    elif source == "qmc":
        if spec.model != "TFIM":
            raise ValueError("QMC covers the TFIM only")
        rows, cols = cfg.lattice.dims if cfg.lattice.kind == "grid" else (1, n)
        o = cfg.oracle
        slices = max(8, int(np.ceil(beta / o.qmc_dtau - 1e-9)))
        res = qmc_tfim2d(
            QmcConfig(
                rows,
                cols,
                beta,
                spec.J,
                spec.h,
                n_slices=slices,
                n_thermalization=o.qmc_thermalization,
                n_measure_sweeps=o.qmc_sweeps,
                n_bins=o.qmc_bins,
                seed=derived_seed(cfg.optimizer.seed, 7, idx),
            )
        )
        ref = res.reference
        extra = {
            "susceptibility": res.susceptibility,
            "susceptibility_stderr": res.susceptibility_stderr,
            "correlations_row0": res.correlations[0],
            "n_slices": res.n_slices,
            "flags": res.flags,
        }
    else:
        raise ValueError(f"unknown oracle source {source!r}")
    return {**ref.to_dict(), **extra}


def _shot_path(out: Path, label: str, lam: int, basis: str) -> Path:
    return out / "shots" / f"beta-{label}-lam{lam}-{basis}.txt"


def run_measure(cfg: ExperimentConfig, out_dir: str | Path) -> StageSummary:
    """Shot-based and state-based observables for every prepared beta.

    Raises:
        DependencyError: a beta of the config has no prep record.
    """
    out = Path(out_dir)
    prep = load_prep(out)
    missing = [b for b in cfg.objective.betas if beta_key(b) not in prep]
    if missing:
        raise DependencyError(f"no prep record for beta = {', '.join(beta_key(b) for b in missing)}")
    path = out / MEASURE_FILE
    done = {r["label"] for r in read_jsonl(path) if r.get("kind") == "measure"}
    (out / "shots").mkdir(parents=True, exist_ok=True)

    circuit = cfg.circuit()
    spec, mpo = _hamiltonian(cfg, circuit.n_qubits)
    h2 = mpo_product(mpo, mpo)
    lattice = cfg.lattice
    n = spec.n_sites
    order = list(lattice.default_layout())
    m = cfg.measurement
    seed = cfg.optimizer.seed
    obj = cfg.objective
    summary = StageSummary()
    for idx, beta in enumerate(obj.betas):
        label = beta_key(beta)
        if label in done:
            summary.skipped.append(beta)
            continue
        rec = prep[label]
        b_eff = rec.beta
        theta = np.array(rec.theta_star)
        state = simulate(circuit, theta, obj.chi_max, obj.svd_cutoff)

        z = sample_shots(state, "Z" * n, m.shots, derived_seed(seed, 1, idx, 0), order)
        x = sample_shots(state, "X" * n, m.shots, derived_seed(seed, 1, idx, 1), order)
        z.save(_shot_path(out, label, 1, "Z"))
        x.save(_shot_path(out, label, 1, "X"))
        energy = energy_from_shots(z, x, spec)
        chi = susceptibility_from_shots(z, b_eff, n, seed=derived_seed(seed, 3, idx))
        m1, m2 = magnetization_moments(state, lattice)
        single, pair = z_moments(state, lattice)
        record = {
            "kind": "measure",
            "label": label,
            "beta": b_eff,
            "energy": asdict(energy),
            "susceptibility": asdict(chi),
            "energy_state": expectation_mpo(state, mpo) / n,
            "susceptibility_state": b_eff / n**2 * (m2 - m1 * m1),
            "specific_heat_state": specific_heat_from_state(state, mpo, b_eff, n, h2=h2),
            "correlations_state": pair - np.outer(single, single),
            "identity_gap": chi_correlation_identity(state, b_eff, lattice=lattice).gap,
        }
        if m.noise_p > 0 or m.readout_flip > 0 or m.zne_sets:
            record.update(_noisy_block(cfg, spec, circuit, theta, b_eff, idx, order, out, label))
        _append(path, _dump({**record, "schema_version": SCHEMA_VERSION}))
        summary.completed.append(beta)
    return summary


def _noisy_block(cfg, spec, circuit, theta, beta, idx, order, out, label) -> dict:
    m = cfg.measurement
    n = spec.n_sites
    seed = cfg.optimizer.seed
    noise = NoiseModel(m.noise_p, m.readout_flip)
    factors = sorted({lam for s in m.zne_sets for lam in s} | {1})
    per_lambda = {}
    for lam in factors:
        folded = fold_gates(circuit, lam)
        kw = dict(chi_max=cfg.objective.chi_max, svd_cutoff=cfg.objective.svd_cutoff, order=order)
        z = noisy_sample(folded, theta, noise, "Z" * n, m.shots, derived_seed(seed, 2, idx, lam, 0), **kw)
        x = noisy_sample(folded, theta, noise, "X" * n, m.shots, derived_seed(seed, 2, idx, lam, 1), **kw)
        z.save(_shot_path(out, label, lam, "Z").with_suffix(".noisy.txt"))
        x.save(_shot_path(out, label, lam, "X").with_suffix(".noisy.txt"))
        per_lambda[lam] = {
            "energy": asdict(energy_from_shots(z, x, spec)),
            "susceptibility": asdict(susceptibility_from_shots(z, beta, n, seed=derived_seed(seed, 4, idx, lam))),
        }
    zne = []
    for k, lam_set in enumerate(m.zne_sets):
        entry = {"factors": list(lam_set)}
        for obs in ("energy", "susceptibility"):
            pairs = [(lam, per_lambda[lam][obs]["value"], per_lambda[lam][obs]["stderr"]) for lam in lam_set]
            est = zne_extrapolate(pairs, fit=m.fit, n_resamples=m.bootstrap, seed=derived_seed(seed, 5, idx, k))
            entry[obs] = asdict(est)
        zne.append(entry)
    return {"noisy": {str(lam): v for lam, v in per_lambda.items()}, "zne": zne}


PLOT_HEADER = "# columns: beta (inverse temperature), value, stderr (0 for exact values), source"


def emit_plotdata(out_dir: str | Path, n_sites: int) -> list[Path]:
    """Write long-format CSVs ``(beta, value, stderr, source)`` for each observable.

    Raises:
        JoinError: the references do not cover the prepared beta grid.
    """
    out = Path(out_dir)
    prep = [r for r in read_jsonl(out / PREP_FILE) if r.get("kind") == "prep"]
    meas = [r for r in read_jsonl(out / MEASURE_FILE) if r.get("kind") == "measure"]
    refs = [r for r in read_jsonl(out / ORACLE_FILE) if r.get("kind") == "reference"]
    if not prep:
        raise DependencyError("no prep records to plot")
    prep_grid = {r["label"] for r in prep}
    if refs:
        unmatched = sorted(prep_grid ^ {r["label"] for r in refs}, key=float)
        if unmatched:
            raise JoinError(f"beta values without a match: {', '.join(unmatched)}")
    if meas:
        unmatched = sorted({r["label"] for r in meas} - prep_grid, key=float)
        if unmatched:
            raise JoinError(f"measured beta values without prep records: {', '.join(unmatched)}")

    rows: dict[str, list[tuple]] = {"energy": [], "susceptibility": [], "specific_heat": [], "free_energy": []}
    for r in refs:
        b = float(r["label"])
        rows["energy"].append((b, r["energy_density"], r["stderr"], r["source"]))
        if "susceptibility" in r:
            rows["susceptibility"].append((b, r["susceptibility"], r.get("susceptibility_stderr", 0.0), r["source"]))
        if "specific_heat" in r:
            rows["specific_heat"].append((b, r["specific_heat"], 0.0, r["source"]))
        if "free_energy" in r:
            rows["free_energy"].append((b, r["free_energy"], 0.0, r["source"]))
    for r in meas:
        b = float(r["label"])
        rows["energy"].append((b, r["energy"]["value"], r["energy"]["stderr"], "shots"))
        rows["susceptibility"].append((b, r["susceptibility"]["value"], r["susceptibility"]["stderr"], "shots"))
        rows["susceptibility"].append((b, r["susceptibility_state"], 0.0, "variational"))
        rows["specific_heat"].append((b, r["specific_heat_state"], 0.0, "variational"))
        for lam, v in r.get("noisy", {}).items():
            rows["energy"].append((b, v["energy"]["value"], v["energy"]["stderr"], f"noisy-lambda{lam}"))
        for z in r.get("zne", []):
            tag = "zne-" + "-".join(map(str, z["factors"]))
            e = z["energy"]
            half = (e["ci_high"] - e["ci_low"]) / 2
            rows["energy"].append((b, e["extrapolated"], half, tag))
    for r in prep:
        b = float(r["label"])
        rows["free_energy"].append((b, r["F"] / n_sites, 0.0, "variational"))
        rows["energy"].append((b, r["E"] / n_sites, 0.0, "variational"))
    written = []
    for name, data in rows.items():
        if not data:
            continue
        target = out / f"plot_{name}.csv"
        with target.open("w", newline="") as fh:
            fh.write(PLOT_HEADER + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["beta", "value", "stderr", "source"])
            for row in sorted(data, key=lambda d: (d[0], d[3])):
                w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), row[3]])
        written.append(target)
    return written


def verify(out_dir: str | Path, seed: int = 0) -> list[dict]:
    """Fast self-check of the core identities plus a determinism/resume round trip.

    Returns one ``{"check", "passed", "value", "tolerance"}`` dict per check
    and writes them to ``verify.jsonl`` in ``out_dir``.
    """
    from .checks import run_checks

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_checks(out / "demo", seed)
    target = out / "verify.jsonl"
    target.write_text("".join(_dump({**r, "schema_version": SCHEMA_VERSION}) + "\n" for r in results))
    return results


def iter_failures(summary: StageSummary) -> Iterable[str]:
    for beta, message in summary.failed:
        yield f"beta={beta_key(beta)}: {message}"

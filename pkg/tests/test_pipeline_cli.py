import dataclasses
import json

import pytest

from gibbsmps import cli
from gibbsmps.checks import demo_config
from gibbsmps.config import MeasurementBlock, OracleBlock
from gibbsmps.errors import DependencyError, JoinError
from gibbsmps.oracles.dense import gibbs_free_energy
from gibbsmps.pipeline import (
    MEASURE_FILE,
    ORACLE_FILE,
    PLOT_HEADER,
    PREP_FILE,
    emit_plotdata,
    load_prep,
    read_jsonl,
    run_measure,
    run_oracle,
    run_prepare,
)


def small(seed=0, betas=(0.0, 1.0), **measurement):
    cfg = demo_config(seed, betas)
    cfg = dataclasses.replace(cfg, optimizer=dataclasses.replace(cfg.optimizer, max_iter=150, restarts=1))
    return dataclasses.replace(cfg, measurement=MeasurementBlock(shots=2000, bootstrap=100, **measurement))


@pytest.fixture(scope="module")
def prepared(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = small()
    run_prepare(cfg, out)
    return cfg, out


def test_prepare_records(prepared):
    cfg, out = prepared
    recs = load_prep(out)
    assert sorted(recs) == ["0.0", "1.0"]
    zero = recs["0.0"]
    assert zero.beta_clamped and zero.beta == 1e-5
    for rec in recs.values():
        assert rec.F >= gibbs_free_energy(cfg.spec(), rec.beta) - 1e-8
        assert rec.schema_version == 1


def test_prepare_is_deterministic(prepared, tmp_path):
    cfg, out = prepared
    run_prepare(cfg, tmp_path)
    assert (tmp_path / PREP_FILE).read_bytes() == (out / PREP_FILE).read_bytes()


def test_resume_skips_completed(prepared, tmp_path):
    cfg, out = prepared
    first = dataclasses.replace(cfg, objective=dataclasses.replace(cfg.objective, betas=(0.0,)))
    run_prepare(first, tmp_path)
    summary = run_prepare(cfg, tmp_path)
    assert summary.skipped == [0.0] and summary.completed == [1.0]
    assert (tmp_path / PREP_FILE).read_bytes() == (out / PREP_FILE).read_bytes()


def test_measure_needs_prep(tmp_path):
    with pytest.raises(DependencyError, match="1.0"):
        run_measure(small(), tmp_path)


def test_measure_and_plot(prepared):
    cfg, out = prepared
    run_measure(cfg, out)
    run_oracle(cfg, out)
    meas = {r["label"]: r for r in read_jsonl(out / MEASURE_FILE)}
    for rec in meas.values():
        assert rec["identity_gap"] < 1e-10
        assert abs(rec["energy"]["value"] - rec["energy_state"]) < 5 * rec["energy"]["stderr"] + 1e-12
    assert (out / "shots" / "beta-1.0-lam1-Z.txt").exists()
    sources = {r["source"] for r in read_jsonl(out / ORACLE_FILE)}
    assert sources == {"DenseED", "BdG"}
    paths = emit_plotdata(out, 3)
    energy = next(p for p in paths if p.name == "plot_energy.csv").read_text().splitlines()
    assert energy[0] == PLOT_HEADER and energy[1] == "beta,value,stderr,source"
    assert {line.split(",")[3] for line in energy[2:]} == {"DenseED", "BdG", "shots", "variational"}
    # a second pass is a no-op
    assert run_measure(cfg, out).completed == []


def test_plot_join_error(prepared, tmp_path):
    cfg, out = prepared
    (tmp_path / PREP_FILE).write_bytes((out / PREP_FILE).read_bytes())
    run_oracle(dataclasses.replace(cfg, objective=dataclasses.replace(cfg.objective, betas=(1.0, 3.0))), tmp_path)
    with pytest.raises(JoinError, match="3.0"):
        emit_plotdata(tmp_path, 3)


def test_noisy_measure_with_zne(tmp_path):
    cfg = small(betas=(1.0,), noise_p=0.01, zne_sets=((1, 3, 5),))
    cfg = dataclasses.replace(cfg, oracle=OracleBlock(sources=("dense",)))
    run_prepare(cfg, tmp_path)
    run_measure(cfg, tmp_path)
    (rec,) = read_jsonl(tmp_path / MEASURE_FILE)
    assert sorted(rec["noisy"]) == ["1", "3", "5"]
    zne = rec["zne"][0]["energy"]
    assert zne["ci_low"] <= zne["ci_high"]


# command line


def write_config(tmp_path, cfg):
    path = tmp_path / "run.ini"
    cfg.save(path)
    return path


def test_cli_pipeline(tmp_path, capsys):
    path = write_config(tmp_path, small(betas=(1.0,)))
    out = tmp_path / "out"
    assert cli.main(["prepare", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    assert cli.main(["measure", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    assert cli.main(["oracle", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    assert cli.main(["plotdata", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    assert "plot_energy.csv" in capsys.readouterr().out
    assert cli.main(["prepare", "--config", str(path), "--out", str(out)]) == cli.EXIT_OK
    assert "0 done, 1 already present" in capsys.readouterr().out


def test_cli_seed_override(tmp_path):
    path = write_config(tmp_path, small(betas=(1.0,)))
    cli.main(["prepare", "--config", str(path), "--out", str(tmp_path / "a"), "--seed", "5"])
    (rec,) = read_jsonl(tmp_path / "a" / PREP_FILE)
    assert rec["seed"] == 5


def test_cli_config_error(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[model]\nkind = TFIM\nbogus = 1\n")
    assert cli.main(["prepare", "--config", str(path)]) == cli.EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err
    assert cli.main(["prepare"]) == cli.EXIT_CONFIG


def test_cli_dependency_error(tmp_path, capsys):
    path = write_config(tmp_path, small(betas=(2.0,)))
    assert cli.main(["measure", "--config", str(path), "--out", str(tmp_path / "none")]) == cli.EXIT_DEPENDENCY
    assert "2.0" in capsys.readouterr().err


def test_verify_is_deterministic(tmp_path, capsys):
    assert cli.main(["verify", "--out", str(tmp_path / "a")]) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    cli.main(["verify", "--out", str(tmp_path / "b")])
    first = (tmp_path / "a" / "verify.jsonl").read_bytes()
    assert first == (tmp_path / "b" / "verify.jsonl").read_bytes()
    assert all(json.loads(line)["passed"] for line in first.decode().splitlines())

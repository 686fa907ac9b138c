"""Experiment configuration: an INI-style file with one section per block.

Example::

    [model]
    kind = TFIM
    lattice = chain 4
    J = 1.0
    h = 0.5

    [ansatz]
    family = HEA
    n_ancilla = 4
    layers = 2

    [objective]
    betas = 0 1 5

    [optimizer]
    restarts = 10
    seed = 7

Unlisted keys take the defaults of the dataclasses below. Lists are
whitespace separated; ``zne_sets`` separates sets with ``;`` and factors
with ``,``. :meth:`ExperimentConfig.to_text` writes every key in a fixed
order, so parsing and re-serializing canonical text is byte-identical.
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

from .circuitir import AnsatzConfig, Circuit, build_ansatz
from .errors import ConfigError
from .models import HamiltonianSpec, Lattice, chain, grid, tfim, xxz


@dataclass(frozen=True)
class ModelBlock:
    kind: str = "TFIM"
    lattice: tuple[int, ...] = (4,)
    J: float = 1.0
    h: float = 0.5
    delta: float = -1.5


@dataclass(frozen=True)
class AnsatzBlock:
    family: str = "HEA"
    n_ancilla: int = 4
    layers: int = 2
    entangler: str = "CNOT"


@dataclass(frozen=True)
class ObjectiveBlock:
    betas: tuple[float, ...] = (1.0,)
    chi_max: int = 128
    svd_cutoff: float = 1e-12


@dataclass(frozen=True)
class OptimizerBlock:
    method: str = "COBYLA"
    max_iter: int = 10_000
    restarts: int = 10
    rho_begin: float = 0.5
    rho_end: float = 1e-6
    seed: int = 0


@dataclass(frozen=True)
class MeasurementBlock:
    shots: int = 100_000
    noise_p: float = 0.0
    readout_flip: float = 0.0
    zne_sets: tuple[tuple[int, ...], ...] = ()
    fit: str = "exponential"
    bootstrap: int = 1000
    bootstrap_mode: str = "summary"


@dataclass(frozen=True)
class OracleBlock:
    sources: tuple[str, ...] = ("auto",)
    qmc_sweeps: int = 12_800
    qmc_thermalization: int = 2000
    qmc_bins: int = 64
    qmc_dtau: float = 0.1


@dataclass(frozen=True)
class OutputBlock:
    path: str = "results"


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    ansatz: AnsatzBlock = field(default_factory=AnsatzBlock)
    objective: ObjectiveBlock = field(default_factory=ObjectiveBlock)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    measurement: MeasurementBlock = field(default_factory=MeasurementBlock)
    oracle: OracleBlock = field(default_factory=OracleBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def __post_init__(self) -> None:
        _validate(self)

    @property
    def lattice(self) -> Lattice:
        dims = self.model.lattice
        return chain(dims[0]) if len(dims) == 1 else grid(*dims)

    def spec(self) -> HamiltonianSpec:
        if self.model.kind == "TFIM":
            return tfim(self.lattice, self.model.J, self.model.h)
        return xxz(self.lattice, self.model.J, self.model.delta)

    def ansatz_config(self) -> AnsatzConfig:
        n = self.lattice.n_sites
        n_anc = n if self.ansatz.family == "TFDA" else self.ansatz.n_ancilla
        return AnsatzConfig(self.ansatz.family, n, n_anc, self.ansatz.layers, self.ansatz.entangler, self.spec())

    def circuit(self) -> Circuit:
        return build_ansatz(self.ansatz_config())

    def with_seed(self, seed: int) -> ExperimentConfig:
        return dataclasses.replace(self, optimizer=dataclasses.replace(self.optimizer, seed=int(seed)))

    def with_output(self, path: str) -> ExperimentConfig:
        return dataclasses.replace(self, output=OutputBlock(str(path)))

    def to_text(self) -> str:
        lines: list[str] = []
        for block in dataclasses.fields(self):
            lines.append(f"[{block.name}]")
            value = getattr(self, block.name)
            for f in dataclasses.fields(value):
                lines.append(f"{f.name} = {_format(f.name, getattr(value, f.name))}".rstrip())
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        parser.optionxform = str  # keep key case (J, h)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc).splitlines()[0], line=getattr(exc, "lineno", None)) from None
        where = _key_lines(text)
        known = {f.name: f for f in dataclasses.fields(cls)}
        blocks = {}
        for section in parser.sections():
            if section not in known:
                raise ConfigError(f"unknown section [{section}]", line=where.get((section, None)))
            block_type = _BLOCK_TYPES[section]
            names = {f.name: f for f in dataclasses.fields(block_type)}
            values = {}
            for key, raw in parser.items(section):
                if key not in names:
                    raise ConfigError(f"unknown key in [{section}]", line=where.get((section, key)), field=key)
                try:
                    values[key] = _parse(key, raw, names[key].type)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"cannot parse {raw!r}: {exc}", line=where.get((section, key)), field=key) from None
            blocks[section] = block_type(**values)
        try:
            return cls(**blocks)
        except ConfigError as exc:
            if exc.field and exc.line is None:
                sec, _, key = exc.field.partition(".")
                raise ConfigError(exc.message, line=where.get((sec, key)), field=exc.field) from None
            raise

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_text(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


_BLOCK_TYPES = {
    "model": ModelBlock,
    "ansatz": AnsatzBlock,
    "objective": ObjectiveBlock,
    "optimizer": OptimizerBlock,
    "measurement": MeasurementBlock,
    "oracle": OracleBlock,
    "output": OutputBlock,
}


def _key_lines(text: str) -> dict[tuple[str, str | None], int]:
    out: dict[tuple[str, str | None], int] = {}
    section = ""
    for no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"\[([^\]]+)\]", stripped)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:\s]+)\s*[=:]", stripped)
        if m and section:
            out.setdefault((section, m.group(1)), no)
    return out


def _format(name: str, value) -> str:
    if name == "lattice":
        return ("chain " if len(value) == 1 else "grid ") + " ".join(map(str, value))
    if name == "zne_sets":
        return "; ".join(",".join(map(str, s)) for s in value)
    if isinstance(value, tuple):
        return " ".join(_format("", v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(name: str, raw: str, annotation: str):
    raw = raw.strip()
    if name == "lattice":
        parts = raw.split()
        if parts and parts[0] == "chain" and len(parts) == 2:
            return (int(parts[1]),)
        if parts and parts[0] == "grid" and len(parts) == 3:
            return (int(parts[1]), int(parts[2]))
        raise ValueError("expected 'chain N' or 'grid ROWS COLS'")
    if name == "zne_sets":
        if not raw:
            return ()
        return tuple(tuple(int(x) for x in chunk.split(",")) for chunk in raw.split(";") if chunk.strip())
    if annotation.startswith("tuple[float"):
        return tuple(float(x) for x in raw.split())
    if annotation.startswith("tuple[str"):
        return tuple(raw.split())
    if annotation == "int":
        return int(raw)
    if annotation == "float":
        return float(raw)
    return raw


def _validate(cfg: ExperimentConfig) -> None:
    m = cfg.model
    if m.kind not in ("TFIM", "XXZ"):
        raise ConfigError("kind must be TFIM or XXZ", field="model.kind")
    if len(m.lattice) not in (1, 2) or any(d < 1 for d in m.lattice) or _prod(m.lattice) < 2:
        raise ConfigError("lattice needs at least two sites", field="model.lattice")
    if m.kind == "XXZ" and len(m.lattice) != 1:
        raise ConfigError("XXZ is only supported on a chain", field="model.lattice")
    a = cfg.ansatz
    if a.family not in ("HEA", "TFDA"):
        raise ConfigError("family must be HEA or TFDA", field="ansatz.family")
    if a.entangler not in ("CNOT", "RZZ"):
        raise ConfigError("entangler must be CNOT or RZZ", field="ansatz.entangler")
    if a.family == "HEA" and (a.layers < 1 or a.n_ancilla < 1):
        raise ConfigError("HEA needs layers >= 1 and n_ancilla >= 1", field="ansatz.layers")
    if a.layers < 0:
        raise ConfigError("layers must be >= 0", field="ansatz.layers")
    o = cfg.objective
    if not o.betas or any(not b >= 0 for b in o.betas):
        raise ConfigError("betas must be a non-empty list of values >= 0", field="objective.betas")
    if len(set(o.betas)) != len(o.betas):
        raise ConfigError("betas must be distinct", field="objective.betas")
    if o.chi_max < 1 or o.svd_cutoff < 0:
        raise ConfigError("need chi_max >= 1 and svd_cutoff >= 0", field="objective.chi_max")
    p = cfg.optimizer
    if p.method not in ("COBYLA", "Nelder-Mead"):
        raise ConfigError("method must be COBYLA or Nelder-Mead", field="optimizer.method")
    if p.restarts < 1 or p.max_iter < 1:
        raise ConfigError("restarts and max_iter must be >= 1", field="optimizer.restarts")
    if not p.rho_begin > p.rho_end > 0:
        raise ConfigError("need rho_begin > rho_end > 0", field="optimizer.rho_begin")
    s = cfg.measurement
    if s.shots < 1:
        raise ConfigError("shots must be >= 1", field="measurement.shots")
    if not 0 <= s.noise_p <= 0.1 or not 0 <= s.readout_flip <= 0.05:
        raise ConfigError("noise_p in [0, 0.1] and readout_flip in [0, 0.05]", field="measurement.noise_p")
    for zs in s.zne_sets:
        if len(zs) < 2 or len(set(zs)) != len(zs) or min(zs) < 1:
            raise ConfigError("each ZNE set needs >= 2 distinct factors >= 1", field="measurement.zne_sets")
    if s.fit not in ("exponential", "linear"):
        raise ConfigError("fit must be exponential or linear", field="measurement.fit")
    if s.bootstrap_mode not in ("summary", "samples"):
        raise ConfigError("bootstrap_mode must be summary or samples", field="measurement.bootstrap_mode")
    if s.bootstrap != 0 and s.bootstrap < 100:
        raise ConfigError("bootstrap must be 0 or >= 100", field="measurement.bootstrap")
    r = cfg.oracle
    if set(r.sources) - {"auto", "dense", "bdg", "qmc"}:
        raise ConfigError("sources must be among auto, dense, bdg, qmc", field="oracle.sources")
    if not 0 < r.qmc_dtau <= 0.1:
        raise ConfigError("qmc_dtau must lie in (0, 0.1]", field="oracle.qmc_dtau")


def _prod(dims: tuple[int, ...]) -> int:
    out = 1
    for d in dims:
        out *= d
    return out

"""Experiment configuration: defaults, key=value file, flag overrides.

Resolution order is defaults, then the optional config file, then explicit
command-line flags. The fully resolved configuration is validated before
any sampling happens, echoed into the output directory as config.txt, and
hashed; every CSV the run emits carries the hash in a comment line.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to exit code 2)."""


def _int_list(text: str) -> list[int]:
    return [int(part) for part in str(text).split(",") if part != ""]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in str(text).split(",") if part != ""]


@dataclass
class ParamSpec:
    name: str
    kind: type | str  # int, float, str, "int_list", "float_list"
    default: object
    help: str

    def parse(self, raw) -> object:
        try:
            if self.kind == "int_list":
                return _int_list(raw) if isinstance(raw, str) else list(raw)
            if self.kind == "float_list":
                return _float_list(raw) if isinstance(raw, str) else list(raw)
            return self.kind(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {self.name}: {raw!r}") from exc


PARAM_SPECS: dict[str, list[ParamSpec]] = {
    "example": [
        ParamSpec("runs", int, 30_000, "samples per estimator per replicate"),
        ParamSpec("t_guess", "int_list", [2, 4, 30], "mixing-time guesses for the baselines"),
        ParamSpec("step_cap", int, 1_000_000, "per-run coalescence cap"),
    ],
    "coalescence": [
        ParamSpec("sizes", "int_list", [5, 10, 20], "state counts for random ergodic chains"),
        ParamSpec("chains_per_size", int, 3, "independent chains per size"),
        ParamSpec("runs", int, 2000, "coalescence runs per chain"),
        ParamSpec("lazy_size", int, 20, "state count for the lazy-chain family"),
        ParamSpec("lazy_eps", "float_list", [0.4, 0.2, 0.1], "exit rates for the lazy family"),
        ParamSpec("grand_sizes", "int_list", [8, 16], "state counts for grand couplings"),
        ParamSpec("grand_runs", int, 500, "grand-coupling runs per size"),
        ParamSpec("delta", float, 0.05, "tail level for reference thresholds"),
        ParamSpec("step_cap", int, 10_000_000, "per-run coalescence cap"),
    ],
    "mwal": [
        ParamSpec("epsilon", float, 0.1, "target optimality gap"),
        ParamSpec("delta", float, 0.1, "failure probability"),
        ParamSpec("k", int, 2, "feature dimension"),
        ParamSpec("n_rounds", int, 0, "rounds T; 0 derives (144/eps^2) log k"),
        ParamSpec("m", int, 0, "expert samples; 0 derives (18/eps^2) log(2k/delta)"),
        ParamSpec("n_states", int, 4, "instance state count"),
        ParamSpec("n_actions", int, 2, "instance action count"),
        ParamSpec("instance_seed", int, 7, "seed of the built-in instance generator"),
        ParamSpec("step_cap", int, 1_000_000, "per-run coalescence cap"),
    ],
    "mwal-gen": [
        ParamSpec("epsilon", float, 0.15, "target optimality gap for the summary check"),
        ParamSpec("delta", float, 0.1, "failure probability"),
        ParamSpec("k", int, 2, "feature dimension"),
        ParamSpec("n_rounds", int, 1500, "rounds T (desk-scale; no closed form)"),
        ParamSpec("b", float, 2.0, "high-probability bound parameter for the columns"),
        ParamSpec("n_states", int, 3, "instance state count"),
        ParamSpec("n_actions", int, 2, "instance action count"),
        ParamSpec("instance_seed", int, 11, "seed of the built-in instance generator"),
        ParamSpec("step_cap", int, 1_000_000, "per-run coalescence cap"),
    ],
    "pg": [
        ParamSpec("samples", int, 50_000, "gradient samples per instance"),
        ParamSpec("instance", str, "both", "single_state, random, or both"),
        ParamSpec("n_states", int, 3, "random-instance state count"),
        ParamSpec("n_actions", int, 2, "random-instance action count"),
        ParamSpec("instance_seed", int, 5, "seed of the built-in instance generator"),
        ParamSpec("step_cap", int, 1_000_000, "per-run coalescence cap"),
    ],
    "eval-store": [
        ParamSpec("epsilon", float, 0.1, "simultaneous accuracy target"),
        ParamSpec("delta", float, 0.1, "failure probability"),
        ParamSpec("n_states", int, 3, "instance state count"),
        ParamSpec("n_actions", int, 2, "instance action count"),
        ParamSpec("instance_seed", int, 3, "seed of the built-in instance generator"),
        ParamSpec("step_cap", int, 1_000_000, "per-run coalescence cap"),
    ],
}


@dataclass
class ExperimentConfig:
    subcommand: str
    seed: int = 0
    out_dir: Path = Path("out")
    replicates: int = 10
    jobs: int = 1
    params: dict = field(default_factory=dict)

    def param(self, name: str):
        return self.params[name]

    def resolved_text(self) -> str:
        lines = [
            f"subcommand={self.subcommand}",
            f"seed={self.seed}",
            f"replicates={self.replicates}",
            f"jobs={self.jobs}",
        ]
        for key in sorted(self.params):
            value = self.params[key]
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        # jobs affects scheduling only, never output; keep it out of the hash.
        text = "\n".join(
            line for line in self.resolved_text().splitlines() if not line.startswith("jobs=")
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def validate(self) -> None:
        if self.subcommand not in PARAM_SPECS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        p = self.params
        positive = {
            "runs", "chains_per_size", "lazy_size", "grand_runs", "step_cap",
            "samples", "n_states", "n_actions", "k", "b",
        }
        for key, value in p.items():
            if key in positive and not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"{key} must be positive, got {value!r}")
        for key in ("epsilon", "delta"):
            if key in p and not 0.0 < p[key] < 1.0:
                raise ConfigError(f"{key} must lie in (0, 1), got {p[key]!r}")
        for key in ("sizes", "grand_sizes", "t_guess"):
            if key in p and (not p[key] or any(v < 1 for v in p[key])):
                raise ConfigError(f"{key} must be a non-empty list of positive integers")
        if "lazy_eps" in p and any(not 0.0 < e < 1.0 for e in p["lazy_eps"]):
            raise ConfigError("lazy_eps entries must lie in (0, 1)")
        if "instance" in p and p["instance"] not in ("single_state", "random", "both"):
            raise ConfigError("instance must be single_state, random, or both")
        if "n_rounds" in p and p["n_rounds"] < 0:
            raise ConfigError("n_rounds must be >= 0")
        if "m" in p and p["m"] < 0:
            raise ConfigError("m must be >= 0")


def read_config_file(path: Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for raw_line in Path(path).read_text().splitlines():
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"bad config line (want key=value): {raw_line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def build_config(subcommand: str, cli_values: dict, file_path: Path | None) -> ExperimentConfig:
    """Merge defaults, config-file values, and explicit CLI flags."""
    specs = {spec.name: spec for spec in PARAM_SPECS[subcommand]}
    common = {"seed": 0, "out": "out", "replicates": 10, "jobs": 1}
    file_values = read_config_file(file_path) if file_path else {}

    merged: dict[str, object] = {name: spec.default for name, spec in specs.items()}
    merged.update(common)
    for key, value in file_values.items():
        if key in specs:
            merged[key] = specs[key].parse(value)
        elif key in common:
            merged[key] = int(value) if key in ("seed", "replicates", "jobs") else value
        elif key == "subcommand":
            if value != subcommand:
                raise ConfigError(f"config file is for {value!r}, not {subcommand!r}")
        else:
            raise ConfigError(f"unknown config key {key!r} for {subcommand}")
    for key, value in cli_values.items():
        if value is None:
            continue
        if key in specs:
            merged[key] = specs[key].parse(value)
        elif key in common:
            merged[key] = value

    config = ExperimentConfig(
        subcommand=subcommand,
        seed=int(merged["seed"]),
        out_dir=Path(merged["out"]),
        replicates=int(merged["replicates"]),
        jobs=int(merged["jobs"]),
        params={name: merged[name] for name in specs},
    )
    config.validate()
    return config

"""Experiment configuration: a sectioned key-value text format.

Sections mirror the runtime components: [experiment] for the generation
loop, [sampler] for hyper-parameter randomization, [evolution] for the
selection scheme, [problem] for the optimization target and [output] for
paths. Unknown sections or keys are errors so hyper-parameter typos fail
fast. Files are versioned through a mandatory schema_version key.

Full-line comments start with '#'. Lists are comma separated; ranges are
"low, high" pairs; the family mix is "name:weight" pairs.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .core import EsgdError
from .sampler import PRESETS, SamplerConfig

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "config_to_text",
    "apply_overrides",
]

SCHEMA_VERSION = 1

MODES = ("single-baseline", "population-baseline", "esgd", "esgd-no-evolution")
PROBLEM_KINDS = ("quadratic", "synthetic-mlp", "csv-mlp")


class ConfigError(EsgdError):
    """Invalid, missing or unknown configuration content."""


@dataclass(frozen=True)
class ProblemConfig:
    kind: str = "quadratic"
    dim: int = 10
    condition: float = 100.0
    n: int = 512
    noise: float = 0.15
    data_seed: int = 0
    hidden: tuple[int, ...] = (16,)
    activation: str = "tanh"
    csv_path: str = ""
    target_columns: tuple[int, ...] = ()
    split_fraction: float = 0.8
    init: str = "random"
    seed_model_path: str = ""
    perturb_std: float = 0.01

    def __post_init__(self) -> None:
        if self.kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {self.kind!r}")
        if self.kind == "csv-mlp" and not self.csv_path:
            raise ConfigError("problem.csv_path is required for csv-mlp")
        if self.kind == "csv-mlp" and not self.target_columns:
            raise ConfigError("problem.target_columns is required for csv-mlp")
        if self.init not in ("random", "perturb"):
            raise ConfigError(f"problem.init must be random or perturb, got {self.init!r}")
        if self.init == "perturb" and not self.seed_model_path:
            raise ConfigError("problem.seed_model_path is required when init = perturb")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    generations: int
    mu: int
    lambd: int = 0
    rho: int = 2
    m: int = 0
    sgd_epochs: int = 1
    evolution_steps: int = 1
    elitist_fraction: float = 0.6
    p_backoff: float = 1.0
    master_seed: int = 0
    fitness_dataset: str = "train"
    batch_size: int = 32
    inject_reference: bool = False
    fine_tune_epochs: int = 0
    fine_tune_lr: float = 1e-4
    single_family: str = "plain-sgd"
    single_lr: float = 0.0
    weight_scheme: str = "shifted"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    out_dir: str = ""

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        if self.mu < 1:
            raise ConfigError("mu must be >= 1")
        if self.lambd < 0:
            raise ConfigError("lambda must be >= 0")
        if not 1 <= self.rho <= self.mu:
            raise ConfigError(f"rho must be in [1, mu={self.mu}], got {self.rho}")
        if not 0 < self.elitist_fraction <= 1:
            raise ConfigError("elitist_fraction must be in (0, 1]")
        resolved_m = self.m if self.m else max(1, round(self.elitist_fraction * self.mu))
        object.__setattr__(self, "m", resolved_m)
        if not 1 <= self.m <= self.mu:
            raise ConfigError(f"m must be in [1, mu={self.mu}], got {self.m}")
        if self.sgd_epochs < 0 or self.evolution_steps < 0:
            raise ConfigError("sgd_epochs and evolution_steps must be >= 0")
        if not 0 <= self.p_backoff <= 1:
            raise ConfigError("p_backoff must be in [0, 1]")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be >= 0")
        if self.fitness_dataset not in ("train", "holdout"):
            raise ConfigError("fitness_dataset must be train or holdout")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.fine_tune_epochs < 0:
            raise ConfigError("fine_tune_epochs must be >= 0")
        if self.fine_tune_epochs > 0 and self.fine_tune_lr <= 0:
            raise ConfigError("fine_tune_lr must be > 0 when fine-tuning is enabled")
        if self.single_family not in ("plain-sgd", "momentum-sgd", "nesterov-sgd", "adam"):
            raise ConfigError(f"unknown single_family {self.single_family!r}")
        if self.weight_scheme not in ("shifted", "rank"):
            raise ConfigError("weight_scheme must be shifted or rank")
        if self.single_lr == 0.0:
            a0, b0 = self.sampler.sgd_lr_range
            object.__setattr__(self, "single_lr", (a0 * b0) ** 0.5)
        if self.single_lr <= 0:
            raise ConfigError("single_lr must be > 0")


def _parse_int(section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected integer, got {value!r}") from None


def _parse_float(section: str, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected number, got {value!r}") from None


def _parse_bool(section: str, key: str, value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"[{section}] {key}: expected boolean, got {value!r}")


def _parse_pair(section: str, key: str, value: str) -> tuple[float, float]:
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"[{section}] {key}: expected 'low, high', got {value!r}")
    return _parse_float(section, key, parts[0]), _parse_float(section, key, parts[1])


def _parse_int_list(section: str, key: str, value: str) -> tuple[int, ...]:
    value = value.strip()
    if not value:
        return ()
    return tuple(_parse_int(section, key, p.strip()) for p in value.split(","))


def _parse_families(section: str, key: str, value: str) -> dict[str, float]:
    mix: dict[str, float] = {}
    for item in value.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise ConfigError(f"[{section}] {key}: expected 'name:weight', got {item!r}")
        name, weight = item.split(":", 1)
        mix[name.strip()] = _parse_float(section, key, weight.strip())
    if not mix:
        raise ConfigError(f"[{section}] {key}: empty family mix")
    return mix


_EXPERIMENT_KEYS = {
    "schema_version",
    "mode",
    "generations",
    "mu",
    "lambda",
    "rho",
    "m",
    "sgd_epochs",
    "evolution_steps",
    "elitist_fraction",
    "p_backoff",
    "master_seed",
    "fitness_dataset",
    "batch_size",
    "inject_reference",
    "fine_tune_epochs",
    "fine_tune_lr",
    "single_family",
    "single_lr",
}
_SAMPLER_KEYS = {
    "preset",
    "families",
    "sgd_lr_range",
    "adam_lr_range",
    "gamma",
    "sigma0",
    "p_use_momentum",
    "p_nesterov_given_momentum",
    "momentum_range",
    "lr_scale",
}
_EVOLUTION_KEYS = {"weight_scheme"}
_PROBLEM_KEYS = {
    "kind",
    "dim",
    "condition",
    "n",
    "noise",
    "data_seed",
    "hidden",
    "activation",
    "csv_path",
    "target_columns",
    "split_fraction",
    "init",
    "seed_model_path",
    "perturb_std",
}
_OUTPUT_KEYS = {"out_dir"}
_SECTIONS = {
    "experiment": _EXPERIMENT_KEYS,
    "sampler": _SAMPLER_KEYS,
    "evolution": _EVOLUTION_KEYS,
    "problem": _PROBLEM_KEYS,
    "output": _OUTPUT_KEYS,
}


def _read_sections(text: str, source: str) -> dict[str, dict[str, str]]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep keys case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw: dict[str, dict[str, str]] = {}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        raw[section] = {}
        for key, value in cp.items(section):
            if key not in _SECTIONS[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            raw[section][key] = value
    return raw


def apply_overrides(raw: dict[str, dict[str, str]], overrides: list[str]) -> None:
    """Apply 'key=value' or 'section.key=value' strings; bare keys hit [experiment]."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
        else:
            section = "experiment"
        if section not in _SECTIONS:
            raise ConfigError(f"override targets unknown section [{section}]")
        if key not in _SECTIONS[section]:
            raise ConfigError(f"override targets unknown key {key!r} in [{section}]")
        raw.setdefault(section, {})[key] = value.strip()


def _build_sampler(sec: dict[str, str]) -> SamplerConfig:
    cfg = SamplerConfig()
    if "preset" in sec:
        name = sec["preset"].strip()
        if name not in PRESETS:
            raise ConfigError(f"unknown sampler preset {name!r}; choose from {sorted(PRESETS)}")
        cfg = PRESETS[name]
    updates: dict = {}
    if "families" in sec:
        updates["families"] = _parse_families("sampler", "families", sec["families"])
    if "sgd_lr_range" in sec:
        updates["sgd_lr_range"] = _parse_pair("sampler", "sgd_lr_range", sec["sgd_lr_range"])
    if "adam_lr_range" in sec:
        updates["adam_lr_range"] = _parse_pair("sampler", "adam_lr_range", sec["adam_lr_range"])
    if "gamma" in sec:
        updates["gamma"] = _parse_float("sampler", "gamma", sec["gamma"])
    if "sigma0" in sec:
        updates["sigma0"] = _parse_float("sampler", "sigma0", sec["sigma0"])
    if "p_use_momentum" in sec:
        updates["p_use_momentum"] = _parse_float("sampler", "p_use_momentum", sec["p_use_momentum"])
    if "p_nesterov_given_momentum" in sec:
        updates["p_nesterov_given_momentum"] = _parse_float(
            "sampler", "p_nesterov_given_momentum", sec["p_nesterov_given_momentum"]
        )
    if "momentum_range" in sec:
        updates["momentum_range"] = _parse_pair("sampler", "momentum_range", sec["momentum_range"])
    if "lr_scale" in sec:
        updates["lr_scale"] = sec["lr_scale"].strip()
    try:
        return replace(cfg, **updates) if updates else cfg
    except ValueError as exc:
        raise ConfigError(f"[sampler]: {exc}") from None


def _build_problem(sec: dict[str, str]) -> ProblemConfig:
    updates: dict = {}
    for key in sec:
        value = sec[key]
        if key in ("dim", "n", "data_seed"):
            updates[key] = _parse_int("problem", key, value)
        elif key in ("condition", "noise", "split_fraction", "perturb_std"):
            updates[key] = _parse_float("problem", key, value)
        elif key == "hidden":
            updates[key] = _parse_int_list("problem", key, value)
        elif key == "target_columns":
            updates[key] = _parse_int_list("problem", key, value)
        else:
            updates[key] = value.strip()
    try:
        return ProblemConfig(**updates)
    except TypeError as exc:
        raise ConfigError(f"[problem]: {exc}") from None


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    raw = _read_sections(text, source)
    return build_config(raw, source)


def build_config(raw: dict[str, dict[str, str]], source: str = "<config>") -> ExperimentConfig:
    exp = raw.get("experiment", {})
    for required in ("schema_version", "mode", "generations", "mu"):
        if required not in exp:
            raise ConfigError(f"{source}: missing required field {required!r} in [experiment]")
    version = _parse_int("experiment", "schema_version", exp["schema_version"])
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{source}: unsupported schema_version {version} (expected {SCHEMA_VERSION})")

    sampler = _build_sampler(raw.get("sampler", {}))
    problem = _build_problem(raw.get("problem", {}))
    evo = raw.get("evolution", {})
    out = raw.get("output", {})

    mu = _parse_int("experiment", "mu", exp["mu"])
    kwargs: dict = {
        "mode": exp["mode"].strip(),
        "generations": _parse_int("experiment", "generations", exp["generations"]),
        "mu": mu,
        "lambd": _parse_int("experiment", "lambda", exp["lambda"]) if "lambda" in exp else 4 * mu,
        "sampler": sampler,
        "problem": problem,
        "out_dir": out.get("out_dir", "").strip(),
    }
    if "weight_scheme" in evo:
        kwargs["weight_scheme"] = evo["weight_scheme"].strip()
    int_keys = ("rho", "m", "sgd_epochs", "evolution_steps", "master_seed", "batch_size", "fine_tune_epochs")
    float_keys = ("elitist_fraction", "p_backoff", "fine_tune_lr", "single_lr")
    for key in int_keys:
        if key in exp:
            kwargs[key] = _parse_int("experiment", key, exp[key])
    for key in float_keys:
        if key in exp:
            kwargs[key] = _parse_float("experiment", key, exp[key])
    if "inject_reference" in exp:
        kwargs["inject_reference"] = _parse_bool("experiment", "inject_reference", exp["inject_reference"])
    if "fitness_dataset" in exp:
        kwargs["fitness_dataset"] = exp["fitness_dataset"].strip()
    if "single_family" in exp:
        kwargs["single_family"] = exp["single_family"].strip()
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = _read_sections(text, str(path))
    if overrides:
        apply_overrides(raw, overrides)
    return build_config(raw, str(path))


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical serialization; parse_config(config_to_text(cfg)) == cfg."""
    buf = io.StringIO()
    buf.write("[experiment]\n")
    buf.write(f"schema_version = {SCHEMA_VERSION}\n")
    buf.write(f"mode = {cfg.mode}\n")
    buf.write(f"generations = {cfg.generations}\n")
    buf.write(f"mu = {cfg.mu}\n")
    buf.write(f"lambda = {cfg.lambd}\n")
    buf.write(f"rho = {cfg.rho}\n")
    buf.write(f"m = {cfg.m}\n")
    buf.write(f"sgd_epochs = {cfg.sgd_epochs}\n")
    buf.write(f"evolution_steps = {cfg.evolution_steps}\n")
    buf.write(f"elitist_fraction = {cfg.elitist_fraction!r}\n")
    buf.write(f"p_backoff = {cfg.p_backoff!r}\n")
    buf.write(f"master_seed = {cfg.master_seed}\n")
    buf.write(f"fitness_dataset = {cfg.fitness_dataset}\n")
    buf.write(f"batch_size = {cfg.batch_size}\n")
    buf.write(f"inject_reference = {'true' if cfg.inject_reference else 'false'}\n")
    buf.write(f"fine_tune_epochs = {cfg.fine_tune_epochs}\n")
    buf.write(f"fine_tune_lr = {cfg.fine_tune_lr!r}\n")
    buf.write(f"single_family = {cfg.single_family}\n")
    buf.write(f"single_lr = {cfg.single_lr!r}\n")
    buf.write("\n[sampler]\n")
    s = cfg.sampler
    buf.write("families = " + ", ".join(f"{k}:{v!r}" for k, v in s.families.items()) + "\n")
    buf.write(f"sgd_lr_range = {s.sgd_lr_range[0]!r}, {s.sgd_lr_range[1]!r}\n")
    buf.write(f"adam_lr_range = {s.adam_lr_range[0]!r}, {s.adam_lr_range[1]!r}\n")
    buf.write(f"gamma = {s.gamma!r}\n")
    buf.write(f"sigma0 = {s.sigma0!r}\n")
    buf.write(f"p_use_momentum = {s.p_use_momentum!r}\n")
    buf.write(f"p_nesterov_given_momentum = {s.p_nesterov_given_momentum!r}\n")
    buf.write(f"momentum_range = {s.momentum_range[0]!r}, {s.momentum_range[1]!r}\n")
    buf.write(f"lr_scale = {s.lr_scale}\n")
    buf.write("\n[evolution]\n")
    buf.write(f"weight_scheme = {cfg.weight_scheme}\n")
    buf.write("\n[problem]\n")
    p = cfg.problem
    buf.write(f"kind = {p.kind}\n")
    buf.write(f"dim = {p.dim}\n")
    buf.write(f"condition = {p.condition!r}\n")
    buf.write(f"n = {p.n}\n")
    buf.write(f"noise = {p.noise!r}\n")
    buf.write(f"data_seed = {p.data_seed}\n")
    buf.write("hidden = " + ", ".join(str(h) for h in p.hidden) + "\n")
    buf.write(f"activation = {p.activation}\n")
    if p.csv_path:
        buf.write(f"csv_path = {p.csv_path}\n")
    if p.target_columns:
        buf.write("target_columns = " + ", ".join(str(c) for c in p.target_columns) + "\n")
    buf.write(f"split_fraction = {p.split_fraction!r}\n")
    buf.write(f"init = {p.init}\n")
    if p.seed_model_path:
        buf.write(f"seed_model_path = {p.seed_model_path}\n")
    buf.write(f"perturb_std = {p.perturb_std!r}\n")
    if cfg.out_dir:
        buf.write("\n[output]\n")
        buf.write(f"out_dir = {cfg.out_dir}\n")
    return buf.getvalue()

"""Load and validate experiment YAML configs."""

from __future__ import annotations

import dataclasses
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from disorder import FAMILIES, DisorderModel, log_mgf
from errors import ConfigError, PinningError
from excursion_law import PRESETS, ExcursionLaw, law_from_preset

logger = logging.getLogger(__name__)

# values under these keys are kept whole instead of being flattened
GRID_KEYS = {"u_grid", "delta_grid"}

KNOWN_KEYS = {
    "law.preset", "law.c", "law.K", "law.alpha", "law.shift", "law.n_max", "law.table",
    "disorder.family", "disorder.p", "disorder.seed",
    "beta", "u_grid", "delta_grid", "n_grid", "replicas", "threads", "output",
    "annealed.beta_delta",
    "blocks.K1", "blocks.K2", "blocks.M", "blocks.replicas",
    "bound.mode",
}

BOUND_MODES = {"desk", "compliant"}

_COUNT_RE = re.compile(r"^\s*(\d[\d_]*(?:\.\d*)?)(?:[eE]\+?(\d+))?\s*$")


def parse_count(value: Any, key: str) -> int:
    """
    Parse a positive-or-zero integer, accepting human forms.

    Supports: 2000, "2000", "2_000", "2e3", "2.5e3" (must be integral).
    """
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if value.is_integer():
            return int(value)
        raise ConfigError(f"{key}: {value!r} is not an integer")
    match = _COUNT_RE.match(str(value))
    if match is None:
        raise ConfigError(f"{key}: cannot read {value!r} as an integer")
    mantissa = float(match.group(1).replace("_", ""))
    exponent = int(match.group(2) or 0)
    number = mantissa * 10**exponent
    if not number.is_integer():
        raise ConfigError(f"{key}: {value!r} is not an integer")
    return int(number)


def parse_real(value: Any, key: str) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot read {value!r} as a number") from None
    if not math.isfinite(number):
        raise ConfigError(f"{key}: must be finite, got {value!r}")
    return number


def parse_grid(value: Any, key: str) -> tuple[float, ...]:
    """A list of reals, or a mapping {start, stop, num} expanded with linspace."""
    if isinstance(value, dict):
        missing = {"start", "stop", "num"} - value.keys()
        if missing:
            raise ConfigError(f"{key}: grid mapping lacks {sorted(missing)}")
        num = parse_count(value["num"], f"{key}.num")
        if num < 1:
            raise ConfigError(f"{key}: num must be >= 1")
        points = np.linspace(parse_real(value["start"], f"{key}.start"),
                             parse_real(value["stop"], f"{key}.stop"), num)
        return tuple(float(x) for x in points)
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(f"{key}: grid is empty")
        return tuple(parse_real(x, f"{key}[{i}]") for i, x in enumerate(value))
    return (parse_real(value, key),)


def flatten(mapping: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested mappings become dotted keys; grid mappings stay whole."""
    flat: dict[str, Any] = {}
    for raw_key, value in mapping.items():
        key = f"{prefix}{raw_key}"
        if isinstance(value, dict) and key not in GRID_KEYS:
            flat.update(flatten(value, f"{key}."))
        else:
            flat[key] = value
    return flat


@dataclass(frozen=True)
class ExperimentConfig:
    law_preset: str = "srw2d"
    law_c: float | None = None
    law_K: float | None = None
    law_alpha: float | None = None
    law_shift: float | None = None
    law_n_max: int | None = None
    law_table: tuple[float, ...] | None = None
    disorder_family: str = "gaussian"
    disorder_p: float = 0.5
    seed: int = 1
    beta: float = 1.0
    u_grid: tuple[float, ...] | None = None
    delta_grid: tuple[float, ...] | None = None
    n_grid: tuple[int, ...] = (1000,)
    replicas: int = 8
    threads: int = 1
    output: Path | None = None
    annealed_beta_delta: tuple[float, ...] = (0.5,)
    blocks_K1: int = 10_000
    blocks_K2: int | None = None
    blocks_M: float = 20.0
    blocks_replicas: int = 200
    bound_mode: str = "desk"
    source: Path | None = None

    def model(self) -> DisorderModel:
        return DisorderModel(self.disorder_family, self.disorder_p)

    def horizon(self) -> int:
        """Largest DP length any subcommand needs from the law."""
        K2 = self.blocks_K2 if self.blocks_K2 is not None else max(2, self.blocks_K1 // 100)
        return max(max(self.n_grid), K2, 2)

    def build_law(self) -> ExcursionLaw:
        n_max = self.law_n_max if self.law_n_max is not None else self.horizon()
        return law_from_preset(
            self.law_preset,
            n_max,
            c=self.law_c,
            K=self.law_K,
            alpha=self.law_alpha,
            shift=self.law_shift,
            table=list(self.law_table) if self.law_table else None,
        )

    def u_values(self) -> tuple[float, ...]:
        """The u-grid, converting a Delta-grid via u = Delta + u_c^a(beta)."""
        if self.u_grid is not None:
            return self.u_grid
        if self.delta_grid is not None:
            shift = -log_mgf(self.model(), self.beta) / self.beta
            return tuple(delta + shift for delta in self.delta_grid)
        raise ConfigError(f"{self.source or 'config'}: needs u_grid or delta_grid")

    def with_overrides(self, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if threads is not None:
            if threads < 1:
                raise ConfigError(f"threads must be >= 1, got {threads}")
            changes["threads"] = threads
        return dataclasses.replace(self, **changes)


def _validate(cfg: ExperimentConfig, where: str) -> None:
    if cfg.law_preset not in PRESETS:
        raise ConfigError(f"{where}: law.preset '{cfg.law_preset}' (expected one of {sorted(PRESETS)})")
    if cfg.disorder_family not in FAMILIES:
        raise ConfigError(f"{where}: disorder.family '{cfg.disorder_family}' (expected one of {sorted(FAMILIES)})")
    try:
        cfg.model()
    except PinningError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if not cfg.beta > 0:
        raise ConfigError(f"{where}: beta must be > 0, got {cfg.beta}")
    if cfg.u_grid is not None and cfg.delta_grid is not None:
        raise ConfigError(f"{where}: give u_grid or delta_grid, not both")
    if not cfg.n_grid or any(n < 1 for n in cfg.n_grid):
        raise ConfigError(f"{where}: n_grid must hold positive horizons")
    if any(b <= a for a, b in zip(cfg.n_grid, cfg.n_grid[1:])):
        raise ConfigError(f"{where}: n_grid must be strictly increasing, got {list(cfg.n_grid)}")
    if cfg.replicas < 1 or cfg.blocks_replicas < 1:
        raise ConfigError(f"{where}: replicas must be >= 1")
    if cfg.threads < 1:
        raise ConfigError(f"{where}: threads must be >= 1")
    if cfg.bound_mode not in BOUND_MODES:
        raise ConfigError(f"{where}: bound.mode '{cfg.bound_mode}' (expected one of {sorted(BOUND_MODES)})")
    if cfg.blocks_K1 < 4 or cfg.blocks_K1 % 2:
        raise ConfigError(f"{where}: blocks.K1 must be an even integer >= 4")
    if cfg.blocks_K2 is not None and (cfg.blocks_K2 < 2 or cfg.blocks_K2 % 2):
        raise ConfigError(f"{where}: blocks.K2 must be an even integer >= 2")
    if not cfg.blocks_M > 0:
        raise ConfigError(f"{where}: blocks.M must be > 0")
    if not cfg.annealed_beta_delta:
        raise ConfigError(f"{where}: annealed.beta_delta is empty")


def config_from_mapping(raw: dict[str, Any], source: Path | None = None) -> ExperimentConfig:
    """Build a validated config from a (possibly nested) mapping."""
    where = str(source) if source is not None else "config"
    flat = flatten(raw)
    for key in sorted(flat.keys() - KNOWN_KEYS):
        logger.warning("Config %s: ignoring unknown key '%s'", where, key)

    def opt(key: str, parse):
        return parse(flat[key], key) if flat.get(key) is not None else None

    values: dict[str, Any] = {"source": source}
    if "law.preset" in flat:
        values["law_preset"] = str(flat["law.preset"]).lower()
    values["law_c"] = opt("law.c", parse_real)
    values["law_K"] = opt("law.K", parse_real)
    values["law_alpha"] = opt("law.alpha", parse_real)
    values["law_shift"] = opt("law.shift", parse_real)
    values["law_n_max"] = opt("law.n_max", parse_count)
    if flat.get("law.table") is not None:
        values["law_table"] = parse_grid(flat["law.table"], "law.table")
    if "disorder.family" in flat:
        values["disorder_family"] = str(flat["disorder.family"]).lower()
    for key, name, parse in (
        ("disorder.p", "disorder_p", parse_real),
        ("disorder.seed", "seed", parse_count),
        ("beta", "beta", parse_real),
        ("replicas", "replicas", parse_count),
        ("threads", "threads", parse_count),
        ("blocks.K1", "blocks_K1", parse_count),
        ("blocks.K2", "blocks_K2", parse_count),
        ("blocks.M", "blocks_M", parse_real),
        ("blocks.replicas", "blocks_replicas", parse_count),
    ):
        if flat.get(key) is not None:
            values[name] = parse(flat[key], key)
    values["u_grid"] = opt("u_grid", parse_grid)
    values["delta_grid"] = opt("delta_grid", parse_grid)
    if flat.get("n_grid") is not None:
        grid = flat["n_grid"] if isinstance(flat["n_grid"], list) else [flat["n_grid"]]
        values["n_grid"] = tuple(parse_count(n, f"n_grid[{i}]") for i, n in enumerate(grid))
    if flat.get("annealed.beta_delta") is not None:
        values["annealed_beta_delta"] = parse_grid(flat["annealed.beta_delta"], "annealed.beta_delta")
    if flat.get("output") is not None:
        values["output"] = Path(str(flat["output"]))
    if flat.get("bound.mode") is not None:
        values["bound_mode"] = str(flat["bound.mode"]).lower()

    cfg = ExperimentConfig(**{k: v for k, v in values.items() if v is not None or k == "source"})
    _validate(cfg, where)
    return cfg


def load_experiment_config(filepath: Path) -> ExperimentConfig:
    """Load and validate a single experiment YAML config."""
    if not filepath.is_file():
        raise ConfigError(f"config file not found: {filepath}")
    try:
        with open(filepath) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"failed to parse config {filepath}: {exc}") from exc

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {filepath} is not a YAML mapping")

    try:
        cfg = config_from_mapping(raw, filepath)
    except ConfigError:
        raise
    except PinningError as exc:
        raise ConfigError(f"config {filepath}: {exc}") from exc
    logger.info("Loaded config %s (law=%s, disorder=%s, beta=%g)",
                filepath, cfg.law_preset, cfg.disorder_family, cfg.beta)
    return cfg

"""Flat JSON run configuration.

Every key of :class:`ExperimentConfig` is accepted under its own name, next
to the data-generation, sweep-grid and file-path keys of :class:`RunConfig`.
Unknown keys are errors. ``+inf`` may be written as ``Infinity`` or ``"inf"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .core import ConfigError, ExperimentConfig
from .synthetic import OracleSpec


@dataclass(frozen=True)
class RunConfig:
    # oracle and corpus
    m: int = 30
    n_atoms: int = 60
    block_size: int = 3
    target_intra_corr: float = 0.68
    n_signals: int = 5000
    blocks_per_signal: int = 2
    # classification benchmark
    n_classes: int = 5
    atoms_per_class: int = 12
    signals_per_class: int = 200
    test_signals_per_class: int = 200
    class_blocks_per_signal: int = 2
    class_snr_db: float = 10.0
    # sweep grids
    fig5_intra_corrs: tuple = (0.5, 0.6, 0.7, 0.8, 0.9)
    fig5_block_sizes: tuple = (2, 3, 4, 5, 6)
    fig6a_iterations: tuple = (1, 2, 3, 4, 5, 10, 15, 20)
    fig6b_snrs: tuple = (math.inf, 30.0, 20.0, 10.0)
    fig6c_block_sizes: tuple = (2, 3, 4, 5, 6)
    fig6d_blocks_per_signal: tuple = (1, 2, 3, 4, 5)
    coherence_threshold: float = 0.6
    gen_labeled: bool = False
    # files
    data_path: Optional[str] = None
    dictionary_path: Optional[str] = None
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def __post_init__(self):
        for name in ("m", "n_atoms", "block_size", "n_signals", "blocks_per_signal", "n_classes",
                     "atoms_per_class", "signals_per_class", "test_signals_per_class", "class_blocks_per_signal"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.gen_labeled, bool):
            raise ConfigError("gen_labeled must be true or false")
        for name in ("data_path", "dictionary_path"):
            if getattr(self, name) is not None and not isinstance(getattr(self, name), str):
                raise ConfigError(f"{name} must be a string path")
        if not 0.5 <= self.target_intra_corr <= 1.0:
            raise ConfigError("target_intra_corr must lie in [0.5, 1]")
        if self.n_atoms % self.block_size:
            raise ConfigError(f"block_size {self.block_size} must divide n_atoms {self.n_atoms}")
        grids = {
            "fig5_intra_corrs": lambda v: 0.5 <= v <= 1.0,
            "fig5_block_sizes": lambda v: _is_int(v) and v >= 1 and self.n_atoms % v == 0,
            "fig6a_iterations": lambda v: _is_int(v) and v >= 1,
            "fig6b_snrs": lambda v: not math.isnan(v) and v != -math.inf,
            "fig6c_block_sizes": lambda v: _is_int(v) and v >= 1,
            "fig6d_blocks_per_signal": lambda v: _is_int(v) and 1 <= v <= self.n_atoms // self.block_size,
        }
        for name, ok in grids.items():
            values = getattr(self, name)
            if len(values) == 0 or not all(isinstance(v, (int, float)) and ok(v) for v in values):
                raise ConfigError(f"invalid sweep grid {name}: {list(values)!r}")
            if len(set(values)) != len(values):
                raise ConfigError(f"sweep grid {name} has repeated values")

    def oracle(self, seed: int, block_size: Optional[int] = None, intra_corr: Optional[float] = None) -> OracleSpec:
        return OracleSpec(
            m=self.m,
            n_atoms=self.n_atoms,
            block_size=self.block_size if block_size is None else block_size,
            target_intra_corr=self.target_intra_corr if intra_corr is None else intra_corr,
            seed=seed,
        )

    def with_experiment(self, **changes) -> "RunConfig":
        return replace(self, experiment=replace(self.experiment, **changes))


RUN_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "experiment")
ALL_KEYS = RUN_KEYS + ExperimentConfig.field_names()
GRID_KEYS = tuple(k for k in RUN_KEYS if k.startswith("fig"))
FLOAT_KEYS = ("target_intra_corr", "class_snr_db", "coherence_threshold", "shrink_fraction", "snr_db",
              "residual_tolerance", "structure_update_period")


def _is_int(v) -> bool:
    return float(v).is_integer()


def _number(key, v):
    if isinstance(v, str) and v.lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    return v


def from_mapping(doc: dict, required: tuple = ()) -> RunConfig:
    """Build a validated :class:`RunConfig` from flat keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - set(ALL_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ConfigError(f"missing required config key(s): {', '.join(missing)}")
    run, exp = {}, {}
    for key, v in doc.items():
        if key in GRID_KEYS:
            if not isinstance(v, list):
                raise ConfigError(f"invalid sweep grid {key}: expected a list")
            v = tuple(_number(key, x) for x in v)
        elif key in FLOAT_KEYS and v is not None:
            v = _number(key, v)
            if key == "structure_update_period" and v != math.inf:
                if not float(v).is_integer():
                    raise ConfigError(f"structure_update_period must be a positive integer or inf, got {v!r}")
                v = int(v)
            elif key != "structure_update_period":
                v = float(v)
        (exp if key in ExperimentConfig.field_names() else run)[key] = v
    try:
        return RunConfig(experiment=ExperimentConfig(**exp), **run)
    except TypeError as e:  # wrong value types surfacing inside numeric checks
        raise ConfigError(str(e)) from None


def load_config(path, required: tuple = (), overrides: Optional[dict] = None) -> RunConfig:
    """Read a JSON config; ``overrides`` (command-line flags) replace keys one-for-one."""
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: invalid JSON ({e})") from None
    if isinstance(doc, dict) and overrides:
        doc = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
    return from_mapping(doc, required)

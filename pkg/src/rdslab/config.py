"""Experiment configuration: strict schema, validation, canonical hashing.

One flat JSON file per experiment with per-stage blocks; unknown keys are
rejected so a typo cannot silently fall back to a default.  The canonical
hash (sha256 of the sorted-key JSON after CLI overrides) stamps every
artifact, and the report stage refuses to mix artifacts with different
hashes.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

_NUM = (int, float)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


_STAGE_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"x0": 0.5, "n": 1000},
    "lyapunov": {"burn_in": 1000, "n": 100000, "replicas": 8},
    "ldp": {"epsilon": 0.15, "delta": 0.05, "n_list": [50, 100, 200, 400],
            "replicas": 100000},
    "spectrum": {"n_cells": 512, "theta_list": [0.1, 0.2, 0.3], "tol": 1e-10,
                 "max_iter": 20000, "dump_operators": False},
    "young": {"ht_sigma": 0.5477225575051661, "b": 0.45, "r": 0.01, "sparsity": 2,
              "variant": "paper_literal", "horizon": 2000, "replicas": 4,
              "m_ladder_k": [1, 2, 3, 4], "m_replicas": 50, "m_horizon": 400},
    "covering": {"epsilon_scale": 0.05, "eta": None, "orbit_cap": 200000,
                 "n_max": 24, "pilot_replicas": 16, "rho_replicas": 100,
                 "ball_grid": 16, "rho_target": 1.0, "iota_frac": 0.5},
    "horseshoe": {"M": 2, "kappa": 1.5, "horizon": 3000, "seed_set": [],
                  "attempts": 8, "max_blocks": 21, "words_len": 4,
                  "leg_horizon": 400},
}

_TOP_KEYS = {"model", "sigma", "seed", "out_dir"} | set(_STAGE_DEFAULTS)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    sigma: float
    seed: int
    out_dir: str | None
    stages: dict

    def stage(self, name: str) -> dict:
        return self.stages[name]

    def canonical(self) -> dict:
        out = {"model": self.model, "sigma": self.sigma, "seed": self.seed}
        out.update({k: self.stages[k] for k in sorted(self.stages)})
        return out

    @property
    def hash(self) -> str:
        return config_hash(self.canonical())


def config_hash(d: dict) -> str:
    payload = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def _validate_stage(name: str, block: dict, model_beta: float) -> dict:
    defaults = _STAGE_DEFAULTS[name]
    unknown = set(block) - set(defaults)
    _require(not unknown, f"unknown keys in {name!r} block: {sorted(unknown)}")
    merged = {**defaults, **block}
    if name == "simulate":
        _require(merged["n"] >= 1, "simulate.n must be >= 1")
        _require(0.0 <= merged["x0"] < 1.0, "simulate.x0 must lie in [0, 1)")
    elif name == "lyapunov":
        _require(merged["burn_in"] >= 0, "lyapunov.burn_in must be >= 0")
        _require(merged["n"] >= 1000, "lyapunov.n must be >= 1000")
        _require(merged["replicas"] >= 1, "lyapunov.replicas must be >= 1")
    elif name == "ldp":
        _require(merged["epsilon"] > 0, "ldp.epsilon must be positive")
        _require(0 < merged["delta"] < 0.5, "ldp.delta must lie in (0, 1/2)")
        nl = merged["n_list"]
        _require(nl == sorted(nl) and len(nl) >= 1 and all(n >= 1 for n in nl),
                 "ldp.n_list must be sorted positive integers")
        _require(merged["replicas"] >= 1, "ldp.replicas must be >= 1")
    elif name == "spectrum":
        _require(merged["n_cells"] >= 16, "spectrum.n_cells must be >= 16")
        cap = 0.9 / model_beta
        _require(all(0.0 <= t < cap for t in merged["theta_list"]),
                 f"spectrum.theta_list entries must lie in [0, {cap:.4g})")
        _require(merged["tol"] > 0, "spectrum.tol must be positive")
    elif name == "young":
        _require(0.0 < merged["ht_sigma"] < 1.0, "young.ht_sigma must lie in (0, 1)")
        _require(0.0 < merged["b"] < 0.5, "young.b must lie in (0, 1/2)")
        _require(merged["r"] > 0, "young.r must be positive")
        _require(merged["sparsity"] >= 0, "young.sparsity must be >= 0")
        _require(merged["variant"] in ("paper_literal", "standard_alves"),
                 "young.variant must be paper_literal or standard_alves")
        _require(merged["horizon"] >= 1, "young.horizon must be >= 1")
        _require(all(k >= 0 for k in merged["m_ladder_k"]), "young.m_ladder_k must be >= 0")
    elif name == "covering":
        _require(0.0 < merged["epsilon_scale"] < 0.25,
                 "covering.epsilon_scale must lie in (0, 1/4)")
        _require(merged["n_max"] >= 2, "covering.n_max must be >= 2")
    elif name == "horseshoe":
        _require(merged["M"] >= 2, "horseshoe.M must be >= 2")
        _require(merged["kappa"] > 1.0, "horseshoe.kappa must exceed 1")
        _require(merged["horizon"] >= 10, "horseshoe.horizon must be >= 10")
        _require(merged["attempts"] >= 1, "horseshoe.attempts must be >= 1")
        for entry in merged["seed_set"]:
            _require(isinstance(entry, (list, tuple)) and len(entry) == 2,
                     "horseshoe.seed_set entries must be [center, radius] pairs")
    return merged


def parse_config(raw: dict) -> ExperimentConfig:
    from .models import get_model  # late import keeps module load light

    _require(isinstance(raw, dict), "config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    _require(not unknown, f"unknown top-level keys: {sorted(unknown)}")
    for key in ("model", "sigma", "seed"):
        _require(key in raw, f"missing required key {key!r}")
    model = get_model(raw["model"])  # raises ConfigError for unknown names
    sigma = raw["sigma"]
    _require(isinstance(sigma, _NUM) and 0.0 < sigma < 0.5,
             "sigma must be a number in (0, 1/2)")
    seed = raw["seed"]
    _require(isinstance(seed, int) and 0 <= seed < 2 ** 64, "seed must be a u64")
    stages = {}
    for name in _STAGE_DEFAULTS:
        block = raw.get(name, {})
        _require(isinstance(block, dict), f"{name!r} block must be an object")
        stages[name] = _validate_stage(name, block, model.beta)
    return ExperimentConfig(model=raw["model"], sigma=float(sigma), seed=seed,
                            out_dir=raw.get("out_dir"), stages=stages)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw)

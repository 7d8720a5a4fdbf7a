"""Run configuration: one strict JSON document per invocation."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, StrictBool, StrictFloat, StrictInt, ValidationError

from .errors import ConfigError

EXPERIMENTS = ("validate", "phase", "prop1", "vardecomp", "crossdomain", "dynamics", "benefit", "group", "audit")

Number = Union[StrictInt, StrictFloat]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PanelSpec(_Strict):
    csv_path: Optional[str] = None
    n_samples: StrictInt = Field(2000, ge=10)
    n_latent: StrictInt = Field(35, ge=1)
    n_tasks: StrictInt = Field(8, ge=2)
    weight_scheme: Union[str, List[List[Number]]] = "random"
    weight_dist: str = "halfnormal"
    noise_model: str = "latent"
    noise_sd: Number = Field(2.0, ge=0)
    private_noise_sd: Number = Field(0.0, ge=0)
    n_distractors: StrictInt = Field(0, ge=0)


class TrainSpec(_Strict):
    hidden: List[StrictInt] = [32, 16]
    activation: str = "tanh"
    learning_rate: Number = Field(0.01, gt=0)
    epochs: StrictInt = Field(100, ge=1)
    batch_size: StrictInt = Field(32, ge=1)
    log_interval_steps: StrictInt = Field(10, ge=1)
    averaging_window_fraction: Number = Field(0.2, gt=0, le=1)


class RunConfig(_Strict):
    experiment: str = "validate"
    seed: StrictInt = 0
    seeds: Optional[List[StrictInt]] = None
    panel: PanelSpec = PanelSpec()
    train: TrainSpec = TrainSpec()
    overlap_grid: List[Number] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
    alpha: Number = Field(0.0, ge=0, le=1)
    audit_alpha: Optional[Number] = Field(None, ge=0, le=1)
    n_per_task: Optional[StrictInt] = None
    n_permutations: StrictInt = Field(10000, ge=0)
    min_shared: StrictInt = Field(20, ge=3)
    checkpoint_epochs: List[StrictInt] = [1, 5, 10, 20, 50, 100]
    test_fraction: Number = Field(0.2, gt=0, lt=1)
    thresholds: Optional[List[Number]] = None
    n_groups: List[StrictInt] = [2]
    n_random_trials: StrictInt = Field(10, ge=1)
    n_repeats: StrictInt = Field(1, ge=1)
    unreliable_below: Number = 0.30
    reliable_at: Number = 0.40
    write_plot_data: StrictBool = True


# Two blocks of related tasks, part shared and part task-specific label noise, and
# a short training budget: the regime where joint training of related tasks pays off.
_SHORT_BUDGET_PANEL = {"weight_scheme": "two_block", "n_samples": 1000, "noise_sd": 0.5, "private_noise_sd": 0.5}

# Per-experiment defaults applied beneath whatever the user supplies.
EXPERIMENT_DEFAULTS = {
    "validate": {"seeds": [0, 1, 2, 3, 4]},
    "phase": {"seeds": [0, 1, 2, 3, 4]},
    "prop1": {"seeds": list(range(50))},
    "vardecomp": {"seeds": [0, 1, 2, 3, 4]},
    "crossdomain": {"seeds": list(range(10)), "panel": {"weight_scheme": "two_block"}},
    "dynamics": {"seeds": [0, 1, 2]},
    "benefit": {"seeds": [0, 1, 2], "panel": _SHORT_BUDGET_PANEL, "train": {"epochs": 5}},
    "group": {"seeds": [0], "panel": _SHORT_BUDGET_PANEL, "train": {"epochs": 5}, "n_repeats": 3},
    "audit": {"seeds": [0]},
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def build_config(data: dict | None = None, experiment: str | None = None) -> RunConfig:
    """Validate ``data`` and materialise every default, including the experiment-specific ones."""
    data = dict(data or {})
    if experiment is not None:
        data["experiment"] = experiment
    name = data.get("experiment", "validate")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    merged = _merge(EXPERIMENT_DEFAULTS[name], data)
    try:
        cfg = RunConfig(**merged)
    except ValidationError as err:
        raise ConfigError(f"invalid config: {_describe(err)}") from None
    for field_name, allowed in (("weight_dist", ("normal", "halfnormal")),
                                ("noise_model", ("independent", "latent"))):
        if getattr(cfg.panel, field_name) not in allowed:
            raise ConfigError(f"panel.{field_name} must be one of {allowed}")
    if isinstance(cfg.panel.weight_scheme, str) and cfg.panel.weight_scheme not in ("random", "two_block"):
        raise ConfigError("panel.weight_scheme must be 'random', 'two_block' or a K x L matrix")
    if cfg.train.activation not in ("tanh", "identity"):
        raise ConfigError("train.activation must be 'tanh' or 'identity'")
    if any(not 0 <= a <= 1 for a in cfg.overlap_grid):
        raise ConfigError("overlap_grid values must lie in [0, 1]")
    if not cfg.seeds:
        raise ConfigError("seeds must be a nonempty list")
    return cfg


def load_config(path, experiment: str | None = None) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return build_config(data, experiment)


def config_echo(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json")


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(config_echo(cfg), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:12]

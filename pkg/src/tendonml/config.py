"""Run configuration: flat ``key = value`` files with dotted keys.

Example::

    seed = 0
    plant = default
    plant.g_sag = 3.0
    grid.step = 10
    models = ridge,gpr
    model.gpr.jitter = 1e-8
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError, UnknownHyperparameter
from .model_api import DEFAULT_HYPERPARAMS, FAMILIES, RegressorSpec, coerce_hyperparam
from .plant import PRESETS, PlantParams, preset

# measurement noise used for perturbed presets when none is configured
DEFAULT_NOISE_SIGMA = 0.5

_PLANT_KEYS = ("segments", "kappa_sat", "kappa_x", "g_sag")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    plant: str = "default"
    plant_overrides: dict = field(default_factory=dict)
    grid: tuple = (-90.0, 90.0, 10.0)
    replicates: int = 5
    noise_sigma: float | None = None
    train_fraction: float = 0.8
    models: tuple = FAMILIES
    hyperparams: dict = field(default_factory=dict)
    out: str = "run"
    tune: bool = False
    degree: int = 2
    probe_step: float = 5.0
    sweep_protocol: str = "alternating"

    @property
    def effective_noise(self) -> float:
        if self.noise_sigma is not None:
            return float(self.noise_sigma)
        return 0.0 if self.plant == "ideal" else DEFAULT_NOISE_SIGMA

    def plant_params(self) -> PlantParams:
        try:
            return preset(self.plant, noise_sigma=self.effective_noise, **self.plant_overrides)
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"plant: {exc}") from None

    def specs(self) -> list[RegressorSpec]:
        return [RegressorSpec(f, self.hyperparams.get(f, {}), self.seed) for f in self.models]

    def snapshot(self) -> dict[str, Any]:
        """Plain-data view written into the run manifest."""
        return {
            "seed": self.seed,
            "plant": self.plant,
            "plant_overrides": dict(sorted(self.plant_overrides.items())),
            "grid": list(self.grid),
            "replicates": self.replicates,
            "noise_sigma": self.effective_noise,
            "train_fraction": self.train_fraction,
            "models": list(self.models),
            "hyperparams": {k: dict(sorted(v.items())) for k, v in sorted(self.hyperparams.items())},
            "tune": self.tune,
            "degree": self.degree,
            "probe_step": self.probe_step,
            "sweep_protocol": self.sweep_protocol,
        }


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        out[key] = value
    return out


def _num(key: str, value, kind=float):
    try:
        v = kind(float(value)) if kind is int else kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if kind is int and float(value) != v:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return v


def _bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    s = str(value).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def build_config(entries: dict[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Apply ``entries`` (dotted keys) on top of ``base``; unknown keys raise ``ConfigError``."""
    cfg = base or RunConfig()
    kw: dict[str, Any] = {}
    plant_over = dict(cfg.plant_overrides)
    hyper = {k: dict(v) for k, v in cfg.hyperparams.items()}
    grid = list(cfg.grid)
    for key, value in entries.items():
        if value is None:
            continue
        if key == "seed":
            kw["seed"] = _num(key, value, int)
        elif key == "plant":
            if str(value) not in PRESETS:
                raise ConfigError(f"plant: unknown preset {value!r}; choose from {sorted(PRESETS)}")
            kw["plant"] = str(value)
        elif key.startswith("plant."):
            name = key.split(".", 1)[1]
            if name not in _PLANT_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            plant_over[name] = _num(key, value, int if name == "segments" else float)
        elif key in ("grid.min", "grid.max", "grid.step"):
            grid[("grid.min", "grid.max", "grid.step").index(key)] = _num(key, value)
        elif key == "replicates":
            kw["replicates"] = _num(key, value, int)
        elif key == "noise_sigma":
            kw["noise_sigma"] = _num(key, value)
        elif key in ("split.train_fraction", "train_fraction"):
            kw["train_fraction"] = _num(key, value)
        elif key == "models":
            names = tuple(m.strip() for m in str(value).split(",") if m.strip()) \
                if isinstance(value, str) else tuple(value)
            bad = [m for m in names if m not in FAMILIES]
            if bad or not names:
                raise ConfigError(f"models: unknown family {bad[0]!r}" if bad else "models: empty list")
            kw["models"] = names
        elif key.startswith("model."):
            parts = key.split(".")
            if len(parts) != 3 or parts[1] not in DEFAULT_HYPERPARAMS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                hyper.setdefault(parts[1], {})[parts[2]] = coerce_hyperparam(parts[1], parts[2], value)
            except UnknownHyperparameter:
                raise ConfigError(f"unknown config key {key!r}") from None
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        elif key == "out":
            kw["out"] = str(value)
        elif key == "tune":
            kw["tune"] = _bool(key, value)
        elif key in ("distill.degree", "degree"):
            kw["degree"] = _num(key, value, int)
        elif key == "distill.probe_step":
            kw["probe_step"] = _num(key, value)
        elif key in ("validate.sweep_protocol", "sweep_protocol"):
            kw["sweep_protocol"] = str(value)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    cfg = replace(cfg, plant_overrides=plant_over, hyperparams=hyper, grid=tuple(grid), **kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if not 0.0 < cfg.train_fraction < 1.0:
        raise ConfigError("split.train_fraction must lie in (0, 1)")
    if cfg.degree not in (1, 2):
        raise ConfigError("distill.degree must be 1 or 2")
    if cfg.probe_step <= 0:
        raise ConfigError("distill.probe_step must be positive")
    if cfg.sweep_protocol not in ("alternating", "grid"):
        raise ConfigError("validate.sweep_protocol must be 'alternating' or 'grid'")
    if cfg.noise_sigma is not None and cfg.noise_sigma < 0:
        raise ConfigError("noise_sigma must be >= 0")
    cfg.plant_params()


def load_config(path=None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read ``path`` (optional), then apply command-line ``overrides``."""
    entries: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        entries.update(parse_text(p.read_text(encoding="utf-8"), str(p)))
    entries.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(entries)

"""Flat `key = value` experiment configs and sweep manifests.

A config file is a list of `key = value` lines with `#` comments. Unknown
keys are parse errors in strict mode and loud warnings otherwise; misspelled
keys never default silently. Three keys accept comma lists and become sweep
axes (`policy`, `seed`, `data_fraction`); the manifest is their cross
product over the shared base settings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .loop import POLICY_KINDS, RoutingPolicy, RunConfig
from .model import TrainConfig

__all__ = ["ConfigError", "ExperimentManifest", "RunSpec", "parse_config",
           "resolve_run_config", "config_hash"]


class ConfigError(ValueError):
    """Config problem tagged with the 1-based line it came from (0 = global)."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_auto_float(text: str):
    return None if text.lower() == "auto" else float(text)


def _parse_auto_int(text: str):
    return None if text.lower() == "auto" else int(text)


def _parse_policy_list(text: str) -> list[str]:
    kinds = [p.strip() for p in text.split(",") if p.strip()]
    if text.strip() == "all":
        return list(POLICY_KINDS)
    for kind in kinds:
        if kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {kind!r}; expected "
                             f"{', '.join(POLICY_KINDS)} or 'all'")
    if not kinds:
        raise ValueError("empty policy list")
    return kinds


def _parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _parse_float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _in_range(name, low=None, high=None, low_open=False, high_open=False):
    interval = (("(" if low_open else "[") + (str(low) if low is not None else "-inf")
                + ", " + (str(high) if high is not None else "inf")
                + (")" if high_open else "]"))

    def check(value):
        low_bad = low is not None and (value <= low if low_open else value < low)
        high_bad = high is not None and (value >= high if high_open else value > high)
        if low_bad or high_bad:
            raise ValueError(f"{name} must lie in {interval}, got {value}")
    return check


# key -> (parser, validator or None). Defaults live in _DEFAULTS below.
_SCHEMA = {
    "stream": (str, None),
    "tasks": (int, _in_range("tasks", low=1)),
    "dim": (int, _in_range("dim", low=1)),
    "classes_per_task": (int, _in_range("classes_per_task", low=1)),
    "overlap_fraction": (float, _in_range("overlap_fraction", low=0.0, high=1.0)),
    "samples_per_class_train": (int, _in_range("samples_per_class_train", low=1)),
    "samples_per_class_test": (int, _in_range("samples_per_class_test", low=1)),
    "mean_separation": (float, _in_range("mean_separation", low=0.0)),
    "noise_scale": (float, _in_range("noise_scale", low=0.0, low_open=True)),
    "center_norm": (float, _in_range("center_norm", low=0.0)),
    "policy": (_parse_policy_list, None),
    "prompt_len": (int, _in_range("prompt_len", low=1)),
    "top_k": (int, _in_range("top_k", low=1)),
    "k_new": (int, _in_range("k_new", low=1)),
    "q": (float, _in_range("q", low=0.0, high=1.0, low_open=True, high_open=True)),
    "epsilon": (_parse_auto_float, None),
    "pool_size": (_parse_auto_int, None),
    "score_buffer_cap": (int, _in_range("score_buffer_cap", low=1)),
    "learning_rate": (float, _in_range("learning_rate", low=0.0)),
    "epochs": (int, _in_range("epochs", low=1)),
    "batch_size": (int, _in_range("batch_size", low=1)),
    "key_match_weight": (float, _in_range("key_match_weight", low=0.0)),
    "freeze_keys": (_parse_bool, None),
    "seed": (_parse_int_list, None),
    "data_fraction": (_parse_float_list, None),
}

_DEFAULTS = {
    "stream": "synthetic",
    "tasks": 5,
    "dim": 16,
    "classes_per_task": 2,
    "overlap_fraction": 0.0,
    "samples_per_class_train": 100,
    "samples_per_class_test": 50,
    "mean_separation": 4.0,
    "noise_scale": 1.0,
    "center_norm": 0.0,
    "policy": ["adaptive_rmd"],
    "prompt_len": 5,
    "top_k": 1,
    "k_new": 2,
    "q": 0.95,
    "epsilon": None,
    "pool_size": None,
    "score_buffer_cap": 2048,
    "learning_rate": 0.05,
    "epochs": 20,
    "batch_size": 32,
    "key_match_weight": 0.5,
    "freeze_keys": False,
    "seed": [0],
    "data_fraction": [1.0],
}


@dataclass(frozen=True)
class RunSpec:
    """One resolved point of the sweep."""

    policy: str
    seed: int
    data_fraction: float


@dataclass
class ExperimentManifest:
    settings: dict = field(default_factory=lambda: dict(_DEFAULTS))
    warnings: list[str] = field(default_factory=list)

    @property
    def policies(self) -> list[str]:
        return self.settings["policy"]

    @property
    def seeds(self) -> list[int]:
        return self.settings["seed"]

    @property
    def data_fractions(self) -> list[float]:
        return self.settings["data_fraction"]

    def runs(self) -> list[RunSpec]:
        return [RunSpec(policy=p, seed=s, data_fraction=f)
                for p in self.policies
                for f in self.data_fractions
                for s in self.seeds]

    def override(self, policies=None, seeds=None, data_fractions=None) -> None:
        if policies is not None:
            self.settings["policy"] = _parse_policy_list(policies)
        if seeds is not None:
            self.settings["seed"] = list(seeds)
        if data_fractions is not None:
            self.settings["data_fraction"] = _parse_float_list(data_fractions)


def parse_config(text: str, strict: bool = False) -> ExperimentManifest:
    """Parse config text; errors carry 1-based line numbers."""
    manifest = ExperimentManifest()
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            message = f"unknown key {key!r}"
            if strict:
                raise ConfigError(lineno, message)
            manifest.warnings.append(f"line {lineno}: {message} (ignored)")
            continue
        if key in seen:
            raise ConfigError(lineno, f"duplicate key {key!r} "
                                      f"(first set on line {seen[key]})")
        seen[key] = lineno
        parser, validator = _SCHEMA[key]
        try:
            parsed = parser(value)
            if validator is not None:
                validator(parsed)
        except ValueError as exc:
            raise ConfigError(lineno, f"{key}: {exc}") from None
        manifest.settings[key] = parsed
    return manifest


def resolve_run_config(manifest: ExperimentManifest, spec: RunSpec) -> RunConfig:
    s = manifest.settings
    policy = RoutingPolicy(kind=spec.policy, pool_size=s["pool_size"])
    train = TrainConfig(learning_rate=s["learning_rate"], epochs=s["epochs"],
                        batch_size=s["batch_size"],
                        key_match_weight=s["key_match_weight"],
                        freeze_keys=s["freeze_keys"], seed=spec.seed)
    return RunConfig(policy=policy, prompt_len=s["prompt_len"], top_k=s["top_k"],
                     k_new=s["k_new"], quantile=s["q"], epsilon=s["epsilon"],
                     score_buffer_cap=s["score_buffer_cap"], train=train,
                     seed=spec.seed)


def canonical_text(manifest: ExperimentManifest, spec: RunSpec | None = None) -> str:
    """Stable, fully-resolved key=value rendering (sweep point included)."""
    settings = dict(manifest.settings)
    if spec is not None:
        settings["policy"] = [spec.policy]
        settings["seed"] = [spec.seed]
        settings["data_fraction"] = [spec.data_fraction]
    lines = []
    for key in sorted(settings):
        value = settings[key]
        if isinstance(value, list):
            value = ",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in value)
        elif value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(manifest: ExperimentManifest, spec: RunSpec | None = None) -> str:
    return hashlib.sha256(canonical_text(manifest, spec).encode()).hexdigest()[:12]

"""Configuration loader for the application."""

import os
import re
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.exceptions import ConfigError
from src.models.estimates import ESTIMANDS, EstimationSettings, Method
from src.models.scenario import SimScenario

# Load environment variables from .env file in project root
dotenv_path = find_dotenv(usecwd=True)
if dotenv_path:
    load_dotenv(dotenv_path)
else:
    load_dotenv()

ENV_PATTERN = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
Study = Literal["single", "misspecification", "sample_size", "variance", "pate"]


def _split(value):
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class DiscoveryConfig(BaseModel):
    """Which IATE vectors are searched for subgroups, and on which covariates."""

    model_config = ConfigDict(extra="forbid")

    targets: List[str] = Field(default_factory=lambda: ["direct:0", "direct:1", "spillover:0", "spillover:1"])
    method: Method = "AIPW"
    covariates: Optional[List[str]] = None
    huber_c: float = Field(default=1.345, gt=0.0)

    @field_validator("targets", "covariates", mode="before")
    @classmethod
    def _parse_list(cls, value):
        return _split(value)

    @field_validator("targets")
    @classmethod
    def _check_targets(cls, targets):
        for target in targets:
            kind, _, held = target.partition(":")
            if kind not in ESTIMANDS or held not in ("0", "1"):
                raise ValueError(f"discovery target {target!r} must look like 'direct:0' or 'spillover:1'")
        return targets

    def parsed_targets(self) -> List[Tuple[str, int, str]]:
        return [(t.split(":")[0], int(t.split(":")[1]), self.method) for t in self.targets]


class SimulationConfig(BaseModel):
    """A named study swept around a base scenario."""

    model_config = ConfigDict(extra="forbid")

    study: Study = "misspecification"
    values: Optional[List[Union[float, str]]] = None
    scenario: SimScenario = Field(default_factory=SimScenario)

    @field_validator("values", mode="before")
    @classmethod
    def _parse_values(cls, value):
        return _split(value)


class RunConfig(BaseModel):
    """
    Fully resolved parameters of one CLI run.

    Precedence: built-in defaults < config file < command-line flags.
    """

    model_config = ConfigDict(extra="forbid")

    network: Optional[str] = None
    interventions: Optional[str] = None
    outcomes: Optional[str] = None
    output_dir: str = "output"
    seed: Optional[int] = Field(default=None, ge=0)
    threads: int = Field(default=1, ge=1)
    bootstrap: int = Field(default=0, ge=0)
    level: float = Field(default=0.95, gt=0.0, lt=1.0)
    trim: float = Field(default=0.0, ge=0.0, lt=0.5)
    plots: bool = True
    estimation: EstimationSettings = Field(default_factory=EstimationSettings)
    discovery: DiscoveryConfig = Field(default_factory=DiscoveryConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)

    def require_inputs(self) -> Tuple[str, str, str]:
        missing = [name for name in ("network", "interventions", "outcomes") if not getattr(self, name)]
        if missing:
            raise ConfigError(f"missing input path(s): {', '.join(missing)}")
        return self.network, self.interventions, self.outcomes

    def require_seed(self, purpose: str) -> int:
        if self.seed is None:
            raise ConfigError(f"{purpose} needs an explicit --seed")
        return self.seed

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.model_dump(mode="json"), sort_keys=False)


def _substitute_env_vars(obj: Any) -> Any:
    """Recursively substitute ${ENV_VAR} patterns with environment variables."""
    if isinstance(obj, dict):
        return {k: _substitute_env_vars(v) for k, v in obj.items()}
    elif isinstance(obj, list):
        return [_substitute_env_vars(item) for item in obj]
    elif isinstance(obj, str):
        return ENV_PATTERN.sub(lambda m: os.getenv(m.group(1), m.group(0)), obj)
    return obj


def _set_dotted(target: Dict[str, Any], key: str, value: Any):
    node = target
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def read_config_file(config_path: Union[str, Path]) -> Dict[str, Any]:
    """Parse a YAML config file with ${ENV} substitution."""
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"Configuration file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return _substitute_env_vars(data)


def load_run_config(
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Resolve a RunConfig from an optional file and dotted-key overrides.

    Args:
        config_path: YAML config file
        overrides: {"estimation.truncation.component": "0.05,0.95", ...};
            None values are ignored so unset flags never override

    Raises:
        ConfigError: unreadable file, unknown key or invalid value
    """
    data = read_config_file(config_path) if config_path else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, key, value)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from e


# Global config instance
_config: Optional[RunConfig] = None


def get_config(config_path: Optional[str] = None) -> RunConfig:
    """Get or create global configuration instance."""
    global _config
    if _config is None:
        if config_path is None and os.path.exists(os.path.join(os.getcwd(), "config.yaml")):
            config_path = os.path.join(os.getcwd(), "config.yaml")
        _config = load_run_config(config_path)
    return _config

"""Global configuration with flags > environment > config file > defaults.

The config file is a flat TOML document of ``key = value`` pairs using the
field names of ``GlobalConfig``. Environment variables are the upper-cased
field names prefixed with ``SKILLFORGE_`` (``SKILLFORGE_GRANULARITY=fine``).
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .abstraction import DEFAULT_GRANULARITY, Granularity
from .errors import ConfigError

ENV_PREFIX = "SKILLFORGE_"
CONFIG_ENV = "SKILLFORGE_CONFIG"
DEFAULT_CONFIG_NAME = "skillforge.toml"
CI_ENV = "CI"


def package_data() -> Path:
    return Path(str(resources.files("skillforge") / "data"))


@dataclass(frozen=True)
class GlobalConfig:
    fixtures_dir: Path = dataclasses.field(default_factory=lambda: package_data() / "fixtures")
    library_path: Path = Path("library.json")
    templates_dir: Path = dataclasses.field(default_factory=lambda: package_data() / "templates")
    profiles_dir: Path = dataclasses.field(default_factory=lambda: package_data() / "profiles")
    out_dir: Path = Path("out")
    granularity: Granularity = DEFAULT_GRANULARITY
    seed: int | None = None
    retry_limit: int = 0
    replan_each_step: bool = False
    planner_backend: str = "mock-rules"
    abstraction_backend: str = "lexicon"
    llm_endpoint: str | None = None
    llm_model: str = "default"
    llm_api_key_env: str | None = None
    llm_timeout: float = 30.0
    perception_backend: str = "fixture"
    perception_endpoint: str | None = None
    perception_api_key_env: str | None = None
    perception_timeout: float = 5.0
    perception_max_retries: int = 2

    def __post_init__(self) -> None:
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")
        if self.planner_backend not in ("mock-rules", "http"):
            raise ConfigError(f"unknown planner_backend {self.planner_backend!r}")
        if self.abstraction_backend not in ("lexicon", "llm"):
            raise ConfigError(f"unknown abstraction_backend {self.abstraction_backend!r}")
        if self.perception_backend not in ("fixture", "http"):
            raise ConfigError(f"unknown perception_backend {self.perception_backend!r}")
        if self.planner_backend == "http" or self.abstraction_backend == "llm":
            if not self.llm_endpoint:
                raise ConfigError("llm_endpoint is required for the http planner / llm abstraction")

    def check_paths(self, need_library: bool = True) -> None:
        for name in ("fixtures_dir", "templates_dir", "profiles_dir"):
            if not getattr(self, name).is_dir():
                raise ConfigError(f"{name} {getattr(self, name)} does not exist")
        if need_library and not self.library_path.is_file():
            raise ConfigError(f"library {self.library_path} does not exist (run `skillforge library init`)")

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = str(v) if isinstance(v, Path) else v.value if isinstance(v, Granularity) else v
        return out


_FIELDS = {f.name: f for f in fields(GlobalConfig)}


def _coerce(name: str, value: Any) -> Any:
    kind = str(_FIELDS[name].type)
    if value is None:
        return None
    try:
        if kind.startswith("Path"):
            return Path(value)
        if kind.startswith("Granularity"):
            return Granularity.parse(value)
        if kind.startswith("bool"):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind.startswith("int"):
            if isinstance(value, bool):
                raise ValueError(value)
            return int(value)
        if kind.startswith("float"):
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return str(value)


def read_config_file(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    unknown = sorted(set(doc) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config keys in {path}: {', '.join(unknown)}")
    base = path.parent
    out = {}
    for k, v in doc.items():
        v = _coerce(k, v)
        # relative paths in a config file are relative to the file
        if isinstance(v, Path) and not v.is_absolute():
            v = base / v
        out[k] = v
    return out


def read_env(environ: Mapping[str, str]) -> dict[str, Any]:
    out = {}
    for name in _FIELDS:
        key = ENV_PREFIX + name.upper()
        if key in environ and environ[key] != "":
            out[name] = _coerce(name, environ[key])
    return out


def resolve_config(
    flags: Mapping[str, Any] | None = None,
    config_path: str | Path | None = None,
    environ: Mapping[str, str] | None = None,
) -> GlobalConfig:
    """Merge the four layers. ``flags`` values of ``None`` mean "not given"."""
    environ = os.environ if environ is None else environ
    values: dict[str, Any] = {}
    path = config_path or environ.get(CONFIG_ENV)
    if path is None and Path(DEFAULT_CONFIG_NAME).is_file():
        path = DEFAULT_CONFIG_NAME
    if path is not None:
        values.update(read_config_file(Path(path)))
    values.update(read_env(environ))
    for k, v in (flags or {}).items():
        if v is None:
            continue
        if k not in _FIELDS:
            raise ConfigError(f"unknown setting {k!r}")
        values[k] = _coerce(k, v)
    return GlobalConfig(**values)


def ci_mode(environ: Mapping[str, str] | None = None) -> bool:
    value = (os.environ if environ is None else environ).get(CI_ENV, "")
    return value.strip().lower() not in ("", "0", "false", "no")

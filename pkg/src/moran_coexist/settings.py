from __future__ import annotations

import os
from pathlib import Path

from dotenv import load_dotenv
from loguru import logger
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from moran_coexist.errors import ConfigError

load_dotenv()

ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG_PATH = ROOT / "config" / "moran.yaml"


class MoranSettings(BaseSettings):
    """Runtime defaults. Init kwargs (YAML file, CLI) win over MORAN_* env vars."""

    model_config = SettingsConfigDict(env_prefix="MORAN_", env_file=".env", extra="ignore")

    runs: int = Field(1000, ge=1)
    master_seed: int = Field(7, ge=0)
    n_grid: int = Field(1000, ge=100)
    eps: float = Field(1e-6, gt=0.0, le=0.01)
    sde_dt: float = Field(1e-4, gt=0.0)
    gamma_tolerance: int = Field(1, ge=0)
    max_events: int = Field(10**10, ge=1)
    workers: int = Field(4, ge=1)
    path_stride: int = Field(1, ge=1)
    log_level: str = "INFO"
    out_dir: Path = Path("output")


def _coerce(value: str) -> object:
    if value.lower() in {"true", "false"}:
        return value.lower() == "true"
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def load_yaml_config(path: Path) -> dict[str, object]:
    """Flat `key: value` reader; nested YAML is not supported."""
    if not path.exists():
        return {}
    data: dict[str, object] = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if ":" not in stripped:
            continue
        key, raw = stripped.split(":", 1)
        value = raw.split(" #", 1)[0].strip().strip('"').strip("'")
        data[key.strip()] = _coerce(value)
    return data


def load_settings(path: Path | None = None, **overrides: object) -> MoranSettings:
    cfg_path = path or Path(os.getenv("MORAN_CONFIG", DEFAULT_CONFIG_PATH))
    values = load_yaml_config(cfg_path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        settings = MoranSettings(**values)
    except ValidationError as exc:
        raise ConfigError(f"Invalid settings from {cfg_path}: {exc}") from exc
    logger.debug(f"Loaded settings from {cfg_path}: {settings.model_dump()}")
    return settings

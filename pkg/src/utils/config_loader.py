from pathlib import Path
from typing import Dict, Any, Optional
import os
import yaml

_CONFIGS: Dict[Path, Dict[str, Any]] = {}

# Project root = repo root (works locally + in Docker)
PROJECT_ROOT = Path(__file__).resolve().parents[2]

OUT_DIR_ENV = "TWOWAY_OUT_DIR"


def get_project_root() -> Path:
    """
    Returns the absolute path to the project root
    """
    return PROJECT_ROOT


def resolve_config_path(path: Optional[str | Path] = None, filename: str = "config.yml") -> Path:
    """
    Explicit path wins, then CONFIG_PATH, then config/<filename>.
    """
    if path is not None:
        p = Path(path)
    else:
        p = Path(os.getenv("CONFIG_PATH", PROJECT_ROOT / "config" / filename))
    if not p.is_absolute() and not p.exists():
        p = PROJECT_ROOT / p
    return p


def load_config(path: Optional[str | Path] = None, filename: str = "config.yml") -> Dict[str, Any]:
    """
    Load a YAML experiment config with optional environment overrides.
    Returns a fresh dict each call; the parsed file is cached.
    """
    config_path = resolve_config_path(path, filename)

    if config_path not in _CONFIGS:
        if not config_path.exists():
            raise FileNotFoundError(f"Config file not found at: {config_path}")

        with config_path.open("r", encoding="utf-8") as f:
            cfg = yaml.safe_load(f)

        if not isinstance(cfg, dict):
            raise ValueError(f"Config at {config_path} must be a mapping, got {type(cfg).__name__}")

        _CONFIGS[config_path] = cfg

    cfg = yaml.safe_load(yaml.safe_dump(_CONFIGS[config_path]))

    # -------------------------------
    # Environment overrides (output directory only)
    # -------------------------------
    if OUT_DIR_ENV in os.environ:
        cfg.setdefault("output", {})
        cfg["output"]["out_dir"] = os.environ[OUT_DIR_ENV]

    return cfg


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Same as load_config for an in-memory document (used by tests and the harness).
    """
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise ValueError("Config document must be a mapping")
    if OUT_DIR_ENV in os.environ:
        cfg.setdefault("output", {})
        cfg["output"]["out_dir"] = os.environ[OUT_DIR_ENV]
    return cfg

"""Max-stable process toolkit exposing the Flask application factory."""

from __future__ import annotations

import logging
import os
from pathlib import Path

from flask import Flask

from .cli import register_cli
from .extensions import init_extensions
from .services.errors import ConfigError

__version__ = "0.1.0"

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _data_root(base_dir: Path, override: str | None = None) -> Path:
    root = Path(override).expanduser() if override else base_dir / "data"
    root.mkdir(parents=True, exist_ok=True)
    for sub in ("runs", "logs"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    return root


def _int_env(name: str, default: int | None, minimum: int) -> int | None:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{name} must be an integer") from exc
    if value < minimum:
        raise ConfigError(f"{name} must be at least {minimum}")
    return value


def create_app() -> Flask:
    base_dir = Path(__file__).resolve().parent.parent
    data_root = _data_root(base_dir, os.getenv("MAXSTAB_DATA_ROOT"))

    app = Flask(__name__)

    log_level = os.getenv("MAXSTAB_LOG_LEVEL", "INFO").upper()
    if log_level not in LOG_LEVELS:
        log_level = "INFO"

    app.config.update(
        DATA_ROOT=str(data_root),
        RUNS_ROOT=str(data_root / "runs"),
        MAXSTAB_THREADS=_int_env("MAXSTAB_THREADS", 1, 1),
        MAXSTAB_ATOM_LOG_CAP=_int_env("MAXSTAB_ATOM_LOG_CAP", None, 0),
        MAXSTAB_PLOT_HOOK=os.getenv("MAXSTAB_PLOT_HOOK") or None,
        MAXSTAB_LOG_LEVEL=log_level,
    )

    app.logger.setLevel(getattr(logging, log_level))
    init_extensions(app)
    register_cli(app)
    return app


__all__ = ["create_app", "__version__"]

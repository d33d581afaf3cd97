"""Exception hierarchy and lightweight error logging for offline inspection."""

from __future__ import annotations

from datetime import datetime, timezone

UTC = timezone.utc
from pathlib import Path
import traceback
from typing import Mapping, Sequence

from flask import current_app, has_app_context


class MaxStabError(Exception):
    """Base exception for toolkit operations."""

    exit_code = 1


class ConfigError(MaxStabError):
    """Raised when a run configuration or flag combination is invalid."""

    exit_code = 2

    def __init__(self, message: str, fields: Mapping[str, Sequence[str]] | None = None) -> None:
        super().__init__(message)
        self.fields = dict(fields or {})

    def __str__(self) -> str:
        if not self.fields:
            return self.args[0]
        detail = "; ".join(f"{path}: {', '.join(msgs)}" for path, msgs in sorted(self.fields.items()))
        return f"{self.args[0]} ({detail})"


class ContractViolation(MaxStabError, ValueError):
    """Raised when a documented precondition of an operation is violated."""

    exit_code = 2


class DataError(MaxStabError):
    """Raised for missing, empty or inconsistent inputs."""

    exit_code = 3


class DigestMismatch(DataError):
    """Raised when a file on disk no longer matches its manifest digest."""

    exit_code = 5


class NumericFailure(MaxStabError):
    """Raised when a numerical routine cannot produce a result."""

    exit_code = 4


def record_exception(context: str, exc: BaseException) -> None:
    """Append exception details to data/logs/maxstab_errors.log."""

    try:
        if not has_app_context():
            return
        root = Path(current_app.config["DATA_ROOT"]) / "logs"
        root.mkdir(parents=True, exist_ok=True)
        log_path = root / "maxstab_errors.log"
        with log_path.open("a", encoding="utf-8") as handle:
            handle.write(f"[{datetime.now(UTC).isoformat()}] {context}\n")
            handle.write("".join(traceback.format_exception(exc)))
            handle.write("\n")
    except Exception:
        # Never let logging failures break a command.
        pass

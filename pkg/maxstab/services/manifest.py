"""Run manifests: what was run, with which configuration, and output digests."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone

UTC = timezone.utc
import json
import logging
from pathlib import Path
import platform
from typing import Any, Iterable

import numpy as np
import scipy

from maxstab.extensions import ArtifactRecord, ArtifactWriter, sha256_file
from maxstab.services.errors import DataError, DigestMismatch
from maxstab.services.runconfig import RunConfig

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
RESOLVED_CONFIG_NAME = "config.resolved.json"
TOOL_VERSION = "0.1.0"


def environment() -> dict[str, str]:
    return {
        "maxstab": TOOL_VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    outputs: dict[str, str] = field(default_factory=dict)
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)
    environment: dict[str, str] = field(default_factory=environment)

    @classmethod
    def start(cls, config: RunConfig) -> "RunManifest":
        return cls(config.digest(), config.seed)

    def record(self, records: Iterable[ArtifactRecord]) -> list[str]:
        paths = []
        for rec in records:
            self.outputs[rec.path] = rec.sha256
            paths.append(rec.path)
        return paths

    def stage(self, name: str, seconds: float, records: Iterable[ArtifactRecord], **flags: Any) -> None:
        paths = self.record(records)
        self.stages[name] = {
            "finished_at": datetime.now(UTC).isoformat(timespec="seconds"),
            "seconds": round(float(seconds), 3),
            "outputs": sorted(paths),
            "flags": flags,
        }

    def to_json(self) -> dict[str, Any]:
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "environment": dict(self.environment),
            "outputs": dict(sorted(self.outputs.items())),
            "stages": self.stages,
        }

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> "RunManifest":
        try:
            return cls(
                config_digest=str(payload["config_digest"]),
                seed=int(payload["seed"]),
                outputs=dict(payload.get("outputs", {})),
                stages=dict(payload.get("stages", {})),
                environment=dict(payload.get("environment", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed manifest: {exc}") from exc

    def save(self, writer: ArtifactWriter, run_dir: Path) -> ArtifactRecord:
        return writer.write_json(run_dir, MANIFEST_NAME, self.to_json())

    def verify(self, run_dir: Path) -> None:
        """Re-hash every recorded output and fail on the first difference."""

        for relpath, expected in sorted(self.outputs.items()):
            target = run_dir / relpath
            if not target.is_file():
                raise DigestMismatch(f"missing output: {relpath}")
            actual = sha256_file(target)
            if actual != expected:
                raise DigestMismatch(f"digest mismatch: {relpath}")
        logger.info("verified %d outputs in %s", len(self.outputs), run_dir)


def load_manifest(run_dir: Path) -> RunManifest:
    target = run_dir / MANIFEST_NAME
    if not target.is_file():
        raise DataError(f"no manifest in {run_dir}")
    try:
        payload = json.loads(target.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"unreadable manifest: {exc}") from exc
    return RunManifest.from_json(payload)


def open_run(config: RunConfig, run_dir: Path, writer: ArtifactWriter) -> RunManifest:
    """Load the manifest of an existing run of the same config or start a new one."""

    run_dir.mkdir(parents=True, exist_ok=True)
    if (run_dir / MANIFEST_NAME).is_file():
        manifest = load_manifest(run_dir)
        if manifest.config_digest != config.digest():
            logger.warning("run dir %s held a different config; starting a fresh manifest", run_dir)
            manifest = RunManifest.start(config)
    else:
        manifest = RunManifest.start(config)
    manifest.record([writer.write_json(run_dir, RESOLVED_CONFIG_NAME, config.canonical())])
    return manifest


def load_resolved_config(run_dir: Path) -> RunConfig:
    target = run_dir / RESOLVED_CONFIG_NAME
    if not target.is_file():
        raise DataError(f"no {RESOLVED_CONFIG_NAME} in {run_dir}")
    return RunConfig.from_mapping(json.loads(target.read_text(encoding="utf-8")))

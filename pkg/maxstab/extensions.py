"""Application extensions (replication pool, artifact writer)."""

from __future__ import annotations

from concurrent.futures import Executor, ThreadPoolExecutor
from contextlib import contextmanager
import csv
from dataclasses import dataclass
import hashlib
import io
import json
import math
from pathlib import Path
import threading
from typing import Any, Iterator, Sequence

from flask import Flask


class ReplicationPool:
    """Thread pool used to fan out replicates; one thread means in-process."""

    def __init__(self) -> None:
        self._threads: int | None = None

    def init_app(self, app: Flask) -> None:
        self._threads = max(1, int(app.config["MAXSTAB_THREADS"]))
        app.extensions["maxstab_pool"] = self

    @property
    def threads(self) -> int:
        if self._threads is None:
            raise RuntimeError("Replication pool is not initialised")
        return self._threads

    @contextmanager
    def executor(self, threads: int | None = None) -> Iterator[Executor | None]:
        n = self.threads if threads is None else max(1, int(threads))
        if n == 1:
            yield None
            return
        with ThreadPoolExecutor(max_workers=n, thread_name_prefix="maxstab") as pool:
            yield pool


def _plain(value: Any) -> Any:
    """Replace non-finite floats by strings so the output stays strict JSON."""

    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        return _plain(value.item())
    return value


@dataclass(frozen=True)
class ArtifactRecord:
    path: str
    sha256: str
    size: int


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


class ArtifactWriter:
    """Writes run outputs deterministically and reports their digests."""

    def __init__(self) -> None:
        self._root: Path | None = None
        self._lock = threading.Lock()

    def init_app(self, app: Flask) -> None:
        self._root = Path(app.config["RUNS_ROOT"])
        app.extensions["maxstab_writer"] = self

    @property
    def root(self) -> Path:
        if self._root is None:
            raise RuntimeError("Artifact writer is not initialised")
        return self._root

    def _write(self, run_dir: Path, relpath: str, payload: bytes) -> ArtifactRecord:
        target = run_dir / relpath
        with self._lock:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(payload)
        return ArtifactRecord(relpath, hashlib.sha256(payload).hexdigest(), len(payload))

    def write_json(self, run_dir: Path, relpath: str, payload: Any) -> ArtifactRecord:
        text = json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
        return self._write(run_dir, relpath, text.encode("utf-8"))

    def write_csv(self, run_dir: Path, relpath: str, rows: Sequence[Sequence[Any]]) -> ArtifactRecord:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\r\n")
        writer.writerows(rows)
        return self._write(run_dir, relpath, buffer.getvalue().encode("utf-8"))

    def write_text(self, run_dir: Path, relpath: str, text: str) -> ArtifactRecord:
        return self._write(run_dir, relpath, text.encode("utf-8"))


pool = ReplicationPool()
writer = ArtifactWriter()


def init_extensions(app: Flask) -> None:
    pool.init_app(app)
    writer.init_app(app)

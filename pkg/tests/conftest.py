import json
import pathlib
import sys

import pytest

root = pathlib.Path(__file__).resolve().parents[1]
if str(root) not in sys.path:
    sys.path.insert(0, str(root))

from maxstab import create_app
from maxstab.services.randkit import RngStream


@pytest.fixture
def app(tmp_path, monkeypatch):
    monkeypatch.setenv("MAXSTAB_DATA_ROOT", str(tmp_path / "data"))
    monkeypatch.setenv("MAXSTAB_THREADS", "1")
    monkeypatch.delenv("MAXSTAB_PLOT_HOOK", raising=False)
    monkeypatch.delenv("MAXSTAB_ATOM_LOG_CAP", raising=False)
    app = create_app()
    app.config.update(TESTING=True)
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def rng():
    return RngStream(20240611)


@pytest.fixture
def write_config(tmp_path):
    """Write a JSON config into tmp_path and return its path as a string."""

    def _write(payload, name="run.json"):
        target = tmp_path / name
        target.write_text(json.dumps(payload), encoding="utf-8")
        return str(target)

    return _write

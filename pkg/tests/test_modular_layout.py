import importlib, pathlib

import pytest

from maxstab.services.errors import ConfigError


def test_package_exists():
    root = pathlib.Path(__file__).resolve().parents[1]
    assert (root / "maxstab" / "services" / "dehaan.py").exists(), "simulator module missing"
    assert (root / "maxstab" / "app.py").exists(), "cli entry point missing"


def test_imports_ok():
    # importing the app package should not raise
    pkg = importlib.import_module("maxstab")
    assert hasattr(pkg, "create_app")
    assert pkg.__version__ == importlib.import_module("maxstab.services.manifest").TOOL_VERSION


def test_commands_registered(app):
    assert {"simulate", "classify", "decompose", "diagnose", "report"} <= set(app.cli.commands)


def test_env_configures_app(app, tmp_path):
    assert pathlib.Path(app.config["RUNS_ROOT"]).is_dir()
    assert (pathlib.Path(app.config["DATA_ROOT"]) / "logs").is_dir()
    assert app.config["MAXSTAB_THREADS"] == 1
    assert app.config["MAXSTAB_ATOM_LOG_CAP"] is None


def test_bad_thread_env_rejected(monkeypatch, tmp_path):
    from maxstab import create_app

    monkeypatch.setenv("MAXSTAB_DATA_ROOT", str(tmp_path / "data"))
    monkeypatch.setenv("MAXSTAB_THREADS", "zero")
    with pytest.raises(ConfigError):
        create_app()

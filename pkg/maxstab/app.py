"""Command-line entry point: ``python -m maxstab.app <command>``."""

from __future__ import annotations

from flask.cli import FlaskGroup

from . import create_app

cli = FlaskGroup(create_app=create_app, add_default_commands=False, add_version_option=False)


if __name__ == "__main__":
    cli()

"""Loading, validating and canonicalising run configurations."""

from __future__ import annotations

from dataclasses import dataclass, replace
import hashlib
import json
import logging
from pathlib import Path
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Mapping

from maxstab.forms.config import SCHEMA_VERSION, validate_run_config
from maxstab.models import Grid
from maxstab.services.catalog import SpectralModel, model_from_descriptor
from maxstab.services.cones import Thresholds, WeightFunction
from maxstab.services.diagnostics import DiagnosticSettings
from maxstab.services.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

_MODEL_KEYS = {
    "constant": ("c",),
    "brown_resnick": ("K", "sampler"),
    "compact_bump": ("shape", "support_radius", "height", "placement"),
    "comb": ("N", "placement"),
    "mixture": ("weights", "components"),
}


def _model_section(clean: Mapping[str, Any]) -> dict[str, Any]:
    kind = clean["kind"]
    out: dict[str, Any] = {"kind": kind, "d": clean["d"]}
    for key in _MODEL_KEYS[kind]:
        if key == "components":
            out[key] = [_model_section(c) for c in clean.get("components") or []]
        elif key == "N" and clean.get("N") is None:
            continue
        else:
            out[key] = clean[key]
    return out


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration with every default filled in."""

    seed: int
    output_dir: str
    model: Mapping[str, Any]
    grid: Mapping[str, Any]
    simulation: Mapping[str, Any]
    classifier: Mapping[str, Any]
    diagnostics: Mapping[str, Any]
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("configuration must be a table")
        clean, errors = validate_run_config(data)
        if errors:
            raise ConfigError("invalid configuration", errors)
        if clean["grid"]["d"] != clean["model"]["d"]:
            raise ConfigError("invalid configuration", {"grid.d": ["Must match model.d."]})
        return cls(
            seed=int(clean["seed"]),
            output_dir=clean["output_dir"] or "",
            model=_model_section(clean["model"]),
            grid=dict(clean["grid"]),
            simulation=dict(clean["simulation"]),
            classifier=dict(clean["classifier"]),
            diagnostics=dict(clean["diagnostics"]),
            schema_version=int(clean["schema_version"]),
        )

    def canonical(self) -> dict[str, Any]:
        """Resolved configuration, excluding where the run is written."""

        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "model": dict(self.model),
            "grid": dict(self.grid),
            "simulation": dict(self.simulation),
            "classifier": dict(self.classifier),
            "diagnostics": dict(self.diagnostics),
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.canonical()).encode("utf-8")).hexdigest()

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        output_dir: str | None = None,
        n_reps: int | None = None,
    ) -> "RunConfig":
        cfg = self
        if seed is not None:
            if seed < 0:
                raise ConfigError("invalid flags", {"--seed": ["Must be non-negative."]})
            cfg = replace(cfg, seed=int(seed))
        if output_dir:
            cfg = replace(cfg, output_dir=str(output_dir))
        if n_reps is not None:
            if n_reps < 0:
                raise ConfigError("invalid flags", {"--reps": ["Must be non-negative."]})
            cfg = replace(
                cfg,
                simulation={**cfg.simulation, "n_reps": int(n_reps)},
                diagnostics={**cfg.diagnostics, "n_reps": int(n_reps)},
            )
        return cfg

    # -- builders ----------------------------------------------------------

    def build_grid(self) -> Grid:
        g = self.grid
        return Grid.window(int(g["d"]), float(g["radius"]), float(g["spacing"]), lattice=bool(g["lattice"]))

    def build_model(self) -> SpectralModel:
        return model_from_descriptor(self.model)

    def thresholds(self) -> Thresholds:
        return Thresholds.from_mapping(self.classifier)

    def radii(self) -> list[float] | None:
        return list(self.classifier["radii"]) or None

    def weight(self) -> WeightFunction | None:
        kind = self.classifier["weight"]
        if kind == "none":
            return None
        return WeightFunction(kind, rate=float(self.classifier["weight_rate"]), exponent=float(self.classifier["weight_exponent"]))

    def diagnostic_settings(self) -> DiagnosticSettings:
        dg = self.diagnostics
        sim = self.simulation
        box = tuple(dg["theta_box"])
        if len(box) != 2 or box[0] > box[1]:
            raise ConfigError("invalid configuration", {"diagnostics.theta_box": ["Needs [lo, hi] with lo <= hi."]})
        return DiagnosticSettings(
            n_reps=int(dg["n_reps"]),
            dyadic_max_exponent=int(dg["dyadic_max_exponent"]),
            generic_lags=tuple(dg["generic_lags"]),
            deltas=tuple(dg["deltas"]),
            radii=tuple(dg["radii"]) or None,
            zs=tuple(dg["zs"]),
            theta_box=(float(box[0]), float(box[1])),
            paddings=tuple(dg["paddings"]) or None,
            identity_lags=tuple(dg["identity_lags"]),
            fold=int(dg["fold"]),
            n_atoms=int(sim["n_atoms"]) if sim["mode"] == "fixed_n" else None,
            n_paths=dg["n_paths"],
            thresholds=self.thresholds(),
        )


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a JSON or TOML file into a plain mapping."""

    p = Path(path)
    if not p.is_file():
        raise DataError(f"config file not found: {p}")
    try:
        if p.suffix.lower() == ".toml":
            with p.open("rb") as handle:
                return tomllib.load(handle)
        return json.loads(p.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {p.name}: {exc}") from exc


def load_run_config(path: str | Path | None) -> RunConfig:
    if path is None:
        logger.info("no --config given, using defaults")
        return RunConfig.from_mapping({})
    return RunConfig.from_mapping(read_config_file(path))

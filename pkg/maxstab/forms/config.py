"""Run-configuration schema validated with wtforms."""

from __future__ import annotations

from typing import Any, Mapping

from wtforms import BooleanField, Field, FieldList, FloatField, Form, FormField, IntegerField, SelectField, StringField
from wtforms.validators import AnyOf, NumberRange, StopValidation, ValidationError

from maxstab.services.catalog import DEFAULT_SERIES_TERMS, PLACEMENTS, SAMPLERS, SHAPES
from maxstab.services.cones import Thresholds
from maxstab.services.decompose import POLICIES
from maxstab.services.dehaan import DEFAULT_ATOM_LOG_CAP, DEFAULT_N_ATOMS, POSITIONS
from maxstab.services.diagnostics import DELTAS, DYADIC_MAX_EXPONENT, GENERIC_LAGS, THETA_ZS

SCHEMA_VERSION = 1
MODEL_KINDS = ("constant", "brown_resnick", "compact_bump", "comb", "mixture")
DEFAULT_SPACING = 0.125


def to_float(value: Any) -> Any:
    if value is None or isinstance(value, bool):
        return value
    if isinstance(value, (int, float, str)):
        try:
            return float(value)
        except ValueError as exc:
            raise ValueError("Not a valid float value.") from exc
    raise ValueError("Not a valid float value.")


class Unset:
    """Stops the chain when the value is absent (None)."""

    field_flags = {"optional": True}

    def __call__(self, form: Form, field: Field) -> None:
        if field.data is None and not field.process_errors:
            field.errors[:] = []
            raise StopValidation()


class Present:
    def __call__(self, form: Form, field: Field) -> None:
        if field.data is None and not field.process_errors:
            raise StopValidation("This field is required.")


class Positive:
    def __init__(self, above: float = 0.0) -> None:
        self.above = above

    def __call__(self, form: Form, field: Field) -> None:
        if field.data is not None and not field.data > self.above:
            raise ValidationError("Must be positive." if self.above == 0 else f"Must exceed {self.above:g}.")


class NonNegative:
    def __call__(self, form: Form, field: Field) -> None:
        if field.data is not None and field.data < 0:
            raise ValidationError("Must be non-negative.")


class RawField(Field):
    """Keeps the submitted value untouched (nested lists checked by hand)."""

    def process_data(self, value: Any) -> None:
        self.data = value


def float_list(default: tuple[float, ...] = (), *validators: Any) -> FieldList:
    return FieldList(
        FloatField(filters=[to_float], validators=[Present(), *validators]),
        default=list(default),
    )


class ModelForm(Form):
    kind = SelectField(choices=MODEL_KINDS, default="brown_resnick", validators=[Present()])
    d = IntegerField(default=1, validators=[Present(), AnyOf([1, 2])])
    c = FloatField(default=1.0, filters=[to_float], validators=[Present(), Positive()])
    K = IntegerField(default=DEFAULT_SERIES_TERMS, validators=[Present(), NumberRange(min=1)])
    sampler = SelectField(choices=SAMPLERS, default="series")
    shape = SelectField(choices=SHAPES, default="triangular")
    support_radius = FloatField(default=1.0, filters=[to_float], validators=[Present(), Positive()])
    height = FloatField(default=1.0, filters=[to_float], validators=[Present(), Positive()])
    placement = SelectField(choices=PLACEMENTS, default="centered")
    N = IntegerField(default=None, validators=[Unset(), NumberRange(min=1)])
    weights = float_list((), NonNegative())
    components = RawField(default=list)


class GridForm(Form):
    d = IntegerField(default=1, validators=[Present(), AnyOf([1, 2])])
    radius = FloatField(default=128.0, filters=[to_float], validators=[Present(), Positive()])
    spacing = FloatField(default=DEFAULT_SPACING, filters=[to_float], validators=[Present(), Positive()])
    lattice = BooleanField(default=False)
    padding = FloatField(default=None, filters=[to_float], validators=[Unset(), NonNegative()])


class SimulationForm(Form):
    kind = SelectField(choices=("dehaan", "m3"), default="dehaan")
    mode = SelectField(choices=("auto", "fixed_n", "threshold"), default="auto")
    n_atoms = IntegerField(default=DEFAULT_N_ATOMS, validators=[Present(), NumberRange(min=1)])
    sup_bound = FloatField(default=None, filters=[to_float], validators=[Unset(), Positive()])
    n_reps = IntegerField(default=1, validators=[Present(), NumberRange(min=0)])
    positions = SelectField(choices=POSITIONS, default="continuous")
    atom_log_cap = IntegerField(default=DEFAULT_ATOM_LOG_CAP, validators=[Present(), NumberRange(min=0)])


_TH = Thresholds()


class ClassifierForm(Form):
    eps_rel = FloatField(default=_TH.eps_rel, filters=[to_float], validators=[Present(), Positive()])
    eps_abs = FloatField(default=_TH.eps_abs, filters=[to_float], validators=[Present(), Positive()])
    growth_window = IntegerField(default=_TH.growth_window, validators=[Present(), NumberRange(min=2)])
    floor = FloatField(default=_TH.floor, filters=[to_float], validators=[Present(), Positive()])
    slope = FloatField(default=_TH.slope, filters=[to_float], validators=[Present()])
    k_halfwidth = FloatField(default=_TH.k_halfwidth, filters=[to_float], validators=[Present(), Positive()])
    radii = float_list((), Positive())
    weight = SelectField(choices=("none", "exponential", "power"), default="none")
    weight_rate = FloatField(default=1.0, filters=[to_float], validators=[Present(), Positive()])
    weight_exponent = FloatField(default=2.0, filters=[to_float], validators=[Present(), Positive(1.0)])
    axis = SelectField(choices=("hopf", "neveu"), default="hopf")
    test = SelectField(choices=("auto", "integral", "decay", "cesaro", "sup_local"), default="auto")
    policy = SelectField(choices=POLICIES, default="strict")
    margin = FloatField(default=None, filters=[to_float], validators=[Unset(), NonNegative()])
    resimulate = IntegerField(default=0, validators=[Present(), NumberRange(min=0)])


class DiagnosticsForm(Form):
    n_reps = IntegerField(default=1000, validators=[Present(), NumberRange(min=0)])
    dyadic_max_exponent = IntegerField(default=DYADIC_MAX_EXPONENT, validators=[Present(), NumberRange(min=1, max=20)])
    generic_lags = float_list(GENERIC_LAGS, Positive())
    deltas = float_list(DELTAS, Positive())
    zs = float_list(THETA_ZS, Positive())
    theta_box = float_list((0.0, 1.0))
    paddings = float_list((), Positive())
    identity_lags = float_list((), NonNegative())
    fold = IntegerField(default=0, validators=[Present(), NumberRange(min=0)])
    n_paths = IntegerField(default=None, validators=[Unset(), NumberRange(min=1)])
    radii = float_list((), Positive())

    def validate_fold(self, field: Field) -> None:
        if field.data == 1:
            raise ValidationError("Use 0 to skip or at least 2 fields.")


class RunConfigForm(Form):
    schema_version = IntegerField(default=SCHEMA_VERSION, validators=[Present(), AnyOf([SCHEMA_VERSION])])
    seed = IntegerField(default=0, validators=[Present(), NumberRange(min=0, max=2**63 - 1)])
    output_dir = StringField(default="")
    model = FormField(ModelForm)
    grid = FormField(GridForm)
    simulation = FormField(SimulationForm)
    classifier = FormField(ClassifierForm)
    diagnostics = FormField(DiagnosticsForm)


def flatten_errors(errors: Any, prefix: str = "") -> dict[str, list[str]]:
    """Turn wtforms' nested error structure into dotted field paths."""

    out: dict[str, list[str]] = {}
    if isinstance(errors, Mapping):
        for key, value in errors.items():
            path = f"{prefix}.{key}" if prefix else str(key)
            out.update(flatten_errors(value, path))
    elif isinstance(errors, (list, tuple)):
        if all(isinstance(e, str) for e in errors):
            if errors:
                out[prefix] = list(errors)
        else:
            for i, entry in enumerate(errors):
                out.update(flatten_errors(entry, f"{prefix}[{i}]"))
    return out


def unknown_keys(form: Form, data: Mapping[str, Any], prefix: str = "") -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else str(key)
        field = form._fields.get(key)
        if field is None:
            out[path] = ["Unknown key."]
        elif isinstance(field, FormField):
            if isinstance(value, Mapping):
                out.update(unknown_keys(field.form, value, path))
            else:
                out[path] = ["Must be a table."]
    return out


def validate_model(data: Mapping[str, Any], prefix: str = "model") -> tuple[dict[str, Any], dict[str, list[str]]]:
    """Validate a model section, recursing into mixture components."""

    form = ModelForm(data=data)
    errors = unknown_keys(form, data, prefix)
    if not form.validate():
        errors.update(flatten_errors(form.errors, prefix))
    clean = dict(form.data)
    if clean.get("kind") == "mixture":
        comps = clean.get("components") or []
        if not isinstance(comps, list) or not comps:
            errors[f"{prefix}.components"] = ["Mixture needs a non-empty list of components."]
            comps = []
        if len(clean.get("weights") or []) != len(comps):
            errors[f"{prefix}.weights"] = ["Needs one weight per component."]
        resolved = []
        for i, comp in enumerate(comps):
            if not isinstance(comp, Mapping):
                errors[f"{prefix}.components[{i}]"] = ["Must be a table."]
                continue
            child, child_errors = validate_model({"d": clean.get("d", 1), **comp}, f"{prefix}.components[{i}]")
            errors.update(child_errors)
            resolved.append(child)
        clean["components"] = resolved
    return clean, errors


def validate_run_config(data: Mapping[str, Any]) -> tuple[dict[str, Any], dict[str, list[str]]]:
    """Return (clean data with defaults filled, dotted-path errors)."""

    form = RunConfigForm(data=data)
    errors = unknown_keys(form, data)
    if not form.validate():
        errors.update(flatten_errors(form.errors))
    clean = dict(form.data)
    model_raw = data.get("model", {})
    if isinstance(model_raw, Mapping):
        clean["model"], model_errors = validate_model(model_raw)
        errors = {k: v for k, v in errors.items() if not k.startswith("model.") and k != "model"} | model_errors
    return clean, errors

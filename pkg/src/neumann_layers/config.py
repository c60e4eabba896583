"""JSON run configurations for the built-in instance families.

A config is one flat JSON object.  ``family`` selects the coefficient family;
``reaction`` and ``flux`` select built-in nonlinearities by name; everything
else is a number.  Example::

    {"family": "constant", "dimension": 2, "mu0": 1.0,
     "reaction": "linear", "flux": "constant", "flux_value": 1.0, "R": 100}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

from .bvp import SolverConfig
from .coefficients import (
    InstanceFamily,
    Reaction,
    affine_flux,
    constant_family,
    constant_flux,
    cubic_reaction,
    exponential_flux,
    inconspicuous_family,
    linear_reaction,
    power_perturbed_family,
    ramp_family,
    sinh_reaction,
)
from .errors import ConfigError

FAMILIES = ("constant", "ramp", "inconspicuous", "power_perturbed")
REACTIONS = ("linear", "cubic", "sinh")
FLUXES = ("constant", "affine", "exponential")
MODES = ("theorem1", "perturbed")
CASES = ("I", "II_i", "II_ii")

# numeric keys and their defaults; None means "family default / not used"
_NUMERIC = {
    "dimension": 2, "mu0": 1.0, "alpha": 1.0, "k_star": 0.5, "k": 1.5,
    "mu_star": None, "tau_star": None,
    "theta0": 0.0, "slope": 1.0, "kappa": 1.0, "scale": 1.0, "reaction_offset": 0.0,
    "flux_value": 1.0, "flux_intercept": 2.0, "flux_slope": 1.0,
    "flux_amplitude": 1.0, "flux_rate": 1.0,
    "R": 100.0, "r0": 5.0,
    "coarse_count": None, "fine_count": None, "newton_tol": None,
    "max_newton_iters": None, "damping": None,
}
_INTEGER = {"dimension", "coarse_count", "fine_count", "max_newton_iters"}
_STRING = {"family": None, "reaction": "linear", "flux": "constant", "mode": "theorem1",
           "case": None}
SOLVER_KEYS = ("coarse_count", "fine_count", "newton_tol", "max_newton_iters", "damping")


@dataclass
class RunSettings:
    """A parsed, validated configuration."""

    values: dict
    second: Optional["RunSettings"] = None
    overrides: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        v = self.values.get(key)
        return default if v is None else v

    @property
    def radii(self) -> list:
        r = self.values.get("radii")
        return list(r) if r is not None else [20.0, 40.0, 80.0, 160.0]

    def solver(self) -> SolverConfig:
        kw = {k: self.values[k] for k in SOLVER_KEYS if self.values.get(k) is not None}
        try:
            return SolverConfig(**kw)
        except ValueError as exc:
            raise ConfigError(f"field 'solver': {exc}") from exc

    def family(self) -> InstanceFamily:
        return build_family(self.values)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.values.items() if v is not None}
        if self.second is not None:
            d["second"] = self.second.to_dict()
        return d


def _number(key, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"field '{key}': expected a number, got {json.dumps(v)}")
    if not math.isfinite(v):
        raise ConfigError(f"field '{key}': value must be finite")
    if key in _INTEGER:
        if float(v) != int(v):
            raise ConfigError(f"field '{key}': expected an integer, got {v}")
        return int(v)
    return float(v)


def _check_choice(key, v, choices):
    if v is not None and v not in choices:
        raise ConfigError(f"field '{key}': unknown value {v!r}; expected one of {list(choices)}")


def parse_settings(obj: Any, overrides: Optional[dict] = None, _nested=False) -> RunSettings:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    values = dict(_NUMERIC)
    values.update(_STRING)
    values["radii"] = None
    second = None
    for key, v in obj.items():
        if key in _NUMERIC:
            values[key] = _number(key, v)
        elif key in _STRING:
            if not isinstance(v, str):
                raise ConfigError(f"field '{key}': expected a string")
            values[key] = v
        elif key == "radii":
            if not isinstance(v, list) or not v:
                raise ConfigError("field 'radii': expected a non-empty list of numbers")
            values["radii"] = [_number("radii", x) for x in v]
        elif key == "second":
            if _nested:
                raise ConfigError("field 'second': nesting is not allowed")
            merged = {k: x for k, x in obj.items() if k != "second"}
            if not isinstance(v, dict):
                raise ConfigError("field 'second': expected an object")
            merged.update(v)
            second = parse_settings(merged, _nested=True)
        elif key == "description":
            continue
        else:
            raise ConfigError(f"field '{key}': unknown field")
    applied = {}
    for key, v in (overrides or {}).items():
        if key == "radii":
            values["radii"] = [_number("radii", x) for x in v]
        elif key in _STRING:
            values[key] = v
        elif key in _NUMERIC:
            values[key] = _number(key, v)
        else:
            raise ConfigError(f"override '{key}': unknown field")
        applied[key] = values[key]
    if values["family"] is None:
        raise ConfigError("field 'family': missing")
    _check_choice("family", values["family"], FAMILIES)
    _check_choice("reaction", values["reaction"], REACTIONS)
    _check_choice("flux", values["flux"], FLUXES)
    _check_choice("mode", values["mode"], MODES)
    _check_choice("case", values["case"], CASES)
    if values["family"] == "power_perturbed":
        for k in ("mu_star", "tau_star"):
            if values[k] is None:
                raise ConfigError(f"field '{k}': required for family 'power_perturbed'")
    if second is not None and applied:
        # overrides apply to both instances of a comparison
        second = parse_settings({**second.to_dict()}, overrides, _nested=True)
    return RunSettings(values, second, applied)


def load_settings(path, overrides: Optional[dict] = None) -> RunSettings:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}:"
                          f" {exc.msg}") from exc
    return parse_settings(obj, overrides)


def _offset(f: Reaction, c: float) -> Reaction:
    return Reaction(lambda u: f.value(u) + c, f.deriv, f.root, f"{f.label}+{c:g}")


def build_reaction(v: dict) -> Reaction:
    kind, theta0 = v["reaction"], v["theta0"]
    try:
        if kind == "linear":
            f = linear_reaction(theta0, v["slope"])
        elif kind == "cubic":
            f = cubic_reaction(theta0, v["slope"], v["kappa"])
        else:
            f = sinh_reaction(theta0, v["scale"])
    except ValueError as exc:
        raise ConfigError(f"field 'reaction': {exc}") from exc
    if v.get("reaction_offset"):
        f = _offset(f, v["reaction_offset"])
    return f


def build_flux(v: dict):
    kind = v["flux"]
    if kind == "constant":
        return constant_flux(v["flux_value"])
    if kind == "affine":
        return affine_flux(v["flux_intercept"], v["flux_slope"])
    return exponential_flux(v["flux_amplitude"], v["flux_rate"])


def build_family(v: dict) -> InstanceFamily:
    common = dict(dimension=v["dimension"], mu0=v["mu0"], reaction=build_reaction(v),
                  flux=build_flux(v), k_star=v["k_star"])
    name = v["family"]
    try:
        if name == "constant":
            fam = constant_family(alpha=v["alpha"], **common)
        elif name == "ramp":
            fam = ramp_family(k=v["k"], **common)
        elif name == "inconspicuous":
            fam = inconspicuous_family(**common)
        else:
            fam = power_perturbed_family(mu_star=v["mu_star"], tau_star=v["tau_star"],
                                         alpha=v["alpha"], **common)
    except ValueError as exc:
        raise ConfigError(f"field 'family': {exc}") from exc
    return fam


def builtin_families() -> dict:
    """Every built-in family with default parameters, keyed by a short name."""
    return {
        "constant": constant_family(),
        "constant_N3_cubic_exp": constant_family(3, mu0=2.0, reaction=cubic_reaction(),
                                                 flux=exponential_flux()),
        "ramp": ramp_family(),
        "ramp_sinh_affine": ramp_family(reaction=sinh_reaction(), flux=affine_flux()),
        "inconspicuous": inconspicuous_family(3),
        "power_perturbed": power_perturbed_family(mu_star=0.3, tau_star=0.5),
    }

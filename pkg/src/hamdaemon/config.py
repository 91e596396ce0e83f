"""Run configuration: JSON schema, defaults per task, and validation."""
from __future__ import annotations

import copy
import math

import jsonschema

from .model import DimensionlessParams, PhysicalParams, nondimensionalize, reference_params

TASKS = ("classical", "reduced", "ensemble", "spectrum", "phase_space", "bohr_sommerfeld",
         "separatrix_scan", "quantum", "lz", "entropy")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer", "minimum": 1}
_span = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_spin = {"type": "number", "exclusiveMinimum": 0}


def _block(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "minProperties": 1}


SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "hamdaemon run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M_tilde": _pos, "Omega_tilde": _pos, "gamma_tilde": {"type": "number", "minimum": 0},
                "physical": {
                    "type": "object", "additionalProperties": False,
                    "required": ["M", "g", "k", "Omega", "gamma", "L"],
                    "properties": {k: _pos for k in ("M", "g", "k", "Omega", "gamma", "L", "hbar")},
                },
                "derive": {"type": "boolean"},
            },
        },
        "seed": {"type": "integer"},
        "tol": _pos,
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"directory": {"type": "string"}, "formats": {"type": "array", "items": {"enum": ["csv", "json"]}}},
        },
        "classical": _block({
            "q": _num, "p": _num, "phi": _num, "lz": {"type": "number", "minimum": -1, "maximum": 1},
            "phis": {"type": "array", "items": _num, "minItems": 1},
            "span": _span, "n_samples": _int, "tol": _pos,
        }),
        "reduced": _block({
            "q": _num, "p": _num, "lz": {"type": "number", "minimum": -1, "maximum": 1},
            "phis": {"type": "array", "items": _num, "minItems": 1},
            "span": _span, "n_samples": _int, "tol": _pos,
        }),
        "ensemble": _block({
            "n_traj": _int, "q": _num, "p": _num, "lz": {"type": "number", "minimum": -1, "maximum": 1},
            "phi_sampling": {"enum": ["grid", "random"]}, "span": _span, "n_samples": _int,
            "n_bins": _int, "n_times": _int, "tol": _pos,
        }),
        "spectrum": _block({"l": _spin, "sigma_min": _num, "sigma_max": _num, "n_sigma": _int}),
        "phase_space": _block({"l": _spin, "taus": {"type": "array", "items": _num, "minItems": 1},
                               "tau_offset": _num, "n_phi": _int}),
        "bohr_sommerfeld": _block({"l": _spin, "taus": {"type": "array", "items": _num, "minItems": 1},
                                   "tau_offset": _num}),
        "separatrix_scan": _block({"l": _spin, "sigma_min": _num, "sigma_max": _num, "n_sigma": _int}),
        "quantum": _block({
            "l": _spin, "p0": _num, "width_d": _pos, "m0": _num, "n_grid": _int, "n_shift": _int,
            "span": _span, "n_snapshots": _int, "substeps": _int, "order": {"enum": [2, 4]},
            "q_bins": _int,
        }),
        "lz": _block({"l": _spin, "m0": _num}),
        "entropy": _block({
            "l": _spin, "p0": _num, "width_d": _pos, "n_grid": _int, "n_shift": _int, "span": _span,
            "n_times": _int, "sigma_start": _num, "align_start": {"type": "boolean"},
            "initial": {"enum": ["basis", "adiabatic"]},
        }),
    },
}

DEFAULTS = {
    "classical": {"q": 0.0, "p": 0.6, "phis": [0.0, math.pi / 2], "lz": math.sqrt(5.0 / 6.0),
                  "span": [0.0, 3.0], "n_samples": 3001, "tol": 1e-12},
    "reduced": {"q": 0.0, "p": 0.6, "phis": [0.0, math.pi / 2], "lz": math.sqrt(5.0 / 6.0),
                "span": [0.0, 3.0], "n_samples": 3001, "tol": 1e-12},
    "ensemble": {"n_traj": 1000, "q": 0.0, "p": 0.6, "lz": math.sqrt(5.0 / 6.0), "phi_sampling": "grid",
                 "span": [0.0, 3.0], "n_samples": 1969, "n_bins": 1700, "n_times": 1312, "tol": 1e-10},
    "spectrum": {"l": 5, "sigma_min": -1.2, "sigma_max": 1.2, "n_sigma": 1201},
    "phase_space": {"l": 25, "taus": [0.3, 0.8, 1.3, 1.8, 2.3], "tau_offset": None, "n_phi": 256},
    "bohr_sommerfeld": {"l": 25, "taus": [0.3, 0.8, 1.3, 1.8, 2.3], "tau_offset": None},
    "separatrix_scan": {"l": 5, "sigma_min": -1.0, "sigma_max": 1.0, "n_sigma": 81},
    "quantum": {"l": 5, "p0": 0.6, "width_d": 20.0, "m0": None, "n_grid": 1024, "n_shift": 1024,
                "span": [0.0, 3.0], "n_snapshots": 301, "substeps": 1, "order": 2, "q_bins": 2048},
    "lz": {"l": 5, "m0": None},
    "entropy": {"l": 5, "p0": 0.6, "width_d": 20.0, "n_grid": 1024, "n_shift": 1024, "span": [0.0, 3.0],
                "n_times": 301, "sigma_start": None, "align_start": True, "initial": "adiabatic"},
}


class ConfigError(ValueError):
    """Configuration does not match the schema; ``problems`` lists the offending keys."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid configuration: " + "; ".join(problems))
        self.problems = problems


def validate(config: dict, task: str) -> dict:
    """Check ``config`` against the schema and return it with the task block filled from defaults."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(config), key=lambda e: list(e.path)):
        where = "/".join(str(p) for p in err.path) or "<root>"
        problems.append(f"{where}: {err.message}")
    blocks = [k for k in TASKS if k in config]
    if len(blocks) > 1:
        problems.append(f"more than one task block present: {blocks}")
    if blocks and blocks[0] != task:
        problems.append(f"task block {blocks[0]!r} does not match subcommand task {task!r}")
    if problems:
        raise ConfigError(problems)
    out = copy.deepcopy(config)
    merged = copy.deepcopy(DEFAULTS[task])
    merged.update(config.get(task, {}))
    out[task] = merged
    return out


def model_from_config(config: dict) -> DimensionlessParams:
    m = config.get("model", {})
    if "physical" in m:
        if not m.get("derive", True):
            raise ConfigError(["model/physical: given without derive=true"])
        return nondimensionalize(PhysicalParams(**m["physical"]))
    base = reference_params(None)
    return DimensionlessParams(m.get("M_tilde", base.M_tilde), m.get("Omega_tilde", base.Omega_tilde),
                               m.get("gamma_tilde", base.gamma_tilde))

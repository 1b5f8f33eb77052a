"""YAML run configuration with line-referenced validation errors.

Example::

    model: crossbeam-table1          # or {omega_n, zeta, alpha, gamma, name}
    shapes: synthetic                # or a CSV path, or {locations, phi}
    harmonics: 7
    omega_range_hz: [16.1, 20.0]
    continuation: {step_max: 0.05}
    output: {dir: out, svg: true}
    tasks:
      - backbone: {nnm: 1}
      - quadrature: {force_locations: [cross_tip_left, cross_tip_right], nnm: 1}
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .continuation import ContinuationConfig
from .hb import DEFAULT_HARMONICS
from .model import ConfigurationError, ModalModel, ModeShapeMatrix, builtin_model, synthetic_shapes

TASKS = ("backbone", "frf", "quadrature", "appropriate", "phase-map", "verify")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_locs = {"type": "array", "items": {"type": ["string", "integer"]}, "minItems": 1}
_nnm = {"enum": [1, 2]}
_range = {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


TASK_SCHEMAS = {
    "backbone": _obj({"nnm": _nnm, "method": {"enum": ["harmonic_balance", "analytic"]},
                      "name": {"type": "string"}}, ["nnm"]),
    "frf": _obj({"force_locations": _locs, "force_amplitudes": {"type": "array", "items": _num},
                 "name": {"type": "string"}}, ["force_locations", "force_amplitudes"]),
    "quadrature": _obj({"force_locations": {**_locs, "maxItems": 2}, "nnm": _nnm,
                        "target_phase": {"enum": [-1, 1]}, "name": {"type": "string"},
                        "seed": {"enum": ["linear", "backbone"]},
                        "seed_frequency_hz": _pos}, ["force_locations"]),
    "appropriate": _obj({"force_locations": {**_locs, "maxItems": 2}, "nnm": _nnm,
                         "points": {"type": "integer", "minimum": 2},
                         "name": {"type": "string"}}, ["force_locations", "nnm"]),
    "phase-map": _obj({"nnm": _nnm, "frequency_hz": _pos, "name": {"type": "string"}},
                      ["nnm", "frequency_hz"]),
    "verify": _obj({"branch": {"type": "string"}, "name": {"type": "string"}}, ["branch"]),
}

SCHEMA = _obj({
    "model": {"oneOf": [
        {"type": "string"},
        _obj({"omega_n": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
              "zeta": {"type": "array", "items": {"type": "number", "minimum": 0},
                       "minItems": 2, "maxItems": 2},
              "alpha": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
              "gamma": {"type": "array", "items": _num, "minItems": 5, "maxItems": 5},
              "name": {"type": "string"}}, ["omega_n", "zeta"]),
    ]},
    "shapes": {"oneOf": [
        {"type": "string"},
        _obj({"locations": {"type": "array", "items": {"type": "string"}},
              "phi": {"type": "array", "items": {"type": "array", "items": _num,
                                                 "minItems": 2, "maxItems": 2}},
              "label": {"type": "string"}}, ["locations", "phi"]),
    ]},
    "harmonics": {"type": "integer", "minimum": 1, "maximum": 40},
    "omega_range_hz": _range,
    "damping_scale": _pos,
    "continuation": _obj({k: ({"type": "integer", "minimum": 1}
                              if k in ("max_newton", "fast_iterations", "max_points") else _pos)
                          for k in ("tol", "max_newton", "step_min", "step_max", "step_init",
                                    "growth", "fast_iterations", "max_points")}),
    "output": _obj({"dir": {"type": "string"}, "svg": {"type": "boolean"}}),
    "tasks": {"type": "array", "items": {
        "type": "object", "minProperties": 1, "maxProperties": 1,
        "propertyNames": {"enum": list(TASKS)},
        "additionalProperties": {"type": ["object", "null"]},
    }},
}, ["tasks"])


class _Lines(dict):
    """Mapping that remembers the source line of each key and of itself."""

    line = 0
    key_lines: dict


class _LineList(list):
    line = 0
    item_lines: list


class _LineLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _Lines()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for k_node, v_node in node.value:
        key = loader.construct_object(k_node, deep=True)
        if key in out:
            raise ConfigurationError(f"{k_node.start_mark.line + 1}: duplicate key {key!r}")
        out[key] = loader.construct_object(v_node, deep=True)
        out.key_lines[key] = k_node.start_mark.line + 1
    return out


def _construct_sequence(loader, node):
    out = _LineList(loader.construct_object(n, deep=True) for n in node.value)
    out.line = node.start_mark.line + 1
    out.item_lines = [n.start_mark.line + 1 for n in node.value]
    return out


_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)
_LineLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_sequence)


def _line_of(doc, path) -> int:
    node, line = doc, getattr(doc, "line", 1)
    for part in path:
        if isinstance(node, _Lines) and part in node:
            line = node.key_lines.get(part, line)
            node = node[part]
        elif isinstance(node, _LineList) and isinstance(part, int) and part < len(node):
            line = node.item_lines[part]
            node = node[part]
        else:
            break
    return line


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_plain(v) for v in obj]
    return obj


@dataclass
class RunConfig:
    """Validated run configuration."""

    model: ModalModel
    shapes: ModeShapeMatrix
    tasks: list
    harmonics: int = DEFAULT_HARMONICS
    omega_range_hz: tuple = (16.1, 20.0)
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    out_dir: Path = Path("out")
    svg: bool = False
    raw: dict = field(default_factory=dict)
    source: str = "<config>"

    @property
    def omega_range(self) -> np.ndarray:
        return 2 * np.pi * np.asarray(self.omega_range_hz, dtype=float)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the configuration."""
        payload = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(payload).hexdigest()


def load_shapes(spec, base: Path | None = None) -> ModeShapeMatrix:
    """Mode shapes from ``"synthetic"``, a CSV path (``location,phi1,phi2``) or a mapping."""
    if isinstance(spec, ModeShapeMatrix):
        return spec
    if isinstance(spec, dict):
        return ModeShapeMatrix(spec["locations"], spec["phi"], spec.get("label", ""))
    if spec in (None, "synthetic"):
        return synthetic_shapes()
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    if not path.exists():
        raise ConfigurationError(f"mode-shape file not found: {path}")
    names, rows = [], []
    with open(path, newline="") as fh:
        for k, rec in enumerate(csv.reader(fh), start=1):
            if not rec or rec[0].startswith("#"):
                continue
            if len(rec) != 3:
                raise ConfigurationError(f"{path}:{k}: expected location,phi1,phi2")
            try:
                rows.append([float(rec[1]), float(rec[2])])
            except ValueError:
                if not names and not rows:
                    continue  # header line
                raise ConfigurationError(f"{path}:{k}: non-numeric mode-shape entry") from None
            names.append(rec[0])
    return ModeShapeMatrix(names, rows, label=path.stem)


def load_model(spec, base: Path | None = None) -> ModalModel:
    """Model from a built-in name, a YAML file path or an inline mapping."""
    if isinstance(spec, ModalModel):
        return spec
    if isinstance(spec, dict):
        return ModalModel(spec["omega_n"], spec["zeta"], spec.get("alpha", np.zeros(4)),
                          spec.get("gamma", np.zeros(5)), spec.get("name", "custom"))
    if spec is None:
        spec = "crossbeam-table1"
    path = Path(spec)
    if base is not None and not path.is_absolute():
        path = base / path
    if path.suffix in (".yaml", ".yml") and path.exists():
        data = yaml.safe_load(path.read_text())
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: model file must hold a mapping")
        return load_model(data)
    return builtin_model(spec)


def parse_config(text: str, source: str = "<config>", base: Path | None = None) -> RunConfig:
    """Parse and validate YAML text.

    Raises
    ------
    ConfigurationError
        With a ``source:line:`` prefix locating the offending entry.
    """
    try:
        doc = yaml.load(text, Loader=_LineLoader)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else 0
        raise ConfigurationError(f"{source}:{line}: {exc.problem}") from None
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}:{exc}") from None
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{source}:1: configuration must be a mapping")
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (_line_of(doc, e.absolute_path), e.message))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigurationError(f"{source}:{_line_of(doc, e.absolute_path)}: {where}: {e.message}")
    tasks = []
    for k, item in enumerate(doc["tasks"]):
        (name, opts), = item.items()
        opts = {} if opts is None else opts
        try:
            jsonschema.validate(opts, TASK_SCHEMAS[name])
        except jsonschema.ValidationError as e:
            path = ["tasks", k, name, *e.absolute_path]
            raise ConfigurationError(f"{source}:{_line_of(doc, path)}: task {name!r}: {e.message}") from None
        tasks.append((name, _plain(opts)))
    try:
        model = load_model(_plain(doc.get("model")), base)
        if "damping_scale" in doc:
            model = model.scaled_damping(doc["damping_scale"])
        shapes = load_shapes(_plain(doc.get("shapes")), base)
    except (ConfigurationError, KeyError) as exc:
        key = "model" if "model" in str(exc) or "omega" in str(exc) else "shapes"
        raise ConfigurationError(f"{source}:{_line_of(doc, [key])}: {exc}") from None
    lo, hi = doc.get("omega_range_hz", (16.1, 20.0))
    if not lo < hi:
        raise ConfigurationError(f"{source}:{_line_of(doc, ['omega_range_hz'])}: empty frequency range")
    out = doc.get("output", {})
    return RunConfig(
        model=model,
        shapes=shapes,
        tasks=tasks,
        harmonics=doc.get("harmonics", DEFAULT_HARMONICS),
        omega_range_hz=(float(lo), float(hi)),
        continuation=ContinuationConfig.from_dict(_plain(doc.get("continuation", {}))),
        out_dir=_resolve(Path(out.get("dir", "out")), base),
        svg=bool(out.get("svg", False)),
        raw=_plain(doc),
        source=source,
    )


def _resolve(path: Path, base: Path | None) -> Path:
    return path if base is None or path.is_absolute() else base / path


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc.strerror}") from None
    return parse_config(text, str(path), path.parent)

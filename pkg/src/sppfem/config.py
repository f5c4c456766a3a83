"""Run configuration: a TOML document checked against a strict schema.

Example::

    [anisotropy]
    family = "riemannian"
    G = [[[1.0, 0.0], [0.0, 2.0]]]

    [stabilizer]
    mode = "explicit"

    [geometry]
    shape = "ellipse"
    a = 2.0
    b = 0.5
    N = 8

    [scheme]
    variant = "sp_implicit"
    tau_rule = "h^2"

    [run]
    n_steps = 2000
    snapshot_every = 100

    [output]
    dir = "out"
    svg = false

Time is dimensionless throughout.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import jsonschema
import tomli

from .anisotropy import AnisotropyError, make_anisotropy
from .geometry import CurveError, PolygonalCurve, ellipse, read_snapshot, rectangle
from .scheme import SchemeConfig, steps_for


class ConfigError(ValueError):
    pass


_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["anisotropy", "geometry", "scheme", "run"],
    "properties": {
        # family-specific keys are checked when the energy is built
        "anisotropy": {"type": "object", "required": ["family"], "properties": {"family": {"type": "string"}}},
        "stabilizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["auto", "explicit", "numeric", "constant", "scaled"]},
                "k": _POS,
                "margin": {"type": "number", "minimum": 1},
                "resolution": {"type": "integer", "minimum": 16},
            },
        },
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "required": ["shape"],
            "properties": {
                "shape": {"enum": ["ellipse", "rectangle", "polygon"]},
                "N": {"type": "integer", "minimum": 3},
                "a": _POS,
                "b": _POS,
                "width": _POS,
                "height": _POS,
                "file": {"type": "string"},
            },
            "allOf": [
                {"if": {"properties": {"shape": {"const": "ellipse"}}}, "then": {"required": ["a", "b", "N"]}},
                {"if": {"properties": {"shape": {"const": "rectangle"}}}, "then": {"required": ["width", "height", "N"]}},
                {"if": {"properties": {"shape": {"const": "polygon"}}}, "then": {"required": ["file"]}},
            ],
        },
        "scheme": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["sp_implicit", "semi_implicit"]},
                "tau": _POS,
                "tau_rule": {"enum": ["h^2"]},
                "newton_tol": _POS,
                "max_iters": {"type": "integer", "minimum": 1},
            },
            "oneOf": [{"required": ["tau"]}, {"required": ["tau_rule"]}],
        },
        "run": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_end": _POS,
                "n_steps": {"type": "integer", "minimum": 0},
                "snapshot_every": {"type": "integer", "minimum": 0},
                "stop_at_plateau": {"type": "boolean"},
            },
            "oneOf": [{"required": ["t_end"]}, {"required": ["n_steps"]}],
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "svg": {"type": "boolean"}},
        },
    },
}


@dataclass
class RunConfig:
    aniso: object
    stabilizer: dict
    curve: PolygonalCurve
    scheme: SchemeConfig
    n_steps: int
    snapshot_every: int = 0
    stop_at_plateau: bool = False
    out_dir: Path = Path("out")
    svg: bool = False
    raw: dict | None = None


def _where(err):
    path = "/".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def validate(doc):
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        msg = "; ".join(f"{_where(e)}: {e.message}" for e in errors)
        raise ConfigError(f"invalid configuration: {msg}")


def _build_curve(geo, base_dir):
    shape = geo["shape"]
    if shape == "ellipse":
        return PolygonalCurve(ellipse(geo["a"], geo["b"], geo["N"]))
    if shape == "rectangle":
        return PolygonalCurve(rectangle(geo["width"], geo["height"], geo["N"]))
    X, _ = read_snapshot(Path(base_dir) / geo["file"])
    if "N" in geo and geo["N"] != len(X):
        raise ConfigError(f"geometry: N={geo['N']} but {geo['file']} has {len(X)} nodes")
    return PolygonalCurve(X)


def build(doc, base_dir="."):
    """Validate a parsed document and build the run objects."""
    validate(doc)
    aniso = anisotropy_from(doc["anisotropy"])
    try:
        curve = _build_curve(doc["geometry"], base_dir)
    except (CurveError, OSError) as exc:
        raise ConfigError(f"geometry: {exc}") from exc
    sch = doc["scheme"]
    h = 1.0 / curve.N
    tau = sch["tau"] if "tau" in sch else h * h
    scheme = SchemeConfig(
        tau=tau,
        N=curve.N,
        newton_tol=sch.get("newton_tol", 1e-12),
        newton_max_iters=sch.get("max_iters", 50),
        variant=sch.get("variant", "sp_implicit"),
        stabilizer=dict(doc.get("stabilizer", {"mode": "auto"})),
    )
    run = doc["run"]
    if "n_steps" in run:
        n_steps = run["n_steps"]
    else:
        try:
            n_steps = steps_for(tau, run["t_end"])
        except ValueError as exc:
            raise ConfigError(f"run: {exc}") from exc
    out = doc.get("output", {})
    return RunConfig(
        aniso=aniso,
        stabilizer=scheme.stabilizer,
        curve=curve,
        scheme=scheme,
        n_steps=n_steps,
        snapshot_every=run.get("snapshot_every", 0),
        stop_at_plateau=run.get("stop_at_plateau", False),
        out_dir=Path(out.get("dir", "out")),
        svg=out.get("svg", False),
        raw=doc,
    )


def load(path):
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return build(doc, base_dir=path.parent)


def parse_anisotropy(text):
    """Parse inline TOML key/values such as ``'family = "lr_norm", r = 4'``."""
    try:
        doc = tomli.loads(f"a = {{{text}}}")["a"]
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"anisotropy: {exc}") from exc
    return anisotropy_from(doc)


def load_anisotropy(path):
    """Energy from the ``[anisotropy]`` table of a TOML file; other tables are ignored."""
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text())
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "anisotropy" not in doc:
        raise ConfigError(f"{path}: no [anisotropy] table")
    return anisotropy_from(doc["anisotropy"])


def anisotropy_from(doc):
    try:
        return make_anisotropy(doc)
    except (AnisotropyError, TypeError) as exc:
        raise ConfigError(f"anisotropy: {exc}") from exc

"""Reading and writing scene JSON files."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from . import expr as ex
from .families import FamilyParams, example_scene, family_scene
from .manifold import (FactorChart, GeometryError, GridSpec, Scene,
                       TwistFunction, VectorFieldSpec)

__all__ = ["SchemaError", "GeometryError", "SceneFile", "load_scene", "scene_from_dict",
           "scene_to_dict", "dump_scene", "scene_schema"]


class SchemaError(ValueError):
    """The scene file is malformed: bad JSON, schema violation or bad syntax."""


def scene_schema() -> dict:
    text = resources.files("twistlab").joinpath("schemas/scene.schema.json").read_text()
    return json.loads(text)


@dataclass
class SceneFile:
    scene: Scene
    sha256: str
    check: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _expr(value, constants, where):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return ex.Const(value)
    try:
        return ex.simplify(ex.parse(value, constants))
    except ex.ParseError as err:
        raise SchemaError(f"{where}: {err}") from None


def scene_from_dict(data: dict) -> Scene:
    """Build a :class:`Scene` from decoded JSON, validating it against the schema.

    Malformed input raises :class:`SchemaError`; geometric problems found
    while constructing the objects raise :class:`GeometryError`.
    """
    try:
        jsonschema.validate(data, scene_schema())
    except jsonschema.ValidationError as err:
        location = "/".join(map(str, err.absolute_path)) or "<root>"
        raise SchemaError(f"{location}: {err.message}") from None

    constants = dict(data.get("constants", {}))
    raw_factors = list(data["factors"])
    marked = [i for i, f in enumerate(raw_factors) if f.get("base")]
    if len(marked) > 1:
        raise SchemaError("more than one factor is marked as the base")
    if marked:
        raw_factors.insert(0, raw_factors.pop(marked[0]))

    names = [f["name"] for f in raw_factors]
    if len(set(names)) != len(names):
        raise SchemaError("factor names must be unique")
    clash = {v for f in raw_factors for v in f["vars"]} & set(constants)
    if clash:
        raise SchemaError(f"constant(s) {sorted(clash)} shadow coordinate names")

    factors = []
    for f in raw_factors:
        metric = [[_expr(e, constants, f"factor {f['name']!r} metric") for e in row]
                  for row in f["metric"]]
        factors.append(FactorChart(f["name"], f["vars"], metric, f["box"]))

    twists = []
    for tw in data.get("twists", []):
        if tw["factor"] not in names:
            raise SchemaError(f"twist refers to unknown factor {tw['factor']!r}")
        twists.append(TwistFunction(tw["factor"],
                                    _expr(tw["expr"], constants, f"twist of {tw['factor']!r}")))

    vf = data["vector_field"]
    components = {}
    for name, values in vf["components"].items():
        if name not in names:
            raise SchemaError(f"vector field refers to unknown factor {name!r}")
        components[name] = [_expr(e, constants, f"vector field on {name!r}") for e in values]

    g = data.get("grid", {})
    grid = GridSpec(points_per_dim=g.get("points_per_dim", 9),
                    inset=g.get("inset", 0.05),
                    guards=tuple(_expr(e, constants, "grid guard")
                                 for e in g.get("guards", [])))
    metadata = {k: data[k] for k in ("family", "example", "check") if k in data}
    scene = Scene(factors, twists, VectorFieldSpec(components, vf.get("lifted", True)),
                  grid, float(data.get("tolerance", 1e-8)), data.get("name", "scene"),
                  metadata)
    _check_provenance(scene, metadata)
    return scene


def _check_provenance(scene: Scene, metadata: dict) -> None:
    # Re-run the generators so invalid family parameters are reported as such.
    if "family" in metadata:
        params = dict(metadata["family"])
        params.pop("n_spatial", None)
        family_scene(FamilyParams(**params), max(len(scene.factors) - 1, 0))
    if "example" in metadata:
        spec = metadata["example"]
        example_scene(spec["id"], spec.get("n_spatial", 1), spec.get("c", 1.0))


def load_scene(path) -> SceneFile:
    """Read a scene file.  Raises :class:`SchemaError` or :class:`GeometryError`."""
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise SchemaError(f"cannot read {path}: {err.strerror}") from None
    try:
        data = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise SchemaError(f"{path}: not valid UTF-8 JSON ({err})") from None
    scene = scene_from_dict(data)
    return SceneFile(scene, hashlib.sha256(blob).hexdigest(),
                     dict(data.get("check", {})), data)


def scene_to_dict(scene: Scene, check: dict | None = None) -> dict:
    """JSON-ready description of ``scene`` (expressions in canonical text)."""
    out = {"name": scene.name, "constants": {}}
    out["factors"] = [
        {"name": f.name, "base": k == 0, "vars": list(f.vars),
         "metric": [[ex.to_string(e) for e in row] for row in f.metric],
         "box": [list(b) for b in f.box]}
        for k, f in enumerate(scene.factors)]
    out["twists"] = [{"factor": tw.factor, "expr": ex.to_string(tw.f)}
                     for tw in scene.twists]
    out["vector_field"] = {
        "lifted": scene.vector_field.lifted,
        "components": {name: [ex.to_string(e) for e in values]
                       for name, values in scene.vector_field.components.items()}}
    out["grid"] = {"points_per_dim": scene.grid.points_per_dim,
                   "inset": scene.grid.inset,
                   "guards": [ex.to_string(g) for g in scene.grid.guards]}
    out["tolerance"] = scene.tolerance
    check = check if check is not None else scene.metadata.get("check")
    if check:
        out["check"] = dict(check)
    for key in ("family", "example"):
        if key in scene.metadata:
            out[key] = scene.metadata[key]
    return out


def dump_scene(scene: Scene, path=None, check: dict | None = None) -> str:
    text = json.dumps(scene_to_dict(scene, check), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text

"""Machine-readable reports: deterministic JSON and flat CSV."""

from __future__ import annotations

import csv
import io
import json
import math

from .lie import Comparison, ResidualReport
from .manifold import Scene

FLOAT_FORMAT = "%.17g"
CERTIFICATION = "certified on sample grid"


def order_summary(report: ResidualReport) -> dict:
    return {
        "sup": report.sup,
        "argmax": report.argmax,
        "component": list(report.argmax_component),
        "verdict": report.holds(),
    }


def grid_summary(scene: Scene, report: ResidualReport) -> dict:
    return {
        "vars": list(report.points.vars),
        "points_per_dim": scene.grid.points_per_dim,
        "inset": scene.grid.inset,
        "points": len(report.points),
    }


def check_report(scene: Scene, sha256: str, report: ResidualReport) -> dict:
    label = "Killing" if report.order == 1 else "2-Killing"
    return {
        "scene": scene.name,
        "scene_sha256": sha256,
        "tolerance": report.tolerance,
        "grid": grid_summary(scene, report),
        "modes": [{"mode": report.mode.value,
                   f"order{report.order}": order_summary(report)}],
        "disagreement": [],
        "verdict": {"order": report.order, "mode": report.mode.value,
                    "holds": report.holds(),
                    "statement": f"{'' if report.holds() else 'not '}{label}, "
                                 f"{CERTIFICATION}"},
    }


def compare_report(scene: Scene, sha256: str, comparison: Comparison) -> dict:
    modes = []
    any_report = None
    for mode, (r1, r2) in comparison.reports.items():
        any_report = r1
        modes.append({"mode": mode.value,
                      "order1": order_summary(r1),
                      "order2": order_summary(r2),
                      "classification": comparison.classifications[mode].value})
    return {
        "scene": scene.name,
        "scene_sha256": sha256,
        "tolerance": scene.tolerance,
        "grid": grid_summary(scene, any_report),
        "modes": modes,
        "disagreement": comparison.disagreements,
        "certification": CERTIFICATION,
    }


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return FLOAT_FORMAT % obj if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: "
                 f"{_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):
        return _encode(obj.item(), indent, level)
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with insertion-ordered keys and floats at 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def residual_csv(report: ResidualReport) -> str:
    """One row per grid point and tensor component (upper triangle)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    vars = list(report.points.vars)
    writer.writerow(["point", *vars, "mode", "order", "a", "b", "raw", "normalized"])
    n = len(vars)
    for k in range(len(report.points)):
        coords = [FLOAT_FORMAT % x for x in report.points.points[k]]
        for a in range(n):
            for b in range(a, n):
                writer.writerow([k, *coords, report.mode.value, report.order,
                                 vars[a], vars[b],
                                 FLOAT_FORMAT % report.values[k, a, b],
                                 FLOAT_FORMAT % report.normalized[k, a, b]])
    return buf.getvalue()

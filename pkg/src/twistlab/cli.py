"""Command line front end: ``twistlab validate|check|compare|generate``.

Exit codes
    0  success / the requested verdict holds / all modes agree
    1  ``check``: the requested (2-)Killing verdict does not hold
    2  malformed scene (JSON, schema, expression syntax) or bad arguments
    3  geometric or numerical domain violation (scope, positivity,
       nondegeneracy, guards, family validity)
    4  ``compare``: evaluation modes disagree
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import expr as ex
from .families import EXAMPLE_IDS, Family, FamilyParams, example_scene, family_scene
from .lie import LieCalculus, Mode, compare, killing_residual, two_killing_residual
from .manifold import GeometryError
from .report import check_report, compare_report, dumps, residual_csv
from .scenefile import SchemaError, dump_scene, load_scene

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_DOMAIN, EXIT_DISAGREE = 0, 1, 2, 3, 4

FAMILY_ALIASES = {
    "base-flow": Family.BASE_FLOW,
    "cbrt-flow": Family.CBRT_FLOW, "r42": Family.CBRT_FLOW,
    "constant-flow": Family.CONSTANT_FLOW, "r46": Family.CONSTANT_FLOW,
    "killing": Family.KILLING, "r410": Family.KILLING,
}
PARAM_KEYS = {"c1", "c2", "c", "k", "a", "b", "c0", "c0p", "ci", "sign",
              "t0", "t1", "x0", "x1", "n", "id"}
DESIGNATED_CHECK = {
    Family.BASE_FLOW: {"order": 2, "mode": "oracle"},
    Family.CBRT_FLOW: {"order": 2, "mode": "paper"},
    Family.CONSTANT_FLOW: {"order": 2, "mode": "paper"},
    Family.KILLING: {"order": 1, "mode": "oracle"},
}


class UsageError(Exception):
    pass


def _err(message: str) -> None:
    print(f"twistlab: {message}", file=sys.stderr)


def _load(path):
    scene_file = load_scene(path)
    scene_file.scene.validate()
    return scene_file


def _guarded(run):
    """Map library errors onto the exit-code contract."""
    try:
        return run()
    except (SchemaError, UsageError) as err:
        _err(str(err))
        return EXIT_SCHEMA
    except (GeometryError, ex.DomainError) as err:
        _err(str(err))
        return EXIT_DOMAIN


def cmd_validate(args) -> int:
    def run():
        scene_file = _load(args.scene)
        scene = scene_file.scene
        print(f"{args.scene}: valid scene {scene.name!r} "
              f"({len(scene.factors)} factor(s), {len(scene.sample())} grid points)",
              file=sys.stderr)
        return EXIT_OK
    return _guarded(run)


def cmd_check(args) -> int:
    def run():
        started = time.perf_counter()
        scene_file = _load(args.scene)
        scene = scene_file.scene
        if args.tol is not None:
            scene = _with_tolerance(scene, args.tol)
        order = args.order or scene_file.check.get("order", 2)
        mode = Mode(args.mode or scene_file.check.get("mode", "oracle"))
        calc = LieCalculus.for_scene(scene)
        residual = killing_residual if order == 1 else two_killing_residual
        report = residual(scene, mode, calc=calc, threads=args.threads)
        payload = check_report(scene, scene_file.sha256, report)
        if args.timing:
            payload["timing"] = {"seconds": time.perf_counter() - started}
        sys.stdout.write(dumps(payload))
        if args.csv:
            Path(args.csv).write_text(residual_csv(report), encoding="utf-8")
        return EXIT_OK if report.holds() else EXIT_FAIL
    return _guarded(run)


def cmd_compare(args) -> int:
    def run():
        started = time.perf_counter()
        scene_file = _load(args.scene)
        scene = scene_file.scene
        if args.tol is not None:
            scene = _with_tolerance(scene, args.tol)
        comparison = compare(scene, threads=args.threads)
        payload = compare_report(scene, scene_file.sha256, comparison)
        if args.timing:
            payload["timing"] = {"seconds": time.perf_counter() - started}
        sys.stdout.write(dumps(payload))
        return EXIT_OK if comparison.agree else EXIT_DISAGREE
    return _guarded(run)


def _with_tolerance(scene, tol):
    return replace(scene, tolerance=float(tol))


def parse_params(items) -> dict:
    params = {}
    for item in items:
        key, sep, value = item.partition("=")
        key = key.strip().replace("'", "p")
        if not sep or key not in PARAM_KEYS:
            raise UsageError(f"bad parameter {item!r}; expected key=value with key in "
                             f"{sorted(PARAM_KEYS)}")
        value = value.strip()
        if key == "sign":
            signs = {"+": 1, "+1": 1, "1": 1, "-": -1, "-1": -1}
            if value not in signs:
                raise UsageError("sign must be + or -")
            params[key] = signs[value]
        elif key in ("n", "id"):
            try:
                params[key] = int(value)
            except ValueError:
                raise UsageError(f"{key} must be an integer") from None
        else:
            try:
                params[key] = float(value)
            except ValueError:
                raise UsageError(f"{key} must be a number") from None
    return params


def build_generated_scene(family: str, params: dict):
    """Scene and designated check for ``generate``; raises on bad input."""
    params = dict(params)
    if family == "example":
        id = params.pop("id", 43)
        if id not in EXAMPLE_IDS:
            raise UsageError(f"example id must be one of {EXAMPLE_IDS}")
        n = params.pop("n", 1)
        c = params.pop("c", 1.0)
        if params:
            raise UsageError(f"example takes only id, n and c, not {sorted(params)}")
        return example_scene(id, n, c), {"order": 2, "mode": "oracle"}
    if family not in FAMILY_ALIASES:
        raise UsageError(f"unknown family {family!r}")
    kind = FAMILY_ALIASES[family]
    n = params.pop("n", 0 if kind is Family.BASE_FLOW else 1)
    interval = (params.pop("t0", 1.0), params.pop("t1", 2.0))
    x_interval = (params.pop("x0", 0.0), params.pop("x1", 1.0))
    if "id" in params:
        raise UsageError("id applies only to the example family")
    p = FamilyParams(family=kind, interval=interval, x_interval=x_interval, **params)
    return family_scene(p, n), DESIGNATED_CHECK[kind]


def cmd_generate(args) -> int:
    def run():
        scene, check = build_generated_scene(args.family, parse_params(args.params))
        if args.name:
            scene = replace(scene, name=args.name)
        scene.validate()
        text = dump_scene(scene, check=check)
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    return _guarded(run)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twistlab",
        description="Killing and 2-Killing checks on multiply twisted products.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scene file")
    p.add_argument("scene")
    p.set_defaults(func=cmd_validate)

    def evaluation_flags(p):
        p.add_argument("--tol", type=float, default=None,
                       help="tolerance on normalized residuals (default: scene value)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads for grid evaluation")
        p.add_argument("--timing", action="store_true",
                       help="add wall-clock timing to the report")

    p = sub.add_parser("check", help="residual of the Killing or 2-Killing equation")
    p.add_argument("scene")
    p.add_argument("--order", type=int, choices=(1, 2), default=None)
    p.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    p.add_argument("--csv", metavar="PATH", help="write per-point residuals as CSV")
    evaluation_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("compare", help="run every mode at both orders")
    p.add_argument("scene")
    evaluation_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("generate", help="write a scene for a closed-form family")
    p.add_argument("family", help="base-flow, cbrt-flow (r42), constant-flow (r46), "
                                  "killing (r410) or example")
    p.add_argument("params", nargs="*", help="key=value parameters")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--name")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

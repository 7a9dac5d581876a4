"""Command line entry point.

    coopsense run --config scene.yaml --recipe fig5 --trials 50 --seed 7 --out results/
    coopsense run --recipe custom --param snr --values -10 0 10 --variants cooperative
    coopsense validate --config scene.yaml

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
Set COOPSENSE_WORKERS to run trials on a process pool.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .harness import RECIPES, SweepSpec, run_recipe, run_sweep, worker_count
from .scenario import derive_truth, validate_config
from .scenefile import ConfigError, default_scene, load_scene

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _scene_problems(scene) -> list[str]:
    problems = list(validate_config(scene.config).violations)
    cfg = scene.config
    for i, t in enumerate(scene.targets):
        try:
            tr = derive_truth(cfg, t)
        except ValueError as exc:
            problems.append(f"target {i}: {exc}")
            continue
        if tr.tau2 + scene.offsets.to_mean >= cfg.max_delay or tr.tau1 >= cfg.max_delay:
            problems.append(f"target {i}: delay exceeds the unambiguous window")
    if not scene.targets:
        problems.append("no targets")
    return problems


def _load(path):
    return default_scene() if path is None else load_scene(path)


def cmd_validate(args) -> int:
    try:
        scene = _load(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = _scene_problems(scene)
    if problems:
        for p in problems:
            print(f"invalid: {p}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"ok: {len(scene.targets)} target(s), offsets {scene.offsets.label()}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        scene = _load(args.config)
        problems = _scene_problems(scene)
        if problems:
            raise ConfigError("; ".join(problems))
        workers = worker_count()
        if args.recipe == "custom":
            if not args.param or not args.values:
                raise ConfigError("custom recipe needs --param and --values")
            spec = SweepSpec(args.param, args.values, args.trials or 100, tuple(args.variants),
                             doppler=not args.range_only, aoa=args.aoa)
        elif args.recipe not in RECIPES:
            raise ConfigError(f"unknown recipe {args.recipe!r}; choose from {', '.join(sorted(RECIPES))} or custom")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) / f"{args.recipe}.csv"
    try:
        if args.recipe == "custom":
            res = run_sweep(spec, scene, seed=args.seed, recipe="custom", workers=workers)
            res.write(out)
        else:
            res = run_recipe(args.recipe, scene, seed=args.seed, trials=args.trials, points=args.values,
                             out=out, workers=workers)
    except Exception as exc:  # noqa: BLE001 - any failure past validation is a runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {len(res.rows)} rows to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coopsense", description="Cooperative active/passive OFDM sensing simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a recipe or a custom sweep and write a metrics CSV")
    r.add_argument("--config", help="scene YAML (default: the built-in three-target scene)")
    r.add_argument("--recipe", default="fig5", help="recipe name or 'custom'")
    r.add_argument("--trials", type=int, default=None, help="trials per sweep point")
    r.add_argument("--seed", type=int, default=0, help="base seed")
    r.add_argument("--out", default="results", help="output directory")
    r.add_argument("--values", type=float, nargs="+", help="sweep points (overrides the recipe's)")
    r.add_argument("--param", help="swept parameter for the custom recipe")
    r.add_argument("--variants", nargs="+", default=["cooperative"], help="variants for the custom recipe")
    r.add_argument("--range-only", action="store_true", help="custom recipe: skip the velocity stage")
    r.add_argument("--aoa", action="store_true", help="custom recipe: run the angle stage")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a scene file")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("config error: --trials must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

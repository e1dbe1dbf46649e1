"""Command line interface.

Subcommands: verify, sweep, geometry, oracle, export-manifest.
Exit codes: 0 pass, 1 verification failure, 2 configuration error,
3 resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import combinatorics, geometry
from .construction import save_manifest
from .errors import ConfigError, ConstructionError, DirHilbertError, ResourceGuardError
from .experiments import ExperimentConfig, build_pipeline, run_sweep, run_verify
from .report import write_sweep_outputs, write_verify_outputs

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_GUARD = 3


def _parse_p_list(text: str) -> tuple:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError as exc:
        raise ConfigError(f"cannot parse exponent list {text!r}") from exc


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--n", type=int, default=2, help="ambient dimension")
    parser.add_argument("--m", type=int, default=2, help="tree depth (2^m directions)")
    parser.add_argument("--m-max", type=int, default=None, help="sweep up to this depth")
    parser.add_argument("--p", type=str, default="2", help="comma separated exponents")
    parser.add_argument("--grid", type=int, default=None, help="fixed grid size per axis")
    parser.add_argument("--grid-max", type=int, default=None,
                        help="largest grid size the auto policy may escalate to")
    parser.add_argument("--seed", type=int, default=7, help="master seed")
    parser.add_argument("--p0", type=int, default=None, help="half exponent for the build")
    parser.add_argument("--delta", type=float, default=None,
                        help="per-piece smoothing gate")
    parser.add_argument("--directions", type=str, default=None,
                        help="JSON file with a direction set")
    parser.add_argument("--out", type=str, default="out", help="output directory")
    parser.add_argument("--strict", action="store_true",
                        help="tighten verification tolerances tenfold")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip matplotlib figure rendering")


def _config(args, default_p0: int = 1) -> ExperimentConfig:
    return ExperimentConfig(
        n=args.n,
        m=args.m,
        m_max=args.m_max,
        p_values=_parse_p_list(args.p),
        grid_size=args.grid,
        grid_max=args.grid_max,
        seed=args.seed,
        p0=args.p0 if args.p0 is not None else default_p0,
        delta=args.delta,
        strict=args.strict,
        directions_path=args.directions,
        out=args.out,
        figures=not args.no_figures,
    )


def _cmd_verify(args) -> int:
    config = _config(args)
    result = run_verify(config)
    write_verify_outputs(result, args.out)
    for name, check in result.checks.items():
        print(f"{'PASS' if check.get('pass') else 'FAIL'}  {name}")
    print(f"verification: {'PASS' if result.passed else 'FAIL'} (reports in {args.out})")
    return EXIT_OK if result.passed else EXIT_FAIL


def _cmd_sweep(args) -> int:
    config = _config(args)
    result = run_sweep(config)
    paths = write_sweep_outputs(result, args.out, figures=config.figures)
    print(Path(paths["summary"]).read_text(), end="")
    skipped = [r for r in result.records if r.slope_flag != "ok"]
    if skipped:
        print(f"{len(skipped)} record(s) skipped")
    print(f"outputs in {args.out}")
    return EXIT_OK if not skipped else EXIT_FAIL


def _cmd_geometry(args) -> int:
    if args.directions:
        directions = geometry.load_directions(args.directions)
        if args.count is not None:
            directions = directions[: args.count]
    else:
        count = args.count if args.count is not None else 2**args.m
        rng = np.random.default_rng(args.seed)
        directions = geometry.random_directions(args.n, count, rng)
    ordering = geometry.order_directions(directions, seed=args.seed)
    chain = geometry.build_sector_chain(ordering)
    report = geometry.verify_sector_pattern(
        chain, samples_per_sector=args.samples, seed=args.seed
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    geometry.save_chain(chain, outdir / "chain.json")
    (outdir / "pattern.json").write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True)
    )
    print(f"{'PASS' if report.passed else 'FAIL'}  sector pattern "
          f"({directions.shape[0]} directions, n={directions.shape[1]}, "
          f"{report.samples_per_sector} samples per sector)")
    print(f"chain written to {outdir / 'chain.json'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _cmd_oracle(args) -> int:
    config = _config(args, default_p0=2)
    if config.m > 3 or config.p0 > 2:
        raise ConfigError("the expansion oracle is limited to m <= 3 and p0 <= 2")
    pipeline = build_pipeline(config)
    state = pipeline.state
    checks = {
        "norm_expansion": combinatorics.norm_expansion_check(state).as_dict(),
        "ray_support": combinatorics.ray_support_report(
            state, config.p0, config.p0
        ).as_dict(),
        "recursion": combinatorics.recursion_report(state).as_dict(),
    }
    units = {level: combinatorics.unit_sum(state, level) for level in range(state.m)}
    checks["unit_sums"] = {
        "pass": all(abs(v - 1.0) <= 0.01 for v in units.values()),
        "values": {str(k): v for k, v in units.items()},
    }
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    payload = {"config": config.as_dict(), "grid": state.grid.size, "checks": checks}
    if args.full_ledger:
        cache = combinatorics._PieceCache(state)
        ledger = []
        for stratum in combinatorics.enumerate_strata(config.p0, config.p0, state.m):
            ledger.append(
                {
                    "left": list(stratum.left),
                    "left_mult": list(stratum.left_mult),
                    "right": list(stratum.right),
                    "right_mult": list(stratum.right_mult),
                    "top_height": stratum.top_height,
                    "on_ray": stratum.on_ray,
                    "star": stratum.star,
                    "integral": abs(combinatorics.stratum_f_integral(cache, stratum)),
                }
            )
        payload["strata"] = ledger
    (outdir / "oracle.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    for name, check in checks.items():
        print(f"{'PASS' if check.get('pass') else 'FAIL'}  {name}")
    passed = all(c["pass"] for c in checks.values())
    print(f"oracle: {'PASS' if passed else 'FAIL'} (report in {outdir / 'oracle.json'})")
    return EXIT_OK if passed else EXIT_FAIL


def _cmd_export_manifest(args) -> int:
    config = _config(args)
    pipeline = build_pipeline(config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "manifest.json"
    save_manifest(pipeline.state, path)
    print(f"manifest written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dirhilbert",
        description="numerical laboratory for maximal directional Hilbert transforms",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="build one instance and run all verifiers")
    _add_common(p_verify)
    p_verify.set_defaults(func=_cmd_verify)

    p_sweep = sub.add_parser("sweep", help="sweep depths and emit CSV/JSON/figures")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_geo = sub.add_parser("geometry", help="order directions and verify the sector chain")
    _add_common(p_geo)
    p_geo.add_argument("--count", type=int, default=None,
                       help="number of directions (default 2^m)")
    p_geo.add_argument("--samples", type=int, default=256,
                       help="sample points per sector")
    p_geo.set_defaults(func=_cmd_geometry)

    p_oracle = sub.add_parser("oracle", help="norm expansion oracles at small depth")
    _add_common(p_oracle)
    p_oracle.add_argument("--full-ledger", action="store_true",
                          help="dump every stratum integral (can be large)")
    p_oracle.set_defaults(func=_cmd_oracle)

    p_manifest = sub.add_parser("export-manifest", help="build and export the manifest")
    _add_common(p_manifest)
    p_manifest.set_defaults(func=_cmd_export_manifest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceGuardError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except ConstructionError as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except DirHilbertError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

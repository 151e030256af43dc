"""Command-line entry point.

Subcommands wrap the pipeline stages; exit code 0 on success, 2 when a bound
audit reports violations, 1 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .forward import BoundaryFlux, ForwardCache, ObservationGrid, SolverConfig, forward
from .geometry import canonical_json, conductor_from_json_dict
from .harness import ConfigError, approx_lemma_audit, load_config, run_pipeline

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment TOML")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=None, help="global seed (overrides config)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavity-bayes", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full experiment pipeline")
    _add_config_args(p)

    p = sub.add_parser("forward", help="simulate and cache forward vectors")
    p.add_argument("--config", default=None, help="experiment TOML (prior family mode)")
    p.add_argument("--domain", default=None, help="domain JSON file (single-domain mode)")
    p.add_argument("--grid", default=None, help="grid TOML file (single-domain mode)")
    p.add_argument("--paths", type=int, default=4096)
    p.add_argument("--step", type=float, default=2e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="cache")

    p = sub.add_parser("verify-bounds", help="stability-bound audit (exit 2 on violation)")
    _add_config_args(p)

    p = sub.add_parser("ratio-field", help="domain-ratio field CSV")
    _add_config_args(p)

    p = sub.add_parser("check-disintegration", help="disintegration consistency (exit 2 on failure)")
    _add_config_args(p)

    p = sub.add_parser("approx-lemma", help="cube-cover distance audit (exit 2 on violation)")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional report JSON path")

    return parser


def _cmd_pipeline(args) -> int:
    cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
    result = run_pipeline(cfg)
    print(f"wrote {len(result.artifacts)} artifacts to {result.out_dir}")
    return 0


def _cmd_forward(args) -> int:
    if args.domain is not None:
        domain = conductor_from_json_dict(json.loads(Path(args.domain).read_text()))
        if args.grid is not None:
            grid_raw = tomllib.loads(Path(args.grid).read_text()).get("grid", {})
            grid = ObservationGrid(
                horizon=float(grid_raw.get("horizon", 1.0)),
                m_t=int(grid_raw.get("m_t", 4)),
                m_a=int(grid_raw.get("m_a", 4)),
                arc=tuple(grid_raw.get("arc", (0.0, math.pi / 2.0))),
            )
        else:
            grid = ObservationGrid()
        cfg = SolverConfig(step=args.step, n_paths=args.paths, base_seed=args.seed)
        cache = ForwardCache(args.out)
        vec = forward(domain, grid, BoundaryFlux(), cfg, cache=cache)
        print(canonical_json({"domain_hash": domain.content_hash(), "y": [float(v) for v in vec.values]}))
        print(f"cache: {cache.hits} hits, {cache.misses} misses -> {args.out}", file=sys.stderr)
        return 0
    if args.config is None:
        raise ConfigError("forward needs either --config or --domain")
    cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
    result = run_pipeline(cfg, stages=("forward", "data"))
    cache_stats = result.manifest["cache"]
    print(f"forward cache ready: {cache_stats['hits']} hits, {cache_stats['misses']} misses")
    return 0


def _cmd_verify_bounds(args) -> int:
    cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
    result = run_pipeline(cfg, stages=("forward", "data", "stability"))
    report = result.stability
    if report is None:
        print("stability stage skipped (noise disabled)", file=sys.stderr)
        return 1
    print(
        f"{len(report.records)} pairs audited, {report.violations} violations, "
        f"max slope {report.max_slope:.6g} <= C(r) {report.slope_bound:.6g}"
    )
    return 2 if report.violations else 0


def _cmd_ratio_field(args) -> int:
    cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
    result = run_pipeline(cfg, stages=("forward", "data", "posterior", "ratio"))
    print(f"ratio field -> {result.artifacts['ratio']}")
    return 0


def _cmd_check_disintegration(args) -> int:
    cfg = load_config(args.config, out_override=args.out, seed_override=args.seed)
    result = run_pipeline(cfg, stages=("forward", "data", "disintegration"))
    checks = result.disintegration
    if checks is None:
        print("disintegration stage skipped (noise disabled)", file=sys.stderr)
        return 1
    failed = [c for c in checks if not c.passed]
    for c in checks:
        status = "pass" if c.passed else "FAIL"
        print(f"{status} {c.name}: lhs={c.lhs:.6f} rhs={c.rhs:.6f} se={c.std_error:.2e}")
    return 2 if failed else 0


def _cmd_approx_lemma(args) -> int:
    report = approx_lemma_audit(count=args.count, seed=args.seed)
    print(
        f"{report['checks']} cover checks over {report['count']} conductors: "
        f"{report['violations']} violations, worst ratio {report['worst_ratio']:.6f} (< 1 required)"
    )
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(canonical_json(report))
    return 2 if report["violations"] else 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "pipeline": _cmd_pipeline,
        "forward": _cmd_forward,
        "verify-bounds": _cmd_verify_bounds,
        "ratio-field": _cmd_ratio_field,
        "check-disintegration": _cmd_check_disintegration,
        "approx-lemma": _cmd_approx_lemma,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

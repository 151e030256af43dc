"""Experiment pipelines: config parsing, stage orchestration, artifacts.

A pipeline run reads one TOML config and executes, in order: forward caching
over the prior family, data simulation, posterior construction, domain-ratio
field, stability-bound audit, disintegration consistency, and a forward
convergence sweep.  Every artifact is plain CSV/JSON with a schema tag; the
manifest records the config digest, artifact digests, cache counters, and
wall times.  The global seed fans out to per-stage substreams by stable
labels, so any stage can be re-run independently and reproducibly.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__, rng
from .bayes import (
    DisintegrationCheck,
    ForwardTable,
    NoiseModel,
    PriorEnsemble,
    StabilityReport,
    check_disintegration,
    domain_ratio,
    posterior,
    ratio_grid_points,
    simulate_data,
    standard_test_functions,
    verify_stability,
)
from .forward import (
    BoundaryFlux,
    ForwardCache,
    ObservationGrid,
    SolverConfig,
    bound_cf,
    estimate_u,
    forward,
)
from .geometry import (
    ConductorDomain,
    OuterDomain,
    approximate_domain,
    canonical_json,
    conductor,
    conductor_from_json_dict,
    hausdorff_to_grid_cover,
)
from .priors import PriorSpec, benchmark_grid_family, enumerate_finite, sample_prior
from .radial import richardson_value


class ConfigError(ValueError):
    """Malformed experiment config; message names the offending field."""


@dataclass
class ExperimentConfig:
    """Parsed and resolved experiment description."""

    name: str
    seed: int
    out_dir: Path
    outer: OuterDomain
    psi: BoundaryFlux
    grid: ObservationGrid
    solver: SolverConfig
    sigma_spec: dict
    prior_spec: dict
    truth: ConductorDomain
    pairs_spec: dict
    ratio_n: int
    disint_spec: dict
    convergence_spec: dict
    raw: dict

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.raw).encode()).hexdigest()


def _get(table: dict, section: str, key: str, default=None, required: bool = False):
    if key not in table.get(section, {}):
        if required:
            raise ConfigError(f"[{section}] is missing required key '{key}'")
        return default
    return table[section][key]


def load_config(path: str | Path, out_override: str | None = None, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent, out_override=out_override, seed_override=seed_override)


def config_from_dict(
    raw: dict, base_dir: Path | None = None, out_override: str | None = None, seed_override: int | None = None
) -> ExperimentConfig:
    base_dir = base_dir or Path.cwd()
    name = _get(raw, "experiment", "name", "experiment")
    seed = seed_override if seed_override is not None else _get(raw, "experiment", "seed", required=True)
    if not isinstance(seed, int):
        raise ConfigError("[experiment].seed must be an integer")
    out_dir = Path(out_override if out_override else str(_get(raw, "experiment", "out", "artifacts")))

    try:
        outer = OuterDomain(
            tuple(_get(raw, "outer", "center", (0.0, 0.0))), float(_get(raw, "outer", "radius", 1.0))
        )
        psi = BoundaryFlux(
            kind=_get(raw, "flux", "kind", "constant"),
            amplitude=float(_get(raw, "flux", "amplitude", 1.0)),
            omega=float(_get(raw, "flux", "omega", 2.0 * math.pi)),
        )
        grid = ObservationGrid(
            horizon=float(_get(raw, "grid", "horizon", 1.0)),
            m_t=int(_get(raw, "grid", "m_t", 4)),
            m_a=int(_get(raw, "grid", "m_a", 4)),
            arc=tuple(_get(raw, "grid", "arc", (0.0, math.pi / 2.0))),
        )
        solver = SolverConfig(
            step=float(_get(raw, "solver", "step", 2e-3)),
            n_paths=int(_get(raw, "solver", "n_paths", 4096)),
            base_seed=rng.substream_seed(seed, "forward"),
            crossing_check=_get(raw, "solver", "crossing_check", "endpoint"),
            quadrature_refine=int(_get(raw, "solver", "quadrature_refine", 1)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc

    sigma_spec = dict(raw.get("noise", {"mode": "range_fraction", "fraction": 0.05}))
    prior_spec = dict(raw.get("prior", {"mode": "grid"}))
    truth_section = raw.get("truth")
    if truth_section is None:
        raise ConfigError("[truth] section with cavities is required")
    truth = conductor(
        outer, [(tuple(c["center"]), float(c["radius"])) for c in truth_section.get("cavities", [])]
    )
    pairs_spec = dict(raw.get("pairs", {}))
    pairs_spec.setdefault("count", 100)
    pairs_spec.setdefault("dispersion", 1.5)
    ratio_n = int(raw.get("ratio_grid", {}).get("n", 64))
    disint_spec = dict(raw.get("disintegration", {}))
    disint_spec.setdefault("enabled", True)
    disint_spec.setdefault("family_size", 8)
    disint_spec.setdefault("n_samples", 20000)
    disint_spec.setdefault("n_functions", 10)
    convergence_spec = dict(raw.get("convergence", {}))
    convergence_spec.setdefault("enabled", True)
    convergence_spec.setdefault("steps", [4e-3, 2e-3, 1e-3])
    convergence_spec.setdefault("n_paths", 20000)
    return ExperimentConfig(
        name=name,
        seed=seed,
        out_dir=out_dir,
        outer=outer,
        psi=psi,
        grid=grid,
        solver=solver,
        sigma_spec=sigma_spec,
        prior_spec=prior_spec,
        truth=truth,
        pairs_spec=pairs_spec,
        ratio_n=ratio_n,
        disint_spec=disint_spec,
        convergence_spec=convergence_spec,
        raw=raw,
    )


def build_prior(cfg: ExperimentConfig) -> PriorEnsemble:
    spec = cfg.prior_spec
    mode = spec.get("mode", "grid")
    if mode in ("finite", "finite-list"):
        entries = []
        for dom in spec.get("domains", []):
            cavities = tuple((tuple(c["center"]), float(c["radius"])) for c in dom.get("cavities", []))
            entries.append((cavities, float(dom["prob"])))
        if not entries:
            raise ConfigError("[prior] finite mode needs [[prior.domains]] entries")
        return enumerate_finite(
            PriorSpec(
                mode="finite",
                outer=cfg.outer,
                domains=tuple(entries),
                separation_margin=spec.get("delta_sep"),
                containment_margin=spec.get("delta_in"),
            )
        )
    if mode == "parametric":
        pspec = PriorSpec(
            mode="parametric",
            outer=cfg.outer,
            k_max=int(spec.get("k_max", 1)),
            r_min=float(spec.get("r_min", 0.1)),
            r_max=float(spec.get("r_max", 0.3)),
            separation_margin=spec.get("delta_sep"),
            containment_margin=spec.get("delta_in"),
        )
        return sample_prior(pspec, int(spec.get("k", 16)), rng.substream_seed(cfg.seed, "prior"))
    if mode == "grid":
        fam = benchmark_grid_family(
            cfg.outer,
            n_side=int(spec.get("n_side", 4)),
            radius=float(spec.get("radius", 0.2)),
            span=float(spec.get("span", 0.45)),
        )
        return enumerate_finite(fam)
    raise ConfigError(f"[prior].mode '{mode}' is not one of finite, parametric, grid")


def resolve_sigma(cfg: ExperimentConfig, table: ForwardTable) -> float:
    """Noise sigma: explicit value, a fraction of the family's componentwise
    forward range, or 0 for disabled noise."""
    spec = cfg.sigma_spec
    if "sigma" in spec:
        sigma = float(spec["sigma"])
        if sigma < 0:
            raise ConfigError("[noise].sigma must be nonnegative")
        return sigma
    mode = spec.get("mode", "range_fraction")
    if mode == "none":
        return 0.0
    if mode == "range_fraction":
        fraction = float(spec.get("fraction", 0.05))
        ranges = table.f_values.max(axis=0) - table.f_values.min(axis=0)
        base = float(ranges.max())
        if base <= 0:
            return fraction  # degenerate single-domain family
        return fraction * base
    raise ConfigError(f"[noise].mode '{mode}' is not one of none, range_fraction")


def generate_pairs(
    table: ForwardTable, noise: NoiseModel, count: int, dispersion: float, c_f: float, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random data pairs near the forward cloud, capped at norm 3 * C_F.

    Each vector is a forward value of a random family member plus a noise
    draw scaled by a uniform factor in [0, dispersion]; draws exceeding the
    norm cap are redrawn.
    """
    gen = rng.stream(rng.substream_seed(seed, "pairs"))
    k, m = table.f_values.shape
    cap = 3.0 * c_f

    def draw() -> np.ndarray:
        for _ in range(1000):
            base = table.f_values[int(gen.integers(0, k))]
            scale = float(gen.uniform(0.0, dispersion))
            y = base + scale * noise.sigma * gen.standard_normal(m)
            if np.linalg.norm(y) <= cap:
                return y
        raise RuntimeError("could not draw a data vector inside the 3*C_F ball")

    return [(draw(), draw()) for _ in range(count)]


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _csv_lines(schema: str, header: str, rows: list[str]) -> str:
    return "\n".join([f"# schema={schema}", header, *rows]) + "\n"


def write_ratio_csv(path: Path, points: np.ndarray, rho: np.ndarray) -> None:
    rows = [f"{repr(float(x))},{repr(float(y))},{repr(float(r))}" for (x, y), r in zip(points, rho)]
    _write_text(path, _csv_lines("ratio_field.v1", "x,y,rho", rows))


def write_stability_csv(path: Path, report: StabilityReport) -> None:
    rows = []
    for r in report.records:
        rows.append(
            ",".join(
                repr(float(v))
                for v in (r.dy_norm, r.sigma_sup, r.hell, r.rhs_hell, r.max_drho, r.rhs_ratio, r.margin_hell, r.margin_ratio)
            )
        )
    rows = [f"{r.pair_id}," + row for r, row in zip(report.records, rows)]
    header = "pair_id,dy_norm,sigma_sup,hell,rhs_hell,max_drho,rhs_ratio,margin_hell,margin_ratio"
    _write_text(path, _csv_lines("stability_report.v1", header, rows))


def write_posterior_json(path: Path, post, sigma: float) -> None:
    record = {
        "schema_version": "posterior.v1",
        "evidence": post.evidence,
        "log_evidence": post.log_evidence,
        "sigma": sigma,
        "domains": [d.content_hash() for d in post.domains],
        "weights": [float(w) for w in post.weights],
    }
    _write_text(path, canonical_json(record))


def write_convergence_csv(path: Path, rows: list[dict]) -> None:
    lines = [
        f"{repr(float(r['h']))},{repr(float(r['abs_error']))},{repr(float(r['std_error']))},{repr(float(r['bias_budget']))}"
        for r in rows
    ]
    _write_text(path, _csv_lines("convergence.v1", "h,abs_error,std_error,bias_budget", lines))


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class PipelineResult:
    config: ExperimentConfig
    out_dir: Path
    artifacts: dict
    manifest: dict
    stability: StabilityReport | None = None
    disintegration: list[DisintegrationCheck] | None = None


def run_pipeline(cfg: ExperimentConfig, stages: tuple[str, ...] | None = None) -> PipelineResult:
    """Execute the configured pipeline; returns artifact paths and reports.

    ``stages`` restricts execution (always in the canonical order); the
    forward table and data stages run whenever any later stage needs them.
    """
    all_stages = ("forward", "data", "posterior", "ratio", "stability", "disintegration", "convergence")
    wanted = set(all_stages if stages is None else stages)
    unknown = wanted - set(all_stages)
    if unknown:
        raise ConfigError(f"unknown pipeline stages: {sorted(unknown)}")
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cache = ForwardCache(out / "cache")
    artifacts: dict[str, Path] = {}
    timings: dict[str, float] = {}
    incomplete = False

    def stage(label: str):
        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, exc_type, exc, tb):
                timings[label] = time.perf_counter() - self.t0

        return _Timer()

    try:
        with stage("forward"):
            prior = build_prior(cfg)
            table = ForwardTable.compute(prior, cfg.grid, cfg.psi, cfg.solver, cache=cache)
            f_true = forward(cfg.truth, cfg.grid, cfg.psi, cfg.solver, cache=cache)
            cf = bound_cf(cfg.psi, cfg.grid, cfg.outer, cfg.solver, cache=cache)
        sigma = resolve_sigma(cfg, table)
        noise = NoiseModel(sigma=sigma, m=cfg.grid.m) if sigma > 0 else None
        # Any positive sigma scores a single-domain or noiseless run identically.
        scoring_noise = noise if noise is not None else NoiseModel(sigma=1.0, m=cfg.grid.m)

        with stage("data"):
            y = simulate_data(f_true, noise, rng.substream_seed(cfg.seed, "noise"))[0]
            data_record = {
                "schema_version": "data.v1",
                "y": [float(v) for v in y],
                "sigma": sigma,
                "truth_hash": cfg.truth.content_hash(),
                "c_f": cf.value,
                "c_f_std_error": cf.std_error,
            }
            artifacts["data"] = out / "data.json"
            _write_text(artifacts["data"], canonical_json(data_record))

        post = None
        if wanted & {"posterior", "ratio"}:
            with stage("posterior"):
                post = posterior(table, y, scoring_noise)
                artifacts["posterior"] = out / "posterior.json"
                write_posterior_json(artifacts["posterior"], post, sigma)

        if "ratio" in wanted:
            with stage("ratio"):
                points = ratio_grid_points(cfg.outer.radius, cfg.ratio_n, cfg.outer.center)
                ratio = domain_ratio(post, points)
                artifacts["ratio"] = out / "ratio.csv"
                write_ratio_csv(artifacts["ratio"], ratio.points, ratio.rho)

        stability_report = None
        if "stability" in wanted and noise is not None:
            with stage("stability"):
                pairs = generate_pairs(
                    table,
                    noise,
                    int(cfg.pairs_spec["count"]),
                    float(cfg.pairs_spec["dispersion"]),
                    cf.value,
                    cfg.seed,
                )
                points = ratio_grid_points(cfg.outer.radius, cfg.ratio_n, cfg.outer.center)
                stability_report = verify_stability(table, pairs, noise, points, c_f=cf.value)
                artifacts["stability"] = out / "stability.csv"
                write_stability_csv(artifacts["stability"], stability_report)
                summary = {
                    "schema_version": "stability_summary.v1",
                    "pairs": len(stability_report.records),
                    "violations": stability_report.violations,
                    "data_radius": stability_report.data_radius,
                    "slope_bound": stability_report.slope_bound,
                    "max_slope": stability_report.max_slope,
                }
                artifacts["stability_summary"] = out / "stability_summary.json"
                _write_text(artifacts["stability_summary"], canonical_json(summary))

        disint_checks = None
        if "disintegration" in wanted and cfg.disint_spec.get("enabled", True) and noise is not None:
            with stage("disintegration"):
                fam = int(cfg.disint_spec["family_size"])
                sub_prior = PriorEnsemble(
                    domains=table.prior.domains[:fam],
                    probs=np.full(min(fam, table.prior.size), 1.0 / min(fam, table.prior.size)),
                    kind="finite",
                )
                sub_table = ForwardTable(sub_prior, table.f_values[: sub_prior.size])
                fns = standard_test_functions(
                    sub_table, cfg.seed, n_random=max(0, int(cfg.disint_spec["n_functions"]) - 2)
                )
                disint_checks = check_disintegration(
                    sub_table,
                    noise,
                    fns,
                    int(cfg.disint_spec["n_samples"]),
                    rng.substream_seed(cfg.seed, "disint"),
                )
                record = {
                    "schema_version": "disintegration.v1",
                    "n_samples": int(cfg.disint_spec["n_samples"]),
                    "checks": [
                        {
                            "name": c.name,
                            "lhs": c.lhs,
                            "rhs": c.rhs,
                            "std_error": c.std_error,
                            "passed": c.passed,
                        }
                        for c in disint_checks
                    ],
                }
                artifacts["disintegration"] = out / "disintegration.json"
                _write_text(artifacts["disintegration"], canonical_json(record))

        if "convergence" in wanted and cfg.convergence_spec.get("enabled", True):
            with stage("convergence"):
                rows = convergence_sweep(
                    steps=[float(h) for h in cfg.convergence_spec["steps"]],
                    n_paths=int(cfg.convergence_spec["n_paths"]),
                    seed=rng.substream_seed(cfg.seed, "convergence"),
                )
                artifacts["convergence"] = out / "convergence.csv"
                write_convergence_csv(artifacts["convergence"], rows)
    except Exception:
        incomplete = True
        raise
    finally:
        manifest = {
            "schema_version": "manifest.v1",
            "name": cfg.name,
            "package_version": __version__,
            "versions": {"numpy": np.__version__},
            "seed": cfg.seed,
            "config_digest": cfg.digest(),
            "artifacts": {name: _sha256_file(path) for name, path in sorted(artifacts.items())},
            "cache": {"hits": cache.hits, "misses": cache.misses},
            "incomplete": incomplete,
            "wall_time_s": {k: round(v, 6) for k, v in timings.items()},
        }
        _write_text(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1))

    return PipelineResult(
        config=cfg,
        out_dir=out,
        artifacts={k: str(v) for k, v in artifacts.items()},
        manifest=manifest,
        stability=stability_report,
        disintegration=disint_checks,
    )


def convergence_sweep(steps: list[float], n_paths: int, seed: int) -> list[dict]:
    """Annulus benchmark error at several step sizes against the radial
    reference; the bias budget column is C_bias * sqrt(h) from the shipped
    calibration."""
    from .calibration import load_calibration

    cal = load_calibration()
    golden = cal["annulus_golden_u"]
    c_bias = cal["c_bias"]
    dom = conductor(OuterDomain(), [((0.0, 0.0), 0.5)])
    psi = BoundaryFlux()
    rows = []
    for h in steps:
        cfg = SolverConfig(step=h, n_paths=n_paths, base_seed=rng.substream_seed(seed, "h", repr(h)))
        est = estimate_u(1.0, (1.0, 0.0), dom, psi, cfg)
        rows.append(
            {
                "h": h,
                "abs_error": abs(est.mean - golden),
                "std_error": est.std_error,
                "bias_budget": c_bias * math.sqrt(h),
            }
        )
    return rows


def approx_lemma_audit(count: int = 100, seed: int = 0, eps_values: tuple[float, ...] = (0.25, 0.125, 0.0625, 0.03125, 0.015625)) -> dict:
    """Cube-cover distance audit over random conductors.

    Draws ``count`` random single/multi-cavity conductors, covers each at
    every eps, and checks the exact cover distance against sqrt(2) * eps.
    """
    spec = PriorSpec(mode="parametric", k_max=3, r_min=0.08, r_max=0.3)
    ensemble = sample_prior(spec, count, rng.substream_seed(seed, "lemma"))
    worst_ratio = 0.0
    violations = 0
    checks = 0
    max_cubes = 0
    for dom in ensemble.domains:
        for eps in eps_values:
            cover = approximate_domain(dom, eps)
            dist = hausdorff_to_grid_cover(dom, cover)
            ratio = dist / (math.sqrt(2.0) * eps)
            worst_ratio = max(worst_ratio, ratio)
            checks += 1
            max_cubes = max(max_cubes, cover.cube_count)
            if dist >= math.sqrt(2.0) * eps:
                violations += 1
    return {
        "schema_version": "approx_lemma.v1",
        "count": count,
        "eps_values": list(eps_values),
        "checks": checks,
        "violations": violations,
        "worst_ratio": worst_ratio,
        "max_cubes": max_cubes,
    }

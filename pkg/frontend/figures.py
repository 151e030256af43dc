#!/usr/bin/env python3
"""Render cavity-bayes pipeline artifacts as figures.

Four plot kinds over the documented artifact schemas, no inference
computation here:

  ratio-heatmap   ratio.csv (ratio_field.v1), optional true-domain overlay
  bounds-scatter  stability.csv (stability_report.v1), both bound families
                  against the y = x reference line
  weights-bar     posterior.json (posterior.v1)
  convergence     convergence.csv (convergence.v1)

Usage:
  python figures.py --job ratio-heatmap --in ratio.csv --out ratio.png [--truth domain.json]

Images embed no timestamps, so repeated runs on identical inputs produce
identical files.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SUPPORTED_SCHEMAS = {
    "ratio-heatmap": "ratio_field.v1",
    "bounds-scatter": "stability_report.v1",
    "convergence": "convergence.v1",
}
POSTERIOR_SCHEMA = "posterior.v1"
PNG_METADATA = {"Software": "cavity-bayes-figures"}


class SchemaMismatch(ValueError):
    """Artifact does not carry a supported schema tag."""


class MissingColumns(ValueError):
    """Artifact lacks required columns or fields."""


@dataclass(frozen=True)
class PlotJob:
    kind: str
    input_path: Path
    output_path: Path
    truth_path: Path | None = None
    dpi: int = 150
    title: str | None = None

    def __post_init__(self):
        if self.kind not in ("ratio-heatmap", "bounds-scatter", "weights-bar", "convergence"):
            raise ValueError(f"unknown plot kind: {self.kind}")


def read_csv_artifact(path: Path, schema: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Parse a schema-tagged CSV into named float columns."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise MissingColumns(f"{path}: empty artifact")
    if not lines[0].startswith("# schema="):
        raise SchemaMismatch(f"{path}: missing schema tag")
    tag = lines[0].split("=", 1)[1].strip()
    if tag != schema:
        raise SchemaMismatch(f"{path}: schema {tag!r}, expected {schema!r}")
    if len(lines) < 2:
        raise MissingColumns(f"{path}: no header row")
    header = [h.strip() for h in lines[1].split(",")]
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingColumns(f"{path}: missing columns {missing}")
    rows = [line.split(",") for line in lines[2:] if line.strip()]
    if not rows:
        raise MissingColumns(f"{path}: no data rows")
    data = np.array([[float(v) for v in row] for row in rows])
    return {name: data[:, i] for i, name in enumerate(header)}


def load_ratio_field(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Ratio CSV as (x axis, y axis, rho matrix indexed [x, y])."""
    cols = read_csv_artifact(path, "ratio_field.v1", ("x", "y", "rho"))
    xs = np.unique(cols["x"])
    ys = np.unique(cols["y"])
    if xs.size * ys.size != cols["rho"].size:
        raise MissingColumns(f"{path}: points do not form a full grid")
    order = np.lexsort((cols["y"], cols["x"]))
    rho = cols["rho"][order].reshape(xs.size, ys.size)
    return xs, ys, rho


def load_stability(path: Path) -> dict[str, np.ndarray]:
    return read_csv_artifact(
        path,
        "stability_report.v1",
        ("pair_id", "dy_norm", "sigma_sup", "hell", "rhs_hell", "max_drho", "rhs_ratio"),
    )


def load_posterior(path: Path) -> dict:
    record = json.loads(Path(path).read_text())
    if record.get("schema_version") != POSTERIOR_SCHEMA:
        raise SchemaMismatch(f"{path}: schema {record.get('schema_version')!r}, expected {POSTERIOR_SCHEMA!r}")
    if "weights" not in record or "domains" not in record:
        raise MissingColumns(f"{path}: posterior record needs weights and domains")
    return record


def load_convergence(path: Path) -> dict[str, np.ndarray]:
    return read_csv_artifact(path, "convergence.v1", ("h", "abs_error", "std_error", "bias_budget"))


def _save(fig, job: PlotJob) -> Path:
    job.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(job.output_path, dpi=job.dpi, metadata=PNG_METADATA)
    plt.close(fig)
    return job.output_path


def _render_ratio_heatmap(job: PlotJob) -> Path:
    xs, ys, rho = load_ratio_field(job.input_path)
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    mesh = ax.imshow(
        rho.T,
        origin="lower",
        extent=(xs[0], xs[-1], ys[0], ys[-1]),
        vmin=0.0,
        vmax=1.0,
        cmap="magma",
        interpolation="nearest",
    )
    fig.colorbar(mesh, ax=ax, label="in-domain probability")
    if job.truth_path is not None:
        spec = json.loads(Path(job.truth_path).read_text())
        for cav in spec.get("cavities", []):
            circle = plt.Circle(cav["center"], cav["radius"], fill=False, color="cyan", lw=1.6)
            ax.add_patch(circle)
        outer = spec.get("outer")
        if outer:
            ax.add_patch(plt.Circle(outer["center"], outer["radius"], fill=False, color="white", lw=0.8))
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(job.title or "domain ratio")
    ax.set_aspect("equal")
    return _save(fig, job)


def _render_bounds_scatter(job: PlotJob) -> Path:
    cols = load_stability(job.input_path)
    fig, ax = plt.subplots(figsize=(5.2, 4.6))
    ax.scatter(cols["rhs_hell"], cols["hell"], s=16, alpha=0.75, label="Hellinger vs bound")
    ax.scatter(cols["rhs_ratio"], cols["max_drho"], s=16, alpha=0.75, marker="^", label="max |drho| vs bound")
    finite = np.concatenate([
        cols["rhs_hell"], cols["hell"], cols["rhs_ratio"], cols["max_drho"],
    ])
    finite = finite[np.isfinite(finite) & (finite > 0)]
    lo = float(finite.min()) * 0.5
    hi = float(finite.max()) * 2.0
    ax.plot([lo, hi], [lo, hi], "k--", lw=1.0, label="y = x (violation line)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("bound (right-hand side)")
    ax.set_ylabel("observed distance")
    ax.set_title(job.title or "stability bounds: all points must lie below the line")
    ax.legend(fontsize=8)
    return _save(fig, job)


def _render_weights_bar(job: PlotJob) -> Path:
    record = load_posterior(job.input_path)
    weights = np.asarray(record["weights"], dtype=float)
    labels = [h[:8] for h in record["domains"]]
    fig, ax = plt.subplots(figsize=(max(4.5, 0.45 * len(weights)), 3.6))
    ax.bar(np.arange(len(weights)), weights, color="#46628a")
    ax.set_xticks(np.arange(len(weights)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("posterior weight")
    ax.set_ylim(0.0, 1.0)
    ax.set_title(job.title or f"posterior weights (evidence {record.get('evidence', float('nan')):.3g})")
    fig.tight_layout()
    return _save(fig, job)


def _render_convergence(job: PlotJob) -> Path:
    cols = load_convergence(job.input_path)
    order = np.argsort(cols["h"])
    h = cols["h"][order]
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    ax.errorbar(
        h, cols["abs_error"][order], yerr=3 * cols["std_error"][order],
        fmt="o-", capsize=3, label="|estimate - reference| (3 SE bars)",
    )
    ax.plot(h, cols["bias_budget"][order], "s--", label="bias budget ~ sqrt(h)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("time step h")
    ax.set_ylabel("error")
    ax.set_title(job.title or "forward solver convergence")
    ax.legend(fontsize=8)
    return _save(fig, job)


_RENDERERS = {
    "ratio-heatmap": _render_ratio_heatmap,
    "bounds-scatter": _render_bounds_scatter,
    "weights-bar": _render_weights_bar,
    "convergence": _render_convergence,
}


def render(job: PlotJob) -> Path:
    """Render one artifact to one image file; returns the output path."""
    return _RENDERERS[job.kind](job)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="figures.py", description=__doc__)
    parser.add_argument("--job", required=True, choices=sorted(_RENDERERS))
    parser.add_argument("--in", dest="input_path", required=True)
    parser.add_argument("--out", dest="output_path", required=True)
    parser.add_argument("--truth", dest="truth_path", default=None, help="domain JSON overlay (ratio-heatmap)")
    parser.add_argument("--dpi", type=int, default=150)
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    job = PlotJob(
        kind=args.job,
        input_path=Path(args.input_path),
        output_path=Path(args.output_path),
        truth_path=Path(args.truth_path) if args.truth_path else None,
        dpi=args.dpi,
        title=args.title,
    )
    try:
        out = render(job)
    except (SchemaMismatch, MissingColumns) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())

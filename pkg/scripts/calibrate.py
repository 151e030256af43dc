"""Regenerate the shipped calibration constants.

Computes the Richardson-extrapolated radial reference for the annulus
benchmark and calibrates the projected-Euler bias coefficient from a step
refinement sweep, then rewrites ``src/cavity_bayes/data/calibration.json``.

Run from the repository root:  python scripts/calibrate.py
"""

from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from cavity_bayes.forward import BoundaryFlux, SolverConfig, estimate_u  # noqa: E402
from cavity_bayes.geometry import OuterDomain, conductor  # noqa: E402
from cavity_bayes.radial import richardson_value  # noqa: E402

SWEEP_STEPS = (4e-3, 1e-3, 2.5e-4)
SWEEP_PATHS = 160_000
SAFETY = 1.25
SEED = 1_2026_0301


def main() -> None:
    golden, spread = richardson_value(1.0, 1.0, 1.0, 0.5, 1.0, meshes=(64, 128, 256))
    print(f"golden annulus value: {golden!r} (extrapolation spread {spread:.2e})")

    domain = conductor(OuterDomain(), [((0.0, 0.0), 0.5)])
    psi = BoundaryFlux()
    worst = 0.0
    sweep = []
    for h in SWEEP_STEPS:
        cfg = SolverConfig(step=h, n_paths=SWEEP_PATHS, base_seed=SEED)
        t0 = time.perf_counter()
        est = estimate_u(1.0, (1.0, 0.0), domain, psi, cfg)
        elapsed = time.perf_counter() - t0
        bias = est.mean - golden
        ratio = (abs(bias) + 3.0 * est.std_error) / math.sqrt(h)
        worst = max(worst, ratio)
        sweep.append({"h": h, "mean": est.mean, "std_error": est.std_error, "bias": bias})
        print(
            f"h={h:.2e}: mean={est.mean:.6f} bias={bias:+.6f} se={est.std_error:.6f} "
            f"(|bias|+3se)/sqrt(h)={ratio:.4f}  [{elapsed:.1f}s]"
        )

    c_bias = SAFETY * worst
    record = {
        "annulus_golden_u": golden,
        "golden_spread": spread,
        "c_bias": c_bias,
        "sweep_steps": list(SWEEP_STEPS),
        "sweep_paths": SWEEP_PATHS,
        "sweep_seed": SEED,
        "safety_factor": SAFETY,
        "sweep": sweep,
    }
    out = ROOT / "src" / "cavity_bayes" / "data" / "calibration.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    print(f"wrote {out} (c_bias={c_bias:.4f})")


if __name__ == "__main__":
    main()

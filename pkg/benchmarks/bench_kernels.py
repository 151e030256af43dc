"""Benchmark the numba path kernel against the pure-numpy fallback.

Run from the repository root:  python benchmarks/bench_kernels.py

The same increment blocks go through both backends; agreement is checked to
1e-12 relative before timings are reported.  Force the fallback at import
time in production code with CAVITY_BAYES_BACKEND=numpy.
"""

from __future__ import annotations

import math
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cavity_bayes import _kernels, rng  # noqa: E402


def make_batch(n_paths: int, n_steps: int, seed: int = 17) -> np.ndarray:
    z = np.empty((n_paths, n_steps, 2))
    for i in range(n_paths):
        z[i] = rng.normals(seed, i, (n_steps, 2))
    return z


def run_backend(backend: str, z: np.ndarray, bridge: bool) -> tuple[tuple, float]:
    centers = np.array([[0.0, 0.0]])
    radii = np.array([0.5])
    t0 = time.perf_counter()
    out = _kernels.simulate_batch(
        z, (1.0, 0.0), 1.0, (0.0, 0.0), 1.0, centers, radii,
        _kernels.PSI_CONSTANT, 1.0, 0.0, bridge, backend=backend,
    )
    return out, time.perf_counter() - t0


def main() -> None:
    if _kernels.BACKEND != "numba":
        print("numba unavailable; only the numpy fallback can run here.")
        return

    sizes = [(2000, 250), (4000, 500), (8000, 1000)]
    print(f"{'paths':>8} {'steps':>6} {'mode':>9} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for n_paths, n_steps in sizes:
        z = make_batch(n_paths, n_steps)
        for bridge in (False, True):
            mode = "bridge" if bridge else "endpoint"
            run_backend("numba", z[:64], bridge)  # warm the JIT
            out_nb, t_nb = run_backend("numba", z, bridge)
            out_np, t_np = run_backend("numpy", z, bridge)
            for a, b in zip(out_nb, out_np):
                np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
            print(
                f"{n_paths:>8} {n_steps:>6} {mode:>9} {t_nb * 1e3:>8.1f}ms {t_np * 1e3:>8.1f}ms "
                f"{t_np / t_nb:>7.1f}x"
            )
    print("backends agree to 1e-12 relative on every output")


if __name__ == "__main__":
    main()

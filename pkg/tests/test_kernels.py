import math
import os
import subprocess
import sys

import numpy as np
import pytest

from cavity_bayes import _kernels, rng
from cavity_bayes.forward import BoundaryFlux, SolverConfig, estimate_u
from cavity_bayes.geometry import conductor


def _increments(n_paths, n_steps, seed=3):
    z = np.empty((n_paths, n_steps, 2))
    for i in range(n_paths):
        z[i] = rng.normals(seed, i, (n_steps, 2))
    return z


def _run(backend, bridge=False, cavities=(((0.0, 0.0), 0.5),), psi_kind=0, amp=1.0):
    z = _increments(256, 400)
    centers = np.array([c for c, _ in cavities], dtype=float).reshape(-1, 2)
    radii = np.array([r for _, r in cavities], dtype=float)
    return _kernels.simulate_batch(
        z, (1.0, 0.0), 1.0, (0.0, 0.0), 1.0, centers, radii, psi_kind, amp, 2 * math.pi, bridge, backend=backend
    )


def test_backends_agree():
    if _kernels.BACKEND != "numba":
        pytest.skip("numba backend unavailable")
    for bridge in (False, True):
        for kind in (0, 1):
            a = _run("numba", bridge=bridge, psi_kind=kind)
            b = _run("numpy", bridge=bridge, psi_kind=kind)
            for x, y in zip(a, b):
                np.testing.assert_allclose(x, y, rtol=1e-12, atol=1e-15)


def test_stopped_below_unstopped_exactly():
    for backend in ("numba", "numpy") if _kernels.BACKEND == "numba" else ("numpy",):
        stopped, unstopped, tau, local = _run(backend)
        assert np.all(stopped <= unstopped)
        hit = np.isfinite(tau)
        assert hit.any()
        assert np.all(stopped[~hit] == unstopped[~hit])


def test_no_cavities_never_stops():
    z = _increments(128, 200)
    stopped, unstopped, tau, local = _kernels.simulate_batch(
        z, (1.0, 0.0), 1.0, (0.0, 0.0), 1.0, np.empty((0, 2)), np.empty(0), 0, 1.0, 0.0, False
    )
    assert np.all(np.isinf(tau))
    assert np.array_equal(stopped, unstopped)
    assert np.all(local > 0)  # started on the boundary, reflection is certain


def test_zero_flux_zero_functional():
    stopped, unstopped, tau, local = _run("numpy", amp=0.0)
    assert np.all(stopped == 0.0)
    assert np.all(unstopped == 0.0)
    assert np.all(local >= 0.0)


def test_bridge_stops_no_later_than_endpoint():
    endpoint = _run("numpy", bridge=False)
    bridge = _run("numpy", bridge=True)
    assert np.all(bridge[2] <= endpoint[2] + 1e-15)
    assert np.isfinite(bridge[2]).sum() >= np.isfinite(endpoint[2]).sum()


def test_worker_count_does_not_change_results():
    dom = conductor(cavities=[((0.0, 0.0), 0.5)])
    psi = BoundaryFlux()
    cfg = SolverConfig(step=2e-3, n_paths=1500, base_seed=99)
    results = {}
    for workers in ("1", "4", "8"):
        os.environ["CAVITY_BAYES_THREADS"] = workers
        try:
            est = estimate_u(1.0, (1.0, 0.0), dom, psi, cfg)
        finally:
            os.environ.pop("CAVITY_BAYES_THREADS", None)
        results[workers] = (est.mean, est.std_error)
    assert results["1"] == results["4"] == results["8"]


def test_env_flag_selects_numpy_backend():
    code = (
        "import os; os.environ['CAVITY_BAYES_BACKEND']='numpy'; "
        "from cavity_bayes import _kernels; print(_kernels.BACKEND)"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"

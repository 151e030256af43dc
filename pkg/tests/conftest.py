import numpy as np
import pytest

from cavity_bayes import rng
from cavity_bayes.bayes import ForwardTable
from cavity_bayes.forward import BoundaryFlux, ForwardCache, ObservationGrid, SolverConfig, bound_cf, forward
from cavity_bayes.priors import benchmark_grid_family, enumerate_finite

BENCH_SEED = 20260808


@pytest.fixture(scope="session")
def bench():
    """Small 16-domain benchmark with its forward table (shared, cached)."""
    prior = enumerate_finite(benchmark_grid_family())
    grid = ObservationGrid()
    psi = BoundaryFlux()
    cfg = SolverConfig(step=4e-3, n_paths=512, base_seed=rng.substream_seed(BENCH_SEED, "forward"))
    cache = ForwardCache()
    table = ForwardTable.compute(prior, grid, psi, cfg, cache=cache)
    cf = bound_cf(psi, grid, prior.domains[0].outer, cfg, cache=cache)
    truth = prior.domains[5]
    f_truth = forward(truth, grid, psi, cfg, cache=cache)
    return {
        "prior": prior,
        "grid": grid,
        "psi": psi,
        "cfg": cfg,
        "cache": cache,
        "table": table,
        "cf": cf,
        "truth": truth,
        "f_truth": f_truth,
    }

import math

import numpy as np
import pytest

from cavity_bayes.calibration import load_calibration
from cavity_bayes.radial import MeshTooCoarse, radial_oracle, richardson_value


def test_zero_time_is_zero():
    assert radial_oracle(0.0, 0.8, 1.0, 0.5, 1.0) == 0.0


def test_zero_flux_is_zero():
    assert radial_oracle(1.0, 0.8, 1.0, 0.5, 0.0) == 0.0


def test_mesh_too_coarse_rejected():
    with pytest.raises(MeshTooCoarse):
        radial_oracle(1.0, 0.8, 1.0, 0.5, 1.0, n_r=4, n_t=64)
    with pytest.raises(MeshTooCoarse):
        radial_oracle(1.0, 0.8, 1.0, 0.5, 1.0, n_r=64, n_t=4)


def test_bad_geometry_rejected():
    with pytest.raises(ValueError):
        radial_oracle(1.0, 0.4, 1.0, 0.5, 1.0)


def test_monotone_in_time_and_radius():
    vals_t = [radial_oracle(t, 1.0, 1.0, 0.5, 1.0, 128, 128) for t in (0.25, 0.5, 1.0, 2.0)]
    assert all(b > a for a, b in zip(vals_t, vals_t[1:]))
    vals_r = [radial_oracle(1.0, r, 1.0, 0.5, 1.0, 256, 256) for r in (0.55, 0.7, 0.85, 1.0)]
    assert all(b > a for a, b in zip(vals_r, vals_r[1:]))


def test_second_order_convergence():
    vals = [radial_oracle(1.0, 1.0, 1.0, 0.5, 1.0, m, m) for m in (64, 128, 256, 512)]
    diffs = [abs(b - a) for a, b in zip(vals, vals[1:])]
    ratios = [a / b for a, b in zip(diffs, diffs[1:])]
    for ratio in ratios:
        assert 3.0 < ratio < 5.0  # halving the mesh quarters the error


def test_golden_constant_matches_calibration():
    cal = load_calibration()
    value, spread = richardson_value(1.0, 1.0, 1.0, 0.5, 1.0, meshes=(64, 128, 256))
    assert value == pytest.approx(cal["annulus_golden_u"], abs=1e-12)
    assert spread < 1e-8
    finer, _ = richardson_value(1.0, 1.0, 1.0, 0.5, 1.0, meshes=(256, 512, 1024))
    assert finer == pytest.approx(value, abs=5e-9)


def test_long_time_approaches_log_profile():
    # Steady state solves (u_rr + u_r/r) = 0 with these boundary conditions.
    val = radial_oracle(20.0, 1.0, 1.0, 0.5, 1.0, 256, 1024)
    assert val == pytest.approx(math.log(2.0), abs=1e-3)

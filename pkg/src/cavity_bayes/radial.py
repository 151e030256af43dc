"""Deterministic reference solution for the radially symmetric benchmark.

For an annulus ``rho_c < r < R`` with the temperature pinned to zero on the
inner circle, constant influx ``psi`` on the outer circle, and zero initial
data, the heat problem reduces to

    u_t = (u_rr + u_r / r) / 2,   u(t, rho_c) = 0,   u_r(t, R) = psi.

This module solves it with Crank-Nicolson on a uniform radial mesh (ghost
node at the Neumann end) and a Rannacher startup -- the first two steps run
as four backward-Euler half-steps, which restores second-order accuracy in
time despite the flux switching on discontinuously at t = 0.  It also
provides the Richardson-extrapolated value used as the golden constant for
the Monte Carlo solver's oracle test.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


class MeshTooCoarse(ValueError):
    """Radial oracle called with fewer than 8 cells in space or time."""


def radial_oracle(
    t: float,
    r: float,
    outer_radius: float,
    cavity_radius: float,
    psi_const: float,
    n_r: int = 256,
    n_t: int = 256,
) -> float:
    """Annulus temperature at time ``t`` and radius ``r``.

    ``n_r`` radial cells on [cavity_radius, outer_radius], ``n_t`` time steps
    on [0, t].  Interpolates linearly in r between mesh nodes.
    """
    if not 0 < cavity_radius < r <= outer_radius:
        raise ValueError(f"need 0 < rho_c < r <= R, got rho_c={cavity_radius}, r={r}, R={outer_radius}")
    if n_r < 8 or n_t < 8:
        raise MeshTooCoarse(f"n_r={n_r}, n_t={n_t}; need at least 8 of each")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0.0 or psi_const == 0.0:
        return 0.0

    profile = _solve_profile(t, outer_radius, cavity_radius, psi_const, n_r, n_t)
    rs = np.linspace(cavity_radius, outer_radius, n_r + 1)
    return float(np.interp(r, rs, profile))


def _solve_profile(t, outer_radius, cavity_radius, psi_const, n_r, n_t) -> np.ndarray:
    """Crank-Nicolson march; returns u(t, r_j) on the full radial mesh."""
    dr = (outer_radius - cavity_radius) / n_r
    dt = t / n_t
    rs = cavity_radius + dr * np.arange(n_r + 1)

    # Spatial operator L u = (u_rr + u_r/r)/2 on unknowns u_1..u_n (u_0 = 0).
    n = n_r
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    source = np.zeros(n)
    rj = rs[1:]
    sub[:] = 0.5 / dr**2 - 0.25 / (dr * rj)
    diag[:] = -1.0 / dr**2
    sup[:] = 0.5 / dr**2 + 0.25 / (dr * rj)
    # Neumann end via ghost node u_{n+1} = u_{n-1} + 2 dr psi.
    sub[-1] = 1.0 / dr**2
    sup[-1] = 0.0
    source[-1] = psi_const / dr + psi_const / (2.0 * rs[-1])

    def implicit_band(theta_dt: float) -> np.ndarray:
        upper = np.zeros(n)
        upper[1:] = -theta_dt * sup[:-1]
        lower = np.zeros(n)
        lower[:-1] = -theta_dt * sub[1:]
        return np.vstack([upper, 1.0 - theta_dt * diag, lower])

    # Backward Euler with step dt/2 shares the Crank-Nicolson implicit matrix.
    band_cn = implicit_band(0.5 * dt)

    u = np.zeros(n)
    startup = min(2, n_t)
    for step in range(n_t):
        if step < startup:
            for _ in range(2):
                u = solve_banded((1, 1), band_cn, u + 0.5 * dt * source)
        else:
            rhs = u + 0.5 * dt * (diag * u) + dt * source
            rhs[1:] += 0.5 * dt * sub[1:] * u[:-1]
            rhs[:-1] += 0.5 * dt * sup[:-1] * u[1:]
            u = solve_banded((1, 1), band_cn, rhs)
    return np.concatenate([[0.0], u])


def richardson_value(
    t: float,
    r: float,
    outer_radius: float,
    cavity_radius: float,
    psi_const: float,
    meshes: tuple[int, ...] = (64, 128, 256),
) -> tuple[float, float]:
    """Mesh-refinement limit of the oracle at one point.

    Runs the solver on each mesh (n_r = n_t = m), Richardson-extrapolates the
    finest pair assuming second-order convergence, and returns (value,
    extrapolation spread) where the spread is the difference between the two
    finest extrapolations -- an error estimate for the limit.
    """
    vals = [radial_oracle(t, r, outer_radius, cavity_radius, psi_const, m, m) for m in meshes]
    extr = [(4.0 * vals[i + 1] - vals[i]) / 3.0 for i in range(len(vals) - 1)]
    spread = abs(extr[-1] - extr[-2]) if len(extr) >= 2 else abs(vals[-1] - extr[-1])
    return extr[-1], spread

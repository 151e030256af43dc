"""Hot path-simulation kernels.

A batch of reflected-Brownian-motion paths is marched through the outer disk:
interior moves are free, overshoots are radially projected back onto the
boundary with the projection distance accumulated as boundary local time, and
each path freezes its flux functional the first time it touches a cavity
closure (step endpoint by default, chord crossing in bridge mode).  Every
batch call returns, per path: the stopped functional, the never-stopped
functional from the same increments, the stopping time (inf if never
stopped), and the total local time.

The numba-compiled kernel is used when available; set
``CAVITY_BAYES_BACKEND=numpy`` to force the pure-numpy fallback (the
``benchmarks/bench_kernels.py`` script compares the two).  Both backends
perform the same floating-point operations in the same order, and the
stopped functional is a prefix of the unstopped accumulation, so the
pathwise inequality stopped <= unstopped is exact in floating point for
nonnegative fluxes.
"""

from __future__ import annotations

import math
import os

import numpy as np

PSI_CONSTANT = 0
PSI_SINUSOIDAL = 1


def _pick_backend() -> str:
    choice = os.environ.get("CAVITY_BAYES_BACKEND", "").strip().lower()
    if choice in ("numpy", "python"):
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise ImportError("CAVITY_BAYES_BACKEND=numba but numba is not installed")
        return "numpy"
    return "numba"


BACKEND = _pick_backend()


def _simulate_batch_py(
    increments,
    x0x,
    x0y,
    horizon,
    n_steps,
    ocx,
    ocy,
    outer_radius,
    cav_x,
    cav_y,
    cav_r,
    psi_kind,
    psi_amp,
    psi_omega,
    bridge,
    out_stopped,
    out_unstopped,
    out_tau,
    out_local,
):
    n_paths = increments.shape[0]
    h = horizon / n_steps
    sh = math.sqrt(h)
    n_cav = cav_x.shape[0]
    for i in range(n_paths):
        x = x0x
        y = x0y
        acc = 0.0
        local = 0.0
        hit = False
        stopped_val = 0.0
        tau = math.inf
        for n in range(n_steps):
            px = x + sh * increments[i, n, 0]
            py = y + sh * increments[i, n, 1]
            dx = px - ocx
            dy = py - ocy
            rr = math.sqrt(dx * dx + dy * dy)
            d_local = 0.0
            if rr > outer_radius:
                d_local = rr - outer_radius
                scale = outer_radius / rr
                px = ocx + dx * scale
                py = ocy + dy * scale
            if not hit and n_cav > 0:
                s_hit = -1.0
                if bridge:
                    ex = px - x
                    ey = py - y
                    a = ex * ex + ey * ey
                    for c in range(n_cav):
                        fx = x - cav_x[c]
                        fy = y - cav_y[c]
                        cc = fx * fx + fy * fy - cav_r[c] * cav_r[c]
                        if cc <= 0.0:
                            s_hit = 0.0
                            break
                        if a > 0.0:
                            b = 2.0 * (fx * ex + fy * ey)
                            disc = b * b - 4.0 * a * cc
                            if disc >= 0.0:
                                s = (-b - math.sqrt(disc)) / (2.0 * a)
                                if 0.0 <= s <= 1.0 and (s_hit < 0.0 or s < s_hit):
                                    s_hit = s
                else:
                    for c in range(n_cav):
                        fx = px - cav_x[c]
                        fy = py - cav_y[c]
                        if fx * fx + fy * fy <= cav_r[c] * cav_r[c]:
                            s_hit = 1.0
                            break
                if s_hit >= 0.0:
                    hit = True
                    stopped_val = acc
                    tau = (n + s_hit) * h
            if d_local != 0.0:
                if psi_kind == PSI_CONSTANT:
                    psi_val = psi_amp
                else:
                    psi_val = psi_amp * (1.0 + math.sin(psi_omega * (horizon - n * h)))
                acc += psi_val * d_local
                local += d_local
            x = px
            y = py
        if not hit:
            stopped_val = acc
        out_stopped[i] = stopped_val
        out_unstopped[i] = acc
        out_tau[i] = tau
        out_local[i] = local


if BACKEND == "numba":
    from numba import njit

    _simulate_batch_numba = njit(cache=True, nogil=True)(_simulate_batch_py)


def _simulate_batch_numpy(
    increments,
    x0x,
    x0y,
    horizon,
    n_steps,
    ocx,
    ocy,
    outer_radius,
    cav_x,
    cav_y,
    cav_r,
    psi_kind,
    psi_amp,
    psi_omega,
    bridge,
    out_stopped,
    out_unstopped,
    out_tau,
    out_local,
):
    """Vectorized-over-paths fallback with the same semantics as the kernel."""
    n_paths = increments.shape[0]
    h = horizon / n_steps
    sh = math.sqrt(h)
    n_cav = cav_x.shape[0]
    pos_x = np.full(n_paths, x0x)
    pos_y = np.full(n_paths, x0y)
    acc = np.zeros(n_paths)
    local = np.zeros(n_paths)
    hit = np.zeros(n_paths, dtype=bool)
    out_tau[:] = np.inf
    out_stopped[:] = 0.0
    for n in range(n_steps):
        px = pos_x + sh * increments[:, n, 0]
        py = pos_y + sh * increments[:, n, 1]
        dx = px - ocx
        dy = py - ocy
        rr = np.sqrt(dx * dx + dy * dy)
        outside = rr > outer_radius
        d_local = np.where(outside, rr - outer_radius, 0.0)
        scale = np.where(outside, outer_radius / np.where(rr > 0.0, rr, 1.0), 1.0)
        px = np.where(outside, ocx + dx * scale, px)
        py = np.where(outside, ocy + dy * scale, py)
        if n_cav > 0:
            s_hit = np.full(n_paths, -1.0)
            if bridge:
                ex = px - pos_x
                ey = py - pos_y
                a = ex * ex + ey * ey
                for c in range(n_cav):
                    fx = pos_x - cav_x[c]
                    fy = pos_y - cav_y[c]
                    cc = fx * fx + fy * fy - cav_r[c] * cav_r[c]
                    b = 2.0 * (fx * ex + fy * ey)
                    disc = b * b - 4.0 * a * cc
                    ok = (disc >= 0.0) & (a > 0.0)
                    s = np.where(ok, (-b - np.sqrt(np.where(ok, disc, 0.0))) / np.where(a > 0.0, 2.0 * a, 1.0), -1.0)
                    s = np.where((s >= 0.0) & (s <= 1.0), s, -1.0)
                    s = np.where(cc <= 0.0, 0.0, s)
                    better = (s >= 0.0) & ((s_hit < 0.0) | (s < s_hit))
                    s_hit = np.where(better, s, s_hit)
            else:
                inside_any = np.zeros(n_paths, dtype=bool)
                for c in range(n_cav):
                    fx = px - cav_x[c]
                    fy = py - cav_y[c]
                    inside_any |= fx * fx + fy * fy <= cav_r[c] * cav_r[c]
                s_hit = np.where(inside_any, 1.0, -1.0)
            newly = (s_hit >= 0.0) & ~hit
            out_stopped[newly] = acc[newly]
            out_tau[newly] = (n + s_hit[newly]) * h
            hit |= newly
        if psi_kind == PSI_CONSTANT:
            psi_val = psi_amp
        else:
            psi_val = psi_amp * (1.0 + math.sin(psi_omega * (horizon - n * h)))
        acc += psi_val * d_local
        local += d_local
        pos_x = px
        pos_y = py
    out_stopped[~hit] = acc[~hit]
    out_unstopped[:] = acc
    out_local[:] = local


def simulate_batch(
    increments: np.ndarray,
    x0: tuple[float, float],
    horizon: float,
    outer_center: tuple[float, float],
    outer_radius: float,
    cav_centers: np.ndarray,
    cav_radii: np.ndarray,
    psi_kind: int,
    psi_amp: float,
    psi_omega: float,
    bridge: bool,
    backend: str | None = None,
):
    """Run one batch of paths; returns (stopped, unstopped, tau, local_time)."""
    increments = np.ascontiguousarray(increments, dtype=np.float64)
    n_paths, n_steps = increments.shape[0], increments.shape[1]
    if n_steps < 1:
        raise ValueError("need at least one step")
    cav_centers = np.asarray(cav_centers, dtype=np.float64).reshape(-1, 2)
    cav_x = np.ascontiguousarray(cav_centers[:, 0])
    cav_y = np.ascontiguousarray(cav_centers[:, 1])
    cav_r = np.ascontiguousarray(np.asarray(cav_radii, dtype=np.float64).reshape(-1))
    out_stopped = np.empty(n_paths)
    out_unstopped = np.empty(n_paths)
    out_tau = np.empty(n_paths)
    out_local = np.empty(n_paths)
    use = backend or BACKEND
    fn = _simulate_batch_numba if use == "numba" else _simulate_batch_numpy
    fn(
        increments,
        float(x0[0]),
        float(x0[1]),
        float(horizon),
        int(n_steps),
        float(outer_center[0]),
        float(outer_center[1]),
        float(outer_radius),
        cav_x,
        cav_y,
        cav_r,
        int(psi_kind),
        float(psi_amp),
        float(psi_omega),
        bool(bridge),
        out_stopped,
        out_unstopped,
        out_tau,
        out_local,
    )
    return out_stopped, out_unstopped, out_tau, out_local

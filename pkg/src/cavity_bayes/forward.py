"""Monte Carlo forward solver for the cavity heat problem.

The temperature at (t, x) is the expected flux-weighted boundary local time
of a reflected Brownian motion started at x and killed on first cavity
contact; the forward operator averages that field over an observation grid
on the accessible boundary arc.  Paths draw their increments from
counter-based streams keyed by (seed, path index), so results are
bit-identical for a fixed seed no matter how many workers run the batches.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels, rng
from .geometry import ConductorDomain, OuterDomain, canonical_json, conductor
from .radial import radial_oracle  # noqa: F401  (re-exported: the forward oracle)


class StartInsideCavity(ValueError):
    """Path start point lies in a cavity closure (or outside the conductor)."""


@dataclass(frozen=True)
class BoundaryFlux:
    """Prescribed outward heat flux on the outer boundary.

    Two shipped shapes, both Lipschitz in (t, x) by construction:
    ``constant`` is psi = amplitude, ``sinusoidal`` is
    psi = amplitude * (1 + sin(omega * t)).  Neither depends on x.
    """

    kind: str = "constant"
    amplitude: float = 1.0
    omega: float = 2.0 * math.pi

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoidal"):
            raise ValueError(f"unknown flux kind: {self.kind}")
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")

    @property
    def kind_code(self) -> int:
        return _kernels.PSI_CONSTANT if self.kind == "constant" else _kernels.PSI_SINUSOIDAL

    @property
    def lipschitz_constant(self) -> float:
        return 0.0 if self.kind == "constant" else abs(self.amplitude * self.omega)

    @property
    def nonnegative(self) -> bool:
        return self.amplitude >= 0.0

    def __call__(self, t: float, x=None) -> float:
        if self.kind == "constant":
            return self.amplitude
        return self.amplitude * (1.0 + math.sin(self.omega * t))

    def positive_part(self) -> "BoundaryFlux":
        return self if self.nonnegative else BoundaryFlux(self.kind, 0.0, self.omega)

    def negative_part(self) -> "BoundaryFlux":
        return BoundaryFlux(self.kind, 0.0, self.omega) if self.nonnegative else self

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "omega": self.omega}


@dataclass(frozen=True)
class ObservationGrid:
    """Uniform time cells on [0, T] crossed with equal arc cells on the
    accessible boundary arc; midpoint quadrature per cell, components ordered
    time-major."""

    horizon: float = 1.0
    m_t: int = 4
    m_a: int = 4
    arc: tuple[float, float] = (0.0, math.pi / 2.0)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.m_t < 1 or self.m_a < 1:
            raise ValueError("need at least one cell per axis")
        theta0, theta1 = self.arc
        if not 0.0 < theta1 - theta0 <= 2.0 * math.pi + 1e-12:
            raise ValueError(f"arc must satisfy 0 < theta1 - theta0 <= 2*pi, got {self.arc}")
        object.__setattr__(self, "arc", (float(theta0), float(theta1)))

    @property
    def m(self) -> int:
        return self.m_t * self.m_a

    def arc_measure(self, outer: OuterDomain) -> float:
        return outer.radius * (self.arc[1] - self.arc[0])

    def nodes(self, outer: OuterDomain, refine: int = 1) -> list[dict]:
        """Quadrature nodes, one list entry per component (i-major, j-minor).

        Each entry carries ``refine**2`` midpoint subnodes (time, point,
        weight) whose weights sum to the cell measure (T/m_t) * |A_j|.
        """
        dt_cell = self.horizon / self.m_t
        dth_cell = (self.arc[1] - self.arc[0]) / self.m_a
        cell_arc = outer.radius * dth_cell
        out = []
        for i in range(self.m_t):
            for j in range(self.m_a):
                subnodes = []
                for si in range(refine):
                    t_mid = i * dt_cell + (si + 0.5) * dt_cell / refine
                    for sj in range(refine):
                        theta = self.arc[0] + j * dth_cell + (sj + 0.5) * dth_cell / refine
                        point = (
                            outer.center[0] + outer.radius * math.cos(theta),
                            outer.center[1] + outer.radius * math.sin(theta),
                        )
                        weight = (dt_cell / refine) * (cell_arc / refine)
                        subnodes.append({"t": t_mid, "point": point, "weight": weight, "sub": (si, sj)})
                out.append({"i": i, "j": j, "subnodes": subnodes})
        return out

    def to_json_dict(self) -> dict:
        return {"horizon": self.horizon, "m_t": self.m_t, "m_a": self.m_a, "arc": list(self.arc)}


@dataclass(frozen=True)
class SolverConfig:
    """Path-simulation parameters; ``base_seed`` keys every random stream."""

    step: float = 2e-3
    n_paths: int = 4096
    base_seed: int = 0
    crossing_check: str = "endpoint"
    quadrature_refine: int = 1

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.n_paths < 1:
            raise ValueError("need at least one path")
        if self.crossing_check not in ("endpoint", "bridge"):
            raise ValueError(f"unknown crossing check: {self.crossing_check}")
        if self.quadrature_refine < 1:
            raise ValueError("quadrature_refine must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "n_paths": self.n_paths,
            "base_seed": self.base_seed,
            "crossing_check": self.crossing_check,
            "quadrature_refine": self.quadrature_refine,
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_json_dict()).encode()).hexdigest()


@dataclass(frozen=True)
class FieldEstimate:
    """Monte Carlo estimate of the temperature field at one (t, x)."""

    mean: float
    std_error: float
    n_paths: int


@dataclass
class ReflectedPathState:
    """State of one discrete path: position, accumulated local time, stopping."""

    position: tuple[float, float]
    local_time: float
    stopped: bool
    tau: float = math.inf


@dataclass(eq=False)
class ObservationVector:
    """Finitized observation y in R^m with per-component standard errors."""

    values: np.ndarray
    std_errors: np.ndarray | None = None
    grid: ObservationGrid | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.std_errors is not None:
            self.std_errors = np.asarray(self.std_errors, dtype=float).reshape(-1)
            if self.std_errors.shape != self.values.shape:
                raise ValueError("std_errors must match values in length")

    @property
    def m(self) -> int:
        return self.values.size


def worker_count() -> int:
    """Worker cap from CAVITY_BAYES_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("CAVITY_BAYES_THREADS", "1")))
    except ValueError:
        return 1


def reflect_step(
    x: tuple[float, float], increment: tuple[float, float], outer: OuterDomain
) -> tuple[tuple[float, float], float]:
    """One projected Euler step: move, then radially project any overshoot.

    Returns the new position and the local-time increment (the projection
    distance, zero for interior moves).
    """
    px = x[0] + increment[0]
    py = x[1] + increment[1]
    dx = px - outer.center[0]
    dy = py - outer.center[1]
    dist = math.hypot(dx, dy)
    if dist <= outer.radius:
        return (px, py), 0.0
    scale = outer.radius / dist
    return (outer.center[0] + dx * scale, outer.center[1] + dy * scale), dist - outer.radius


def _check_start(x0, domain: ConductorDomain) -> None:
    dx = x0[0] - domain.outer.center[0]
    dy = x0[1] - domain.outer.center[1]
    if math.hypot(dx, dy) > domain.outer.radius + 1e-12:
        raise StartInsideCavity(f"start point {tuple(x0)} lies outside the conductor closure")
    for cav in domain.cavities:
        if math.hypot(x0[0] - cav.center[0], x0[1] - cav.center[1]) <= cav.radius:
            raise StartInsideCavity(f"start point {tuple(x0)} lies in a cavity closure")


def _steps_for(t: float, step: float) -> tuple[int, float]:
    n_steps = max(1, round(t / step))
    return n_steps, t / n_steps


def _cavity_arrays(domain: ConductorDomain) -> tuple[np.ndarray, np.ndarray]:
    centers = np.array([c.center for c in domain.cavities], dtype=float).reshape(-1, 2)
    radii = np.array([c.radius for c in domain.cavities], dtype=float)
    return centers, radii


def _batch_size(n_steps: int) -> int:
    # Keep each increments block near 64 MB.
    return max(256, min(65536, int(4_000_000 / max(1, n_steps))))


def simulate_path_batches(
    x0,
    t: float,
    domain: ConductorDomain,
    psi: BoundaryFlux,
    cfg: SolverConfig,
    stream_seed: int | None = None,
):
    """All paths for one field point: per-path stopped/unstopped functionals,
    stopping times, and local times, in path-index order.

    Batches may run on any number of threads (CAVITY_BAYES_THREADS); each path
    owns the counter-based stream keyed by (stream seed, path index), and
    results land in preallocated index-ordered arrays, so the output is
    independent of scheduling.
    """
    _check_start(x0, domain)
    seed = cfg.base_seed if stream_seed is None else stream_seed
    n_paths = cfg.n_paths
    stopped = np.empty(n_paths)
    unstopped = np.empty(n_paths)
    tau = np.empty(n_paths)
    local = np.empty(n_paths)
    if t == 0.0:
        stopped.fill(0.0)
        unstopped.fill(0.0)
        tau.fill(math.inf)
        local.fill(0.0)
        return stopped, unstopped, tau, local

    n_steps, _ = _steps_for(t, cfg.step)
    centers, radii = _cavity_arrays(domain)
    bsize = _batch_size(n_steps)
    spans = [(s, min(s + bsize, n_paths)) for s in range(0, n_paths, bsize)]

    def run_span(span):
        lo, hi = span
        z = np.empty((hi - lo, n_steps, 2))
        for i in range(lo, hi):
            z[i - lo] = rng.normals(seed, i, (n_steps, 2))
        s, u, tt, ll = _kernels.simulate_batch(
            z,
            x0,
            t,
            domain.outer.center,
            domain.outer.radius,
            centers,
            radii,
            psi.kind_code,
            psi.amplitude,
            psi.omega,
            cfg.crossing_check == "bridge",
        )
        stopped[lo:hi] = s
        unstopped[lo:hi] = u
        tau[lo:hi] = tt
        local[lo:hi] = ll

    workers = worker_count()
    if workers == 1 or len(spans) == 1:
        for span in spans:
            run_span(span)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_span, spans))
    return stopped, unstopped, tau, local


def simulate_path(
    x0,
    t: float,
    domain: ConductorDomain,
    psi: BoundaryFlux,
    cfg: SolverConfig,
    path_index: int,
) -> tuple[float, float]:
    """One path's flux functional and stopping time (inf if never stopped)."""
    _check_start(x0, domain)
    if t == 0.0:
        return 0.0, math.inf
    n_steps, _ = _steps_for(t, cfg.step)
    z = rng.normals(cfg.base_seed, path_index, (n_steps, 2))[None, :, :]
    centers, radii = _cavity_arrays(domain)
    s, _, tau, _ = _kernels.simulate_batch(
        z,
        x0,
        t,
        domain.outer.center,
        domain.outer.radius,
        centers,
        radii,
        psi.kind_code,
        psi.amplitude,
        psi.omega,
        cfg.crossing_check == "bridge",
    )
    return float(s[0]), float(tau[0])


def simulate_path_trace(
    x0,
    t: float,
    domain: ConductorDomain,
    psi: BoundaryFlux,
    cfg: SolverConfig,
    path_index: int,
) -> tuple[list[ReflectedPathState], float]:
    """Reference re-implementation of one path that records every state.

    Mirrors the kernel step for step (same increments, same arithmetic); used
    by tests to check the in-closure/monotone-local-time invariants and kernel
    parity.  Returns (states, functional).
    """
    _check_start(x0, domain)
    n_steps, h = _steps_for(t, cfg.step)
    z = rng.normals(cfg.base_seed, path_index, (n_steps, 2))
    sh = math.sqrt(h)
    state = ReflectedPathState(position=(float(x0[0]), float(x0[1])), local_time=0.0, stopped=False)
    states = [ReflectedPathState(state.position, 0.0, False)]
    acc = 0.0
    for n in range(n_steps):
        pos, d_local = reflect_step(state.position, (sh * z[n, 0], sh * z[n, 1]), domain.outer)
        if not state.stopped:
            hit = False
            s_hit = 1.0
            if cfg.crossing_check == "bridge":
                s_hit = _segment_hit(state.position, pos, domain)
                hit = s_hit >= 0.0
            else:
                for cav in domain.cavities:
                    if math.hypot(pos[0] - cav.center[0], pos[1] - cav.center[1]) <= cav.radius:
                        hit = True
                        break
            if hit:
                state.stopped = True
                state.tau = (n + (s_hit if cfg.crossing_check == "bridge" else 1.0)) * h
            elif d_local != 0.0:
                acc += psi(t - n * h) * d_local
        state = ReflectedPathState(
            position=pos,
            local_time=state.local_time + d_local,
            stopped=state.stopped,
            tau=state.tau,
        )
        states.append(state)
    return states, acc


def _segment_hit(p, q, domain: ConductorDomain) -> float:
    """Earliest parameter s in [0, 1] where segment p->q meets a cavity closure,
    or -1.0 if none."""
    ex, ey = q[0] - p[0], q[1] - p[1]
    a = ex * ex + ey * ey
    best = -1.0
    for cav in domain.cavities:
        fx, fy = p[0] - cav.center[0], p[1] - cav.center[1]
        cc = fx * fx + fy * fy - cav.radius * cav.radius
        if cc <= 0.0:
            return 0.0
        if a <= 0.0:
            continue
        b = 2.0 * (fx * ex + fy * ey)
        disc = b * b - 4.0 * a * cc
        if disc < 0.0:
            continue
        s = (-b - math.sqrt(disc)) / (2.0 * a)
        if 0.0 <= s <= 1.0 and (best < 0.0 or s < best):
            best = s
    return best


def _fsum_mean_se(values: np.ndarray) -> tuple[float, float]:
    """Mean and standard error via exact (order-insensitive) summation."""
    n = values.size
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(max(var, 0.0) / n)


def estimate_u(
    t: float,
    x,
    domain: ConductorDomain,
    psi: BoundaryFlux,
    cfg: SolverConfig,
    stream_seed: int | None = None,
) -> FieldEstimate:
    """Temperature estimate at (t, x): mean and standard error over the paths."""
    stopped, _, _, _ = simulate_path_batches(x, t, domain, psi, cfg, stream_seed=stream_seed)
    mean, se = _fsum_mean_se(stopped)
    return FieldEstimate(mean=mean, std_error=se, n_paths=cfg.n_paths)


def finitize(u_sampler, grid: ObservationGrid, outer: OuterDomain, refine: int = 1) -> ObservationVector:
    """Apply the averaging finitization: each component approximates the
    space-time cell integral of the field by midpoint quadrature.

    ``u_sampler(t, point)`` must return a ``FieldEstimate``; standard errors
    combine in quadrature across subnodes.
    """
    values = []
    errors = []
    for node in grid.nodes(outer, refine=refine):
        total = 0.0
        var = 0.0
        for sub in node["subnodes"]:
            est = u_sampler(sub["t"], sub["point"])
            total += sub["weight"] * est.mean
            var += (sub["weight"] * est.std_error) ** 2
        values.append(total)
        errors.append(math.sqrt(var))
    return ObservationVector(np.array(values), np.array(errors), grid)


def node_stream_seed(cfg: SolverConfig, node_i: int, node_j: int, sub: tuple[int, int]) -> int:
    """Stream seed for one quadrature node; depends on the seed and node only,
    never on the domain, so distinct conductors share increments (common
    random numbers)."""
    return rng.substream_seed(cfg.base_seed, "node", node_i, node_j, sub[0], sub[1])


def forward(
    domain: ConductorDomain,
    grid: ObservationGrid,
    psi: BoundaryFlux,
    cfg: SolverConfig,
    cache: "ForwardCache | None" = None,
    unstopped: bool = False,
) -> ObservationVector:
    """Forward observation vector for one conductor (finitize of the field).

    With ``unstopped=True`` the cavities are ignored (paths never stop), which
    yields the flux-positive comparison field used by the norm bound.  Results
    are cached under (domain hash, grid, flux, solver config) when a cache is
    supplied.
    """
    if cfg.step > grid.horizon:
        raise ValueError("solver step exceeds the grid horizon")
    work_domain = conductor(domain.outer, []) if unstopped else domain
    key = None
    if cache is not None:
        key = cache.key(work_domain, grid, psi, cfg)
        hit = cache.get(key)
        if hit is not None:
            return ObservationVector(hit["y"], hit["se"], grid)
    values = []
    errors = []
    for node in grid.nodes(domain.outer, refine=cfg.quadrature_refine):
        total = 0.0
        var = 0.0
        for sub in node["subnodes"]:
            seed = node_stream_seed(cfg, node["i"], node["j"], sub["sub"])
            est = estimate_u(sub["t"], sub["point"], work_domain, psi, cfg, stream_seed=seed)
            total += sub["weight"] * est.mean
            var += (sub["weight"] * est.std_error) ** 2
        values.append(total)
        errors.append(math.sqrt(var))
    vec = ObservationVector(np.array(values), np.array(errors), grid)
    if cache is not None:
        cache.put(key, work_domain, grid, psi, cfg, vec)
    return vec


@dataclass(frozen=True)
class CFBound:
    """Uniform forward-norm bound with its Monte Carlo error."""

    value: float
    std_error: float


def bound_cf(
    psi: BoundaryFlux,
    grid: ObservationGrid,
    outer: OuterDomain,
    cfg: SolverConfig,
    cache: "ForwardCache | None" = None,
) -> CFBound:
    """Uniform bound on the forward norm over every admissible conductor.

    Splits the flux into nonnegative and nonpositive parts; the never-stopped
    functional of each part bounds the stopped field from above/below for any
    cavity configuration, so the norms of their finitizations sum to a valid
    bound.  With the flux shapes shipped here one part is identically zero.
    """
    empty = conductor(OuterDomain(outer.center, outer.radius), [])
    total = 0.0
    var = 0.0
    for part in (psi.positive_part(), psi.negative_part()):
        if part.amplitude == 0.0:
            continue
        vec = forward(empty, grid, part, cfg, cache=cache, unstopped=True)
        norm = float(np.linalg.norm(vec.values))
        total += norm
        if vec.std_errors is not None:
            var += float(np.sum(vec.std_errors**2))
    return CFBound(value=total, std_error=math.sqrt(var))


class ForwardCache:
    """Forward-vector cache: one JSON file per (domain, grid, flux, config).

    Concurrent readers are safe; writes go through a temp file + atomic
    rename.  Hit/miss counters expose whether paths were re-simulated.
    """

    SCHEMA = "forward_cache.v1"

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, dict] = {}
        self.hits = 0
        self.misses = 0

    def key(self, domain: ConductorDomain, grid: ObservationGrid, psi: BoundaryFlux, cfg: SolverConfig) -> str:
        blob = canonical_json(
            {
                "domain_hash": domain.content_hash(),
                "grid": grid.to_json_dict(),
                "psi": psi.to_json_dict(),
                "cfg": cfg.to_json_dict(),
            }
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        if key in self._memory:
            self.hits += 1
            return self._memory[key]
        if self.directory is not None:
            path = self._path(key)
            if path.exists():
                data = json.loads(path.read_text())
                entry = {"y": np.array(data["y"]), "se": np.array(data["se"])}
                self._memory[key] = entry
                self.hits += 1
                return entry
        self.misses += 1
        return None

    def put(
        self,
        key: str,
        domain: ConductorDomain,
        grid: ObservationGrid,
        psi: BoundaryFlux,
        cfg: SolverConfig,
        vec: ObservationVector,
    ) -> None:
        se = vec.std_errors if vec.std_errors is not None else np.zeros_like(vec.values)
        self._memory[key] = {"y": vec.values.copy(), "se": se.copy()}
        if self.directory is None:
            return
        record = {
            "schema_version": self.SCHEMA,
            "domain_hash": domain.content_hash(),
            "grid": grid.to_json_dict(),
            "psi": psi.to_json_dict(),
            "cfg_digest": cfg.digest(),
            "base_seed": cfg.base_seed,
            "y": [float(v) for v in vec.values],
            "se": [float(v) for v in se],
        }
        path = self._path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(canonical_json(record))
        tmp.replace(path)

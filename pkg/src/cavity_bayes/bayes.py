"""Posterior over cavity configurations and its stability diagnostics.

Given observation data y, each candidate conductor D is scored by the
Gaussian misfit potential exp(-|y - F(D)|^2 / (2 sigma^2)); normalizing over
a finite prior family gives the posterior ensemble, the domain-ratio field
(the posterior probability that a point lies inside the conductor), and the
Hellinger / L1 distances between posteriors for different data.  The
stability audit checks every pair of data vectors against the two
locally-Lipschitz bounds, whose constants are governed by the largest misfit
sigma(y, y') over the family.

All potentials are handled in log space and shifted by the max before
exponentiation, so small sigma / large misfits cannot underflow the weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .forward import ObservationVector
from .geometry import ConductorDomain, contains_mask


class SupportMismatch(ValueError):
    """Two posteriors do not share the same prior ensemble."""


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. mean-zero Gaussian noise, one sigma for every component."""

    sigma: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError("sigma must be positive")
        if self.m < 1:
            raise ValueError("m must be positive")


@dataclass(eq=False)
class PriorEnsemble:
    """Finite family of conductors with prior masses (exact enumeration) or
    equally weighted samples."""

    domains: list[ConductorDomain]
    probs: np.ndarray
    kind: str = "finite"  # "finite" (exact masses) | "sampled" (1/K each)
    rejection_rate: float = 0.0

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if len(self.domains) == 0:
            raise ValueError("prior ensemble must be nonempty")
        if self.probs.shape != (len(self.domains),):
            raise ValueError("probs must match domains in length")
        if np.any(self.probs < 0):
            raise ValueError("prior masses must be nonnegative")
        if abs(float(self.probs.sum()) - 1.0) > 1e-12:
            raise ValueError(f"prior masses sum to {self.probs.sum()!r}, not 1")

    @property
    def size(self) -> int:
        return len(self.domains)

    def signature(self) -> tuple:
        return tuple(d.content_hash() for d in self.domains) + tuple(self.probs.tolist())


@dataclass(eq=False)
class PosteriorEnsemble:
    """Posterior masses over a prior family for one data vector.

    ``log_potentials`` are kept alongside the normalized weights so distances
    between posteriors can be formed without re-exponentiating; ``normalized``
    records whether the Gaussian constant was included in the potential (it
    cancels from the weights either way).
    """

    prior: PriorEnsemble
    weights: np.ndarray
    log_potentials: np.ndarray
    log_evidence: float
    normalized: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.log_potentials = np.asarray(self.log_potentials, dtype=float).reshape(-1)
        if self.weights.shape != (self.prior.size,):
            raise ValueError("weights must match the prior family")
        if np.any(self.weights < 0) or abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("posterior weights must be nonnegative and sum to 1")

    @property
    def evidence(self) -> float:
        return math.exp(self.log_evidence)

    @property
    def domains(self) -> list[ConductorDomain]:
        return self.prior.domains


@dataclass(eq=False)
class DomainRatioField:
    """Posterior in-conductor probability on a grid of points."""

    points: np.ndarray  # (n, 2)
    rho: np.ndarray  # (n,)
    provenance: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.rho = np.asarray(self.rho, dtype=float).reshape(-1)
        if self.rho.shape[0] != self.points.shape[0]:
            raise ValueError("rho must match points")
        if np.any(self.rho < -1e-12) or np.any(self.rho > 1 + 1e-12):
            raise ValueError("rho must lie in [0, 1]")


def log_potential(d_values: ObservationVector | np.ndarray, y: ObservationVector | np.ndarray, noise: NoiseModel) -> float:
    fd = d_values.values if isinstance(d_values, ObservationVector) else np.asarray(d_values, float)
    yv = y.values if isinstance(y, ObservationVector) else np.asarray(y, float)
    misfit = float(np.sum((yv - fd) ** 2))
    return -misfit / (2.0 * noise.sigma**2)


def potential(d_values, y, noise: NoiseModel) -> float:
    """Gaussian misfit potential in (0, 1]; equals 1 exactly when y = F(D)."""
    return math.exp(log_potential(d_values, y, noise))


def _log_potential_matrix(f_values: np.ndarray, ys: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """(n_y, n_domains) log potentials for stacked data rows and F rows."""
    diff = ys[:, None, :] - f_values[None, :, :]
    return -np.einsum("ykm,ykm->yk", diff, diff) / (2.0 * noise.sigma**2)


class ForwardTable:
    """Stacked forward values F(D_k) for one prior family (exact enumeration)."""

    def __init__(self, prior: PriorEnsemble, f_values: np.ndarray):
        f_values = np.asarray(f_values, dtype=float)
        if f_values.shape[0] != prior.size:
            raise ValueError("need one forward row per prior domain")
        self.prior = prior
        self.f_values = f_values

    @classmethod
    def compute(cls, prior: PriorEnsemble, grid, psi, cfg, cache=None) -> "ForwardTable":
        from .forward import forward

        rows = [forward(d, grid, psi, cfg, cache=cache).values for d in prior.domains]
        return cls(prior, np.stack(rows))

    @property
    def m(self) -> int:
        return self.f_values.shape[1]


def evidence(table: ForwardTable, y, noise: NoiseModel) -> tuple[float, float | None]:
    """Prior average of the potential.

    Exact weighted sum for a finite prior (standard error ``None``); for a
    sampled prior the equal-weight average with its Monte Carlo standard
    error.
    """
    yv = np.atleast_2d(y.values if isinstance(y, ObservationVector) else np.asarray(y, float))
    logs = _log_potential_matrix(table.f_values, yv, noise)[0]
    phis = np.exp(logs)
    value = float(np.dot(table.prior.probs, phis))
    if table.prior.kind == "sampled":
        se = float(np.std(phis, ddof=1) / math.sqrt(len(phis))) if len(phis) > 1 else 0.0
        return value, se
    return value, None


def posterior(table: ForwardTable, y, noise: NoiseModel, normalized: bool = False) -> PosteriorEnsemble:
    """Posterior ensemble for data y over the table's prior family.

    ``normalized=True`` uses the density-normalized likelihood (the Gaussian
    constant included); the constant cancels in the weights, which therefore
    match the plain-potential construction to machine precision.
    """
    yv = y.values if isinstance(y, ObservationVector) else np.asarray(y, float)
    logs = _log_potential_matrix(table.f_values, np.atleast_2d(yv), noise)[0]
    shift = float(np.max(logs))
    scaled = table.prior.probs * np.exp(logs - shift)
    total = float(scaled.sum())
    weights = scaled / total
    # The Gaussian constant multiplies potential and evidence alike, so the
    # weight arithmetic is shared and the constant only shifts the logs.
    log_const = -0.5 * table.m * math.log(2.0 * math.pi * noise.sigma**2) if normalized else 0.0
    return PosteriorEnsemble(
        prior=table.prior,
        weights=weights,
        log_potentials=logs + log_const,
        log_evidence=shift + math.log(total) + log_const,
        normalized=normalized,
    )


def posterior_weights_batch(table: ForwardTable, ys: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """(n_y, n_domains) posterior weights for many data rows at once."""
    logs = _log_potential_matrix(table.f_values, np.asarray(ys, float), noise)
    shift = logs.max(axis=1, keepdims=True)
    scaled = table.prior.probs[None, :] * np.exp(logs - shift)
    return scaled / scaled.sum(axis=1, keepdims=True)


def ratio_grid_points(outer_radius: float, n: int = 64, center=(0.0, 0.0)) -> np.ndarray:
    """n x n grid of cell-center points covering the outer bounding square."""
    xs = center[0] + outer_radius * (2.0 * (np.arange(n) + 0.5) / n - 1.0)
    ys = center[1] + outer_radius * (2.0 * (np.arange(n) + 0.5) / n - 1.0)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def indicator_matrix(domains: list[ConductorDomain], points: np.ndarray) -> np.ndarray:
    """(n_domains, n_points) in-conductor indicators."""
    return np.stack([contains_mask(d, points) for d in domains]).astype(float)


def domain_ratio(post: PosteriorEnsemble, points: np.ndarray, indicators: np.ndarray | None = None) -> DomainRatioField:
    """Posterior probability, point by point, that the point lies in the
    unknown conductor."""
    if indicators is None:
        indicators = indicator_matrix(post.domains, points)
    rho = post.weights @ indicators
    return DomainRatioField(points=points, rho=np.clip(rho, 0.0, 1.0))


def _require_shared_prior(post_a: PosteriorEnsemble, post_b: PosteriorEnsemble) -> PriorEnsemble:
    if post_a.prior is not post_b.prior and post_a.prior.signature() != post_b.prior.signature():
        raise SupportMismatch("posteriors must be built from the same prior ensemble")
    return post_a.prior


def hellinger(post_a: PosteriorEnsemble, post_b: PosteriorEnsemble) -> float:
    """Hellinger distance between two posteriors over a shared prior family."""
    prior = _require_shared_prior(post_a, post_b)
    half_a = np.exp(0.5 * (post_a.log_potentials - post_a.log_evidence))
    half_b = np.exp(0.5 * (post_b.log_potentials - post_b.log_evidence))
    if post_a.normalized != post_b.normalized:
        raise SupportMismatch("mixing normalized and plain potentials")
    return math.sqrt(0.5 * float(np.dot(prior.probs, (half_a - half_b) ** 2)))


def l1_distance(post_a: PosteriorEnsemble, post_b: PosteriorEnsemble) -> float:
    """L1 distance between posterior densities relative to the prior; equals
    the total mass of weight moved, and is bounded by 2*sqrt(2) times the
    Hellinger distance."""
    _require_shared_prior(post_a, post_b)
    return float(np.abs(post_a.weights - post_b.weights).sum())


def sigma_sup(y, y_prime, f_values: np.ndarray | None = None, c_f: float | None = None) -> float:
    """Largest misfit of either data vector over the domain family.

    With the family's forward values this is an exact max; otherwise the
    upper bound max(|y|, |y'|) + C_F is returned (valid whenever |F| < C_F,
    and sound for the stability checks because both bound right-hand sides
    increase in this quantity).
    """
    yv = y.values if isinstance(y, ObservationVector) else np.asarray(y, float)
    yp = y_prime.values if isinstance(y_prime, ObservationVector) else np.asarray(y_prime, float)
    if f_values is not None and len(f_values):
        d1 = np.linalg.norm(yv[None, :] - f_values, axis=1)
        d2 = np.linalg.norm(yp[None, :] - f_values, axis=1)
        return float(np.max(np.maximum(d1, d2)))
    if c_f is None:
        raise ValueError("need forward values or a C_F bound")
    return float(max(np.linalg.norm(yv), np.linalg.norm(yp)) + c_f)


def stability_rhs_hellinger(y, y_prime, noise: NoiseModel, sup_misfit: float) -> float:
    """Hellinger-stability right-hand side; grows like exp(3 s^2 / 4 sigma^2)."""
    yv = y.values if isinstance(y, ObservationVector) else np.asarray(y, float)
    yp = y_prime.values if isinstance(y_prime, ObservationVector) else np.asarray(y_prime, float)
    dy = float(np.linalg.norm(yv - yp))
    if dy == 0.0 or sup_misfit == 0.0:
        return 0.0
    s = noise.sigma
    log_rhs = 0.75 * (sup_misfit / s) ** 2 + math.log(sup_misfit / s) + math.log(dy / s)
    return math.exp(log_rhs) if log_rhs < 709.0 else math.inf


def stability_rhs_ratio(y, y_prime, noise: NoiseModel, sup_misfit: float) -> float:
    """Domain-ratio-stability right-hand side; linear in |y - y'|."""
    yv = y.values if isinstance(y, ObservationVector) else np.asarray(y, float)
    yp = y_prime.values if isinstance(y_prime, ObservationVector) else np.asarray(y_prime, float)
    dy = float(np.linalg.norm(yv - yp))
    if dy == 0.0 or sup_misfit == 0.0:
        return 0.0
    s = noise.sigma
    log_rhs = math.log(2.0) + 0.5 * (sup_misfit / s) ** 2 + math.log(sup_misfit / s) + math.log(dy / s)
    return math.exp(log_rhs) if log_rhs < 709.0 else math.inf


@dataclass
class PairRecord:
    pair_id: int
    dy_norm: float
    sigma_sup: float
    hell: float
    rhs_hell: float
    l1: float
    max_drho: float
    rhs_ratio: float

    @property
    def margin_hell(self) -> float:
        return self.rhs_hell - self.hell

    @property
    def margin_ratio(self) -> float:
        return self.rhs_ratio - self.max_drho


@dataclass
class StabilityReport:
    """Per-pair bound audit plus the single slope constant C(r) valid for all
    audited pairs with data inside the radius-r ball."""

    records: list[PairRecord]
    violations: int
    tolerance: float
    data_radius: float
    slope_bound: float

    @property
    def max_slope(self) -> float:
        slopes = [r.hell / r.dy_norm for r in self.records if r.dy_norm > 0]
        return max(slopes) if slopes else 0.0


def verify_stability(
    table: ForwardTable,
    pairs: list[tuple[np.ndarray, np.ndarray]],
    noise: NoiseModel,
    ratio_points: np.ndarray,
    rel_tolerance: float = 1e-9,
    c_f: float | None = None,
) -> StabilityReport:
    """Audit both stability bounds on every data pair with exact enumeration.

    For each pair: the Hellinger distance must not exceed its bound, and the
    largest pointwise domain-ratio change over ``ratio_points`` must not
    exceed its bound, both using the exact family max for sigma(y, y').  A
    violation is a left side exceeding (1 + rel_tolerance) times its bound.
    """
    indicators = indicator_matrix(table.prior.domains, ratio_points)
    records = []
    violations = 0
    data_radius = 0.0
    for pair_id, (y_raw, yp_raw) in enumerate(pairs):
        y = y_raw.values if isinstance(y_raw, ObservationVector) else np.asarray(y_raw, float)
        y_prime = yp_raw.values if isinstance(yp_raw, ObservationVector) else np.asarray(yp_raw, float)
        post_y = posterior(table, y, noise)
        post_yp = posterior(table, y_prime, noise)
        sup_misfit = sigma_sup(y, y_prime, table.f_values)
        hell = hellinger(post_y, post_yp)
        rhs_h = stability_rhs_hellinger(y, y_prime, noise, sup_misfit)
        l1 = l1_distance(post_y, post_yp)
        drho = float(np.max(np.abs((post_y.weights - post_yp.weights) @ indicators)))
        rhs_r = stability_rhs_ratio(y, y_prime, noise, sup_misfit)
        dy = float(np.linalg.norm(y - y_prime))
        records.append(PairRecord(pair_id, dy, sup_misfit, hell, rhs_h, l1, drho, rhs_r))
        if hell > rhs_h * (1.0 + rel_tolerance) or drho > rhs_r * (1.0 + rel_tolerance):
            violations += 1
        data_radius = max(data_radius, float(np.linalg.norm(y)), float(np.linalg.norm(y_prime)))
    if c_f is None:
        c_f = float(np.max(np.linalg.norm(table.f_values, axis=1)))
    sup_cap = data_radius + c_f
    log_slope = 0.75 * (sup_cap / noise.sigma) ** 2 + math.log(max(sup_cap, 1e-300) / noise.sigma) - math.log(noise.sigma)
    slope_bound = math.exp(log_slope) if log_slope < 709.0 else math.inf
    return StabilityReport(
        records=records,
        violations=violations,
        tolerance=rel_tolerance,
        data_radius=data_radius,
        slope_bound=slope_bound,
    )


def average_observations(ys: list) -> np.ndarray:
    """Componentwise mean of equally long observation vectors."""
    if not ys:
        raise ValueError("cannot average an empty list")
    rows = [y.values if isinstance(y, ObservationVector) else np.asarray(y, float) for y in ys]
    lengths = {r.shape for r in rows}
    if len(lengths) != 1:
        raise ValueError("observation vectors differ in length")
    return np.mean(np.stack(rows), axis=0)


def simulate_data(
    f_true: ObservationVector | np.ndarray,
    noise: NoiseModel | None,
    seed: int,
    n_replicates: int = 1,
) -> np.ndarray:
    """Draw data y = F(D_true) + noise from the seeded noise stream.

    Returns an (n_replicates, m) array; with ``noise=None`` (noise disabled)
    every replicate equals the forward value exactly.
    """
    fv = f_true.values if isinstance(f_true, ObservationVector) else np.asarray(f_true, float)
    if noise is None:
        return np.tile(fv, (n_replicates, 1))
    xi = rng.normals(seed, 0, (n_replicates, fv.size))
    return fv[None, :] + noise.sigma * xi


@dataclass
class DisintegrationCheck:
    name: str
    lhs: float
    rhs: float
    std_error: float
    passed: bool


def check_disintegration(
    table: ForwardTable,
    noise: NoiseModel,
    test_functions: list,
    n_samples: int,
    seed: int,
) -> list[DisintegrationCheck]:
    """Empirical conditional-expectation identity for the posterior.

    Draws (D, y) jointly (domain index from the prior, data from the noise
    model), then for each test function compares the direct average of
    f(D, y) with the average posterior expectation of f(., y) computed by
    exact enumeration at each drawn y.  The law of total expectation makes
    the difference mean-zero; each check passes when |difference| is within
    three standard errors of the per-sample differences.

    Test functions take (domain_index, y_row) and should be bounded.
    """
    k = table.prior.size
    gen_idx = rng.stream(rng.substream_seed(seed, "disint", "domains"))
    idx = gen_idx.choice(k, size=n_samples, p=table.prior.probs)
    xi = rng.normals(rng.substream_seed(seed, "disint", "noise"), 0, (n_samples, table.m))
    ys = table.f_values[idx] + noise.sigma * xi
    weights = posterior_weights_batch(table, ys, noise)

    checks = []
    for name, f in test_functions:
        direct = np.array([f(int(idx[i]), ys[i]) for i in range(n_samples)])
        f_table = np.empty((n_samples, k))
        for kk in range(k):
            f_table[:, kk] = [f(kk, ys[i]) for i in range(n_samples)]
        conditional = np.sum(weights * f_table, axis=1)
        diff = direct - conditional
        mean_diff = float(np.mean(diff))
        se = float(np.std(diff, ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
        checks.append(
            DisintegrationCheck(
                name=name,
                lhs=float(np.mean(direct)),
                rhs=float(np.mean(conditional)),
                std_error=se,
                passed=abs(mean_diff) <= 3.0 * se + 1e-13,
            )
        )
    return checks


def standard_test_functions(table: ForwardTable, seed: int, n_random: int = 8) -> list:
    """Battery: constant 1, first-domain indicator, and random bounded
    domain-coefficient times data-cosine functions."""
    fns = [("const_one", lambda k, y: 1.0), ("indicator_d0", lambda k, y: 1.0 if k == 0 else 0.0)]
    gen = rng.stream(rng.substream_seed(seed, "disint", "battery"))
    m = table.m
    for r in range(n_random):
        coeffs = gen.uniform(0.0, 1.0, size=table.prior.size)
        freq = gen.normal(0.0, 1.0, size=m) / max(1.0, math.sqrt(m))
        phase = gen.uniform(0.0, 2.0 * math.pi)

        def f(k, y, coeffs=coeffs, freq=freq, phase=phase):
            return coeffs[k] * (0.5 + 0.5 * math.cos(float(np.dot(freq, y)) + phase))

        fns.append((f"random_{r}", f))
    return fns

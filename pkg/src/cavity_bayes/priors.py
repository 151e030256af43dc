"""Prior families over cavity configurations.

Two modes: an explicit finite list of conductors with exact masses (the
benchmark families all use this, so every posterior quantity is computable
by enumeration), and a parametric sampler that draws cavity counts, centers,
and radii and rejects configurations violating the admissibility margins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .bayes import PriorEnsemble
from .geometry import ConductorDomain, DiskCavity, OuterDomain, conductor


class InfeasiblePrior(ValueError):
    """Rejection sampling failed to find admissible configurations."""


@dataclass(frozen=True)
class PriorSpec:
    """Declarative prior description.

    ``finite`` mode: ``domains`` holds (cavity list, probability) entries.
    ``parametric`` mode: cavity count uniform on {1..k_max}, radius uniform
    on [r_min, r_max], center uniform over the disk of centers admissible for
    the drawn radius; configurations violating the separation margin are
    rejected and redrawn.
    """

    mode: str = "parametric"
    outer: OuterDomain = field(default_factory=OuterDomain)
    domains: tuple = ()  # finite mode: ((cavities, prob), ...)
    k_max: int = 1
    r_min: float = 0.1
    r_max: float = 0.3
    center: tuple[float, float] | None = None  # degenerate center distribution
    separation_margin: float | None = None
    containment_margin: float | None = None

    def __post_init__(self):
        if self.mode not in ("finite", "parametric"):
            raise ValueError(f"unknown prior mode: {self.mode}")
        if self.mode == "parametric":
            if not 0 < self.r_min <= self.r_max:
                raise ValueError("need 0 < r_min <= r_max")
            if self.k_max < 1:
                raise ValueError("k_max must be >= 1")


def enumerate_finite(spec: PriorSpec) -> PriorEnsemble:
    """Materialize a finite prior; every listed domain is validated."""
    if spec.mode != "finite":
        raise ValueError("enumerate_finite requires a finite-list prior")
    if not spec.domains:
        raise ValueError("finite prior must list at least one domain")
    domains = []
    probs = []
    for cavities, prob in spec.domains:
        domains.append(
            conductor(spec.outer, cavities, spec.separation_margin, spec.containment_margin)
        )
        probs.append(float(prob))
    probs = np.array(probs)
    if abs(float(probs.sum()) - 1.0) > 1e-12:
        raise ValueError(f"finite prior masses sum to {probs.sum()!r}, not 1")
    return PriorEnsemble(domains=domains, probs=probs, kind="finite")


def _draw_domain(spec: PriorSpec, gen: np.random.Generator, delta_in: float) -> ConductorDomain | None:
    """One parametric draw; None if the separation constraint rejects it."""
    count = int(gen.integers(1, spec.k_max + 1))
    cavities = []
    for _ in range(count):
        radius = float(gen.uniform(spec.r_min, spec.r_max))
        if spec.center is not None:
            cavities.append(DiskCavity(spec.center, radius))
            continue
        reach = spec.outer.radius - radius - delta_in
        if reach <= 0:
            return None
        # Uniform over the disk of admissible centers for this radius.
        angle = float(gen.uniform(0.0, 2.0 * math.pi))
        rad = reach * math.sqrt(float(gen.uniform(0.0, 1.0)))
        center = (
            spec.outer.center[0] + rad * math.cos(angle),
            spec.outer.center[1] + rad * math.sin(angle),
        )
        cavities.append(DiskCavity(center, radius))
    try:
        return conductor(spec.outer, cavities, spec.separation_margin, spec.containment_margin)
    except ValueError:
        return None


def sample_prior(spec: PriorSpec, k: int, seed: int, max_tries: int = 1000) -> PriorEnsemble:
    """k i.i.d. admissible domains with equal weights 1/k.

    Each sample index owns its counter-based substream, so draws are
    deterministic in (spec, k, seed) and independent of any parallel
    scheduling.  Raises ``InfeasiblePrior`` when a probe batch rejects more
    than 99% of draws.
    """
    if spec.mode != "parametric":
        raise ValueError("sample_prior requires a parametric prior")
    if k < 1:
        raise ValueError("k must be >= 1")
    delta_in = (
        spec.containment_margin
        if spec.containment_margin is not None
        else 0.05 * spec.outer.radius
    )

    probe_gen = rng.stream(rng.substream_seed(seed, "prior", "probe"))
    probe_n = 100
    probe_ok = sum(_draw_domain(spec, probe_gen, delta_in) is not None for _ in range(probe_n))
    if probe_ok < probe_n // 100 + 1:
        raise InfeasiblePrior(
            f"admissibility constraints rejected {probe_n - probe_ok}/{probe_n} probe draws"
        )

    domains = []
    rejected = 0
    for i in range(k):
        gen = rng.stream(rng.substream_seed(seed, "prior", i))
        for _ in range(max_tries):
            dom = _draw_domain(spec, gen, delta_in)
            if dom is not None:
                domains.append(dom)
                break
            rejected += 1
        else:
            raise InfeasiblePrior(f"sample {i}: no admissible draw in {max_tries} tries")
    rate = rejected / (rejected + k)
    return PriorEnsemble(domains=domains, probs=np.full(k, 1.0 / k), kind="sampled", rejection_rate=rate)


def benchmark_grid_family(
    outer: OuterDomain | None = None,
    n_side: int = 4,
    radius: float = 0.2,
    span: float = 0.45,
) -> PriorSpec:
    """Default benchmark family: single-cavity conductors with centers on an
    n_side x n_side grid and a fixed radius, uniform masses."""
    outer = outer or OuterDomain()
    centers = np.linspace(-span, span, n_side)
    entries = []
    prob = 1.0 / (n_side * n_side)
    for cx in centers:
        for cy in centers:
            cavity = ((outer.center[0] + cx * outer.radius, outer.center[1] + cy * outer.radius),
                      radius * outer.radius)
            entries.append(((cavity,), prob))
    return PriorSpec(mode="finite", outer=outer, domains=tuple(entries))

"""Conductor geometry: disk cavities in a disk, membership, Hausdorff distance,
and grid-cube covers.

All shapes live in the plane.  A conductor is the fixed outer disk minus the
closures of finitely many disjoint open disk cavities; a grid cover is the
interior of a finite union of axis-aligned cubes ``[a1*eps,(a1+1)*eps] x
[a2*eps,(a2+1)*eps]``.  Values are immutable after validation and every
operation here is pure.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np
from scipy.ndimage import distance_transform_edt

DEFAULT_SEPARATION_FRACTION = 1e-2   # delta_sep as a fraction of the outer radius
DEFAULT_CONTAINMENT_FRACTION = 5e-2  # delta_in as a fraction of the outer radius
DEFAULT_PITCH_FRACTION = 1e-3        # Hausdorff sampling pitch as a fraction of the outer radius


class GeometryError(ValueError):
    """Invalid geometric configuration."""


class TangentialCavities(GeometryError):
    """Two cavity closures are closer than the separation margin."""


class CavityEscapesOmega(GeometryError):
    """A cavity closure gets within the containment margin of the outer boundary."""


class EmptyDomainError(GeometryError):
    """Operation requires a nonempty domain."""


@dataclass(frozen=True)
class OuterDomain:
    """Fixed outer disk (the only shipped outer shape; smooth boundary)."""

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise GeometryError(f"outer radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class DiskCavity:
    """Open disk cavity."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise GeometryError(f"cavity radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))


@dataclass(frozen=True)
class CavitySet:
    """Ordered cavities plus the margins that quantify 'disjoint, inside'.

    ``separation_margin`` is the minimum allowed gap between cavity closures
    ("not tangential"); ``containment_margin`` the minimum gap between any
    cavity closure and the outer boundary.  ``None`` margins resolve to the
    default fractions of the outer radius at validation time.
    """

    cavities: tuple[DiskCavity, ...]
    separation_margin: float | None = None
    containment_margin: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "cavities", tuple(self.cavities))
        for margin in (self.separation_margin, self.containment_margin):
            if margin is not None and not (math.isfinite(margin) and margin > 0):
                raise GeometryError(f"margins must be positive, got {margin}")


def validate_cavity_set(cavity_set: CavitySet, outer: OuterDomain) -> CavitySet:
    """Check the cavity set against the outer disk; return it with margins resolved.

    Raises ``TangentialCavities`` if two cavity closures come within the
    separation margin of each other, ``CavityEscapesOmega`` if a closure comes
    within the containment margin of the outer boundary.
    """
    delta_sep = cavity_set.separation_margin
    delta_in = cavity_set.containment_margin
    if delta_sep is None:
        delta_sep = DEFAULT_SEPARATION_FRACTION * outer.radius
    if delta_in is None:
        delta_in = DEFAULT_CONTAINMENT_FRACTION * outer.radius
    cavities = cavity_set.cavities
    ocx, ocy = outer.center
    for i, cav in enumerate(cavities):
        dist_to_boundary = outer.radius - math.hypot(cav.center[0] - ocx, cav.center[1] - ocy) - cav.radius
        if dist_to_boundary < delta_in:
            raise CavityEscapesOmega(
                f"cavity {i} closure is {dist_to_boundary:.6g} from the outer boundary "
                f"(margin {delta_in:.6g})"
            )
    for i in range(len(cavities)):
        for j in range(i + 1, len(cavities)):
            a, b = cavities[i], cavities[j]
            gap = math.hypot(a.center[0] - b.center[0], a.center[1] - b.center[1]) - a.radius - b.radius
            if gap < delta_sep:
                raise TangentialCavities(
                    f"cavities {i} and {j} have closure gap {gap:.6g} (margin {delta_sep:.6g})"
                )
    return CavitySet(cavities, delta_sep, delta_in)


@dataclass(frozen=True)
class ConductorDomain:
    """Outer disk minus the cavity closures.  Validated on construction."""

    outer: OuterDomain
    cavity_set: CavitySet

    def __post_init__(self):
        object.__setattr__(self, "cavity_set", validate_cavity_set(self.cavity_set, self.outer))

    @property
    def cavities(self) -> tuple[DiskCavity, ...]:
        return self.cavity_set.cavities

    def to_json_dict(self) -> dict:
        return {
            "outer": {
                "type": "disk",
                "center": [self.outer.center[0], self.outer.center[1]],
                "radius": self.outer.radius,
            },
            "cavities": [
                {"center": [c.center[0], c.center[1]], "radius": c.radius} for c in self.cavities
            ],
        }

    def content_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.to_json_dict()).encode("utf-8")).hexdigest()


def conductor(
    outer: OuterDomain | None = None,
    cavities: Iterable[DiskCavity | tuple] = (),
    separation_margin: float | None = None,
    containment_margin: float | None = None,
) -> ConductorDomain:
    """Convenience constructor; cavities may be given as ((cx, cy), r) pairs."""
    outer = outer or OuterDomain()
    cavs = tuple(
        c if isinstance(c, DiskCavity) else DiskCavity(tuple(c[0]), float(c[1])) for c in cavities
    )
    return ConductorDomain(outer, CavitySet(cavs, separation_margin, containment_margin))


def canonical_json(obj: dict) -> str:
    """Canonical serialization used for content hashes and cache keys."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def conductor_from_json_dict(data: dict) -> ConductorDomain:
    outer_spec = data["outer"]
    if outer_spec.get("type", "disk") != "disk":
        raise GeometryError(f"unsupported outer shape: {outer_spec.get('type')}")
    outer = OuterDomain(tuple(outer_spec["center"]), float(outer_spec["radius"]))
    cavs = tuple(DiskCavity(tuple(c["center"]), float(c["radius"])) for c in data.get("cavities", []))
    return ConductorDomain(outer, CavitySet(cavs))


@dataclass(frozen=True)
class AxisBox:
    """Open axis-aligned box, used as a plain bounded-set descriptor."""

    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        if not (self.lo[0] < self.hi[0] and self.lo[1] < self.hi[1]):
            raise GeometryError("box must have positive extent")


@dataclass(frozen=True)
class GridDomain:
    """Interior of a finite union of eps-grid cubes, stored by integer index."""

    resolution: float
    cubes: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not (math.isfinite(self.resolution) and self.resolution > 0):
            raise GeometryError("resolution must be positive")
        object.__setattr__(self, "cubes", tuple(sorted(set(map(tuple, self.cubes)))))

    @property
    def cube_count(self) -> int:
        return len(self.cubes)

    def index_array(self) -> np.ndarray:
        return np.array(self.cubes, dtype=np.int64).reshape(-1, 2)

    def is_connected(self) -> bool:
        """Diagnostic: is the cube set connected under shared-face adjacency?"""
        if not self.cubes:
            return True
        cube_set = set(self.cubes)
        stack = [self.cubes[0]]
        seen = {self.cubes[0]}
        while stack:
            ax, ay = stack.pop()
            for nb in ((ax + 1, ay), (ax - 1, ay), (ax, ay + 1), (ax, ay - 1)):
                if nb in cube_set and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(cube_set)


Domain = Union[ConductorDomain, GridDomain, AxisBox]


def contains(domain: Domain, point) -> bool:
    """Strict interior membership (total function, never raises on any point)."""
    return bool(contains_mask(domain, np.asarray(point, dtype=float).reshape(1, 2))[0])


def contains_mask(domain: Domain, points: np.ndarray) -> np.ndarray:
    """Vectorized membership for an (n, 2) array of points.

    For a ``GridDomain`` this tests which grid cube each point falls in, which
    is exact for points off the grid lines (the boundary of the union has
    measure zero and membership there is reported as False).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if isinstance(domain, ConductorDomain):
        ocx, ocy = domain.outer.center
        inside = np.hypot(pts[:, 0] - ocx, pts[:, 1] - ocy) < domain.outer.radius
        for cav in domain.cavities:
            inside &= np.hypot(pts[:, 0] - cav.center[0], pts[:, 1] - cav.center[1]) > cav.radius
        return inside
    if isinstance(domain, GridDomain):
        eps = domain.resolution
        idx = np.floor(pts / eps).astype(np.int64)
        cube_set = set(domain.cubes)
        return np.fromiter(
            ((int(a), int(b)) in cube_set for a, b in idx), dtype=bool, count=len(idx)
        )
    if isinstance(domain, AxisBox):
        return (
            (pts[:, 0] > domain.lo[0])
            & (pts[:, 0] < domain.hi[0])
            & (pts[:, 1] > domain.lo[1])
            & (pts[:, 1] < domain.hi[1])
        )
    raise TypeError(f"unsupported domain type: {type(domain).__name__}")


def bounding_box(domain: Domain) -> tuple[tuple[float, float], tuple[float, float]]:
    if isinstance(domain, ConductorDomain):
        (cx, cy), r = domain.outer.center, domain.outer.radius
        return (cx - r, cy - r), (cx + r, cy + r)
    if isinstance(domain, GridDomain):
        if not domain.cubes:
            raise EmptyDomainError("empty grid domain has no bounding box")
        idx = domain.index_array()
        eps = domain.resolution
        lo = idx.min(axis=0) * eps
        hi = (idx.max(axis=0) + 1) * eps
        return (float(lo[0]), float(lo[1])), (float(hi[0]), float(hi[1]))
    if isinstance(domain, AxisBox):
        return domain.lo, domain.hi
    raise TypeError(f"unsupported domain type: {type(domain).__name__}")


def _candidate_indices(domain: Domain, eps: float) -> np.ndarray:
    (x0, y0), (x1, y1) = bounding_box(domain)
    ax = np.arange(math.floor(x0 / eps) - 1, math.floor(x1 / eps) + 2, dtype=np.int64)
    ay = np.arange(math.floor(y0 / eps) - 1, math.floor(y1 / eps) + 2, dtype=np.int64)
    gx, gy = np.meshgrid(ax, ay, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def _cube_witness_points(indices: np.ndarray, eps: float, k: int) -> np.ndarray:
    """Witness points per cube: near-corner insets plus a k x k interior lattice.

    All witnesses are strictly interior to the cube so they never land on a
    grid line (where grid-domain membership is ambiguous).
    """
    d = 1.0 / 64.0
    offs = [(d, d), (1.0 - d, d), (d, 1.0 - d), (1.0 - d, 1.0 - d)]
    offs += [((i + 0.5) / k, (j + 0.5) / k) for i in range(k) for j in range(k)]
    offs = np.array(offs)  # (w, 2)
    base = indices[:, None, :] * eps  # (n, 1, 2)
    return base + offs[None, :, :] * eps  # (n, w, 2)


def approximate_domain(domain: Domain, eps: float, witness_k: int = 8) -> GridDomain:
    """Grid cover: interior of the union of all eps-cubes meeting the set.

    Cube-set intersection is decided by exact witnesses (cube corners, a
    ``witness_k`` x ``witness_k`` interior lattice, and for conductors the cube
    point nearest the outer center), with a 4x finer lattice retried on cubes
    that fail all witnesses yet cannot be excluded exactly.  Cubes meeting the
    set only in a sliver below the fine-lattice pitch may be omitted; the
    cover-distance guarantee ``d_H < sqrt(2) * eps`` is unaffected.
    """
    if eps <= 0:
        raise GeometryError("eps must be positive")
    indices = _candidate_indices(domain, eps)
    witness = _cube_witness_points(indices, eps, witness_k)
    hit = contains_mask(domain, witness.reshape(-1, 2)).reshape(len(indices), -1).any(axis=1)

    if isinstance(domain, ConductorDomain):
        lo = indices * eps
        hi = lo + eps
        ocx, ocy = domain.outer.center
        near = np.stack(
            [np.clip(ocx, lo[:, 0], hi[:, 0]), np.clip(ocy, lo[:, 1], hi[:, 1])], axis=1
        )
        reaches_omega = np.hypot(near[:, 0] - ocx, near[:, 1] - ocy) < domain.outer.radius
        hit |= reaches_omega & contains_mask(domain, near)
        # Exact exclusion: cube fully inside one cavity closure.
        excluded = ~reaches_omega
        for cav in domain.cavities:
            far_x = np.maximum(np.abs(lo[:, 0] - cav.center[0]), np.abs(hi[:, 0] - cav.center[0]))
            far_y = np.maximum(np.abs(lo[:, 1] - cav.center[1]), np.abs(hi[:, 1] - cav.center[1]))
            excluded |= np.hypot(far_x, far_y) <= cav.radius
        ambiguous = np.flatnonzero(~hit & ~excluded)
        if ambiguous.size:
            fine = _cube_witness_points(indices[ambiguous], eps, 4 * witness_k)
            hit[ambiguous] = (
                contains_mask(domain, fine.reshape(-1, 2)).reshape(len(ambiguous), -1).any(axis=1)
            )
    cubes = tuple(map(tuple, indices[hit].tolist()))
    if not cubes:
        raise EmptyDomainError("set meets no grid cube; is it empty?")
    return GridDomain(eps, cubes)


def distance_to_conductor(points: np.ndarray, domain: ConductorDomain) -> np.ndarray:
    """Exact Euclidean distance from points to the (open) conductor.

    Zero on the closure; ``|x| - R`` outside the outer disk; cavity depth
    ``r_i - |x - c_i|`` inside cavity i.  Exact because the validation margins
    keep a cavity-free collar inside the outer boundary and around each cavity.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ocx, ocy = domain.outer.center
    dist = np.maximum(np.hypot(pts[:, 0] - ocx, pts[:, 1] - ocy) - domain.outer.radius, 0.0)
    for cav in domain.cavities:
        depth = cav.radius - np.hypot(pts[:, 0] - cav.center[0], pts[:, 1] - cav.center[1])
        dist = np.maximum(dist, depth)
    return np.maximum(dist, 0.0)


def hausdorff_to_grid_cover(domain: ConductorDomain, cover: GridDomain) -> float:
    """Exact Hausdorff distance between a conductor and a grid cover of it.

    Valid when ``cover`` came from ``approximate_domain(domain, eps)``, so the
    conductor-to-cover direction is zero and the distance is the largest exact
    distance from a cover cube to the conductor (attained at a cube corner for
    the outer excess, at the cube point nearest a cavity center for cavity
    depth).
    """
    if not cover.cubes:
        raise EmptyDomainError("empty grid cover")
    eps = cover.resolution
    lo = cover.index_array() * eps
    hi = lo + eps
    corners = np.stack(
        [
            np.stack([lo[:, 0], lo[:, 1]], axis=1),
            np.stack([hi[:, 0], lo[:, 1]], axis=1),
            np.stack([lo[:, 0], hi[:, 1]], axis=1),
            np.stack([hi[:, 0], hi[:, 1]], axis=1),
        ],
        axis=1,
    )  # (n, 4, 2)
    ocx, ocy = domain.outer.center
    outer_excess = np.hypot(corners[:, :, 0] - ocx, corners[:, :, 1] - ocy) - domain.outer.radius
    worst = float(np.max(np.maximum(outer_excess, 0.0)))
    for cav in domain.cavities:
        near_x = np.clip(cav.center[0], lo[:, 0], hi[:, 0])
        near_y = np.clip(cav.center[1], lo[:, 1], hi[:, 1])
        depth = cav.radius - np.hypot(near_x - cav.center[0], near_y - cav.center[1])
        worst = max(worst, float(np.max(depth)))
    return max(worst, 0.0)


def hausdorff_distance(domain_a: Domain, domain_b: Domain, pitch: float | None = None) -> float:
    """Hausdorff distance between two bounded open sets by dense grid sampling.

    Both sets are rasterized at sampling pitch ``pitch`` (default 1e-3 times
    the larger outer radius, or of the bounding-box extent for grid sets) and
    the two directed distances are taken over Euclidean distance transforms.
    The returned value is accurate to +- 2 * pitch.  Raises on empty inputs.
    """
    if pitch is None:
        scale = 0.0
        for d in (domain_a, domain_b):
            if isinstance(d, ConductorDomain):
                scale = max(scale, d.outer.radius)
            else:
                (x0, y0), (x1, y1) = bounding_box(d)
                scale = max(scale, 0.5 * max(x1 - x0, y1 - y0))
        pitch = DEFAULT_PITCH_FRACTION * scale
    if pitch <= 0:
        raise GeometryError("pitch must be positive")

    (ax0, ay0), (ax1, ay1) = bounding_box(domain_a)
    (bx0, by0), (bx1, by1) = bounding_box(domain_b)
    x0, y0 = min(ax0, bx0) - pitch, min(ay0, by0) - pitch
    x1, y1 = max(ax1, bx1) + pitch, max(ay1, by1) + pitch
    nx = int(math.ceil((x1 - x0) / pitch)) + 1
    ny = int(math.ceil((y1 - y0) / pitch)) + 1
    xs = x0 + (np.arange(nx) + 0.5) * pitch
    ys = y0 + (np.arange(ny) + 0.5) * pitch
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)

    mask_a = contains_mask(domain_a, pts).reshape(nx, ny)
    mask_b = contains_mask(domain_b, pts).reshape(nx, ny)
    if not mask_a.any():
        raise EmptyDomainError("first domain has no sample points at this pitch")
    if not mask_b.any():
        raise EmptyDomainError("second domain has no sample points at this pitch")

    dist_to_b = distance_transform_edt(~mask_b, sampling=pitch)
    dist_to_a = distance_transform_edt(~mask_a, sampling=pitch)
    return float(max(dist_to_b[mask_a].max(), dist_to_a[mask_b].max()))

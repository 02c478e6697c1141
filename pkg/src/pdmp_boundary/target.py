"""Piecewise-smooth target densities bounded by flat facet patches.

A :class:`PiecewiseTarget` partitions R^d into finitely many open regions, each
carrying its own C^1 log-density. The discontinuity set is described by a list
of :class:`Facet` objects: hyperplane patches restricted to a box (optionally
further cut by half-spaces), each separating exactly two regions.

Log-density, gradient and membership closures must broadcast over a leading
batch axis, i.e. accept either a ``(d,)`` or an ``(n, d)`` array. The oracle
module relies on this for vectorised rejection sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import BoundaryAmbiguous, DegenerateBoundary

# A hit landing this close to the rim of a facet patch is treated as an
# edge/corner hit (more than two adjacent regions) and handled by a flip.
EDGE_TOLERANCE = 1e-10
# Points this close to a facet plane (and inside its patch) have no region.
ON_FACET_TOLERANCE = 1e-12
GRAZING_TOLERANCE = 1e-14
_PATCH_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Facet:
    """Flat patch ``{x : <normal, x> = offset}`` restricted by ``bounds``.

    Attributes:
        normal: unit normal.
        offset: plane offset.
        lower, upper: box bounds on the patch (``-inf``/``inf`` allowed).
        side_regions: ``(region on the negative side, region on the positive
            side)`` where "positive" means ``<normal, x> > offset``.
        halfspaces: optional ``(A, c)`` with extra patch constraints
            ``A @ x <= c``.
    """

    normal: np.ndarray
    offset: float
    lower: np.ndarray
    upper: np.ndarray
    side_regions: tuple[int, int]
    halfspaces: Optional[tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        object.__setattr__(self, "offset", float(self.offset))
        if abs(np.linalg.norm(normal) - 1.0) > 1e-12:
            raise ValueError("facet normal must have unit length")
        if self.lower.shape != normal.shape or self.upper.shape != normal.shape:
            raise ValueError("facet bounds must match the ambient dimension")
        if np.any(self.lower > self.upper):
            raise ValueError("facet bounds are empty")
        a, b = self.side_regions
        if a == b:
            raise ValueError("side_regions must be distinct")
        if self.halfspaces is not None:
            A, c = self.halfspaces
            object.__setattr__(
                self, "halfspaces", (np.atleast_2d(np.asarray(A, float)), np.atleast_1d(np.asarray(c, float)))
            )

    def contains(self, p, slack=_PATCH_SLACK):
        """Whether ``p`` (assumed on the plane) lies within the patch."""
        if np.any(p < self.lower - slack) or np.any(p > self.upper + slack):
            return False
        if self.halfspaces is not None:
            A, c = self.halfspaces
            if np.any(A @ p > c + slack):
                return False
        return True

    def edge_distance(self, p):
        """Distance from an in-plane point ``p`` to the rim of the patch."""
        gap = np.min(np.minimum(p - self.lower, self.upper - p))
        if self.halfspaces is not None:
            A, c = self.halfspaces
            gap = min(gap, np.min((c - A @ p) / np.linalg.norm(A, axis=1)))
        return float(gap)

    def other_side(self, k):
        a, b = self.side_regions
        return b if k == a else a


@dataclass(frozen=True, eq=False)
class Region:
    """One smooth piece of the target.

    ``kind == "gaussian_iso"`` marks ``alpha * exp(-|x|^2 / (2 sigma))`` on the
    region, which lets the sampler invert event times exactly.
    """

    log_density: Callable
    grad_log_density: Callable
    membership: Callable
    name: str = ""
    kind: str = "generic"
    sigma: Optional[float] = None
    alpha: Optional[float] = None

    @classmethod
    def gaussian_iso(cls, sigma, alpha, membership, name=""):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        log_alpha = math.log(alpha) if alpha > 0 else -math.inf

        def log_density(x):
            x = np.asarray(x, dtype=float)
            return log_alpha - 0.5 * np.sum(x * x, axis=-1) / sigma

        def grad_log_density(x):
            return -np.asarray(x, dtype=float) / sigma

        return cls(
            log_density=log_density,
            grad_log_density=grad_log_density,
            membership=membership,
            name=name,
            kind="gaussian_iso",
            sigma=float(sigma),
            alpha=float(alpha),
        )


class BoundaryHit(NamedTuple):
    t: float
    facet: Facet
    index: int


@dataclass(frozen=True, eq=False)
class BoundaryPoint:
    """A classified boundary hit.

    ``n`` points into ``k2``, the side with the larger density, and
    ``log_ratio_C = log(pi2 / pi1)`` (``inf`` when ``pi1 == 0``).
    """

    x: np.ndarray
    n: np.ndarray
    k1: int
    k2: int
    pi1: float
    pi2: float
    log_ratio_C: float

    @property
    def ratio(self):
        """``pi1 / pi2``, computed from the log ratio so it never overflows."""
        return math.exp(-self.log_ratio_C)

    @classmethod
    def from_ratio(cls, n, ratio, x=None, k1=0, k2=1):
        """Synthetic boundary point with ``pi2 = 1`` and ``pi1 = ratio``."""
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        if not 0.0 <= ratio < 1.0:
            raise ValueError("ratio pi1/pi2 must lie in [0, 1)")
        C = math.inf if ratio == 0 else -math.log(ratio)
        x = np.zeros_like(n) if x is None else np.asarray(x, dtype=float)
        return cls(x=x, n=n, k1=k1, k2=k2, pi1=float(ratio), pi2=1.0, log_ratio_C=C)


@dataclass(frozen=True, eq=False)
class PiecewiseTarget:
    dim: int
    regions: tuple
    facets: tuple
    density_kind: str = "generic"
    _arrays: dict = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        object.__setattr__(self, "facets", tuple(self.facets))
        for f in self.facets:
            if f.normal.shape != (self.dim,):
                raise ValueError("facet dimension does not match target")
            if max(f.side_regions) >= len(self.regions) or min(f.side_regions) < 0:
                raise ValueError("facet refers to an unknown region")
        F = len(self.facets)
        normals = np.array([f.normal for f in self.facets]).reshape(F, self.dim)
        side = np.zeros((len(self.regions), F))
        for j, f in enumerate(self.facets):
            side[f.side_regions[0], j] = -1.0
            side[f.side_regions[1], j] = 1.0
        arrays = dict(
            normals=normals,
            offsets=np.array([f.offset for f in self.facets]),
            lower=np.array([f.lower for f in self.facets]).reshape(F, self.dim),
            upper=np.array([f.upper for f in self.facets]).reshape(F, self.dim),
            side=side,
            has_halfspaces=any(f.halfspaces is not None for f in self.facets),
        )
        arrays["lower_slack"] = arrays["lower"] - _PATCH_SLACK
        arrays["upper_slack"] = arrays["upper"] + _PATCH_SLACK
        arrays["on_facet"] = ON_FACET_TOLERANCE * (1.0 + np.abs(arrays["offsets"]))
        object.__setattr__(self, "_arrays", arrays)

    def log_density(self, x):
        """Log-density of the full target at an interior point."""
        k = region_of(self, x)
        return float(self.regions[k].log_density(x))

    def region_names(self):
        return [r.name or str(i) for i, r in enumerate(self.regions)]


def region_of(target: PiecewiseTarget, x) -> int:
    """Index of the unique region containing ``x``.

    Raises:
        BoundaryAmbiguous: ``x`` is within ``ON_FACET_TOLERANCE`` of a facet
            patch, or the membership closures do not single out one region.
    """
    x = np.asarray(x, dtype=float)
    arr = target._arrays
    if len(target.facets):
        dist = np.abs(arr["normals"] @ x - arr["offsets"])
        for j in np.flatnonzero(dist <= ON_FACET_TOLERANCE * (1.0 + np.abs(arr["offsets"]))):
            f = target.facets[j]
            if f.contains(x - (f.normal @ x - f.offset) * f.normal):
                raise BoundaryAmbiguous(f"point lies on facet {j}")
    owners = [k for k, r in enumerate(target.regions) if bool(r.membership(x))]
    if len(owners) != 1:
        raise BoundaryAmbiguous(f"{len(owners)} regions claim the point")
    return owners[0]


def first_boundary_hit(target: PiecewiseTarget, k: int, x, v) -> Optional[BoundaryHit]:
    """First facet patch hit by the ray ``x + t v`` (t >= 0) leaving region ``k``.

    Only facets adjacent to ``k`` and crossed from ``k``'s side count, so a
    particle sitting on a facet it has just bounced off (or passed through)
    never re-detects it. Grazing rays are ignored.
    """
    arr = target._arrays
    if not len(target.facets):
        return None
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    side = arr["side"][k]
    denom = arr["normals"] @ v
    num = arr["offsets"] - arr["normals"] @ x
    # moving from k's side toward the plane, with x on k's side (up to slack)
    cand = (side * denom < 0) & (np.abs(denom) > GRAZING_TOLERANCE)
    cand &= side * num <= arr["on_facet"]
    if not cand.any():
        return None
    t = np.where(cand, num / np.where(cand, denom, 1.0), 0.0)
    np.maximum(t, 0.0, out=t)
    P = x + t[:, None] * v
    ok = cand & ((P >= arr["lower_slack"]) & (P <= arr["upper_slack"])).all(axis=1)
    if arr["has_halfspaces"]:
        for j in np.flatnonzero(ok):
            if target.facets[j].halfspaces is not None:
                ok[j] = target.facets[j].contains(P[j])
    if not ok.any():
        return None
    t_ok = np.where(ok, t, np.inf)
    j = int(np.argmin(t_ok))
    return BoundaryHit(float(t_ok[j]), target.facets[j], j)


def classify_hit(target: PiecewiseTarget, facet: Facet, x_hit) -> BoundaryPoint:
    """Order the two sides of ``facet`` at ``x_hit`` by density.

    Raises:
        DegenerateBoundary: both one-sided densities coincide; the caller
            should let the trajectory pass straight through.
    """
    x_hit = np.asarray(x_hit, dtype=float)
    neg, pos = facet.side_regions
    lp_neg = float(target.regions[neg].log_density(x_hit))
    lp_pos = float(target.regions[pos].log_density(x_hit))
    if lp_neg == lp_pos:
        raise DegenerateBoundary("no density jump across the facet")
    if lp_pos > lp_neg:
        k1, k2, lp1, lp2, n = neg, pos, lp_neg, lp_pos, facet.normal
    else:
        k1, k2, lp1, lp2, n = pos, neg, lp_pos, lp_neg, -facet.normal
    C = math.inf if lp1 == -math.inf else lp2 - lp1
    return BoundaryPoint(
        x=x_hit,
        n=np.array(n, dtype=float),
        k1=k1,
        k2=k2,
        pi1=math.exp(lp1),
        pi2=math.exp(lp2),
        log_ratio_C=C,
    )


def hypercube_target(dim, sigma_in=1.0, sigma_out=1.0, alpha_in=1.0, alpha_out=0.0, half_width=1.0):
    """Gaussian inside ``[-w, w]^d`` and (optionally) outside it.

    ``pi(x) = alpha_in exp(-|x|^2/(2 sigma_in))`` inside the cube and
    ``alpha_out exp(-|x|^2/(2 sigma_out))`` outside. Region 0 is the inside,
    region 1 the outside; there are ``2 d`` facets.
    """
    if alpha_in < 0 or alpha_out < 0 or alpha_in + alpha_out <= 0:
        raise ValueError("need alpha_in, alpha_out >= 0 with a positive sum")
    w = float(half_width)

    def inside(x):
        return np.all(np.abs(x) < w, axis=-1)

    def outside(x):
        return np.any(np.abs(x) > w, axis=-1)

    regions = (
        Region.gaussian_iso(sigma_in, alpha_in, inside, name="inside"),
        Region.gaussian_iso(sigma_out, alpha_out, outside, name="outside"),
    )
    facets = []
    for i in range(dim):
        lower = np.full(dim, -w)
        upper = np.full(dim, w)
        lower[i], upper[i] = -np.inf, np.inf
        for sign in (1.0, -1.0):
            normal = np.zeros(dim)
            normal[i] = sign
            facets.append(Facet(normal, w, lower, upper, side_regions=(0, 1)))
    return PiecewiseTarget(dim=dim, regions=regions, facets=facets, density_kind="gaussian_iso")


def validate_target(target: PiecewiseTarget, points: Sequence, eps: float = 1e-8):
    """Spot-check the structural invariants on sample points.

    Checks pairwise-disjoint membership on ``points`` and that each facet's
    ``side_regions`` agree with membership at ``±eps`` along the normal from
    the patch centre (the box midpoint projected onto the plane).

    Returns:
        list of human-readable problems (empty when all checks pass).
    """
    problems = []
    for p in np.atleast_2d(points):
        owners = [k for k, r in enumerate(target.regions) if bool(r.membership(p))]
        if len(owners) > 1:
            problems.append(f"regions {owners} overlap at {p}")
    for j, f in enumerate(target.facets):
        lo = np.where(np.isfinite(f.lower), f.lower, 0.0)
        hi = np.where(np.isfinite(f.upper), f.upper, 0.0)
        c = 0.5 * (lo + hi)
        c = c - (f.normal @ c - f.offset) * f.normal
        neg, pos = f.side_regions
        if not target.regions[neg].membership(c - eps * f.normal):
            problems.append(f"facet {j}: negative side is not region {neg}")
        if not target.regions[pos].membership(c + eps * f.normal):
            problems.append(f"facet {j}: positive side is not region {pos}")
    for k, r in enumerate(target.regions):
        if r.kind == "gaussian_iso":
            p = np.linspace(-1.0, 1.0, target.dim) + 0.5
            if not np.array_equal(r.grad_log_density(p), -p / r.sigma):
                problems.append(f"region {k}: gradient is not -x/sigma")
    return problems

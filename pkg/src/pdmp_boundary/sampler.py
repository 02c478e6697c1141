"""Event-driven simulation of BPS, Zig-Zag and the Coordinate Sampler.

Between events every sampler moves by free transport ``x + t v``. Inside a
region the next event is the earliest of

* the first facet hit on the current ray (computed first, so rate formulas
  never straddle a discontinuity),
* a refreshment (homogeneous Poisson clock, full velocity resample),
* a bounce driven by the region's log-density gradient.

On ``gaussian_iso`` regions the bounce rates are affine in time along the
ray and are inverted exactly; generic regions use Poisson thinning against a
caller-supplied bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Union

import numpy as np

from . import kernels as kern
from .errors import BoundViolation, DegenerateBoundary, StuckAtBoundary, ZeroGradient
from .target import EDGE_TOLERANCE, PiecewiseTarget, classify_hit, first_boundary_hit
from .velocity import TANGENT_TOLERANCE

TAGS = ("start", "bounce", "refresh", "boundary", "end")
MAX_STUCK = 10_000
# below this many clocks a Python loop beats numpy's per-call overhead
_SCALAR_DIM = 8


@dataclass(frozen=True)
class BPS:
    refresh_rate: float = 1.0
    name: str = field(default="bps", init=False)

    def __post_init__(self):
        if self.refresh_rate < 0:
            raise ValueError("refresh_rate must be nonnegative")


@dataclass(frozen=True)
class ZigZag:
    refresh_rate: float = field(default=0.0, init=False)
    name: str = field(default="zigzag", init=False)


@dataclass(frozen=True)
class CoordinateSampler:
    refresh_rate: float = 1.0
    name: str = field(default="cs", init=False)

    def __post_init__(self):
        if self.refresh_rate < 0:
            raise ValueError("refresh_rate must be nonnegative")


SamplerKind = Union[BPS, ZigZag, CoordinateSampler]


def make_kind(name, refresh_rate=1.0):
    if name == "bps":
        return BPS(refresh_rate)
    if name in ("zigzag", "zz"):
        return ZigZag()
    if name == "cs":
        return CoordinateSampler(refresh_rate)
    raise ValueError(f"unknown sampler {name!r}")


@dataclass
class State:
    k: int
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0


@dataclass
class TrajectorySkeleton:
    """Breakpoints of a piecewise-linear PDMP path.

    ``regions[i]`` is the region occupied on the segment that starts at
    breakpoint ``i``; ``v[i]`` is the velocity on that segment.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    tags: list
    regions: np.ndarray
    event_counts: dict

    @property
    def total_time(self):
        return float(self.t[-1] - self.t[0])

    def __len__(self):
        return len(self.t)


class BounceCandidate(NamedTuple):
    t: float
    detail: Optional[int]


def _invert_affine(a, b, E):
    # smallest T with int_0^T (a + b s)_+ ds = E, or inf
    if b > 0:
        if a >= 0:
            return 2.0 * E / (a + math.sqrt(a * a + 2.0 * b * E))
        return -a / b + math.sqrt(2.0 * E / b)
    if b == 0:
        return E / a if a > 0 else math.inf
    if a <= 0:
        return math.inf
    disc = a * a + 2.0 * b * E
    if disc < 0:
        return math.inf
    return 2.0 * E / (a + math.sqrt(disc))


def _invert_affine_vec(a, b, E):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    E = np.asarray(E, dtype=float)
    T = np.full(np.broadcast(a, b, E).shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = b > 0
        m = pos & (a >= 0)
        T = np.where(m, 2.0 * E / (a + np.sqrt(a * a + 2.0 * b * E)), T)
        m = pos & (a < 0)
        T = np.where(m, -a / b + np.sqrt(2.0 * E / b), T)
        m = (b == 0) & (a > 0)
        T = np.where(m, E / a, T)
        disc = a * a + 2.0 * b * E
        m = (b < 0) & (a > 0) & (disc >= 0)
        T = np.where(m, 2.0 * E / (a + np.sqrt(np.where(m, disc, 0.0))), T)
    return T


def affine_event_time(a, b, rng):
    """First arrival of a Poisson process with rate ``(a + b t)_+``.

    One ``Exp(1)`` variate is consumed on every call, including when the rate
    vanishes identically (result ``inf``).
    """
    E = rng.standard_exponential()
    return _invert_affine(float(a), float(b), E)


def _zz_setup(space, x, v):
    R = space.basis.R
    s = np.where(R.T @ v >= 0, 1.0, -1.0)
    return R, s


def _true_rates(kind, space, region, x, v):
    g = region.grad_log_density(x)
    if kind.name == "zigzag":
        R, s = _zz_setup(space, x, v)
        return np.maximum(-s * (R.T @ g), 0.0)
    return np.array([max(-(v @ g), 0.0)])


def next_bounce_candidate(
    target: PiecewiseTarget,
    kind,
    space,
    state: State,
    t_max: float,
    rng,
    rate_bound: Optional[Callable] = None,
    thinning_window: float = 1.0,
) -> Optional[BounceCandidate]:
    """Time (relative to ``state.t``) and type of the next bounce, if before ``t_max``.

    For Zig-Zag, ``detail`` is the basis coordinate whose clock rang first.

    Args:
        rate_bound: for generic regions, ``rate_bound(k, x, v, horizon)``
            returns an upper bound on the total bounce rate along
            ``x + s v`` for ``s`` in ``[0, horizon]``.
        thinning_window: length of the windows over which the bound is
            requested when ``t_max`` is large or infinite.

    Raises:
        BoundViolation: a thinned rate exceeded its bound (relative slack 1e-9).
    """
    region = target.regions[state.k]
    x, v = state.x, state.v
    if region.kind == "gaussian_iso":
        sigma = region.sigma
        if kind.name == "zigzag":
            R, s = _zz_setup(space, x, v)
            a = s * (R.T @ x) / sigma
            b = s * (R.T @ v) / sigma
            E = rng.standard_exponential(len(s))
            if len(s) <= _SCALAR_DIM:
                T = [_invert_affine(ai, bi, ei) for ai, bi, ei in zip(a.tolist(), b.tolist(), E.tolist())]
                detail = min(range(len(T)), key=T.__getitem__)
                t = T[detail]
            else:
                T = _invert_affine_vec(a, b, E)
                detail = int(np.argmin(T))
                t = float(T[detail])
        else:
            t = affine_event_time((v @ x) / sigma, (v @ v) / sigma, rng)
            detail = None
        if t > t_max:
            return None
        return BounceCandidate(t, detail)

    if rate_bound is None:
        raise ValueError("generic regions need a rate_bound for thinning")
    t0 = 0.0
    while t0 < t_max:
        h = min(thinning_window, t_max - t0)
        B = float(rate_bound(state.k, x + t0 * v, v, h))
        t = t0
        while B > 0:
            t += rng.standard_exponential() / B
            if t > t0 + h:
                break
            rates = _true_rates(kind, space, region, x + t * v, v)
            total = float(np.sum(rates))
            if total > B * (1.0 + 1e-9):
                raise BoundViolation(f"rate {total} exceeds bound {B}")
            if rng.random() * B < total:
                detail = None
                if kind.name == "zigzag":
                    cdf = np.cumsum(rates) / total
                    detail = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(rates) - 1)
                return BounceCandidate(t, detail) if t <= t_max else None
        t0 += h
    return None


def apply_bounce(kind, state: State, grad, detail, space, rng):
    """Velocity after a bounce at ``state.x`` with log-density gradient ``grad``.

    Raises:
        ZeroGradient: BPS reflection requested where ``grad == 0``.
    """
    v = state.v
    grad = np.asarray(grad, dtype=float)
    if kind.name == "bps":
        norm = math.sqrt(grad @ grad)
        if norm == 0:
            raise ZeroGradient("cannot reflect against a vanishing gradient")
        # unit normal first: exact -v in one dimension
        return kern.reflect(v, grad / norm)
    if kind.name == "zigzag":
        s = space.signs(v)
        s[detail] = -s[detail]
        return space.basis.from_basis(s)
    # coordinate sampler: weight (<v', grad>)_+ over the 2d atoms; for each axis
    # exactly one sign carries weight |c_i|
    c = space.basis.to_basis(grad)
    w = np.abs(c)
    nz = np.flatnonzero(w > 0)
    if not len(nz):
        return space.refresh(v, rng)
    if len(nz) == 1:
        i = int(nz[0])
    else:
        cdf = np.cumsum(w[nz]) / math.fsum(w[nz])
        i = int(nz[min(int(np.searchsorted(cdf, rng.random(), side="right")), len(nz) - 1)])
    return space.atom(i, 1.0 if c[i] > 0 else -1.0)


def _snap(x, facet):
    return x - (facet.normal @ x - facet.offset) * facet.normal


def simulate(
    target: PiecewiseTarget,
    kind,
    space,
    kernel,
    state0: State,
    rng,
    max_time: Optional[float] = None,
    max_events: Optional[int] = None,
    rate_bound: Optional[Callable] = None,
    thinning_window: float = 1.0,
) -> TrajectorySkeleton:
    """Run one chain until ``max_time`` (process time) or ``max_events`` events.

    Events are bounces, refreshments and boundary hits. A time horizon ends
    with an ``end`` breakpoint exactly at ``state0.t + max_time``; an event
    horizon ends with an ``end`` breakpoint at the time of the last event.

    Raises:
        StuckAtBoundary: more than ``MAX_STUCK`` consecutive boundary events
            without the clock advancing.
    """
    if (max_time is None) == (max_events is None):
        raise ValueError("give exactly one of max_time, max_events")
    if kernel.policy == "limit":
        kern.check_supported(kernel, kind, space)
    t = float(state0.t)
    x = np.array(state0.x, dtype=float)
    v = np.array(state0.v, dtype=float)
    k = int(state0.k)
    t_stop = t + max_time if max_time is not None else math.inf
    refresh_rate = kind.refresh_rate

    ts, xs, vs, tags, regs = [t], [x.copy()], [v.copy()], ["start"], [k]
    counts = {tag: 0 for tag in TAGS}
    counts["start"] = 1
    n_events = 0
    stuck = 0

    def record(tag):
        ts.append(t)
        xs.append(x.copy())
        vs.append(v.copy())
        tags.append(tag)
        regs.append(k)
        counts[tag] += 1

    while max_events is None or n_events < max_events:
        hit = first_boundary_hit(target, k, x, v)
        t_b = hit.t if hit is not None else math.inf
        remaining = t_stop - t
        t_ref = rng.standard_exponential() / refresh_rate if refresh_rate > 0 else math.inf
        horizon = min(t_b, remaining, t_ref)
        state = State(k, x, v, t)
        cand = next_bounce_candidate(target, kind, space, state, horizon, rng, rate_bound, thinning_window)

        if cand is not None and cand.t < horizon:
            dt = cand.t
            x = x + dt * v
            t += dt
            grad = target.regions[k].grad_log_density(x)
            try:
                v = apply_bounce(kind, State(k, x, v, t), grad, cand.detail, space, rng)
            except ZeroGradient:
                v = space.refresh(v, rng)
            stuck = 0
            n_events += 1
            record("bounce")
            continue

        if math.isinf(horizon):
            raise RuntimeError("no event can ever occur; the chain would run forever")

        if t_b <= t_ref and t_b <= remaining:
            stuck = stuck + 1 if t_b == 0.0 else 0
            if stuck > MAX_STUCK:
                raise StuckAtBoundary(f"{stuck} zero-time boundary events at x={x}")
            x = _snap(x + t_b * v, hit.facet)
            t += t_b
            v, k = _cross(target, kind, space, kernel, hit, x, v, k, rng)
            n_events += 1
            record("boundary")
            continue

        if t_ref <= remaining:
            x = x + t_ref * v
            t += t_ref
            v = space.refresh(v, rng)
            stuck = 0
            n_events += 1
            record("refresh")
            continue

        x = x + remaining * v
        t = t_stop
        break

    record("end")
    return TrajectorySkeleton(
        t=np.array(ts),
        x=np.array(xs),
        v=np.array(vs),
        tags=tags,
        regions=np.array(regs, dtype=int),
        event_counts=counts,
    )


def _cross(target, kind, space, kernel, hit, x, v, k, rng):
    """Velocity and region after a facet hit at ``x``."""
    facet = hit.facet
    try:
        bp = classify_hit(target, facet, x)
    except DegenerateBoundary:
        return v, facet.other_side(k)
    if facet.edge_distance(x) < EDGE_TOLERANCE:
        return -v, k
    v_out = kern.apply(kernel, kind, bp, space, v, rng)
    vn = v_out @ bp.n
    if abs(vn) < TANGENT_TOLERANCE:
        return -v, k
    return v_out, (bp.k2 if vn > 0 else bp.k1)


class PathMoments(NamedTuple):
    mean: np.ndarray
    second_moment: np.ndarray
    occupancy: dict
    total_time: float


def segment_moments(t, x, v, regions, n_regions=None):
    """Time averages of ``x`` and ``x x^T`` along a piecewise-linear path.

    Each segment ``x_i + u v_i``, ``u in [0, dt_i]``, is integrated in closed
    form. Occupancy is the fraction of time spent in each region, normalised
    by the sum of segment durations so that a path confined to one region
    gives exactly 1.
    """
    # contiguous copies: BLAS reduction order depends on memory layout
    t = np.ascontiguousarray(t, dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    v = np.ascontiguousarray(v, dtype=float)
    dt = np.diff(t)
    X, V = x[:-1], v[:-1]
    total = float(np.sum(dt))
    if total <= 0:
        raise ValueError("path has zero duration")
    first = dt @ X + (0.5 * dt * dt) @ V
    XV = (X * dt[:, None]).T @ X
    cross = (V * (0.5 * dt * dt)[:, None]).T @ X
    VV = (V * (dt**3 / 3.0)[:, None]).T @ V
    second = XV + cross + cross.T + VV
    regs = np.asarray(regions)[:-1]
    n_regions = int(regs.max()) + 1 if n_regions is None else n_regions
    occ = {}
    for r in range(n_regions):
        occ[r] = float(np.sum(dt[regs == r])) / total
    return PathMoments(first / total, second / total, occ, total)


def path_moments(skel: TrajectorySkeleton, n_regions=None) -> PathMoments:
    return segment_moments(skel.t, skel.x, skel.v, skel.regions, n_regions)


def validate_skeleton(skel: TrajectorySkeleton, target: Optional[PiecewiseTarget] = None, rtol=1e-9):
    """Check continuity, time ordering and facet residuals of a skeleton.

    Returns:
        list of problems (empty when the skeleton is consistent).
    """
    problems = []
    dt = np.diff(skel.t)
    # an event-count horizon puts ``end`` at the time of the last event
    events_dt = dt[:-1] if skel.tags[-1] == "end" else dt
    if np.any(events_dt <= 0) or np.any(dt < 0):
        problems.append("breakpoint times are not strictly increasing")
    pred = skel.x[:-1] + dt[:, None] * skel.v[:-1]
    scale = 1.0 + np.abs(skel.x[1:])
    if np.any(np.abs(pred - skel.x[1:]) > rtol * scale * 10):
        problems.append("positions are discontinuous across breakpoints")
    if target is not None:
        arr = target._arrays
        for i in np.flatnonzero(np.array(skel.tags) == "boundary"):
            res = np.abs(arr["normals"] @ skel.x[i] - arr["offsets"])
            if res.min() > rtol * (1.0 + np.abs(arr["offsets"]).max()):
                problems.append(f"boundary breakpoint {i} is off every facet")
    return problems

"""Velocity transition kernels applied when a trajectory hits a discontinuity.

Every kernel here maps an incoming velocity ``v_in`` to an outgoing one while
keeping the position fixed. Validity is the requirement that the composition
"negate, then apply the kernel" leaves the boundary velocity density

    l(v) = |<n, v>| p(v) pi_side(v)

invariant, where ``pi_side`` is ``pi2`` for velocities pointing into the
higher-density side and ``pi1`` otherwise. The oracle module checks this.

Three families are provided:

* ``flip``: ``v_out = -v_in`` (retrace the path).
* ``mh:<m>``: negate, then ``m`` Metropolis-Hastings steps targeting ``l``.
* ``limit``: the velocity law obtained by shrinking a smooth exponential ramp
  to the discontinuity; one rule per sampler (BPS, Coordinate Sampler,
  Zig-Zag).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyPositiveCone, NoExit, UnsupportedCombination
from .velocity import (
    TANGENT_TOLERANCE,
    CoordinateAxes,
    IsoGaussian,
    SignedHypercube,
    UnitSphere,
)

PASS_THROUGH = "pass"
BOUNCE_BACK = "bounce"


@dataclass(frozen=True)
class BoundaryKernel:
    policy: str
    iters: int = 1

    def __post_init__(self):
        if self.policy not in ("flip", "mh", "limit"):
            raise ValueError(f"unknown kernel policy {self.policy!r}")
        if self.iters < 1:
            raise ValueError("MH iterations must be >= 1")

    @classmethod
    def parse(cls, text):
        """Parse ``flip``, ``limit`` or ``mh:<iters>`` (bare ``mh`` means one step)."""
        text = text.strip().lower()
        if text in ("flip", "limit"):
            return cls(text)
        if text == "mh":
            return cls("mh", 1)
        if text.startswith("mh:"):
            return cls("mh", int(text[3:]))
        raise ValueError(f"cannot parse kernel {text!r}")

    def __str__(self):
        return f"mh:{self.iters}" if self.policy == "mh" else self.policy


FLIP = BoundaryKernel("flip")
LIMIT = BoundaryKernel("limit")


@dataclass(frozen=True)
class ZzBoundaryOutcome:
    v_out: np.ndarray
    exit: str
    t_star: float


def _side_weights(bp):
    """``(w1, w2)`` proportional to ``(pi1, pi2)`` with ``w2 = 1``."""
    return bp.ratio, 1.0


def l_density(bp, space, v):
    """Unnormalised boundary velocity density ``l`` at ``v`` (or rows of ``v``)."""
    v = np.asarray(v, dtype=float)
    dots = v @ bp.n
    pi = np.where(dots > 0, bp.pi2, bp.pi1)
    out = np.abs(dots) * space.density(v) * pi
    return np.where(np.abs(dots) < TANGENT_TOLERANCE, 0.0, out)


def _mh_weight(bp, space, V):
    """``l / q`` up to a constant, with the side densities rescaled by ``pi2``."""
    dots = V @ bp.n
    w1, w2 = _side_weights(bp)
    pi = np.where(dots > 0, w2, w1)
    w = np.abs(dots) * pi * (space.density(V) / space.proposal_density(V))
    return np.where(np.abs(dots) < TANGENT_TOLERANCE, 0.0, w)


def metropolis_hastings(bp, space, v_start, iters, rng):
    """``iters`` independence-MH steps targeting ``l``, started at ``v_start``.

    Proposals come from ``space.proposals`` (uniform for bounded laws, the
    Gaussian itself for ``IsoGaussian``). From a state with ``l = 0`` any
    proposal with positive ``l`` is accepted.
    """
    V = space.proposals(rng, iters)
    u = rng.random(iters)
    w_prop = _mh_weight(bp, space, V)
    v = np.asarray(v_start, dtype=float)
    w = float(_mh_weight(bp, space, v[None, :])[0])
    cur = -1
    for j, (wp, uj) in enumerate(zip(w_prop.tolist(), u.tolist())):
        if wp > 0 and (w == 0 or uj * w < wp):
            cur, w = j, wp
    return np.array(v if cur < 0 else V[cur], dtype=float)


def _passes(bp, rng):
    # P(E >= C) = exp(-C) = pi1/pi2; an exponential draw (not a uniform) keeps
    # BPS/CS consuming the same stream as the d=1 Zig-Zag exit-time walk.
    return rng.standard_exponential() >= bp.log_ratio_C


def reflect(v, n):
    """Specular reflection of ``v`` in the plane with unit normal ``n``."""
    return v - 2.0 * (v @ n) * n


def limit_bps(bp, v, rng):
    """Limit kernel for BPS: pass with probability ``pi1/pi2``, else reflect."""
    v = np.asarray(v, dtype=float)
    if v @ bp.n > 0:
        return v.copy()
    if _passes(bp, rng):
        return v.copy()
    return reflect(v, bp.n)


def _positive_cone_axes(space, n):
    c = space.basis.to_basis(n)
    idx = np.flatnonzero(np.abs(c) > TANGENT_TOLERANCE)
    if not len(idx):
        raise EmptyPositiveCone("no coordinate axis crosses the facet")
    return idx, np.sign(c[idx]), np.abs(c[idx])


def limit_cs(bp, space, v, rng):
    """Limit kernel for the Coordinate Sampler.

    Velocities into the high side are kept. Otherwise pass with probability
    ``pi1/pi2``, else draw ``v'`` from the positive cone with probability
    ``<v', n> / K``.
    """
    if not isinstance(space, CoordinateAxes):
        raise UnsupportedCombination("limit_cs needs CoordinateAxes velocities")
    v = np.asarray(v, dtype=float)
    if v @ bp.n > 0:
        return v.copy()
    if _passes(bp, rng):
        return v.copy()
    idx, signs, weights = _positive_cone_axes(space, bp.n)
    if len(idx) == 1:
        j = 0
    else:
        K = math.fsum(weights)
        cdf = np.cumsum(weights) / K
        j = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(idx) - 1)
    return space.atom(int(idx[j]), signs[j])


def zz_exit_time(tau, v, n, C):
    """Walk the boundary-layer displacement ``h`` for one Zig-Zag crossing.

    ``h(t) = sum_i v_i n_i (t - 2 max(0, t - tau_i))`` is piecewise linear
    and convex: its slope starts at ``<n, v>`` and grows by ``-2 v_i n_i > 0``
    at every finite ``tau_i``. Entered with ``<n, v> < 0`` the layer is left
    either at ``h = -C`` (pass) or back at ``h = 0`` (bounce); entered with
    ``<n, v> > 0`` only ``h = +C`` is reachable.

    All arguments are in basis coordinates. With ``C = inf`` and ``<n, v> > 0``
    (entry from a zero-density side) there is no finite exit; the outcome is
    the ``C -> inf`` limit, every flippable coordinate flipped and
    ``t_star = inf``.

    Raises:
        NoExit: ``h`` stalls without reaching a threshold.
    """
    tau = np.asarray(tau, dtype=float)
    v = np.asarray(v, dtype=float)
    vn = (v * np.asarray(n, dtype=float)).tolist()
    slope = math.fsum(vn)
    if slope == 0.0:
        raise NoExit("tangent entry velocity")
    entered_down = slope < 0
    tl = tau.tolist()
    order = sorted((i for i, ti in enumerate(tl) if ti != math.inf), key=tl.__getitem__)
    breaks = [tl[i] for i in order] + [math.inf]
    t0, h0 = 0.0, 0.0
    t_star = None
    exit_kind = None
    for j, t1 in enumerate(breaks):
        if slope < 0:
            if math.isfinite(C):
                t_hit = t0 + (-C - h0) / slope
                if t_hit <= t1:
                    t_star, exit_kind = t_hit, PASS_THROUGH
                    break
        elif slope > 0:
            if entered_down:
                if h0 < 0:
                    t_hit = t0 - h0 / slope
                    if t_hit <= t1:
                        t_star, exit_kind = t_hit, BOUNCE_BACK
                        break
            elif math.isfinite(C):
                t_hit = t0 + (C - h0) / slope
                if t_hit <= t1:
                    t_star, exit_kind = t_hit, PASS_THROUGH
                    break
        if j == len(order):
            break
        h0 += slope * (t1 - t0)
        t0 = t1
        slope += -2.0 * vn[order[j]]
    if t_star is None:
        if not entered_down and math.isinf(C):
            t_star, exit_kind = math.inf, PASS_THROUGH
        else:
            raise NoExit("boundary-layer walk never reached an exit threshold")
    flipped = np.isfinite(tau) & (tau < t_star)
    return ZzBoundaryOutcome(np.where(flipped, -v, v), exit_kind, t_star)


def _zz_clocks(s, nb, rng, size=None):
    """Exponential flip times with rate ``max(-n_i s_i, 0)``; ``inf`` where zero."""
    rates = np.maximum(-nb * s, 0.0)
    active = np.flatnonzero(rates > 0)
    if size is None:
        tau = np.full(len(s), np.inf)
        tau[active] = rng.standard_exponential(len(active)) / rates[active]
    else:
        tau = np.full((size, len(s)), np.inf)
        tau[:, active] = rng.standard_exponential((size, len(active))) / rates[active]
    return tau


def limit_zz(bp, space, v, rng):
    """Limit kernel for Zig-Zag (exit-time algorithm with unit ramp slope)."""
    if not isinstance(space, SignedHypercube):
        raise UnsupportedCombination("limit_zz needs SignedHypercube velocities")
    s = space.signs(v)
    nb = space.basis.to_basis(bp.n)
    tau = _zz_clocks(s, nb, rng)
    out = zz_exit_time(tau, s, nb, bp.log_ratio_C)
    return space.basis.from_basis(out.v_out)


def zz_exit_time_batch(tau, v, n, C):
    """Vectorised :func:`zz_exit_time` over the rows of ``tau``.

    Returns:
        ``(flipped, t_star, passed)``: boolean ``(N, d)`` flip mask, exit
        times and pass-through indicators.
    """
    tau = np.asarray(tau, dtype=float)
    N, d = tau.shape
    vn = np.asarray(v, dtype=float) * np.asarray(n, dtype=float)
    slope0 = math.fsum(vn.tolist())
    if slope0 == 0.0:
        raise NoExit("tangent entry velocity")
    entered_down = slope0 < 0
    order = np.argsort(tau, axis=1, kind="stable")
    T = np.take_along_axis(tau, order, axis=1)
    inc = -2.0 * vn[order]
    inc = np.where(np.isfinite(T), inc, 0.0)
    T = np.concatenate([T, np.full((N, 1), np.inf)], axis=1)

    t_star = np.full(N, np.nan)
    passed = np.zeros(N, dtype=bool)
    done = np.zeros(N, dtype=bool)
    t0 = np.zeros(N)
    h0 = np.zeros(N)
    slope = np.full(N, slope0)
    with np.errstate(invalid="ignore", divide="ignore"):
        for j in range(d + 1):
            t1 = T[:, j]
            live = ~done
            if math.isfinite(C):
                down = live & (slope < 0)
                t_hit = t0 + (-C - h0) / slope
                hit = down & (t_hit <= t1)
                t_star[hit], passed[hit], done[hit] = t_hit[hit], True, True
            up = ~done & (slope > 0)
            if entered_down:
                t_hit = t0 - h0 / slope
                hit = up & (h0 < 0) & (t_hit <= t1)
                t_star[hit], done[hit] = t_hit[hit], True
            elif math.isfinite(C):
                t_hit = t0 + (C - h0) / slope
                hit = up & (t_hit <= t1)
                t_star[hit], passed[hit], done[hit] = t_hit[hit], True, True
            if done.all() or j == d:
                break
            step = ~done & np.isfinite(t1)
            h0 = np.where(step, h0 + slope * (t1 - t0), h0)
            t0 = np.where(step, t1, t0)
            slope = np.where(step, slope + inc[:, j], slope)
    if not done.all():
        if not entered_down and math.isinf(C):
            t_star[~done] = np.inf
            passed[~done] = True
        else:
            raise NoExit("boundary-layer walk never reached an exit threshold")
    flipped = np.isfinite(tau) & (tau < t_star[:, None])
    return flipped, t_star, passed


def limit_zz_batch(bp, space, v, size, rng):
    """``size`` independent draws of the Zig-Zag limit kernel from one ``v``.

    Returns:
        ``(size, d)`` array of outgoing velocities in ambient coordinates.
    """
    if not isinstance(space, SignedHypercube):
        raise UnsupportedCombination("limit_zz needs SignedHypercube velocities")
    s = space.signs(v)
    nb = space.basis.to_basis(bp.n)
    tau = _zz_clocks(s, nb, rng, size=size)
    flipped, _, _ = zz_exit_time_batch(tau, s, nb, bp.log_ratio_C)
    S = np.where(flipped, -s, s)
    return S @ space.basis.R.T


_NATIVE_LIMIT = {
    "bps": (UnitSphere, IsoGaussian),
    "cs": (CoordinateAxes,),
    "zigzag": (SignedHypercube,),
}


def _kind_name(sampler_kind):
    return getattr(sampler_kind, "name", sampler_kind)


def check_supported(kernel, sampler_kind, space):
    """Raise :class:`UnsupportedCombination` for (kernel, sampler, space) with no rule."""
    name = _kind_name(sampler_kind)
    if name not in _NATIVE_LIMIT:
        raise UnsupportedCombination(f"unknown sampler {name!r}")
    if not isinstance(space, _NATIVE_LIMIT[name]):
        raise UnsupportedCombination(f"{name} does not run on {space.name} velocities")


def apply(kernel, sampler_kind, bp, space, v_in, rng):
    """Outgoing velocity for a trajectory hitting ``bp`` with velocity ``v_in``.

    A tangent ``v_in`` (``|<n, v_in>|`` below ``TANGENT_TOLERANCE``) falls back
    to the flip, which is always valid.
    """
    v_in = np.asarray(v_in, dtype=float)
    if abs(v_in @ bp.n) < TANGENT_TOLERANCE or kernel.policy == "flip":
        return -v_in
    if kernel.policy == "mh":
        return metropolis_hastings(bp, space, -v_in, kernel.iters, rng)
    check_supported(kernel, sampler_kind, space)
    name = _kind_name(sampler_kind)
    if name == "bps":
        return limit_bps(bp, v_in, rng)
    if name == "cs":
        return limit_cs(bp, space, v_in, rng)
    return limit_zz(bp, space, v_in, rng)

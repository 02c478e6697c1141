"""PDMP samplers (BPS, Zig-Zag, Coordinate Sampler) for piecewise-smooth targets."""

from .errors import PDMPError
from .kernels import BoundaryKernel, apply, limit_bps, limit_cs, limit_zz, metropolis_hastings, zz_exit_time
from .sampler import (
    BPS,
    CoordinateSampler,
    State,
    TrajectorySkeleton,
    ZigZag,
    affine_event_time,
    make_kind,
    path_moments,
    simulate,
    validate_skeleton,
)
from .target import BoundaryPoint, Facet, PiecewiseTarget, Region, hypercube_target, region_of
from .velocity import Basis, CoordinateAxes, IsoGaussian, SignedHypercube, UnitSphere, make_space

__version__ = "0.1.0"

__all__ = [
    "BPS",
    "Basis",
    "BoundaryKernel",
    "BoundaryPoint",
    "CoordinateAxes",
    "CoordinateSampler",
    "Facet",
    "IsoGaussian",
    "PDMPError",
    "PiecewiseTarget",
    "Region",
    "SignedHypercube",
    "State",
    "TrajectorySkeleton",
    "UnitSphere",
    "ZigZag",
    "affine_event_time",
    "apply",
    "hypercube_target",
    "limit_bps",
    "limit_cs",
    "limit_zz",
    "make_kind",
    "make_space",
    "metropolis_hastings",
    "path_moments",
    "region_of",
    "simulate",
    "validate_skeleton",
    "zz_exit_time",
]

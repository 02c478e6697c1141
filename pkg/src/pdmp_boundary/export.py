"""Skeleton CSV files and summary dictionaries.

Floats are written with 17 significant digits so a CSV read back gives the
same doubles, and summaries recomputed from files match the in-memory ones.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import SchemaMismatch
from .sampler import TAGS, TrajectorySkeleton, segment_moments

REGION_NAMES = ("inside", "outside")
_FLOAT = "%.17g"


def csv_header(dim):
    return ["t", "tag"] + [f"x{i + 1}" for i in range(dim)] + [f"v{i + 1}" for i in range(dim)]


def write_skeleton_csv(path, skel: TrajectorySkeleton):
    dim = skel.x.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(csv_header(dim)) + "\n")
        for t, tag, x, v in zip(skel.t, skel.tags, skel.x, skel.v):
            fh.write(",".join([_FLOAT % t, tag] + [_FLOAT % c for c in x] + [_FLOAT % c for c in v]) + "\n")


def read_skeleton_csv(path):
    """Read a skeleton CSV.

    Returns:
        ``(t, tags, x, v)`` with ``x`` and ``v`` of shape ``(rows, d)``.

    Raises:
        SchemaMismatch: malformed header, unknown tag or ragged rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        if len(header) < 4 or header[:2] != ["t", "tag"] or (len(header) - 2) % 2:
            raise SchemaMismatch(f"{path}: unexpected header {header[:4]}")
        dim = (len(header) - 2) // 2
        if header != csv_header(dim):
            raise SchemaMismatch(f"{path}: header does not follow t,tag,x1..xd,v1..vd")
        t, tags, rows = [], [], []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaMismatch(f"{path}:{line}: expected {len(header)} fields")
            if row[1] not in TAGS:
                raise SchemaMismatch(f"{path}:{line}: unknown tag {row[1]!r}")
            t.append(float(row[0]))
            tags.append(row[1])
            rows.append([float(c) for c in row[2:]])
    if not rows:
        raise SchemaMismatch(f"{path}: no breakpoints")
    data = np.array(rows)
    return np.array(t), tags, data[:, :dim], data[:, dim:]


def cube_regions(x, v, t, half_width=1.0):
    """Region of each segment of a cube-target path, judged at its midpoint."""
    dt = np.diff(t)
    mid = x[:-1] + 0.5 * dt[:, None] * v[:-1]
    inside = np.all(np.abs(mid) <= half_width, axis=1)
    labels = np.where(inside, 0, 1)
    return np.append(labels, labels[-1] if len(labels) else 0)


def chain_summary(t, x, v, tags, regions):
    """Moments, occupancy and event counts of one chain as plain Python values."""
    m = segment_moments(t, x, v, regions, n_regions=len(REGION_NAMES))
    events = {tag: 0 for tag in TAGS}
    for tag in tags:
        events[tag] += 1
    return {
        "mean": m.mean.tolist(),
        "second_moment": m.second_moment.tolist(),
        "occupancy": {name: m.occupancy[k] for k, name in enumerate(REGION_NAMES)},
        "events": events,
        "total_time": m.total_time,
        "boundary_hit_rate": events["boundary"] / m.total_time,
    }


def pool_summaries(per_chain):
    """Merge chain summaries, weighting moments by each chain's total time."""
    T = np.array([c["total_time"] for c in per_chain])
    w = T / T.sum()
    means = np.array([c["mean"] for c in per_chain])
    second = np.array([c["second_moment"] for c in per_chain])
    occ = {name: float(w @ np.array([c["occupancy"][name] for c in per_chain])) for name in REGION_NAMES}
    events = {tag: sum(c["events"][tag] for c in per_chain) for tag in TAGS}
    total = float(T.sum())
    spread = means.std(axis=0, ddof=1).tolist() if len(per_chain) > 1 else None
    return {
        "mean": (w @ means).tolist(),
        "second_moment": np.tensordot(w, second, axes=1).tolist(),
        "occupancy": occ,
        "events": events,
        "total_time": total,
        "boundary_hit_rate": events["boundary"] / total,
        "between_chain_sd": spread,
        "events_per_sec": None,
    }


def summarize(paths, half_width=1.0):
    """Pooled summary recomputed from skeleton CSV files.

    Raises:
        SchemaMismatch: files with different dimensions or bad contents.
    """
    per_chain = []
    dim = None
    for p in paths:
        t, tags, x, v = read_skeleton_csv(p)
        if dim is not None and x.shape[1] != dim:
            raise SchemaMismatch(f"{p}: dimension {x.shape[1]} differs from {dim}")
        dim = x.shape[1]
        regions = cube_regions(x, v, t, half_width)
        per_chain.append(chain_summary(t, x, v, tags, regions))
    if not per_chain:
        raise SchemaMismatch("no CSV files given")
    return {"per_chain": per_chain, "pooled": pool_summaries(per_chain)}


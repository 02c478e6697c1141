"""Command-line experiment runner for the Gaussian-in-a-cube target.

Subcommands:

    run          simulate seeded chains, write CSV skeletons, summary.json and an SVG
    summarize    recompute a pooled summary from skeleton CSV files
    figure-grid  sampler x kernel grid per dimension, one panel figure per dimension
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import export
from .errors import PDMPError
from .kernels import BoundaryKernel, check_supported
from .sampler import State, make_kind, simulate
from .target import hypercube_target
from .velocity import Basis, make_space

log = logging.getLogger("pdmp_boundary")

SAMPLERS = ("bps", "zigzag", "cs")
_NATIVE_SPACE = {"zigzag": "hypercube", "cs": "axes"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int = 2
    sigma_in: float = 1.0
    sigma_out: float = 1.0
    alpha_in: float = 1.0
    alpha_out: float = 0.0
    sampler: str = "bps"
    refresh_rate: Optional[float] = None
    kernel: str = "limit"
    basis: str = "canonical"
    velocity: Optional[str] = None
    horizon: str = "events:1000"
    chains: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be positive")
        if self.sigma_in <= 0 or self.sigma_out <= 0:
            raise ConfigError("sigma_in and sigma_out must be positive")
        if self.alpha_in < 0 or self.alpha_out < 0 or self.alpha_in + self.alpha_out <= 0:
            raise ConfigError("alphas must be nonnegative with a positive sum")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {', '.join(SAMPLERS)}")
        if self.refresh_rate is not None and self.refresh_rate < 0:
            raise ConfigError("refresh_rate must be nonnegative")
        if self.chains < 1:
            raise ConfigError("chains must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        try:
            BoundaryKernel.parse(self.kernel)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.parsed_basis()
        self.parsed_horizon()

    @property
    def effective_refresh_rate(self):
        if self.sampler == "zigzag":
            return 0.0
        return 1.0 if self.refresh_rate is None else float(self.refresh_rate)

    @property
    def space_name(self):
        if self.sampler == "bps":
            return self.velocity or "sphere"
        return self.velocity or _NATIVE_SPACE[self.sampler]

    def parsed_basis(self):
        """``None`` for the canonical basis, else the rotation seed."""
        if self.basis == "canonical":
            return None
        head, _, tail = self.basis.partition(":")
        if head != "rotated" or not tail.isdigit():
            raise ConfigError(f"basis must be 'canonical' or 'rotated:<seed>', got {self.basis!r}")
        return int(tail)

    def parsed_horizon(self):
        """``("time", T)`` or ``("events", N)``."""
        head, _, tail = self.horizon.partition(":")
        try:
            if head == "time":
                T = float(tail)
                if not T > 0:
                    raise ValueError
                return "time", T
            if head == "events":
                N = int(tail)
                if N < 1:
                    raise ValueError
                return "events", N
        except ValueError:
            pass
        raise ConfigError(f"horizon must be 'time:<T>' or 'events:<N>', got {self.horizon!r}")

    def to_json(self):
        d = asdict(self)
        d["refresh_rate"] = self.effective_refresh_rate
        d["velocity"] = self.space_name
        return d


def build(config: ExperimentConfig):
    """Target, sampler kind, velocity space and kernel for a config.

    Raises:
        ConfigError: the (sampler, velocity, kernel) combination has no rule.
    """
    target = hypercube_target(config.dim, config.sigma_in, config.sigma_out, config.alpha_in, config.alpha_out)
    kind = make_kind(config.sampler, config.effective_refresh_rate)
    rot = config.parsed_basis()
    basis = Basis.random(config.dim, rot) if rot is not None else None
    try:
        space = make_space(config.space_name, config.dim, basis)
        kernel = BoundaryKernel.parse(config.kernel)
        check_supported(kernel, kind, space)
    except (ValueError, PDMPError) as exc:
        raise ConfigError(str(exc)) from None
    return target, kind, space, kernel


def chain_rng(seed, chain):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))


def initial_state(config, space, rng):
    # the origin unless the cube carries no mass
    x0 = np.zeros(config.dim)
    k0 = 0
    if config.alpha_in == 0:
        x0[0] = 2.0
        k0 = 1
    return State(k0, x0, space.sample(rng), 0.0)


def run_chain(config, parts, chain):
    target, kind, space, kernel = parts
    rng = chain_rng(config.seed, chain)
    how, amount = config.parsed_horizon()
    stop = {"max_time": amount} if how == "time" else {"max_events": amount}
    start = time.perf_counter()
    skel = simulate(target, kind, space, kernel, initial_state(config, space, rng), rng, **stop)
    return skel, time.perf_counter() - start


def run(config: ExperimentConfig, out_dir, svg=True, timing=False, workers=None):
    """Run all chains and write ``chain_XXX.csv``, ``summary.json`` and ``trajectory.svg``.

    Args:
        svg: plot chain 0 when ``dim >= 2``.
        timing: record wall-clock figures (these make reruns differ).

    Returns:
        the summary dictionary written to ``summary.json``.
    """
    parts = build(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def work(chain):
        skel, wall = run_chain(config, parts, chain)
        export.write_skeleton_csv(out / f"chain_{chain:03d}.csv", skel)
        return skel, wall

    with ThreadPoolExecutor(max_workers=workers or min(config.chains, 8)) as pool:
        results = list(pool.map(work, range(config.chains)))

    per_chain = []
    for chain, (skel, wall) in enumerate(results):
        s = export.chain_summary(skel.t, skel.x, skel.v, skel.tags, skel.regions)
        s["chain"] = chain
        s["wall_clock"] = wall if timing else None
        s["events_per_sec"] = _rate(s["events"], wall) if timing else None
        per_chain.append(s)
    pooled = export.pool_summaries(per_chain)
    if timing:
        pooled["events_per_sec"] = _rate(pooled["events"], sum(w for _, w in results))
    summary = {"config": config.to_json(), "per_chain": per_chain, "pooled": pooled}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n")

    if svg and config.dim >= 2:
        from .plotting import trajectory_svg

        skel = results[0][0]
        title = f"{config.sampler} / {config.kernel} / d={config.dim}"
        trajectory_svg(out / "trajectory.svg", skel.x, skel.tags, title=title)
    return summary


def _rate(events, wall):
    n = sum(c for tag, c in events.items() if tag not in ("start", "end"))
    return n / wall if wall > 0 else None


GRID_KERNELS = ("limit", "mh:1", "mh:100")


def figure_grid(out_dir, dims=(2, 10, 100), horizon="events:2000", seed=0, basis="rotated:7", svg=True):
    """Every sampler x kernel pair per dimension, with one 3x3 panel figure each.

    Returns:
        ``{run directory name: summary}``.
    """
    from .plotting import grid_svg

    out = Path(out_dir)
    summaries = {}
    for d in dims:
        panels = {}
        for r, sampler in enumerate(SAMPLERS):
            for c, kern in enumerate(GRID_KERNELS):
                cfg = ExperimentConfig(dim=d, sampler=sampler, kernel=kern, basis=basis, horizon=horizon, seed=seed)
                name = f"{sampler}_{kern.replace(':', '')}_d{d}"
                summaries[name] = run(cfg, out / name, svg=svg)
                t, tags, x, _ = export.read_skeleton_csv(out / name / "chain_000.csv")
                panels[(r, c)] = (x[:, :2], tags, f"{sampler} {kern}")
                log.info("finished %s", name)
        if svg:
            grid_svg(out / f"grid_d{d}.svg", panels, len(SAMPLERS), len(GRID_KERNELS), suptitle=f"d = {d}")
    return summaries


def _add_config_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="JSON file with config fields; flags override it")
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--sigma-in", dest="sigma_in", type=float, default=S)
    p.add_argument("--sigma-out", dest="sigma_out", type=float, default=S)
    p.add_argument("--alpha-in", dest="alpha_in", type=float, default=S)
    p.add_argument("--alpha-out", dest="alpha_out", type=float, default=S)
    p.add_argument("--sampler", default=S, help="bps, zigzag or cs")
    p.add_argument("--refresh-rate", dest="refresh_rate", type=float, default=S)
    p.add_argument("--kernel", default=S, help="flip, limit or mh:<iters>")
    p.add_argument("--basis", default=S, help="canonical or rotated:<seed>")
    p.add_argument("--velocity", default=S, help="BPS only: sphere (default) or gaussian")
    p.add_argument("--horizon", default=S, help="time:<T> or events:<N>")
    p.add_argument("--chains", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)


def config_from_args(ns):
    values = {}
    if ns.config:
        try:
            values.update(json.loads(Path(ns.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values.update({k: v for k, v in vars(ns).items() if k in known})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def make_parser():
    parser = argparse.ArgumentParser(prog="pdmp-boundary", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate chains and write CSV/JSON/SVG")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-svg", dest="svg", action="store_false")
    p.add_argument("--timing", action="store_true", help="record wall-clock and events/sec")

    p = sub.add_parser("summarize", help="pooled summary from skeleton CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("figure-grid", help="sampler x kernel grid per dimension")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", default="2,10,100")
    p.add_argument("--horizon", default="events:2000")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--basis", default="rotated:7")
    return parser


def main(argv=None):
    parser = make_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(message)s")
    try:
        if ns.command == "run":
            summary = run(config_from_args(ns), ns.out, svg=ns.svg, timing=ns.timing)
            pooled = summary["pooled"]
            print(f"wrote {ns.out}: occupancy(inside)={pooled['occupancy']['inside']:.6f}")
        elif ns.command == "summarize":
            text = json.dumps(export.summarize(ns.csv), indent=2, allow_nan=False) + "\n"
            if ns.out:
                Path(ns.out).write_text(text)
            else:
                sys.stdout.write(text)
        else:
            dims = tuple(int(d) for d in ns.dims.split(","))
            figure_grid(ns.out, dims=dims, horizon=ns.horizon, seed=ns.seed, basis=ns.basis)
            print(f"wrote grid to {ns.out}")
    except (ConfigError, PDMPError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

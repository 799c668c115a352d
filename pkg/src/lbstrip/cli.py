"""Command line front end: ``lbstrip run <config.yaml>`` or ``lbstrip run --preset NAME``.

Config schema (YAML)::

    mode: stationary            # stationary | residence-sweep | oracle | msd-check
    seed: 1
    n_particles: 2000000
    output_dir: out/fig-empty
    domain:
      length_x: 4.0
      length_y: 1.0
      rho_left: 1.0
      rho_right: 0.5
      obstacles:
        - {shape: rect, center: [2.0, 0.5], size: [0.8, 0.8]}   # size = [width, height]
        - {shape: disk, center: [3.0, 0.5], radius: 0.2}
    kernel: {mean_flight_time: 0.01}
    grid: {n_x: 200, n_y: 50}
    normalization: extrapolate  # stationary only: extrapolate | column | cell
    sweep:                      # residence-sweep only
      parameter: obstacle_height
      values: [0.1, 0.5, 0.9]
      template: {center: [2.0, 0.5], size: [0.8, 0.8]}
    solver: {tolerance: 1.0e-8, max_iterations: 1000000, relaxation: 1.9}
    msd: {t_min_factor: 50, t_max_factor: 200, n_times: 40}   # msd-check only
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .analysis import SweepSpec, run_sweep
from .density import GridSpec, comment_header, write_field_csv
from .experiments import run_msd_check, run_oracle, run_stationary
from .geometry import Disk, DomainConfig, Rect, StripSpec, validate
from .laplace import SolverSettings
from .scattering import KernelParams

MODES = ("stationary", "residence-sweep", "oracle", "msd-check")
DESK_PARTICLES = 2_000_000


class ConfigError(ValueError):
    def __init__(self, section: str, message: str):
        super().__init__(f"[{section}] {message}")
        self.section = section


@dataclass
class ExperimentConfig:
    domain: DomainConfig
    kernel: KernelParams
    grid: GridSpec
    n_particles: int
    seed: int
    mode: str
    output_dir: Path
    sweep: Optional[SweepSpec] = None
    solver: Optional[SolverSettings] = None
    normalization: str = "extrapolate"
    msd: Optional[dict] = None


# --- presets ---------------------------------------------------------------

_DOMAIN = {"length_x": 4.0, "length_y": 1.0, "rho_left": 1.0, "rho_right": 0.5}


def _rect(cx, cy, w, h):
    return {"shape": "rect", "center": [cx, cy], "size": [w, h]}


def _stationary(obstacles, full_n=50_000_000):
    return {
        "mode": "stationary", "seed": 1, "n_particles": DESK_PARTICLES, "full_n_particles": full_n,
        "domain": dict(_DOMAIN, obstacles=obstacles), "kernel": {"mean_flight_time": 0.01},
        "grid": {"n_x": 200, "n_y": 50}, "normalization": "extrapolate",
    }


def _sweep(parameter, values, template):
    return {
        "mode": "residence-sweep", "seed": 1, "n_particles": DESK_PARTICLES, "full_n_particles": 100_000_000,
        "domain": dict(_DOMAIN, obstacles=[]), "kernel": {"mean_flight_time": 0.02},
        "grid": {"n_x": 200, "n_y": 50},
        "sweep": {"parameter": parameter, "values": values, "template": template},
    }


_HEIGHTS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.65, 0.7, 0.8, 0.9]
_CENTERS = [0.5, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8, 3.2, 3.5]

PRESETS = {
    "fig-empty": _stationary([]),
    "fig-square-obstacle": _stationary([_rect(2.0, 0.5, 0.8, 0.8)]),
    "fig-thin-obstacle": _stationary([_rect(2.0, 0.5, 0.04, 0.8)]),
    "fig-two-obstacles": _stationary([_rect(1.3, 0.4, 0.6, 0.6), _rect(2.7, 0.6, 0.6, 0.6)]),
    "fig-two-rectangles": _stationary([_rect(1.4, 0.45, 0.4, 0.7), _rect(2.6, 0.55, 0.4, 0.7)]),
    "sweep-height-thin": _sweep("obstacle_height", _HEIGHTS, _rect(2.0, 0.5, 0.04, 0.8)),
    "sweep-height-medium": _sweep("obstacle_height", _HEIGHTS, _rect(2.0, 0.5, 0.4, 0.8)),
    "sweep-height-wide": _sweep("obstacle_height", _HEIGHTS, _rect(2.0, 0.5, 0.8, 0.8)),
    "sweep-height-wider": _sweep("obstacle_height", _HEIGHTS, _rect(2.0, 0.5, 1.2, 0.8)),
    "sweep-width": _sweep(
        "obstacle_width", [0.04, 0.2, 0.4, 0.7, 1.0, 1.5, 2.0, 2.28, 2.6, 3.0, 3.5, 3.9], _rect(2.0, 0.5, 0.8, 0.8)
    ),
    "sweep-square-side": _sweep("obstacle_side", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9], _rect(2.0, 0.5, 0.8, 0.8)),
    "sweep-center-square": _sweep("obstacle_center_x", _CENTERS, _rect(2.0, 0.5, 0.8, 0.8)),
    "sweep-center-thin": _sweep("obstacle_center_x", [0.1] + _CENTERS + [3.9], _rect(2.0, 0.5, 0.04, 0.8)),
    "oracle-square": {
        "mode": "oracle", "seed": 0, "n_particles": 0, "domain": dict(_DOMAIN, obstacles=[_rect(2.0, 0.5, 0.8, 0.8)]),
        "kernel": {"mean_flight_time": 0.01}, "grid": {"n_x": 200, "n_y": 50},
    },
    "msd-check": {
        "mode": "msd-check", "seed": 1, "n_particles": 100_000, "domain": dict(_DOMAIN, obstacles=[]),
        "kernel": {"mean_flight_time": 0.01}, "grid": {"n_x": 200, "n_y": 50},
        "msd": {"t_min_factor": 50, "t_max_factor": 200, "n_times": 40},
    },
}


# --- parsing ---------------------------------------------------------------


def _num(section: str, tree: dict, key: str, default=None, kind=float):
    if key not in tree:
        if default is None:
            raise ConfigError(section, f"missing required field {key!r}")
        return default
    try:
        # YAML reads "1e-8" as a string; accept it anyway
        return kind(float(tree[key])) if kind is int else kind(tree[key])
    except (TypeError, ValueError):
        raise ConfigError(section, f"field {key!r} must be a number, got {tree[key]!r}") from None


def _section(tree: dict, name: str, required: bool = True) -> dict:
    sec = tree.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "section missing")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be a mapping")
    return sec


def _pair(section: str, value, what: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(section, f"{what} must be a pair of numbers, got {value!r}") from None
    return a, b


def _obstacle(section: str, spec) -> object:
    if not isinstance(spec, dict):
        raise ConfigError(section, f"obstacle entry must be a mapping, got {spec!r}")
    shape = spec.get("shape", "rect")
    cx, cy = _pair(section, spec.get("center"), "center")
    if shape == "rect":
        w, h = _pair(section, spec.get("size"), "size")
        if not (w > 0 and h > 0):
            raise ConfigError(section, f"rectangle size must be positive, got {w} x {h}")
        return Rect.from_size(cx, cy, w, h)
    if shape == "disk":
        r = _num(section, spec, "radius")
        if not r > 0:
            raise ConfigError(section, f"disk radius must be positive, got {r}")
        return Disk(cx, cy, r)
    raise ConfigError(section, f"unknown obstacle shape {shape!r}")


def parse_config(tree: dict) -> ExperimentConfig:
    if not isinstance(tree, dict):
        raise ConfigError("config", "top level must be a mapping")
    mode = tree.get("mode")
    if mode not in MODES:
        raise ConfigError("mode", f"expected one of {MODES}, got {mode!r}")

    d = _section(tree, "domain")
    obstacles = []
    for i, ob in enumerate(d.get("obstacles") or []):
        obstacles.append(_obstacle(f"domain.obstacles[{i}] (obstacle {i})", ob))
    lx, ly = _num("domain", d, "length_x", 4.0), _num("domain", d, "length_y", 1.0)
    rho_l, rho_r = _num("domain", d, "rho_left", 1.0), _num("domain", d, "rho_right", 0.5)
    try:
        domain = DomainConfig(StripSpec(lx, ly), tuple(obstacles), rho_l, rho_r)
    except ValueError as exc:
        raise ConfigError("domain", str(exc)) from None
    if mode != "msd-check":
        problems = validate(domain)
        if problems:
            raise ConfigError("domain", "; ".join(problems))

    k = _section(tree, "kernel")
    try:
        kernel = KernelParams(_num("kernel", k, "mean_flight_time"))
    except ValueError as exc:
        raise ConfigError("kernel", str(exc)) from None

    g = _section(tree, "grid", required=False)
    try:
        grid = GridSpec(_num("grid", g, "n_x", 200, int), _num("grid", g, "n_y", 50, int), domain.length_x, domain.length_y)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None

    n_particles = _num("n_particles", tree, "n_particles", DESK_PARTICLES, int)
    if mode != "oracle" and n_particles < 1:
        raise ConfigError("n_particles", f"must be at least 1, got {n_particles}")
    seed = _num("seed", tree, "seed", None, int)
    if not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")

    sweep = None
    if mode == "residence-sweep":
        s = _section(tree, "sweep")
        t = s.get("template") or _rect(2.0, 0.5, 0.8, 0.8)
        template = _obstacle("sweep.template", t)
        if not isinstance(template, Rect):
            raise ConfigError("sweep.template", "template must be a rectangle")
        values = s.get("values")
        if not values:
            raise ConfigError("sweep", "values list missing or empty")
        try:
            sweep = SweepSpec(domain.with_obstacles([]), s.get("parameter"), tuple(values), template)
            sweep.check()
        except (TypeError, ValueError) as exc:
            raise ConfigError("sweep", str(exc)) from None

    solver = None
    if "solver" in tree or mode in ("stationary", "oracle"):
        sv = _section(tree, "solver", required=False)
        try:
            solver = SolverSettings(
                _num("solver", sv, "tolerance", 1e-8),
                _num("solver", sv, "max_iterations", 10**6, int),
                _num("solver", sv, "relaxation", 1.9),
                _num("solver", sv, "snap_tolerance", 0.25),
            )
        except ValueError as exc:
            raise ConfigError("solver", str(exc)) from None

    normalization = tree.get("normalization", "extrapolate")
    if normalization not in ("extrapolate", "column", "cell"):
        raise ConfigError("normalization", f"unknown mode {normalization!r}")

    msd = None
    if mode == "msd-check":
        m = _section(tree, "msd", required=False)
        msd = {
            "t_min_factor": _num("msd", m, "t_min_factor", 50.0),
            "t_max_factor": _num("msd", m, "t_max_factor", 200.0),
            "n_times": _num("msd", m, "n_times", 40, int),
        }
        if not 0 < msd["t_min_factor"] < msd["t_max_factor"]:
            raise ConfigError("msd", "need 0 < t_min_factor < t_max_factor")

    out = tree.get("output_dir")
    if not out:
        raise ConfigError("output_dir", "missing output directory")
    return ExperimentConfig(domain, kernel, grid, n_particles, seed, mode, Path(out), sweep, solver,
                            normalization, msd)


# --- running ---------------------------------------------------------------


class OutputSet:
    """Tracks written files so a failed run can remove them."""

    def __init__(self, directory: Path, meta: dict):
        self.dir = directory
        self.meta = meta
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def text(self, name: str, body: str) -> None:
        self.path(name).write_text(comment_header(self.meta) + body)

    def cleanup(self) -> None:
        for p in self.files:
            p.unlink(missing_ok=True)


def _fmt_summary(d: dict, indent: int = 0) -> str:
    lines = []
    for k, v in d.items():
        if isinstance(v, dict):
            lines.append(" " * indent + f"{k}:")
            lines.append(_fmt_summary(v, indent + 2))
        elif isinstance(v, float):
            lines.append(" " * indent + f"{k}: {v:.6g}")
        else:
            lines.append(" " * indent + f"{k}: {v}")
    return "\n".join(lines)


def _run_stationary(cfg: ExperimentConfig, out: OutputSet, workers: int) -> None:
    res = run_stationary(cfg.domain, cfg.kernel, cfg.grid, cfg.n_particles, cfg.seed, workers,
                         cfg.normalization, cfg.solver)
    write_field_csv(out.path("density.csv"), res.density, out.meta)
    if res.oracle is not None:
        write_field_csv(out.path("oracle.csv"), res.oracle, out.meta)
        write_field_csv(out.path("relative_error.csv"), res.error, out.meta)
    out.text("summary.txt", _fmt_summary(res.summary) + "\n")


def _run_sweep(cfg: ExperimentConfig, out: OutputSet, workers: int) -> None:
    report = run_sweep(cfg.sweep, cfg.kernel, cfg.n_particles, cfg.seed, cfg.grid, workers,
                       progress=lambda msg: print(msg, file=sys.stderr))
    report.to_csv(out.path("residence.csv"), out.meta)
    out.text("summary.txt", report.summary() + "\n")


def _run_oracle(cfg: ExperimentConfig, out: OutputSet, workers: int) -> None:
    res = run_oracle(cfg.domain, cfg.grid, cfg.solver)
    write_field_csv(out.path("oracle.csv"), res.field, out.meta)
    h = cfg.grid.cell
    rows = ["column,x,flux\n"] + [
        f"{i},{(i + 0.5) * h!r},{'nan' if not math.isfinite(f) else repr(float(f))}\n" for i, f in enumerate(res.flux)
    ]
    out.text("flux.csv", "".join(rows))
    out.text("summary.txt", _fmt_summary({"flux_mean": float(np.nanmean(res.flux)),
                                          "flux_relative_spread": res.flux_spread}) + "\n")


def _run_msd(cfg: ExperimentConfig, out: OutputSet, workers: int) -> None:
    chk = run_msd_check(cfg.kernel, cfg.n_particles, cfg.seed, **cfg.msd)
    c = chk.curve
    rows = ["t,msd,msd_x,msd_y,stderr\n"] + [
        f"{t!r},{m!r},{mx!r},{my!r},{s!r}\n" for t, m, mx, my, s in zip(c.times, c.msd, c.msd_x, c.msd_y, c.msd_stderr)
    ]
    out.text("msd.csv", "".join(rows))
    out.text("summary.txt", _fmt_summary({
        "fitted_D": chk.fitted, "expected_D": chk.expected, "relative_deviation": chk.relative_deviation,
        "fit_from_t": chk.t_min,
    }) + "\n")


RUNNERS = {"stationary": _run_stationary, "residence-sweep": _run_sweep, "oracle": _run_oracle, "msd-check": _run_msd}


def resolve_tree(args) -> dict:
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {args.preset!r}; available: {', '.join(sorted(PRESETS))}")
        tree = copy.deepcopy(PRESETS[args.preset])
        tree.setdefault("output_dir", f"out/{args.preset}")
    elif args.config:
        try:
            tree = yaml.safe_load(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {args.config}: {exc.strerror}") from None
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"not valid YAML: {exc}") from None
    else:
        raise ConfigError("config", "give a config file or --preset")
    if not isinstance(tree, dict):
        raise ConfigError("config", "top level must be a mapping")
    if args.full_scale:
        if "full_n_particles" not in tree:
            raise ConfigError("n_particles", "this config has no full_n_particles entry")
        tree["n_particles"] = tree["full_n_particles"]
    if args.particles is not None:
        tree["n_particles"] = args.particles
    if args.seed is not None:
        tree["seed"] = args.seed
    if args.output is not None:
        tree["output_dir"] = args.output
    return tree


def run(args) -> int:
    try:
        tree = resolve_tree(args)
        cfg = parse_config(tree)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    # the header carries everything that determines the outputs; the output
    # location and worker count do not, so runs can be compared byte for byte
    echoed = {k: v for k, v in tree.items() if k != "output_dir"}
    meta = {"config": json.loads(json.dumps(echoed, default=str)), "seed": cfg.seed}
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: [output_dir] cannot create {cfg.output_dir}: {exc.strerror}", file=sys.stderr)
        return 2
    out = OutputSet(cfg.output_dir, meta)
    try:
        RUNNERS[cfg.mode](cfg, out, args.workers)
    except Exception as exc:  # noqa: BLE001 - report and clean up whatever failed
        out.cleanup()
        print(f"error: [{cfg.mode}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for p in out.files:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lbstrip", description="Kinetic transport through a strip with obstacles.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a YAML config or a preset")
    r.add_argument("config", nargs="?", help="YAML experiment file")
    r.add_argument("--preset", help="named built-in experiment (see `lbstrip presets`)")
    r.add_argument("--particles", type=lambda s: int(float(s)), help="number of injected particles")
    r.add_argument("--seed", type=int, help="64-bit base seed")
    r.add_argument("--workers", type=int, default=1, help="worker processes (does not change results)")
    r.add_argument("--output", help="output directory")
    r.add_argument("--full-scale", action="store_true", help="use the preset's full-scale particle count (hours)")
    p = sub.add_parser("presets", help="list presets, or print one as YAML")
    p.add_argument("name", nargs="?")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        if args.name:
            if args.name not in PRESETS:
                print(f"error: [preset] unknown preset {args.name!r}", file=sys.stderr)
                return 2
            print(yaml.safe_dump(PRESETS[args.name], sort_keys=False), end="")
        else:
            for name, tree in PRESETS.items():
                print(f"{name:22s} {tree['mode']}")
        return 0
    if args.config and args.preset:
        print("error: [config] give either a config file or --preset, not both", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("error: [workers] must be at least 1", file=sys.stderr)
        return 2
    return run(args)


if __name__ == "__main__":
    sys.exit(main())

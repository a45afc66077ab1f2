"""``nclab`` command line: JSON experiment configs in, CSV tables out.

Usage::

    nclab <mode> --config FILE [--out DIR] [--threads K] [--seed S]

Modes: density, correlate, characteristic, simulate, verify.  Exit status is
0 on success, 1 on a numerical failure and 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import re
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import NclabError
from .fredholm import BumpFunction, TestFunctionSpec, characteristic_direct, characteristic_pf
from .kernels import CorrelationKernel, CorrelationQuery, correlation
from .montecarlo import SimulationConfig, estimate_onepoint, simulate
from .quadrature import QuadratureSpec
from .stochastic import TimePartition
from .verification import run_all

MODES = ("density", "correlate", "characteristic", "simulate", "verify")
EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2

log = logging.getLogger("nclab")

_GRID = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "num": {"type": "integer", "minimum": 1},
            },
            "required": ["lo", "hi", "num"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"points": {"type": "array", "items": {"type": "number"}, "minItems": 1}},
            "required": ["points"],
            "additionalProperties": False,
        },
    ]
}

_BUMP = {
    "oneOf": [
        {"type": "null"},
        {
            "type": "object",
            "properties": {
                "center": {"type": "number"},
                "width": {"type": "number", "exclusiveMinimum": 0},
                "height": {"type": "number"},
                "angle": {"type": "number"},
            },
            "required": ["center", "width"],
            "additionalProperties": False,
        },
    ]
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "mode": {"enum": list(MODES)},
        "N": {"type": "integer", "minimum": 2, "multipleOf": 2},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "times": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "grid": _GRID,
        "grid_b": _GRID,
        "time_pairs": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
        "quadrature": {
            "type": "object",
            "properties": {
                "scheme": {"enum": ["gauss-legendre", "gauss-kronrod"]},
                "nodes": {"type": "integer", "minimum": 16},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "panel_width": {"type": "number", "exclusiveMinimum": 0},
                "window": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "test_functions": {"type": "array", "items": _BUMP},
        "theta": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "nodes": {"type": "integer", "minimum": 4},
        "simulation": {
            "type": "object",
            "properties": {
                "paths": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "burn_in": {"type": "integer", "minimum": 1000},
                "block_size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "record_times": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "bins": {
            "type": "object",
            "properties": {
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "num": {"type": "integer", "minimum": 1},
            },
            "required": ["lo", "hi", "num"],
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "quick": {"type": "boolean"},
                "mc_paths": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {"type": "string", "pattern": "^[^/\\\\]+$"},
    },
    "additionalProperties": False,
}


class ConfigError(Exception):
    """Invalid experiment configuration (exit status 2)."""


def _line_of(text, path):
    """Best-effort line number of the innermost key of a JSON path in the raw text."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(keys[-1]), text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def load_config(path):
    """Parse and schema-validate a JSON config; raise ConfigError with line-level diagnostics."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for err in errors:
            where = "/".join(str(p) for p in err.absolute_path) or "<root>"
            line = _line_of(text, list(err.absolute_path))
            loc = f"{path}:{line}" if line else str(path)
            lines.append(f"{loc}: schema error at {where}: {err.message}")
        raise ConfigError("\n".join(lines))
    return cfg


def _grid(spec, default=None):
    if spec is None:
        spec = default
    if "points" in spec:
        return np.asarray(spec["points"], dtype=float)
    if spec["hi"] < spec["lo"]:
        raise ConfigError("grid needs lo <= hi")
    return np.linspace(spec["lo"], spec["hi"], spec["num"])


def _partition(cfg):
    horizon = float(cfg.get("T", 1.0))
    times = cfg.get("times", [horizon])
    if abs(times[-1] - horizon) > 1e-12 * horizon:
        raise ConfigError(f"times must end at T = {horizon}, got {times[-1]}")
    try:
        return TimePartition(tuple(times[:-1]) + (horizon,))
    except ValueError as exc:
        raise ConfigError(f"times: {exc}") from exc


DEFAULT_GRID = {"lo": -3.0, "hi": 3.0, "num": 61}


def run_density(cfg, args):
    part = _partition(cfg)
    kernel = CorrelationKernel(cfg.get("N", 2), part)
    xs = _grid(cfg.get("grid"), DEFAULT_GRID)
    rows = []
    for t in part:
        for x, rho in zip(xs, kernel.density(t, xs)):
            rows.append((t, x, float(rho)))
    return ("t", "x", "rho1"), rows


def run_correlate(cfg, args):
    part = _partition(cfg)
    kernel = CorrelationKernel(cfg.get("N", 2), part)
    xs = _grid(cfg.get("grid"), DEFAULT_GRID)
    ys = _grid(cfg.get("grid_b"), cfg.get("grid", DEFAULT_GRID))
    index = {t: i for i, t in enumerate(part)}
    pairs = cfg.get("time_pairs")
    if pairs is None:
        pairs = [(a, b) for i, a in enumerate(part) for b in part.times[i + 1 :]] or [(part[0], part[0])]
    rows = []
    for t_a, t_b in pairs:
        if t_a not in index or t_b not in index:
            raise ConfigError(f"time pair ({t_a}, {t_b}) not in times {list(part)}")
        if t_a > t_b:
            raise ConfigError(f"time pair ({t_a}, {t_b}) must satisfy t_a <= t_b")
        for x in xs:
            for y in ys:
                pts = [[] for _ in part]
                pts[index[t_a]].append(x)
                pts[index[t_b]].append(y)
                rows.append((t_a, x, t_b, y, correlation(kernel, CorrelationQuery(part, tuple(pts)))))
    return ("t_a", "x", "t_b", "y", "rho2"), rows


def _quad(cfg):
    try:
        return QuadratureSpec(**cfg["quadrature"]) if "quadrature" in cfg else None
    except ValueError as exc:
        raise ConfigError(f"quadrature: {exc}") from exc


def run_characteristic(cfg, args):
    part = _partition(cfg)
    n = cfg.get("N", 2)
    raw = cfg.get("test_functions")
    if raw is None or len(raw) != len(part):
        raise ConfigError(f"test_functions needs one entry (or null) per time ({len(part)})")
    funcs = [None if f is None else BumpFunction(f["center"], f["width"], f.get("height", 1.0)) for f in raw]
    angles = [0.0 if f is None else f.get("angle", 1.0) for f in raw]
    kernel = CorrelationKernel(n, part)
    nodes = cfg.get("nodes", 40)
    quad = _quad(cfg)
    direct_ok = n == 2 and len(part) <= 2
    rows = []
    for theta in cfg.get("theta", [0.5, 1.0]):
        spec = TestFunctionSpec(tuple(funcs), tuple(theta * a for a in angles))
        pf = characteristic_pf(spec, kernel, nodes)
        diff = abs(characteristic_direct(spec, part, n, quad) - pf) if direct_ok else float("nan")
        rows.append((theta, pf.real, pf.imag, diff))
    return ("theta", "re", "im", "abs_diff"), rows


def _sim_config(cfg, args):
    sim = dict(cfg.get("simulation", {}))
    if args.seed is not None:
        sim["seed"] = args.seed
    try:
        return SimulationConfig(n=cfg.get("N", 2), horizon=float(cfg.get("T", 1.0)), **sim)
    except ValueError as exc:
        raise ConfigError(f"simulation: {exc}") from exc


def run_simulate(cfg, args):
    config = _sim_config(cfg, args)
    times = cfg.get("record_times", [config.horizon])
    try:
        for t in times:
            config.grid_index(t)
    except ValueError as exc:
        raise ConfigError(f"record_times: {exc}") from exc
    b = cfg.get("bins", {"lo": -3.0, "hi": 3.0, "num": 30})
    if not b["lo"] < b["hi"]:
        raise ConfigError("bins need lo < hi")
    edges = np.linspace(b["lo"], b["hi"], b["num"] + 1)
    sample = simulate(config, times, threads=args.threads)
    rows = []
    for t in times:
        est = estimate_onepoint(sample, t, edges)
        for lo, hi, val, err in zip(est.lower, est.upper, est.values, est.stderr):
            rows.append((t, lo, hi, val, err))
    return ("t", "bin_lo", "bin_hi", "density", "stderr"), rows


def run_verify(cfg, args):
    opts = cfg.get("verify", {})
    seed = args.seed if args.seed is not None else cfg.get("simulation", {}).get("seed", 20261016)
    results = run_all(
        quick=opts.get("quick", True), mc_paths=opts.get("mc_paths"), seed=seed, threads=args.threads
    )
    for r in results:
        log.info(r.line())
    rows = [(r.name, r.measured, r.tolerance, "true" if r.passed else "false") for r in results]
    failed = [r.name for r in results if not r.passed]
    return ("check", "measured", "tolerance", "passed"), rows, failed


RUNNERS = {
    "density": run_density,
    "correlate": run_correlate,
    "characteristic": run_characteristic,
    "simulate": run_simulate,
    "verify": run_verify,
}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def config_digest(cfg, args):
    """SHA-256 of the canonical config plus the command-line overrides that change results."""
    payload = {"config": cfg, "seed": args.seed}
    return hashlib.sha256(json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_csv(path, mode, digest, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# nclab {__version__}\n")
        fh.write(f"# mode: {mode}\n")
        fh.write(f"# config_sha256: {digest}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _threads(value):
    if value is None:
        env = os.environ.get("NCLAB_THREADS")
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"NCLAB_THREADS must be an integer, got {env!r}") from exc
    if value is not None and value < 1:
        raise ConfigError("thread count must be at least 1")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="nclab", description=__doc__.split("\n\n")[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--threads", type=int, default=None, help="worker cap (env NCLAB_THREADS)")
    parser.add_argument("--seed", type=int, default=None, help="override the simulation seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"nclab {__version__}")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.threads = _threads(args.threads)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        cfg = load_config(args.config)
        if cfg.get("mode", args.mode) != args.mode:
            raise ConfigError(f"config is for mode {cfg['mode']!r}, command line asks for {args.mode!r}")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        result = RUNNERS[args.mode](cfg, args)
    except ConfigError as exc:
        print(f"nclab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NclabError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"nclab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # parameter checks inside the library (for example a first time too close to 0)
        print(f"nclab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"nclab: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    header, rows = result[0], result[1]
    path = out_dir / cfg.get("output", f"{args.mode}.csv")
    write_csv(path, args.mode, config_digest(cfg, args), header, rows)
    if len(result) > 2 and result[2]:
        print("nclab: verification failed: " + "; ".join(result[2]), file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: ``gnperc <command> [options]``.

Every option may also come from an INI file (``--config``) whose sections
are ``run``, ``model``, ``window``, ``estimation`` and ``output``; flags win
over the file, the file wins over built-in defaults. Exit codes: 0 success,
2 usage, 3 configuration, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import io as _io
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4

SECTIONS = ("model", "window", "estimation", "output")

# name -> (section, type, default, help)
OPTIONS = {
    "dim": ("model", int, 2, "space dimension"),
    "k": ("model", int, 1, "neighbour index for scalar --alpha"),
    "alpha": ("model", str, "1", "weight: a number (GN_k weight) or 'a1,a2,...[;geom=g,scale=s]'"),
    "variant": ("model", str, "reach-union", "reach-union or boolean-overlap"),
    "L": ("window", float, 20.0, "side of the observation cube"),
    "lambda": ("window", float, 1.0, "Poisson intensity"),
    "margin": ("window", float, None, "sampling buffer around the cube (default: automatic)"),
    "box": ("window", str, None, "sampling box as lo_1,...,lo_d,hi_1,...,hi_d"),
    "metric": ("window", str, "euclidean", "euclidean or torus"),
    "T": ("window", float, 1e4, "1-d window length"),
    "trials": ("estimation", int, 100, "Monte Carlo trials"),
    "level": ("estimation", float, 0.95, "confidence level"),
    "bracket": ("estimation", str, "1,45", "bisection bracket lo,hi"),
    "tol": ("estimation", float, 0.5, "bisection tolerance"),
    "target": ("estimation", float, 0.5, "target crossing probability"),
    "grid": ("estimation", str, "1,2,4,8,16,32", "comma-separated alpha grid"),
    "m": ("estimation", float, 6.25, "gap length"),
    "pc": ("estimation", float, 0.679492, "site percolation threshold used by the bounds"),
    "delta": ("estimation", float, 1 / 3, "banana centre side"),
    "n": ("estimation", int, 6, "sub-boxes per cell side"),
    "cells": ("estimation", int, 20, "cells per grid side"),
    "criterion": ("estimation", str, "banana", "banana or subsquare"),
    "c1": ("estimation", float, 2.0, "mean offspring"),
    "c2": ("estimation", int, 10, "offspring cap"),
    "delta1": ("estimation", float, None, "ball excess (default: calibrated from c1, c2)"),
    "generations": ("estimation", int, 5, "SBP generations"),
    "M": ("estimation", float, 2.0, "lattice square side in the projection"),
    "N0": ("estimation", int, 4, "SBP generations per lattice step"),
    "out": ("output", str, None, "output file"),
    "format": ("output", str, "bin", "point file format: bin or csv"),
    "adjacency": ("output", str, None, "adjacency JSON output"),
    "components": ("output", str, None, "component CSV output"),
    "raster": ("output", str, None, "PBM raster output"),
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Resolved parameters of one invocation, grouped by section."""

    command: str
    model: dict = field(default_factory=dict)
    window: dict = field(default_factory=dict)
    estimation: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    threads: int | None = field(default=None, compare=False)

    def get(self, name):
        return getattr(self, OPTIONS[name][0])[name]

    def get_threads(self):
        return self.threads

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["run"] = {"command": self.command, "seed": str(self.seed)}
        for sec in SECTIONS:
            cp[sec] = {k: "" if v is None else repr(v) if isinstance(v, float) else str(v)
                       for k, v in getattr(self, sec).items()}
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text):
        cp = _parse_ini(text)
        run = cp["run"] if cp.has_section("run") else {}
        cfg = cls(run.get("command", ""), seed=int(run.get("seed", 0)))
        for sec in SECTIONS:
            if cp.has_section(sec):
                for key, raw in cp[sec].items():
                    getattr(cfg, sec)[key] = _convert(key, raw)
        return cfg

    def to_dict(self):
        return {"command": self.command, "seed": self.seed,
                **{s: dict(getattr(self, s)) for s in SECTIONS}}


def _parse_ini(text):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return cp


def _convert(key, raw):
    if key not in OPTIONS:
        raise ConfigError(f"unknown option {key!r}")
    typ = OPTIONS[key][1]
    if raw == "" or raw == "None":
        return None
    try:
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"option {key!r}: cannot read {raw!r} as {typ.__name__}") from exc


def resolve(command, names, flags, config_text=None, overrides=None):
    """Merge defaults, config file and flags into a :class:`RunConfig`."""
    cfg = RunConfig(command)
    file_cfg = RunConfig.from_ini(config_text) if config_text else None
    if file_cfg is not None:
        for sec in SECTIONS:
            for key in getattr(file_cfg, sec):
                if OPTIONS[key][0] != sec:
                    raise ConfigError(f"option {key!r} belongs in section [{OPTIONS[key][0]}]")
    for name in names:
        sec, _, default, _ = OPTIONS[name]
        value = (overrides or {}).get(name, default)
        if file_cfg is not None and name in getattr(file_cfg, sec):
            value = getattr(file_cfg, sec)[name]
        if flags.get(name) is not None:
            value = flags[name]
        getattr(cfg, sec)[name] = value
    seed = flags.get("seed")
    cfg.seed = seed if seed is not None else (file_cfg.seed if file_cfg else 0)
    return cfg


def _floats(text, what):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def fmt(x):
    """Six significant digits for human-readable output."""
    return f"{x:.6g}"


def _alpha(cfg):
    from .gnmodel import AlphaSpec

    text = str(cfg.get("alpha")).strip()
    try:
        return AlphaSpec.gn_k(cfg.get("k"), float(text))
    except ValueError:
        pass
    try:
        return AlphaSpec.parse(text)
    except ValueError as exc:
        raise ConfigError(f"alpha: {exc}") from exc


def _experiment(cfg, trials=None):
    from .mc import ExperimentSpec

    return ExperimentSpec(_alpha(cfg), dim=cfg.get("dim"), variant=cfg.get("variant"),
                          L=cfg.get("L"), density=cfg.get("lambda"), margin=cfg.get("margin"),
                          trials=trials or cfg.get("trials"), base_seed=cfg.seed)


def _sample_box(cfg):
    from .geometry import BoxRegion

    dim = cfg.get("dim")
    if cfg.get("box") is None:
        return BoxRegion.cube(cfg.get("L"), dim)
    vals = _floats(cfg.get("box"), "box")
    if len(vals) != 2 * dim:
        raise ConfigError(f"box needs {2 * dim} numbers for dim={dim}, got {len(vals)}")
    return BoxRegion(vals[:dim], vals[dim:])


def _sample(cfg):
    from .geometry import sample_poisson

    return sample_poisson(cfg.get("dim"), cfg.get("lambda"), _sample_box(cfg), cfg.seed,
                          cfg.get("metric"))


def cmd_sample(cfg, out):
    from . import io

    pts = _sample(cfg)
    path = cfg.get("out") or ("points.bin" if cfg.get("format") == "bin" else "points.csv")
    if cfg.get("format") == "bin":
        io.write_points(path, pts)
    elif cfg.get("format") == "csv":
        io.write_points_csv(path, pts)
    else:
        raise ConfigError(f"format must be bin or csv, got {cfg.get('format')!r}")
    print(f"wrote {pts.n} points to {path}", file=out)


def cmd_graph(cfg, out):
    from . import io
    from .clusters import label_clusters
    from .gnmodel import gn_graph

    pts = _sample(cfg)
    alpha = _alpha(cfg)
    graph, _ = gn_graph(pts, alpha, cfg.get("variant"))
    lab = label_clusters(graph)
    rec = {"alpha": alpha.to_dict(), "variant": graph.variant, "density": pts.density,
           "seed": pts.seed, "n": pts.n}
    io.write_edges_csv(cfg.get("out") or "edges.csv", graph, rec)
    if cfg.get("adjacency"):
        io.write_adjacency_json(cfg.get("adjacency"), graph, alpha, pts)
    if cfg.get("components"):
        io.write_components_csv(cfg.get("components"), lab, rec)
    print(f"points={pts.n} edges={len(graph.undirected_edges)} components={lab.n_components} "
          f"largest_fraction={fmt(lab.largest_fraction)}", file=out)


def _ci_text(est):
    return (f"p_hat={fmt(est.p_hat)} ci=({fmt(est.lower)}, {fmt(est.upper)}) "
            f"trials={est.trials} level={fmt(est.level)}")


def cmd_cross(cfg, out):
    from . import io
    from .mc import run_trials, summarize

    spec = _experiment(cfg)
    results = run_trials(spec, cfg.get_threads())
    if cfg.get("out"):
        with io.TrialWriter(cfg.get("out"), spec) as w:
            for r in results:
                w.write(r)
    est = summarize(results, cfg.get("level"))
    frac = float(np.median([r.largest_fraction for r in results]))
    print(f"{_ci_text(est)} median_largest_fraction={fmt(frac)}", file=out)


def cmd_curve(cfg, out):
    from . import io
    from .mc import crossing_curve

    spec = _experiment(cfg)
    grid = sorted(_floats(cfg.get("grid"), "grid"))
    curve = crossing_curve(grid, spec, lambda a: spec.alpha.scaled(a), cfg.get_threads(),
                           cfg.get("level"))
    if cfg.get("out"):
        io.write_curve_csv(cfg.get("out"), curve, spec)
    print("alpha,p_hat,ci_low,ci_high,trials", file=out)
    for a, e in curve:
        print(f"{fmt(a)},{fmt(e.p_hat)},{fmt(e.lower)},{fmt(e.upper)},{e.trials}", file=out)


def cmd_bisect(cfg, out):
    from . import io
    from .gnmodel import AlphaSpec
    from .mc import bisect_critical

    spec = _experiment(cfg)
    lo_hi = _floats(cfg.get("bracket"), "bracket")
    if len(lo_hi) != 2:
        raise ConfigError("bracket needs two numbers lo,hi")
    k = cfg.get("k")
    family = (lambda a: AlphaSpec.gn_k(k, a)) if spec.alpha.K == k else spec.alpha.scaled
    res = bisect_critical(spec, tuple(lo_hi), cfg.get("target"), cfg.get("tol"),
                          cfg.get("trials"), family=family, threads=cfg.get_threads())
    if cfg.get("out"):
        io.write_probes_csv(cfg.get("out"), res, spec)
    print(f"alpha_hat={fmt(res.alpha_hat)} bracket=({fmt(res.lower)}, {fmt(res.upper)}) "
          f"L={fmt(spec.L)}", file=out)
    print("alpha,p_hat,ci_low,ci_high,trials", file=out)
    for a, p, lo, hi, n in res.probe_rows():
        print(f"{fmt(a)},{fmt(p)},{fmt(lo)},{fmt(hi)},{n}", file=out)


def cmd_oned(cfg, out, action):
    from . import io
    from .gnmodel import divergence_classifier, expected_range_1d
    from .oned import estimate_p_unbridged

    alpha = _alpha(cfg)
    if action == "pm":
        est = estimate_p_unbridged(alpha, cfg.get("k"), cfg.get("m"), cfg.get("trials"),
                                   cfg.get("T"), cfg.seed, cfg.get("lambda"), cfg.get("level"))
        if cfg.get("out"):
            io.write_pm_csv(cfg.get("out"), [io.pm_row(alpha, cfg.get("k"), cfg.get("m"), est)],
                            {"seed": cfg.seed, "T": cfg.get("T"), "level": cfg.get("level")})
        print(f"m={fmt(cfg.get('m'))} {_ci_text(est)} discarded={est.discarded}", file=out)
    elif action == "classify":
        cls = divergence_classifier(alpha, cfg.get("dim"))
        print(f"class={cls.value} expected_range_1d={fmt(expected_range_1d(alpha, cfg.get('lambda')))}",
              file=out)


def cmd_renorm(cfg, out, action):
    from . import io
    from .geometry import BoxRegion, sample_poisson
    from .renorm import (alpha_bound_2d, banana_scan, good_box_prob, grid_site_percolation,
                         n_tilde, optimal_delta, subsquare_good_scan, theorem7_parameters)

    pc = cfg.get("pc")
    if action == "bounds":
        nt = n_tilde(pc)
        print(f"n_tilde={nt} bound={fmt(alpha_bound_2d(pc))}", file=out)
        print("n,good_box_prob", file=out)
        for n in range(1, nt + 1):
            print(f"{n},{fmt(good_box_prob(optimal_delta(), n))}", file=out)
    elif action == "theorem7":
        p = theorem7_parameters(float(_alpha(cfg).coef(cfg.get("k"))), pc)
        print(f"n={p.n} lambda={fmt(p.density)} m={fmt(p.m)} k={p.k}", file=out)
    elif action == "scan":
        cells = cfg.get("cells")
        if cfg.get("criterion") == "banana":
            delta, n = cfg.get("delta"), cfg.get("n")
            box = BoxRegion.cube(cells * 3 * delta * n, 2)
            pts = sample_poisson(2, cfg.get("lambda"), box, cfg.seed)
            grid = banana_scan(pts, delta, n)
        elif cfg.get("criterion") == "subsquare":
            p = theorem7_parameters(float(_alpha(cfg).coef(cfg.get("k"))), pc)
            pts = sample_poisson(2, p.density, BoxRegion.cube(cells, 2), cfg.seed)
            grid = subsquare_good_scan(pts, p.n, p.m)
        else:
            raise ConfigError("criterion must be banana or subsquare")
        cross = grid_site_percolation(grid)
        if cfg.get("raster"):
            io.write_grid_pbm(cfg.get("raster"), grid.good)
        if cfg.get("out"):
            io.write_grid_csv(cfg.get("out"), grid, {"criterion": list(grid.criterion),
                                                     "seed": cfg.seed})
        print(f"cells={grid.good.size} good_fraction={fmt(grid.good_fraction)} "
              f"crossing={str(cross.crossing).lower()}", file=out)


def _sbp_config(cfg, generations=None):
    from .sbp import SBPConfig, calibrate_delta1

    d, c2 = cfg.get("dim"), cfg.get("c2")
    delta1 = cfg.get("delta1")
    if delta1 is None:
        delta1 = calibrate_delta1(d, cfg.get("c1"), c2)
    return SBPConfig(d, delta1, c2, generations if generations is not None
                     else cfg.get("generations"), cfg.seed)


def cmd_sbp(cfg, out, action):
    from . import io
    from .sbp import box_reach_probability, run_sbp

    if action == "calibrate":
        c = _sbp_config(cfg)
        print(f"delta1={fmt(c.delta1)} mu={fmt(c.mu)} mean_offspring={fmt(c.mean_offspring)}",
              file=out)
    elif action == "run":
        c = _sbp_config(cfg)
        rz = run_sbp(c)
        if cfg.get("out"):
            io.write_sbp_csv(cfg.get("out"), rz)
        print(f"sizes={','.join(map(str, rz.sizes))} extinct={str(rz.extinct).lower()}", file=out)
    elif action == "reach":
        c = _sbp_config(cfg, cfg.get("N0"))
        est = box_reach_probability(c, cfg.get("M"), cfg.get("N0"), trials=cfg.get("trials"),
                                    level=cfg.get("level"))
        print(f"M={fmt(cfg.get('M'))} N0={cfg.get('N0')} delta1={fmt(c.delta1)} {_ci_text(est)}",
              file=out)


MODEL = ["dim", "k", "alpha", "variant"]
WINDOW = ["L", "lambda", "margin"]
COMMANDS = {
    "sample": (cmd_sample, "sample a Poisson point set", None,
               ["dim", "lambda", "box", "L", "metric", "out", "format"], {"dim": None}),
    "graph": (cmd_graph, "build a GN graph and export edges", None,
              MODEL + ["lambda", "box", "L", "metric", "out", "adjacency", "components"], {}),
    "cross": (cmd_cross, "crossing trials at one weight vector", None,
              MODEL + WINDOW + ["trials", "level", "out"], {}),
    "curve": (cmd_curve, "crossing probability over a grid of weight multipliers", None,
              MODEL + WINDOW + ["trials", "level", "grid", "out"], {}),
    "bisect": (cmd_bisect, "bisect for the finite-window critical weight", None,
               MODEL + WINDOW + ["trials", "bracket", "tol", "target", "out"], {"trials": 200}),
    "oned": (cmd_oned, "one-dimensional gap estimates", ("pm", "classify"),
             ["dim", "k", "alpha", "lambda", "T", "m", "trials", "level", "out"], {"dim": 1}),
    "renorm": (cmd_renorm, "renormalization bounds and good-box scans",
               ("bounds", "scan", "theorem7"),
               ["k", "alpha", "lambda", "pc", "delta", "n", "cells", "criterion", "out", "raster"],
               {"alpha": "0.5"}),
    "sbp": (cmd_sbp, "spatial branching process runs", ("run", "calibrate", "reach"),
            ["dim", "c1", "c2", "delta1", "generations", "M", "N0", "trials", "level", "out"],
            {"dim": 200, "c1": 8.0, "c2": 16}),
}


def _flag_type(typ):
    def parse(text):
        try:
            return typ(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {typ.__name__} value: {text!r}") from None
    parse.__name__ = typ.__name__
    return parse


def build_parser():
    p = argparse.ArgumentParser(prog="gnperc", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gnperc {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, helptext, actions, opts, over) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext, description=helptext)
        if actions:
            sp.add_argument("action", choices=actions)
        for opt in opts:
            _, typ, default, h = OPTIONS[opt]
            default = over.get(opt, default)
            flags = [f"--{opt}"] + (["--d"] if opt == "dim" else [])
            required = name == "sample" and opt == "dim"
            sp.add_argument(*flags, dest=opt, type=_flag_type(typ), default=None,
                            required=required, help=f"{h} (default: {default})")
        sp.add_argument("--seed", type=_flag_type(int), default=None, help="64-bit seed (default: 0)")
        sp.add_argument("--threads", type=_flag_type(int), default=None,
                        help="worker threads (default: $GNPERC_THREADS or 1)")
        sp.add_argument("--config", default=None, help="INI file with default option values")
        sp.add_argument("--dump-config", action="store_true",
                        help="print the resolved configuration as INI and exit")
    return p


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    fn, _, actions, opts, over = COMMANDS[args.command]
    flags = vars(args)
    try:
        text = None
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = resolve(args.command, opts, flags, text, over)
        cfg.threads = args.threads
    except ConfigError as exc:
        print(f"gnperc {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dump_config:
        out.write(cfg.to_ini())
        return EXIT_OK
    try:
        if actions:
            fn(cfg, out, args.action)
        else:
            fn(cfg, out)
    except ConfigError as exc:
        print(f"gnperc {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        module = type(exc).__module__ if type(exc).__module__ != "builtins" else "gnperc"
        origin = exc.__traceback__
        while origin.tb_next is not None:
            origin = origin.tb_next
        where = origin.tb_frame.f_globals.get("__name__", module)
        params = json.dumps(cfg.to_dict(), sort_keys=True, default=str)
        print(f"gnperc {args.command}: error in {where}: {exc}\nparameters: {params}",
              file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

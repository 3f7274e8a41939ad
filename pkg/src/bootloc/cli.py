"""Command-line entry point (``bootloc``).

Every subcommand reads its parameters from flags and, optionally, a flat
``key=value`` config file (``--config``); flags win over the file.  Results go
to stdout as ``key=value`` lines with 12 significant digits, or to ``--out``.

Exit status: 0 on success, 1 on invalid input, 2 when a run detects a
violated property (a coupling counterexample).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import analytics, harness
from .analytics import InfeasibleError
from .geometry import Metric, NodeSet, sample_anchors, sample_nodes
from .grid_bootstrap import BootstrapRule, GridState, run_bootstrap
from .harness import ExperimentSpec, SpecValidationError, fmt
from .localization import CollinearityPolicy, run_localization


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _number(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise UsageError(f"not a finite number: {text!r}")
    return v


def _integer(text: str) -> int:
    v = _number(text)
    if v != int(v):
        raise UsageError(f"not an integer: {text!r}")
    return int(v)


def _numbers(text: str) -> list[float]:
    return [_number(t) for t in str(text).split(",") if t.strip()]


def _seed(text: str) -> int:
    v = _integer(text)
    if not 0 <= v < 2 ** 64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return v


# flag name -> help text; every flag is parsed as a string and converted per subcommand
FLAGS = {
    "n": "node density n, the Poisson mean node count on the unit square (accepts 1e6; "
         "comma-separated list for scaling)",
    "r": "radio range in unit-square lengths",
    "tau": "virtual-cell ball radius in unit-square lengths "
           "(default 0.9*r/(2*sqrt 2))",
    "m": "number of initial anchors",
    "L": "grid side length in vertices",
    "p": "initial activation probability in [0, 1]",
    "theta": "activation threshold: active neighbours needed (default 2)",
    "rule": "neighbourhood: vn4 (4 axis neighbours) or moore8 (8 neighbours) (default vn4)",
    "boundary": "bounded or torus; grid boundary for bootstrap (default bounded), "
                "distance metric for node geometry (default torus)",
    "c-radius": "connectivity constant c in r = sqrt(c ln n / n) (list allowed for scaling)",
    "c-prime": "threshold constant c' in c'/ln(sqrt 2 / r) (default 1)",
    "rho": "radius used in the red-probability formula: paper_r (rho = r) or tau "
           "(rho = 0.9*r/(2*sqrt 2)) (default paper_r)",
    "trials": "number of Monte-Carlo trials (default 1; critical and min-anchors 200)",
    "seed": "base seed, 64-bit unsigned (default 0)",
    "workers": "worker processes (default: available CPUs); never changes results",
    "out": "output file; stdout summary is printed either way",
    "format": "output file format: csv or json (default json)",
}
CHOICES = {"rule": ("vn4", "moore8"), "boundary": ("bounded", "torus"),
           "rho": ("paper_r", "tau"), "format": ("csv", "json")}

COMMANDS = {
    "gen": ("sample a Poisson node set and store it as JSON", ("n", "seed", "out")),
    "localize": ("run iterated localization to its fixpoint",
                 ("n", "r", "m", "boundary", "trials", "seed", "workers", "out", "format")),
    "bootstrap": ("run grid bootstrap percolation from a fixture or random p",
                  ("L", "p", "theta", "rule", "boundary", "trials", "seed", "workers", "out",
                   "format")),
    "critical": ("estimate the critical activation probability by a p-sweep",
                 ("L", "theta", "rule", "boundary", "trials", "seed", "workers", "out",
                  "format")),
    "coupling": ("virtual-grid 3-of-8 bootstrap vs localization at r + 2 tau",
                 ("n", "r", "tau", "m", "boundary", "trials", "seed", "workers", "out",
                  "format")),
    "min-anchors": ("empirical minimum anchor count for full localization",
                    ("n", "r", "boundary", "trials", "seed", "workers", "out", "format")),
    "sufficient-m": ("closed-form sufficient anchor count",
                     ("n", "r", "tau", "c-radius", "c-prime", "rho")),
    "scaling": ("sufficient anchor counts over n and c, with log-log slopes",
                ("n", "c-radius", "c-prime", "rho", "out")),
    "occupancy": ("probability that every virtual cell holds a node", ("n", "r", "tau")),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bootloc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (summary, flags) in COMMANDS.items():
        sp = sub.add_parser(name, help=summary, description=summary)
        for flag in flags:
            kw = {"help": FLAGS[flag], "default": None}
            if flag in CHOICES:
                kw["choices"] = CHOICES[flag]
            sp.add_argument(f"--{flag}", **kw)
        sp.add_argument("--config", help="file of key=value lines using the long flag names")
        if name == "localize":
            sp.add_argument("--nodes", help="node set JSON written by `gen` (replaces --n)")
            sp.add_argument("--trace", help="per-round CSV trace path (with --nodes)")
            sp.add_argument("--collinearity", choices=("ignore", "epsilon"), default=None,
                            help="reject near-collinear anchor triples (default ignore)")
            sp.add_argument("--eps", default=None,
                            help="area tolerance for --collinearity epsilon, in units of r^2 "
                                 "(default 1e-6)")
        if name == "bootstrap":
            sp.add_argument("--fixture", help="text grid of 0/1 rows (replaces --L/--p)")
        if name == "critical":
            sp.add_argument("--resolution", default=None,
                            help="coarse p step; refined tenfold near the crossing "
                                 "(default 0.01)")
        if name == "min-anchors":
            sp.add_argument("--target", default=None,
                            help="required success probability (default 0.9)")
        if name in ("critical", "scaling"):
            sp.add_argument("--no-figure", action="store_true",
                            help="skip the PNG figure written next to --out")
    return parser


def read_config(path: str) -> dict:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("_", "-")] = value
    return out


def effective_options(args: argparse.Namespace) -> dict:
    """Flags merged over the config file; unknown config keys are rejected."""
    flags = {k.replace("_", "-"): v for k, v in vars(args).items()
             if k not in ("command", "config")}
    opts = {}
    if args.config:
        cfg = read_config(args.config)
        unknown = sorted(set(cfg) - set(flags))
        if unknown:
            raise UsageError(f"config keys not valid for {args.command}: {', '.join(unknown)}")
        opts.update(cfg)
    opts.update({k: v for k, v in flags.items() if v is not None and v is not False})
    for key, choices in CHOICES.items():
        if key in opts and opts[key] not in choices:
            raise UsageError(f"--{key} must be one of {', '.join(choices)}")
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [f"--{k}" for k in keys if k not in opts]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(missing))


def _emit(pairs, out=None) -> None:
    for key, value in pairs:
        print(f"{key}={fmt(value)}", file=out or sys.stdout)


def _workers(opts: dict) -> int:
    return _integer(opts["workers"]) if "workers" in opts else (os.cpu_count() or 1)


def _metric(opts: dict) -> str:
    return opts.get("boundary", "torus")


def _run_spec(kind: str, params: dict, opts: dict, default_trials: int = 1):
    spec = ExperimentSpec(kind, params, _integer(opts.get("trials", str(default_trials))),
                          _seed(opts.get("seed", "0")))
    result = harness.run_experiment(spec, _workers(opts))
    if "out" in opts:
        harness.write_results(result, opts.get("format", "json"), opts["out"])
    _emit([("kind", kind)] + [(k, v) for k, v in result.spec.parameters.items()
                              if v is not None] + [("seed", spec.base_seed)])
    _emit(result.aggregate.items())
    return result


def cmd_gen(opts):
    _require(opts, "n")
    nodes = sample_nodes(_number(opts["n"]), _seed(opts.get("seed", "0")))
    if "out" in opts:
        nodes.save(opts["out"])
        _emit([("density", nodes.density), ("seed", nodes.seed), ("n_realized", len(nodes))])
    else:
        print(json.dumps(nodes.to_json()))
    return 0


def cmd_localize(opts):
    _require(opts, "r", "m")
    if "nodes" not in opts:
        _require(opts, "n")
        _run_spec("localization", {"n": _number(opts["n"]), "r": _number(opts["r"]),
                                   "m": _integer(opts["m"]), "metric": _metric(opts)}, opts)
        return 0
    nodes = NodeSet.load(opts["nodes"])
    m, r, seed = _integer(opts["m"]), _number(opts["r"]), _seed(opts.get("seed", "0"))
    if r <= 0:
        raise UsageError("--r must be positive")
    policy = CollinearityPolicy(opts.get("collinearity", "ignore"),
                                _number(opts.get("eps", "1e-6")))
    anchors = sample_anchors(nodes, m, seed)
    res = run_localization(nodes, anchors, r, Metric(_metric(opts)), policy)
    if "out" in opts:
        Path(opts["out"]).write_text(json.dumps(res.to_json()) + "\n")
    if "trace" in opts:
        res.write_trace_csv(opts["trace"])
    _emit(list(res.to_json().items()) + [("seed", seed)])
    return 0


def _rule(opts) -> BootstrapRule:
    return BootstrapRule(opts.get("rule", "vn4"), _integer(opts.get("theta", "2")),
                         opts.get("boundary", "bounded"))


def cmd_bootstrap(opts):
    rule = _rule(opts)
    if "fixture" in opts:
        try:
            state = GridState.load(opts["fixture"], rule)
        except OSError as exc:
            raise UsageError(f"cannot read fixture {opts['fixture']}: {exc.strerror}") from None
        if "L" in opts and _integer(opts["L"]) != state.L:
            raise UsageError(f"--L {opts['L']} does not match the {state.L}x{state.L} fixture")
        run = run_bootstrap(state)
        if "out" in opts:
            Path(opts["out"]).write_text(run.final.to_text())
        _emit([("L", state.L), ("fully_active", run.fully_active), ("steps", run.steps),
               ("initial_active", int(state.active.sum())),
               ("final_active", int(run.final.active.sum()))])
        return 0
    _require(opts, "L", "p")
    _run_spec("bootstrap", {"L": _integer(opts["L"]), "p": _number(opts["p"]),
                            "theta": rule.threshold, "neighborhood": rule.neighborhood,
                            "boundary": rule.boundary}, opts)
    return 0


def _figure_path(opts) -> Path | None:
    if "out" not in opts or opts.get("no-figure"):
        return None
    return Path(opts["out"]).with_suffix(".png")


def cmd_critical(opts):
    _require(opts, "L")
    rule = _rule(opts)
    L = _integer(opts["L"])
    result = _run_spec("critical_sweep", {
        "L": L, "theta": rule.threshold, "neighborhood": rule.neighborhood,
        "boundary": rule.boundary, "resolution": _number(opts.get("resolution", "0.01"))},
        opts, default_trials=200)
    s = result.summary
    _emit([("p_hat", s["p_hat"]), ("holroyd_pc", s["holroyd_pc"])])
    fig = _figure_path(opts)
    if fig is not None:
        from .plotting import plot_critical_curve
        plot_critical_curve(s["curve"], L, s["p_hat"], s["holroyd_pc"], fig)
        _emit([("figure", str(fig))])
    return 0


def cmd_coupling(opts):
    _require(opts, "n", "r", "m")
    params = {"n": _number(opts["n"]), "r": _number(opts["r"]), "m": _integer(opts["m"]),
              "metric": _metric(opts)}
    if "tau" in opts:
        params["tau"] = _number(opts["tau"])
    result = _run_spec("coupling", params, opts)
    s = result.summary
    _emit([("r_prime", s["r_prime"]), ("all_occupied_and_fully_red",
                                       s["all_occupied_and_fully_red"]),
           ("violations", s["violations"])])
    if s["violations"]:
        for seed in s["violating_seeds"]:
            print(f"coupling violated: seed={seed}", file=sys.stderr)
        return 2
    return 0


def cmd_min_anchors(opts):
    _require(opts, "n", "r")
    result = _run_spec("min_anchors", {
        "n": _number(opts["n"]), "r": _number(opts["r"]),
        "target": _number(opts.get("target", "0.9")), "metric": _metric(opts)},
        opts, default_trials=200)
    s = result.summary
    if s["achievable"]:
        _emit([("m_hat", s["m_hat"]), ("bracket_low", s["bracket"][0]),
               ("bracket_high", s["bracket"][1])])
    else:
        _emit([("m_hat", "not achievable at this (n, r)"), ("m_max", s["m_max"])])
    return 0


def _radius(opts, n: float) -> float:
    if "r" in opts:
        return _number(opts["r"])
    if "c-radius" in opts:
        return analytics.connectivity_radius(n, _number(opts["c-radius"]))
    raise UsageError("give --r or --c-radius")


def cmd_sufficient_m(opts):
    _require(opts, "n")
    n = _number(opts["n"])
    r = _radius(opts, n)
    c_prime = _number(opts.get("c-prime", "1"))
    mode = opts.get("rho", "paper_r")
    tau = _number(opts["tau"]) if "tau" in opts else analytics.default_tau(r)
    rho = r if mode == "paper_r" else tau
    m = analytics.sufficient_anchors(n, r, c_prime, rho)
    _emit([("n", n), ("r", r), ("rho_mode", mode), ("rho", rho), ("c_prime", c_prime),
           ("m", m), ("q", analytics.red_probability_q(min(m, n), n, rho)),
           ("threshold", analytics.red_threshold(r, c_prime))])
    return 0


def cmd_scaling(opts):
    _require(opts, "n", "c-radius")
    table = analytics.scaling_table(_numbers(opts["n"]), _numbers(opts["c-radius"]),
                                    _number(opts.get("c-prime", "1")),
                                    opts.get("rho", "paper_r"))
    cols = ("n", "c_radius", "r", "threshold", "m_sufficient", "feasible")
    lines = [",".join(cols)]
    for row in table.rows:
        lines.append(",".join(fmt(getattr(row, c)) for c in cols))
    slopes = {fmt(c): table.slopes[c] for c in table.slopes}
    if "out" in opts:
        out = Path(opts["out"])
        out.write_text("\n".join(lines) + "\n")
        out.with_suffix(".slopes.json").write_text(json.dumps(
            {"c_prime": table.c_prime, "rho_mode": table.rho_mode, "slopes": slopes},
            indent=1) + "\n")
    print("\n".join(lines))
    for c, s in slopes.items():
        _emit([(f"slope_c_radius_{c}", s if s is not None else "absent")])
    fig = _figure_path(opts)
    if fig is not None:
        from .plotting import plot_scaling
        plot_scaling(table, fig)
        _emit([("figure", str(fig))])
    return 0


def cmd_occupancy(opts):
    _require(opts, "n", "r")
    n, r = _number(opts["n"]), _number(opts["r"])
    tau = _number(opts["tau"]) if "tau" in opts else analytics.default_tau(r)
    L = int(math.floor(math.sqrt(2) / r + 1e-12))
    _emit([("n", n), ("r", r), ("tau", tau), ("cells", 2 / r ** 2),
           ("probability", analytics.prob_all_cells_occupied(n, r, tau)),
           ("grid_cells", L * L),
           ("probability_grid", analytics.prob_all_cells_occupied(n, r, tau, L * L))])
    return 0


HANDLERS = {"gen": cmd_gen, "localize": cmd_localize, "bootstrap": cmd_bootstrap,
            "critical": cmd_critical, "coupling": cmd_coupling, "min-anchors": cmd_min_anchors,
            "sufficient-m": cmd_sufficient_m, "scaling": cmd_scaling, "occupancy": cmd_occupancy}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return HANDLERS[args.command](effective_options(args))
    except (UsageError, SpecValidationError, InfeasibleError, ValueError, OSError) as exc:
        print(f"bootloc {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

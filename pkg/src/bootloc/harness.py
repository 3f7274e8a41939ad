"""Monte-Carlo experiment orchestration and result persistence.

Trial ``i`` of an experiment always runs with ``split_seed(base_seed, i)``, so
results are a pure function of the spec whatever the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import __version__
from .analytics import default_tau
from .geometry import Metric, sample_instance
from .grid_bootstrap import BootstrapRule, estimate_critical_p, holroyd_pc, random_initial, run_bootstrap
from .localization import min_anchors_empirical, run_localization
from .seeding import map_trials, split_seed
from .stats import wilson_interval
from .virtual_grid import COUPLING_CSV_COLUMNS, run_coupled_experiment

KINDS = ("localization", "bootstrap", "coupling", "critical_sweep", "min_anchors")

# required parameters, then optional ones with defaults
_REQUIRED = {
    "localization": ("n", "r", "m"),
    "bootstrap": ("L", "p"),
    "coupling": ("n", "r", "m"),
    "critical_sweep": ("L",),
    "min_anchors": ("n", "r"),
}
_OPTIONAL = {
    "localization": {"metric": "torus"},
    "bootstrap": {"theta": 2, "neighborhood": "vn4", "boundary": "bounded"},
    "coupling": {"tau": None, "metric": "torus"},
    "critical_sweep": {"theta": 2, "neighborhood": "vn4", "boundary": "bounded",
                       "resolution": 0.01},
    "min_anchors": {"target": 0.9, "metric": "torus"},
}

CSV_COLUMNS = {
    "localization": ("seed", "n_realized", "m", "r", "rounds", "localized_count",
                     "fully_localized"),
    "bootstrap": ("seed", "L", "p", "steps", "fully_active"),
    "coupling": COUPLING_CSV_COLUMNS,
    "critical_sweep": ("p", "trials", "successes", "wilson_low", "wilson_high"),
    "min_anchors": ("seed", "n_realized", "m_threshold"),
}


class SpecValidationError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid experiment spec: " + "; ".join(problems))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    parameters: dict = field(default_factory=dict)
    trials: int = 1
    base_seed: int = 0

    def validated(self) -> "ExperimentSpec":
        """Return a copy with defaults filled in, or raise :class:`SpecValidationError`."""
        problems = []
        if self.kind not in KINDS:
            raise SpecValidationError([f"unknown kind {self.kind!r} (expected one of {KINDS})"])
        if not isinstance(self.trials, int) or self.trials < 1:
            problems.append("trials must be an integer >= 1")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 2 ** 64:
            problems.append("base_seed must be a 64-bit unsigned integer")
        params = dict(_OPTIONAL[self.kind])
        params.update({k: v for k, v in self.parameters.items() if v is not None})
        for key in _REQUIRED[self.kind]:
            if params.get(key) is None:
                problems.append(f"missing parameter {key!r}")
        allowed = set(_REQUIRED[self.kind]) | set(_OPTIONAL[self.kind])
        for key in sorted(set(params) - allowed):
            problems.append(f"unexpected parameter {key!r} for kind {self.kind!r}")
        problems += _check_values(params)
        if self.kind == "coupling" and isinstance(params.get("r"), (int, float)) \
                and params["r"] >= 1:
            problems.append("coupling needs r < 1 for the virtual grid")
        if problems:
            raise SpecValidationError(problems)
        return ExperimentSpec(self.kind, params, self.trials, self.base_seed)

    def to_json(self) -> dict:
        return {"kind": self.kind, "parameters": self.parameters, "trials": self.trials,
                "base_seed": self.base_seed}

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentSpec":
        return cls(obj["kind"], dict(obj.get("parameters", {})), int(obj.get("trials", 1)),
                   int(obj.get("base_seed", 0)))


def _check_values(p: dict) -> list[str]:
    out = []

    def positive(key):
        v = p.get(key)
        if v is not None and not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
            out.append(f"{key} must be a positive number, got {v!r}")

    for key in ("n", "r", "L", "resolution"):
        positive(key)
    if p.get("m") is not None and not (isinstance(p["m"], int) and p["m"] >= 0):
        out.append(f"m must be a non-negative integer, got {p['m']!r}")
    if p.get("L") is not None and not isinstance(p["L"], int):
        out.append("L must be an integer")
    if p.get("p") is not None and not (isinstance(p["p"], (int, float)) and 0 <= p["p"] <= 1):
        out.append(f"p must lie in [0, 1], got {p['p']!r}")
    if p.get("target") is not None and not 0 < p["target"] < 1:
        out.append("target must lie in (0, 1)")
    if p.get("resolution") is not None and not 0 < p["resolution"] < 1:
        out.append("resolution must lie in (0, 1)")
    if p.get("metric") is not None and p["metric"] not in ("torus", "bounded"):
        out.append(f"metric must be torus or bounded, got {p['metric']!r}")
    if "theta" in p or "neighborhood" in p or "boundary" in p:
        try:
            BootstrapRule(p.get("neighborhood", "vn4"), p.get("theta", 2),
                          p.get("boundary", "bounded"))
        except (ValueError, TypeError) as exc:
            out.append(str(exc))
    if p.get("r") is not None and p.get("tau") is not None:
        if not 0 < p["tau"] < p["r"] / (2 * math.sqrt(2)):
            out.append("tau must satisfy 0 < tau < r / (2 sqrt 2)")
    return out


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list[dict]
    aggregate: dict
    summary: dict = field(default_factory=dict)
    wall_ms: float = 0.0

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "results": self.records,
                "aggregate": self.aggregate, "summary": self.summary,
                "meta": {"version": __version__, "wall_ms": self.wall_ms}}


def aggregate_records(records: list[dict]) -> dict:
    """Success count, fraction and 95% Wilson interval of per-trial records."""
    trials = len(records)
    s = sum(1 for r in records if r["success"])
    low, high = wilson_interval(s, trials)
    return {"successes": s, "trials": trials, "fraction": s / trials,
            "wilson_low": low, "wilson_high": high}


def _rule(p: dict) -> BootstrapRule:
    return BootstrapRule(p["neighborhood"], p["theta"], p["boundary"])


def _trial_localization(p: dict, index: int, seed: int) -> dict:
    nodes, anchors, resamples = sample_instance(p["n"], p["m"], seed)
    res = run_localization(nodes, anchors, p["r"], Metric(p["metric"]))
    return {"trial": index, "seed": seed, **res.to_json(), "resamples": resamples,
            "success": res.fully_localized}


def _trial_bootstrap(p: dict, index: int, seed: int) -> dict:
    run = run_bootstrap(random_initial(p["L"], p["p"], seed, _rule(p)))
    return {"trial": index, "seed": seed, "L": p["L"], "p": p["p"], "steps": run.steps,
            "fully_active": run.fully_active, "success": run.fully_active}


def _trial_coupling(p: dict, index: int, seed: int) -> dict:
    out = run_coupled_experiment(p["n"], p["r"], p["tau"], p["m"], seed, Metric(p["metric"]))
    return {"trial": index, **out.csv_row(), "r_prime": out.r_prime,
            "resamples": out.resamples, "violation": out.violation,
            "success": out.localization_complete_at_enhanced_range}


_TRIALS = {"localization": _trial_localization, "bootstrap": _trial_bootstrap,
           "coupling": _trial_coupling}


def run_experiment(spec: ExperimentSpec, worker_budget: int = 1) -> ExperimentResult:
    """Validate ``spec``, fan its trials out over ``worker_budget`` processes, aggregate."""
    spec = spec.validated()
    p = spec.parameters
    t0 = time.perf_counter()
    summary: dict[str, Any] = {}
    if spec.kind in _TRIALS:
        args = [(p, i, split_seed(spec.base_seed, i)) for i in range(spec.trials)]
        records = map_trials(_TRIALS[spec.kind], args, worker_budget)
        if spec.kind == "coupling":
            bad = [r["seed"] for r in records if r["violation"]]
            summary = {"r_prime": p["r"] + 2 * (p["tau"] or default_tau(p["r"])),
                       "violations": len(bad), "violating_seeds": bad,
                       "all_occupied_and_fully_red": sum(
                           1 for r in records if r["all_occupied"] and r["fully_red"])}
    elif spec.kind == "critical_sweep":
        est = estimate_critical_p(p["L"], _rule(p), spec.trials, p["resolution"],
                                  spec.base_seed, worker_budget)
        records = [{"trial": i, "seed": s, "threshold": float(t), "success": bool(t < est.p_hat)}
                   for i, (s, t) in enumerate(zip(est.seeds, est.thresholds))]
        summary = {"p_hat": est.p_hat,
                   "holroyd_pc": holroyd_pc(p["L"]) if p["L"] >= 2 else None,
                   "curve": [vars(c) for c in est.curve]}
    else:
        est = min_anchors_empirical(p["n"], p["r"], spec.trials, p["target"], spec.base_seed,
                                    Metric(p["metric"]), worker_budget)
        cut = est.m if est.achievable else est.m_max
        records = [{"trial": i, "seed": s, "n_realized": int(n), "m_threshold": int(t),
                    "success": bool(t <= cut)}
                   for i, (s, n, t) in enumerate(zip(est.seeds, est.n_realized, est.thresholds))]
        summary = {"m_hat": est.m, "achievable": est.achievable,
                   "bracket": list(est.bracket), "m_max": est.m_max}
    wall = (time.perf_counter() - t0) * 1000.0
    return ExperimentResult(spec, records, aggregate_records(records), summary, wall)


def fmt(value) -> str:
    """Text form used for every emitted number: 12 significant digits."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    if value is None:
        return ""
    return str(value)


def write_results(result: ExperimentResult, format: str, path: str | Path) -> None:
    """Persist ``result`` as the JSON envelope or as the kind's CSV table.

    The CSV ends with a ``#``-prefixed aggregate line.
    """
    path = Path(path)
    try:
        if format == "json":
            path.write_text(json.dumps(result.to_json(), indent=1, sort_keys=False) + "\n")
        elif format == "csv":
            with open(path, "w", newline="") as fh:
                write_csv(result, fh)
        else:
            raise ValueError(f"unknown format {format!r}")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc


def write_csv(result: ExperimentResult, fh) -> None:
    cols = CSV_COLUMNS[result.spec.kind]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    rows = result.summary["curve"] if result.spec.kind == "critical_sweep" else result.records
    for rec in rows:
        w.writerow([fmt(rec[c]) for c in cols])
    agg = result.aggregate
    fh.write("# aggregate " + " ".join(f"{k}={fmt(v)}" for k, v in agg.items()) + "\n")


def read_results(path: str | Path) -> ExperimentResult:
    obj = json.loads(Path(path).read_text())
    return ExperimentResult(ExperimentSpec.from_json(obj["spec"]), obj["results"],
                            obj["aggregate"], obj.get("summary", {}),
                            obj.get("meta", {}).get("wall_ms", 0.0))

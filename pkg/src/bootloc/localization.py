"""Iterated localization.

An unlocalized node becomes localized in round ``t + 1`` when at least three
nodes localized by round ``t`` lie within its radio range.  Rounds are
synchronous and the process runs until a round adds nothing.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (Metric, NeighborGraph, NodeSet, anchor_order, displacement,
                       neighbor_graph, sample_nodes)
from .seeding import map_trials, split_seed
from .stats import wilson_interval

THRESHOLD = 3


@dataclass(frozen=True)
class CollinearityPolicy:
    """How to treat nodes whose in-range localized neighbours are (nearly) collinear.

    ``ignore`` counts any three nodes.  ``epsilon`` additionally requires a
    triple whose triangle area is at least ``eps * r**2``.
    """

    mode: str = "ignore"
    eps: float = 1e-6

    def __post_init__(self):
        if self.mode not in ("ignore", "epsilon"):
            raise ValueError(f"unknown collinearity mode {self.mode!r}")
        if self.eps < 0:
            raise ValueError("eps must be non-negative")

    @classmethod
    def ignore(cls) -> "CollinearityPolicy":
        return cls("ignore")

    @classmethod
    def epsilon(cls, eps: float = 1e-6) -> "CollinearityPolicy":
        return cls("epsilon", eps)


IGNORE = CollinearityPolicy.ignore()


@dataclass(frozen=True, eq=False)
class AnchorState:
    localized: np.ndarray
    round: int = 0
    newly_localized_history: tuple = ()

    def __post_init__(self):
        loc = np.array(self.localized, dtype=bool)
        loc.setflags(write=False)
        object.__setattr__(self, "localized", loc)

    @classmethod
    def initial(cls, n: int, anchors) -> "AnchorState":
        loc = np.zeros(n, dtype=bool)
        idx = np.asarray(list(anchors) if not isinstance(anchors, np.ndarray) else anchors,
                         dtype=np.int64)
        if len(idx) and (idx.min() < 0 or idx.max() >= n):
            raise ValueError("anchor index out of range")
        loc[idx] = True
        return cls(loc)

    @property
    def count(self) -> int:
        return int(self.localized.sum())


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    n_realized: int
    m: int
    r: float
    final_localized_count: int
    rounds_to_fixpoint: int
    fully_localized: bool
    localized: np.ndarray
    newly_per_round: tuple[int, ...]
    trace: tuple[AnchorState, ...] | None = None

    def to_json(self) -> dict:
        return {"n_realized": self.n_realized, "m": self.m, "r": self.r,
                "rounds": self.rounds_to_fixpoint,
                "localized_count": self.final_localized_count,
                "fully_localized": self.fully_localized}

    def write_trace_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "newly_localized_count"])
            for t, k in enumerate(self.newly_per_round, start=1):
                w.writerow([t, k])


def _wide_triple_exists(vecs: np.ndarray, min_area: float) -> bool:
    """True if some three of ``vecs`` span a triangle of area >= ``min_area``."""
    if len(vecs) < 3:
        return False
    hull = _convex_hull(vecs)
    if len(hull) < 3:
        return False
    tri = np.array(list(itertools.combinations(range(len(hull)), 3)))
    a, b, c = hull[tri[:, 0]], hull[tri[:, 1]], hull[tri[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    return bool(np.abs(cross).max() * 0.5 >= min_area)


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    # monotone chain; the largest triangle always has its corners on the hull
    pts = np.unique(pts, axis=0)
    if len(pts) < 3:
        return pts

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) > 0:
                    break
                out.pop()
            out.append(p)
        return out

    lower, upper = half(pts), half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def _newly_localized(nodes: NodeSet, graph: NeighborGraph, localized: np.ndarray,
                     r: float, metric: Metric, policy: CollinearityPolicy) -> np.ndarray:
    counts = graph.count(localized)
    cand = np.flatnonzero(~localized & (counts >= THRESHOLD))
    if policy.mode == "epsilon" and len(cand):
        min_area = policy.eps * r * r
        keep = []
        for x in cand:
            nbrs = graph.neighbors(x)
            nbrs = nbrs[localized[nbrs]]
            vecs = displacement(nodes.points[nbrs], nodes.points[x], metric)
            if _wide_triple_exists(vecs, min_area):
                keep.append(x)
        cand = np.asarray(keep, dtype=np.int64)
    return cand


def localize_step(nodes: NodeSet, state: AnchorState, r: float, metric: Metric = Metric.TORUS,
                  collinearity: CollinearityPolicy = IGNORE,
                  graph: NeighborGraph | None = None) -> AnchorState:
    """One synchronous round: every test reads the pre-round localized set."""
    if r <= 0:
        raise ValueError("radio range must be positive")
    if len(state.localized) != len(nodes):
        raise ValueError("state does not match node set")
    if graph is None:
        graph = neighbor_graph(nodes, r, metric)
    new = _newly_localized(nodes, graph, state.localized, r, metric, collinearity)
    loc = state.localized.copy()
    loc[new] = True
    return AnchorState(loc, state.round + 1, state.newly_localized_history + (new,))


def run_localization(nodes: NodeSet, anchors, r: float, metric: Metric = Metric.TORUS,
                     collinearity: CollinearityPolicy = IGNORE, max_rounds: int | None = None,
                     trace: bool = False, graph: NeighborGraph | None = None
                     ) -> LocalizationResult:
    """Iterate :func:`localize_step` until a round localizes nobody.

    ``rounds_to_fixpoint`` includes that final empty round, so a run whose
    anchors already cover every node reports one round.
    """
    if r <= 0:
        raise ValueError("radio range must be positive")
    n = len(nodes)
    if graph is None:
        graph = neighbor_graph(nodes, r, metric)
    state = AnchorState.initial(n, anchors)
    m = state.count
    states = [state] if trace else None
    newly = []
    while max_rounds is None or state.round < max_rounds:
        state = localize_step(nodes, state, r, metric, collinearity, graph=graph)
        k = len(state.newly_localized_history[-1])
        if trace:
            states.append(state)
        if k == 0:
            break
        newly.append(k)
    final = state.count
    return LocalizationResult(
        n_realized=n, m=m, r=float(r), final_localized_count=final,
        rounds_to_fixpoint=state.round, fully_localized=final == n,
        localized=state.localized, newly_per_round=tuple(newly),
        trace=tuple(states) if trace else None)


def localization_closure(graph: NeighborGraph, localized: np.ndarray) -> np.ndarray:
    """Fixpoint of the default (collinearity-ignoring) rule on a precomputed graph."""
    loc = np.array(localized, dtype=bool)
    while True:
        new = ~loc & (graph.count(loc) >= THRESHOLD)
        if not new.any():
            return loc
        loc |= new


def _trial_min_anchors(density: float, r: float, metric: str, seed: int) -> tuple[int, int]:
    nodes = sample_nodes(density, split_seed(seed, 0))
    n = len(nodes)
    order = anchor_order(n, split_seed(seed, 1))
    graph = neighbor_graph(nodes, r, Metric(metric))

    def full(k: int) -> bool:
        loc = np.zeros(n, dtype=bool)
        loc[order[:k]] = True
        return bool(localization_closure(graph, loc).all())

    lo, hi = -1, n  # full(hi) always holds, full(lo) never does
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if full(mid):
            hi = mid
        else:
            lo = mid
    return n, hi


@dataclass(frozen=True, eq=False)
class MinAnchorsEstimate:
    """Empirical smallest anchor count reaching the success target.

    ``m`` is None when even ``m_max`` anchors miss the target.
    ``bracket`` holds the largest failing and smallest passing probe.
    """

    m: int | None
    achievable: bool
    bracket: tuple[int, int | None]
    m_max: int
    successes: int
    trials: int
    wilson: tuple[float, float]
    thresholds: np.ndarray
    n_realized: np.ndarray
    seeds: tuple[int, ...]

    def successes_at(self, m: int) -> int:
        return int((self.thresholds <= m).sum())


def min_anchors_empirical(density: float, r: float, trials: int, success_target: float,
                          seed: int, metric: Metric = Metric.TORUS,
                          workers: int = 1) -> MinAnchorsEstimate:
    """Smallest ``m`` whose Wilson lower bound on P(full localization) >= target.

    Every trial draws its nodes once and ranks them by a seeded permutation;
    anchors for ``m`` are the first ``m`` of that ranking, so each trial's
    success is monotone in ``m`` and is summarised by the smallest anchor
    count that localizes everything.  The bisection over ``m`` then runs on
    exact success counts.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < success_target < 1:
        raise ValueError("success_target must lie in (0, 1)")
    if r <= 0:
        raise ValueError("radio range must be positive")
    seeds = tuple(split_seed(seed, i) for i in range(trials))
    out = map_trials(_trial_min_anchors,
                     [(float(density), float(r), Metric(metric).value, s) for s in seeds], workers)
    n_real = np.array([o[0] for o in out], dtype=np.int64)
    thr = np.array([o[1] for o in out], dtype=np.int64)
    m_max = int(math.ceil(density))

    def passes(m: int) -> bool:
        return wilson_interval(int((thr <= m).sum()), trials)[0] >= success_target

    if not passes(m_max):
        s = int((thr <= m_max).sum())
        return MinAnchorsEstimate(None, False, (m_max, None), m_max, s, trials,
                                  wilson_interval(s, trials), thr, n_real, seeds)
    lo, hi = -1, m_max
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    s = int((thr <= hi).sum())
    return MinAnchorsEstimate(hi, True, (lo, hi), m_max, s, trials,
                              wilson_interval(s, trials), thr, n_real, seeds)

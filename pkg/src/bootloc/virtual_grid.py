"""Virtual grid coupling between iterated localization and 3-of-8 bootstrap.

A lattice of spacing ``r / sqrt(2)`` is laid over the unit square.  Cell
``(i, j)`` is *occupied* when its tau-ball contains a node and *red* when the
ball contains an anchor.  If every cell is occupied and the red cells spread
to the whole grid under the Moore-8 / threshold-3 rule, then localization
with radio range ``r + 2 tau`` reaches every node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytics import SQRT2, default_tau
from .geometry import Metric, NodeSet, distance, neighbor_graph, sample_instance
from .grid_bootstrap import MOORE8, _Packed
from .localization import THRESHOLD


@dataclass(frozen=True, eq=False)
class VirtualGrid:
    """Cell flags and ball membership of one realisation.

    Arrays are indexed ``[i, j]`` with cell centre
    ``(margin + (i + 1/2) spacing, margin + (j + 1/2) spacing)``.
    ``owner[k]`` is the flat cell index whose ball holds node ``k`` or -1.
    """

    L: int
    r: float
    spacing: float
    tau: float
    margin: float
    occupied: np.ndarray
    red: np.ndarray
    owner: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        c = self.margin + (np.arange(self.L) + 0.5) * self.spacing
        return np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)

    @property
    def all_occupied(self) -> bool:
        return bool(self.occupied.all())

    def cell_members(self) -> list[np.ndarray]:
        """Node indices per flat cell index ``i * L + j``."""
        order = np.argsort(self.owner, kind="stable")
        owners = self.owner[order]
        bounds = np.searchsorted(owners, np.arange(self.L * self.L + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.L * self.L)]


def grid_layout(r: float) -> tuple[int, float, float]:
    """Cells per side, spacing and border margin for radio range ``r``."""
    if not 0 < r < 1:
        raise ValueError("need 0 < r < 1")
    spacing = r / SQRT2
    L = int(math.floor(SQRT2 / r + 1e-12))
    return L, spacing, (1.0 - L * spacing) / 2.0


def build_virtual_grid(nodes: NodeSet, anchors, r: float, tau: float | None = None,
                       metric: Metric = Metric.TORUS) -> VirtualGrid:
    tau = default_tau(r) if tau is None else tau
    if not 0 < tau < r / (2 * SQRT2):
        raise ValueError("tau must satisfy 0 < tau < r / (2 sqrt 2) so cell balls are disjoint")
    L, spacing, margin = grid_layout(r)
    pts = nodes.points
    owner = np.full(len(pts), -1, dtype=np.int64)
    if len(pts) and L:
        # balls are disjoint and lie inside the square, so only the nearest centre can match
        ij = np.clip(np.floor((pts - margin) / spacing).astype(np.int64), 0, L - 1)
        centre = margin + (ij + 0.5) * spacing
        inside = distance(pts, centre, metric) <= tau
        owner[inside] = ij[inside, 0] * L + ij[inside, 1]
    occupied = np.zeros(L * L, dtype=bool)
    occupied[owner[owner >= 0]] = True
    red = np.zeros(L * L, dtype=bool)
    anc = np.asarray(list(anchors) if not isinstance(anchors, np.ndarray) else anchors,
                     dtype=np.int64)
    if len(anc):
        own = owner[anc]
        red[own[own >= 0]] = True
    return VirtualGrid(L, float(r), spacing, float(tau), margin,
                       occupied.reshape(L, L), red.reshape(L, L), owner)


@dataclass(frozen=True, eq=False)
class ColorRun:
    red: np.ndarray
    fully_red: bool
    steps: int


def run_color_bootstrap(grid: VirtualGrid) -> ColorRun:
    """Spread red cells with the Moore-8, threshold-3 rule on the bounded grid."""
    if grid.L == 0:
        return ColorRun(grid.red.copy(), True, 0)
    eng = _Packed(grid.L, MOORE8)
    x, steps = eng.closure(eng.pack(grid.red))
    red = eng.unpack(x)
    return ColorRun(red, bool(red.all()), steps)


def color_rounds(grid: VirtualGrid) -> list[np.ndarray]:
    """Red flags after each color-bootstrap step, starting with the initial colors."""
    eng = _Packed(grid.L, MOORE8)
    x = eng.pack(grid.red)
    out = [grid.red.copy()]
    while True:
        nxt = eng.step(x)
        if np.array_equal(nxt, x):
            return out
        x = nxt
        out.append(eng.unpack(x))


@dataclass(frozen=True)
class CouplingOutcome:
    seed: int
    n_realized: int
    m: int
    r: float
    tau: float
    r_prime: float
    all_occupied: bool
    grid_fully_red: bool
    localization_complete_at_enhanced_range: bool
    rounds_grid: int
    rounds_localization: int
    resamples: int = 0

    @property
    def violation(self) -> bool:
        return (self.all_occupied and self.grid_fully_red
                and not self.localization_complete_at_enhanced_range)

    def csv_row(self) -> dict:
        return {"seed": self.seed, "n_realized": self.n_realized, "m": self.m, "r": self.r,
                "tau": self.tau, "all_occupied": self.all_occupied,
                "fully_red": self.grid_fully_red,
                "localized_all": self.localization_complete_at_enhanced_range,
                "rounds_grid": self.rounds_grid, "rounds_localization": self.rounds_localization}


COUPLING_CSV_COLUMNS = ("seed", "n_realized", "m", "r", "tau", "all_occupied", "fully_red",
                        "localized_all", "rounds_grid", "rounds_localization")

def run_coupled_experiment(density: float, r: float, tau: float | None, m: int, seed: int,
                           metric: Metric = Metric.TORUS) -> CouplingOutcome:
    """One realisation: color bootstrap on the virtual grid and localization at ``r + 2 tau``."""
    tau = default_tau(r) if tau is None else tau
    if m < 0:
        raise ValueError("m must be non-negative")
    nodes, anchors, resamples = sample_instance(density, m, seed)
    grid = build_virtual_grid(nodes, anchors, r, tau, metric)
    color = run_color_bootstrap(grid)
    r_prime = r + 2 * tau
    graph = neighbor_graph(nodes, r_prime, metric)
    loc = np.zeros(len(nodes), dtype=bool)
    loc[anchors] = True
    rounds = 0
    while True:
        rounds += 1
        new = ~loc & (graph.count(loc) >= THRESHOLD)
        if not new.any():
            break
        loc |= new
    return CouplingOutcome(
        seed=seed, n_realized=len(nodes), m=m, r=float(r), tau=float(tau), r_prime=r_prime,
        all_occupied=grid.all_occupied, grid_fully_red=color.fully_red,
        localization_complete_at_enhanced_range=bool(loc.all()),
        rounds_grid=color.steps, rounds_localization=rounds, resamples=resamples)


def stepwise_coupling_violations(nodes: NodeSet, anchors, grid: VirtualGrid, r_prime: float,
                                 metric: Metric = Metric.TORUS) -> list[tuple[int, int]]:
    """Check the round-by-round coupling on an all-occupied grid.

    After color step ``t`` every red cell's ball must hold a node localized by
    round ``t`` at range ``r_prime``, and every cell that turned red at step
    ``t`` must have all of its ball's nodes localized by then.  Returns the
    offending ``(step, flat_cell)`` pairs.
    """
    if not grid.all_occupied:
        raise ValueError("stepwise coupling is only claimed when every cell is occupied")
    members = grid.cell_members()
    graph = neighbor_graph(nodes, r_prime, metric)
    loc = np.zeros(len(nodes), dtype=bool)
    loc[np.asarray(anchors, dtype=np.int64)] = True
    bad = []
    prev = None
    for t, red in enumerate(color_rounds(grid)):
        if t > 0:
            loc = loc | (graph.count(loc) >= THRESHOLD)
        flat = red.ravel()
        for c in np.flatnonzero(flat):
            mem = members[c]
            if not loc[mem].any():
                bad.append((t, int(c)))
            elif prev is not None and not prev[c] and not loc[mem].all():
                bad.append((t, int(c)))
        prev = flat
    return bad


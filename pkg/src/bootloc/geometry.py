"""Point processes, anchor selection and fixed-radius queries on the unit square.

Distances default to the torus metric so that the unit square has no edges;
``Metric.BOUNDED`` gives plain Euclidean distance for sensitivity studies.
Ball membership is closed (``distance <= radius``).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .seeding import split_seed


class Point(NamedTuple):
    x: float
    y: float


class Metric(str, enum.Enum):
    TORUS = "torus"
    BOUNDED = "bounded"


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Realisation of a Poisson point process on [0, 1)^2.

    ``points`` is a read-only ``(count, 2)`` array in sampling order.
    """

    points: np.ndarray
    density: float
    seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
            raise ValueError("node coordinates must lie in [0, 1)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> Point:
        return Point(*map(float, self.points[i]))

    def to_json(self) -> dict:
        return {"density": self.density, "seed": self.seed,
                "points": self.points.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "NodeSet":
        return cls(np.asarray(obj["points"], dtype=float).reshape(-1, 2),
                   float(obj["density"]), obj.get("seed"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "NodeSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def sample_nodes(density: float, seed: int) -> NodeSet:
    """Draw a Poisson(density) number of i.i.d. uniform points in [0, 1)^2."""
    if not (density > 0 and math.isfinite(density)):
        raise ValueError(f"density must be positive and finite, got {density!r}")
    rng = np.random.default_rng(seed)
    count = rng.poisson(density)
    return NodeSet(rng.random((count, 2)), float(density), seed)


def sample_anchors(nodes: NodeSet | int, m: int, seed: int) -> np.ndarray:
    """Choose ``m`` distinct node indices uniformly at random.

    The indices are the first ``m`` entries of one seeded permutation, so for
    a fixed seed the anchor sets are nested in ``m``.  Returned sorted.
    """
    n = nodes if isinstance(nodes, int) else len(nodes)
    if m < 0 or m > n:
        raise ValueError(f"cannot choose {m} anchors from {n} nodes")
    return np.sort(anchor_order(n, seed)[:m])


MAX_RESAMPLES = 1000


def sample_instance(density: float, m: int, seed: int) -> tuple[NodeSet, np.ndarray, int]:
    """Nodes and ``m`` anchors for one trial.

    Draws whose realised count is below ``m`` are redrawn from the next child
    seed; the number of redraws is returned alongside.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    for attempt in range(MAX_RESAMPLES):
        nodes = sample_nodes(density, split_seed(seed, 2 * attempt))
        if len(nodes) >= m:
            return nodes, sample_anchors(nodes, m, split_seed(seed, 2 * attempt + 1)), attempt
    raise RuntimeError(f"density {density} never produced {m} nodes in {MAX_RESAMPLES} draws")


def anchor_order(n: int, seed: int) -> np.ndarray:
    """The seeded permutation whose prefixes are the anchor sets."""
    return np.random.default_rng(seed).permutation(n)


def displacement(a, b, metric: Metric = Metric.TORUS) -> np.ndarray:
    """Coordinate-wise difference ``a - b``, wrapped to [-1/2, 1/2] on the torus."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if Metric(metric) is Metric.TORUS:
        d = d - np.round(d)
    return d


def distance(a, b, metric: Metric = Metric.TORUS):
    d = displacement(a, b, metric)
    return np.hypot(d[..., 0], d[..., 1])


class BucketGrid:
    """Uniform bucket grid over the unit square for fixed-radius queries.

    Buckets have side ``1 / ncell >= cell_size``.  Points are stored sorted by
    bucket so each bucket is a contiguous slice of ``order``.
    """

    def __init__(self, points: np.ndarray, cell_size: float, metric: Metric = Metric.TORUS):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        self.metric = Metric(metric)
        self.ncell = max(1, int(math.floor(1.0 / cell_size))) if cell_size > 0 else 1
        self.ncell = min(self.ncell, 1024)
        cells = self._cell_of(self.points)
        self.cell = cells[:, 0] * self.ncell + cells[:, 1]
        self.order = np.argsort(self.cell, kind="stable")
        counts = np.bincount(self.cell, minlength=self.ncell ** 2)
        self.start = np.concatenate(([0], np.cumsum(counts)[:-1]))
        self.stop = self.start + counts

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        return np.clip(np.floor(pts * self.ncell).astype(np.int64), 0, self.ncell - 1)

    def _offsets(self, radius: float) -> np.ndarray:
        k = int(math.floor(radius * self.ncell)) + 1
        d = np.arange(-k, k + 1)
        if self.metric is Metric.TORUS:
            d = np.unique(d % self.ncell)
        return d

    def _cells_near(self, cx: int, cy: int, radius: float) -> Iterable[int]:
        offs = self._offsets(radius)
        n = self.ncell
        if self.metric is Metric.TORUS:
            xs = np.unique((cx + offs) % n)
            ys = np.unique((cy + offs) % n)
        else:
            xs = [c for c in cx + offs if 0 <= c < n]
            ys = [c for c in cy + offs if 0 <= c < n]
        return [int(x) * n + int(y) for x in xs for y in ys]

    def query_ball(self, center, radius: float) -> np.ndarray:
        """Sorted indices of points within ``radius`` of ``center``."""
        c = np.asarray(center, dtype=float).reshape(1, 2)
        cx, cy = self._cell_of(np.clip(c, 0.0, np.nextafter(1.0, 0.0)))[0]
        cand = [self.order[self.start[b]:self.stop[b]]
                for b in self._cells_near(int(cx), int(cy), radius)]
        if not cand:
            return np.empty(0, dtype=np.int64)
        idx = np.concatenate(cand)
        keep = distance(self.points[idx], c[0], self.metric) <= radius
        return np.sort(idx[keep])

    def neighbor_pairs(self, radius: float) -> tuple[np.ndarray, np.ndarray]:
        """All ordered pairs ``(i, j)``, ``i != j``, at distance ``<= radius``."""
        n = self.ncell
        cells = np.stack(np.divmod(self.cell, n), axis=1)
        offs = self._offsets(radius)
        src = np.arange(len(self.points))
        rows, cols = [], []
        for dx in offs:
            for dy in offs:
                nx = cells[:, 0] + dx
                ny = cells[:, 1] + dy
                if self.metric is Metric.TORUS:
                    nx, ny = nx % n, ny % n
                    sel = src
                else:
                    ok = (nx >= 0) & (nx < n) & (ny >= 0) & (ny < n)
                    sel, nx, ny = src[ok], nx[ok], ny[ok]
                b = nx * n + ny
                lo, hi = self.start[b], self.stop[b]
                cnt = hi - lo
                total = int(cnt.sum())
                if total == 0:
                    continue
                i = np.repeat(sel, cnt)
                first = np.repeat(lo - (np.cumsum(cnt) - cnt), cnt)
                j = self.order[first + np.arange(total)]
                keep = i != j
                i, j = i[keep], j[keep]
                keep = distance(self.points[i], self.points[j], self.metric) <= radius
                rows.append(i[keep])
                cols.append(j[keep])
        if not rows:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        return np.concatenate(rows), np.concatenate(cols)


def ball_indices(nodes: NodeSet, center, radius: float, metric: Metric = Metric.TORUS,
                 exclude=None, index: BucketGrid | None = None) -> np.ndarray:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if index is None:
        index = BucketGrid(nodes.points, max(radius, 1e-3), metric)
    idx = index.query_ball(center, radius)
    if exclude is not None and len(idx):
        idx = idx[~np.isin(idx, np.atleast_1d(np.asarray(exclude, dtype=np.int64)))]
    return idx


def ball_count(nodes: NodeSet, center, radius: float, metric: Metric = Metric.TORUS,
               exclude=None, index: BucketGrid | None = None) -> int:
    """Number of nodes (outside ``exclude``) within ``radius`` of ``center``."""
    return len(ball_indices(nodes, center, radius, metric, exclude, index))


def brute_ball_indices(points: np.ndarray, center, radius: float,
                       metric: Metric = Metric.TORUS) -> np.ndarray:
    """Reference O(n) scan used to validate :class:`BucketGrid`."""
    if len(points) == 0:
        return np.empty(0, dtype=np.int64)
    return np.flatnonzero(distance(points, center, metric) <= radius)


class NeighborGraph:
    """Undirected geometric graph stored as an edge list ``(first[k], second[k])``."""

    def __init__(self, n: int, first: np.ndarray, second: np.ndarray):
        self.n = n
        self.first = np.asarray(first, dtype=np.int64)
        self.second = np.asarray(second, dtype=np.int64)
        self._csr = None

    @property
    def edges(self) -> int:
        return len(self.first)

    def count(self, mask: np.ndarray) -> np.ndarray:
        """Number of neighbours of each node that are flagged in ``mask``."""
        mask = np.asarray(mask, dtype=bool)
        return (np.bincount(self.first[mask[self.second]], minlength=self.n)
                + np.bincount(self.second[mask[self.first]], minlength=self.n))

    def to_csr(self) -> sparse.csr_matrix:
        if self._csr is None:
            i = np.concatenate([self.first, self.second])
            j = np.concatenate([self.second, self.first])
            self._csr = sparse.csr_matrix((np.ones(len(i), dtype=np.int32), (i, j)),
                                          shape=(self.n, self.n))
        return self._csr

    def neighbors(self, x: int) -> np.ndarray:
        g = self.to_csr()
        return g.indices[g.indptr[x]:g.indptr[x + 1]]


def neighbor_graph(nodes: NodeSet | np.ndarray, radius: float,
                   metric: Metric = Metric.TORUS) -> NeighborGraph:
    """Geometric graph joining nodes at distance ``<= radius``.

    Backed by a k-d tree (periodic box on the torus); :meth:`BucketGrid.neighbor_pairs`
    yields the same pairs and is kept as the cross-check.
    """
    pts = nodes.points if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    n = len(pts)
    if n == 0:
        empty = np.empty(0, dtype=np.int64)
        return NeighborGraph(0, empty, empty)
    box = 1.0 if Metric(metric) is Metric.TORUS else None
    pairs = cKDTree(pts, boxsize=box).query_pairs(radius, output_type="ndarray")
    return NeighborGraph(n, pairs[:, 0], pairs[:, 1])

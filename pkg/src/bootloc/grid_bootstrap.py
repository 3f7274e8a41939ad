"""Threshold bootstrap percolation on an L x L grid.

Grids are stored as ``(L, L)`` boolean arrays in the public API and packed to
one bit per vertex (``uint64`` words, row-major) inside the update engine.
Neighbour counts are evaluated bit-parallel: each neighbour direction is a
shifted copy of the packed grid and "at least theta of k shifted planes" is
accumulated with AND/OR logic, so one step costs O(L^2 / 64) word operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seeding import map_trials, split_seed
from .stats import wilson_interval

NEIGHBORHOODS = {"vn4": 4, "moore8": 8}
_ALIASES = {"vonneumann4": "vn4", "von_neumann": "vn4", "vn": "vn4", "moore": "moore8"}
_ONE = np.uint64(1)
_TOP = np.uint64(63)


@dataclass(frozen=True)
class BootstrapRule:
    """Neighbourhood, activation threshold and boundary of a bootstrap process.

    A threshold above the neighbourhood size is accepted and simply freezes
    the grid.
    """

    neighborhood: str = "vn4"
    threshold: int = 2
    boundary: str = "bounded"

    def __post_init__(self):
        nb = _ALIASES.get(self.neighborhood.lower(), self.neighborhood.lower())
        if nb not in NEIGHBORHOODS:
            raise ValueError(f"unknown neighborhood {self.neighborhood!r}")
        object.__setattr__(self, "neighborhood", nb)
        if int(self.threshold) < 1:
            raise ValueError("threshold must be a positive integer")
        object.__setattr__(self, "threshold", int(self.threshold))
        if self.boundary not in ("bounded", "torus"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def size(self) -> int:
        return NEIGHBORHOODS[self.neighborhood]


VN4 = BootstrapRule("vn4", 2, "bounded")
MOORE8 = BootstrapRule("moore8", 3, "bounded")


@dataclass(frozen=True, eq=False)
class GridState:
    active: np.ndarray
    rule: BootstrapRule = field(default=VN4)

    def __post_init__(self):
        a = np.array(self.active, dtype=bool)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("grid must be square")
        a.setflags(write=False)
        object.__setattr__(self, "active", a)

    @property
    def L(self) -> int:
        return self.active.shape[0]

    @property
    def fully_active(self) -> bool:
        return bool(self.active.all())

    def to_text(self) -> str:
        return "".join("".join("1" if v else "0" for v in row) + "\n" for row in self.active)

    @classmethod
    def from_text(cls, text: str, rule: BootstrapRule = VN4) -> "GridState":
        rows = [ln.strip() for ln in text.splitlines()]
        rows = [ln.replace(" ", "") for ln in rows if ln and not ln.startswith("#")]
        if any(set(r) - {"0", "1"} for r in rows):
            raise ValueError("grid fixture rows may contain only 0 and 1")
        return cls(np.array([[c == "1" for c in r] for r in rows], dtype=bool).reshape(
            len(rows), -1), rule)

    @classmethod
    def load(cls, path: str | Path, rule: BootstrapRule = VN4) -> "GridState":
        return cls.from_text(Path(path).read_text(), rule)


class _Packed:
    """Bit-packed engine for one grid size and rule."""

    def __init__(self, L: int, rule: BootstrapRule):
        self.L = L
        self.rule = rule
        self.words = max(1, -(-L // 64))
        self.torus = rule.boundary == "torus"
        mask = np.zeros(self.words * 64, dtype=bool)
        mask[:L] = True
        self.row_mask = self._pack_rows(mask[None, :])[0]
        self.last = (L - 1) // 64, np.uint64((L - 1) % 64)

    def _pack_rows(self, a: np.ndarray) -> np.ndarray:
        pad = np.zeros((a.shape[0], self.words * 64), dtype=bool)
        pad[:, :a.shape[1]] = a
        return np.packbits(pad, axis=1, bitorder="little").view("<u8").astype(np.uint64)

    def pack(self, active: np.ndarray) -> np.ndarray:
        return self._pack_rows(np.asarray(active, dtype=bool))

    def unpack(self, x: np.ndarray) -> np.ndarray:
        bits = np.unpackbits(x.astype("<u8").view(np.uint8), axis=1, bitorder="little")
        return bits[:, :self.L].astype(bool)

    def _from_left(self, x):
        # value of column j-1 at column j
        out = x << _ONE
        out[:, 1:] |= x[:, :-1] >> _TOP
        if self.torus:
            w, b = self.last
            out[:, 0] |= (x[:, w] >> b) & _ONE
        return out & self.row_mask

    def _from_right(self, x):
        # value of column j+1 at column j
        out = x >> _ONE
        out[:, :-1] |= x[:, 1:] << _TOP
        if self.torus:
            w, b = self.last
            out[:, w] |= (x[:, 0] & _ONE) << b
        return out

    def _from_up(self, x):
        out = np.empty_like(x)
        out[1:] = x[:-1]
        out[0] = x[-1] if self.torus else 0
        return out

    def _from_down(self, x):
        out = np.empty_like(x)
        out[:-1] = x[1:]
        out[-1] = x[0] if self.torus else 0
        return out

    def planes(self, x):
        left, right = self._from_left(x), self._from_right(x)
        ps = [left, right, self._from_up(x), self._from_down(x)]
        if self.rule.neighborhood == "moore8":
            ps += [self._from_up(left), self._from_up(right),
                   self._from_down(left), self._from_down(right)]
        return ps

    def step(self, x: np.ndarray) -> np.ndarray:
        theta = self.rule.threshold
        if self.L == 0 or theta > self.rule.size:
            return x
        # at_least[t]: vertices with >= t active neighbours among planes seen so far
        at_least = [np.zeros_like(x) for _ in range(theta)]
        for i, p in enumerate(self.planes(x)):
            for t in range(min(theta, i + 1) - 1, 0, -1):
                at_least[t] |= at_least[t - 1] & p
            at_least[0] |= p
        return x | (at_least[theta - 1] & self.row_mask)

    def closure(self, x: np.ndarray, max_steps: int | None = None) -> tuple[np.ndarray, int]:
        steps = 0
        while max_steps is None or steps < max_steps:
            nxt = self.step(x)
            if np.array_equal(nxt, x):
                break
            x = nxt
            steps += 1
        return x, steps

    def full(self, x: np.ndarray) -> bool:
        return bool(np.array_equal(x, np.broadcast_to(self.row_mask, x.shape)))


def bootstrap_step(state: GridState) -> GridState:
    """One synchronous update of ``state`` under its rule."""
    eng = _Packed(state.L, state.rule)
    return GridState(eng.unpack(eng.step(eng.pack(state.active))), state.rule)


@dataclass(frozen=True, eq=False)
class BootstrapRun:
    final: GridState
    steps: int
    fully_active: bool


def run_bootstrap(state: GridState, max_steps: int | None = None) -> BootstrapRun:
    """Step to the fixpoint (or ``max_steps``); ``steps`` counts growth steps only."""
    eng = _Packed(state.L, state.rule)
    x, steps = eng.closure(eng.pack(state.active), max_steps)
    final = GridState(eng.unpack(x), state.rule)
    return BootstrapRun(final, steps, final.fully_active)


def random_initial(L: int, p: float, seed: int, rule: BootstrapRule = VN4) -> GridState:
    """I.i.d. Bernoulli(p) activation; vertex active iff its uniform draw < p."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    return GridState(_uniform_field(L, seed) < p, rule)


def _uniform_field(L: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).random((L, L))


def _require_odd(L: int) -> None:
    if L < 1 or L % 2 == 0:
        raise ValueError(f"face conditions need an odd side length, got L={L}")


def face_condition_holds(state: GridState) -> bool:
    """Every concentric odd square around the centre has an active vertex on each face."""
    L = state.L
    _require_odd(L)
    a = state.active
    c = L // 2
    for k in range(c + 1):
        lo, hi = c - k, c + k
        faces = (a[lo, lo:hi + 1], a[hi, lo:hi + 1], a[lo:hi + 1, lo], a[lo:hi + 1, hi])
        if not all(f.any() for f in faces):
            return False
    return True


def sample_face_satisfying(L: int, seed: int, rule: BootstrapRule = VN4) -> GridState:
    """Centre plus one uniformly chosen vertex on each face of every concentric square."""
    _require_odd(L)
    rng = np.random.default_rng(seed)
    a = np.zeros((L, L), dtype=bool)
    c = L // 2
    a[c, c] = True
    for k in range(1, c + 1):
        lo, hi = c - k, c + k
        u = rng.integers(lo, hi + 1, size=4)
        a[lo, u[0]] = a[hi, u[1]] = a[u[2], lo] = a[u[3], hi] = True
    return GridState(a, rule)


def holroyd_pc(L: float) -> float:
    """Asymptotic critical probability pi^2 / (18 ln L) of 2-neighbour bootstrap."""
    if L < 2:
        raise ValueError("L must be >= 2")
    return math.pi ** 2 / (18.0 * math.log(L))


@dataclass(frozen=True)
class CurvePoint:
    p: float
    trials: int
    successes: int
    wilson_low: float
    wilson_high: float

    @property
    def fraction(self) -> float:
        return self.successes / self.trials


@dataclass(frozen=True, eq=False)
class CriticalEstimate:
    L: int
    rule: BootstrapRule
    p_hat: float
    curve: tuple[CurvePoint, ...]
    thresholds: np.ndarray
    seeds: tuple[int, ...]

    def successes_at(self, p: float) -> int:
        return int((self.thresholds < p).sum())


def trial_threshold(L: int, rule: BootstrapRule, seed: int) -> float:
    """Infimum of the ``p`` at which this trial's initial field fully activates.

    Activation sets are nested in ``p`` for a fixed uniform field, so the
    trial succeeds at ``p`` exactly when ``p`` exceeds the returned value.
    Found by bisection over how many of the smallest draws are switched on.
    """
    u = _uniform_field(L, seed).ravel()
    order = np.argsort(u, kind="stable")
    eng = _Packed(L, rule)

    def full(k: int) -> bool:
        a = np.zeros(L * L, dtype=bool)
        a[order[:k]] = True
        x, _ = eng.closure(eng.pack(a.reshape(L, L)))
        return eng.full(x)

    lo, hi = 0, L * L
    if full(lo):
        return 0.0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if full(mid):
            hi = mid
        else:
            lo = mid
    return float(u[order[hi - 1]])


def _trial_threshold(L: int, nb: str, theta: int, boundary: str, seed: int) -> float:
    return trial_threshold(L, BootstrapRule(nb, theta, boundary), seed)


def _grid(step: float, start: float, stop: float) -> list[float]:
    k0 = int(math.floor(start / step + 1e-9)) + 1
    k1 = int(math.floor(stop / step + 1e-9))
    return [round(k * step, 12) for k in range(k0, k1 + 1)]


def estimate_critical_p(L: int, rule: BootstrapRule = VN4, trials: int = 200,
                        resolution: float = 0.01, seed: int = 0,
                        workers: int = 1) -> CriticalEstimate:
    """Monte-Carlo crossing point of P(fully active) = 1/2.

    The p-sweep is a coarse pass at ``resolution`` followed by one pass at
    ``resolution / 10`` between the crossing and its predecessor.  All sweep
    points share the per-trial uniform fields (common random numbers), so the
    success count at any ``p`` is read off each trial's activation threshold.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 < resolution < 1:
        raise ValueError("resolution must lie in (0, 1)")
    seeds = tuple(split_seed(seed, i) for i in range(trials))
    thr = np.array(map_trials(
        _trial_threshold,
        [(L, rule.neighborhood, rule.threshold, rule.boundary, s) for s in seeds], workers))

    def point(p: float) -> CurvePoint:
        s = int((thr < p).sum())
        return CurvePoint(p, trials, s, *wilson_interval(s, trials))

    coarse = _grid(resolution, 0.0, 1.0)
    if not coarse or coarse[-1] < 1.0:
        coarse.append(1.0)
    curve = {p: point(p) for p in coarse}
    p_hat = next(p for p in coarse if curve[p].fraction >= 0.5 or p == 1.0)
    fine_step = resolution / 10
    for p in _grid(fine_step, max(0.0, p_hat - resolution), p_hat):
        curve.setdefault(p, point(p))
    pts = tuple(curve[p] for p in sorted(curve))
    p_hat = next((c.p for c in pts if c.fraction >= 0.5), 1.0)
    return CriticalEstimate(L, rule, p_hat, pts, thr, seeds)

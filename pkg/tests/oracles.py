"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the engines under test.
"""

from __future__ import annotations

import math

import numpy as np
from mpmath import mp, mpf


def torus_dist(a, b):
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    dx, dy = min(dx, 1 - dx), min(dy, 1 - dy)
    return math.sqrt(dx * dx + dy * dy)


def plain_dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def dist_fn(metric: str):
    return torus_dist if metric == "torus" else plain_dist


def distance_matrix(points, metric="torus"):
    pts = np.asarray(points, dtype=float)
    d = np.abs(pts[:, None, :] - pts[None, :, :])
    if metric == "torus":
        d = np.minimum(d, 1 - d)
    return np.sqrt((d ** 2).sum(-1))


def ball_scan(points, center, radius, metric="torus"):
    f = dist_fn(metric)
    return [i for i, p in enumerate(points) if f(p, center) <= radius]


def localization_step_scan(points, localized, r, metric="torus"):
    """U_t by a full pairwise scan."""
    f = dist_fn(metric)
    n = len(points)
    new = []
    for x in range(n):
        if localized[x]:
            continue
        c = sum(1 for y in range(n) if y != x and localized[y] and f(points[x], points[y]) <= r)
        if c >= 3:
            new.append(x)
    return new


def sequential_fixpoint(points, anchors, r, rng, metric="torus"):
    """Localize one randomly chosen eligible node at a time until none is eligible."""
    d = distance_matrix(points, metric)
    adj = (d <= r) & ~np.eye(len(points), dtype=bool)
    loc = np.zeros(len(points), dtype=bool)
    loc[list(anchors)] = True
    while True:
        eligible = np.flatnonzero(~loc & (adj[:, loc].sum(1) >= 3))
        if not len(eligible):
            return loc
        loc[rng.choice(eligible)] = True


VN4_OFFSETS = [(-1, 0), (1, 0), (0, -1), (0, 1)]
MOORE8_OFFSETS = VN4_OFFSETS + [(-1, -1), (-1, 1), (1, -1), (1, 1)]


def naive_bootstrap_step(active, neighborhood="vn4", theta=2, boundary="bounded"):
    a = np.asarray(active, dtype=bool)
    L = a.shape[0]
    offs = VN4_OFFSETS if neighborhood == "vn4" else MOORE8_OFFSETS
    out = a.copy()
    for i in range(L):
        for j in range(L):
            if a[i, j]:
                continue
            c = 0
            for di, dj in offs:
                ii, jj = i + di, j + dj
                if boundary == "torus":
                    ii, jj = ii % L, jj % L
                elif not (0 <= ii < L and 0 <= jj < L):
                    continue
                c += a[ii, jj]
            out[i, j] = c >= theta
    return out


def naive_bootstrap_run(active, neighborhood="vn4", theta=2, boundary="bounded"):
    a = np.asarray(active, dtype=bool)
    steps = 0
    while True:
        b = naive_bootstrap_step(a, neighborhood, theta, boundary)
        if (b == a).all():
            return a, steps
        a, steps = b, steps + 1


def mp_q(m, n, rho, dps=400):
    """Red probability straight from the printed ratio, in high precision."""
    with mp.workdps(dps):
        a = mp.pi * mpf(rho) ** 2
        return 1 - (mp.exp(-m * a) - mp.exp(-n * a)) / (1 - mp.exp(-n * a))


def mp_occupancy(n, r, tau, cells=None, dps=50):
    with mp.workdps(dps):
        cells = mpf(2) / mpf(r) ** 2 if cells is None else mpf(cells)
        return (1 - mp.exp(-mpf(n) * mp.pi * mpf(tau) ** 2)) ** cells


def linear_scan_sufficient(n, r, c_prime, rho):
    """Smallest integer m with q(m) > c'/ln(sqrt2/r), scanning m = 0, 1, 2, ..."""
    T = c_prime / math.log(math.sqrt(2) / r)
    a = math.pi * rho * rho
    m = np.arange(0, int(math.ceil(n)) + 1, dtype=float)
    q = 1 - (np.exp(-m * a) - math.exp(-n * a)) / (1 - math.exp(-n * a))
    hits = np.flatnonzero(q > T)
    return int(m[hits[0]]) if len(hits) else None


def ols_slope(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    xm, ym = x.mean(), y.mean()
    return float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())


def wilson_mp(s, n, z):
    with mp.workdps(40):
        s, n, z = mpf(s), mpf(n), mpf(z)
        p = s / n
        denom = 1 + z ** 2 / n
        centre = (p + z ** 2 / (2 * n)) / denom
        half = z * mp.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2)) / denom
        return centre - half, centre + half


def queue_bootstrap_closure(active, neighborhood="vn4", theta=2, boundary="bounded"):
    """Final active set by activating one vertex at a time from a work queue."""
    a = np.asarray(active, dtype=bool).copy()
    L = a.shape[0]
    offs = VN4_OFFSETS if neighborhood == "vn4" else MOORE8_OFFSETS

    def nbrs(i, j):
        for di, dj in offs:
            ii, jj = i + di, j + dj
            if boundary == "torus":
                yield ii % L, jj % L
            elif 0 <= ii < L and 0 <= jj < L:
                yield ii, jj

    count = {}
    for i in range(L):
        for j in range(L):
            count[i, j] = sum(a[v] for v in nbrs(i, j))
    queue = [(i, j) for (i, j), c in count.items() if not a[i, j] and c >= theta]
    while queue:
        v = queue.pop()
        if a[v]:
            continue
        a[v] = True
        for w in nbrs(*v):
            count[w] += 1
            if not a[w] and count[w] >= theta:
                queue.append(w)
    return a

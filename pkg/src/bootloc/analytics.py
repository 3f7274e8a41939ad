"""Closed-form occupancy, red-probability and sufficient-anchor formulas."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SQRT2 = math.sqrt(2.0)


class InfeasibleError(ValueError):
    """The anchor threshold cannot be met (threshold >= 1)."""


def default_tau(r: float, factor: float = 0.9) -> float:
    """Ball radius ``factor * r / (2 sqrt 2)``, inside the disjointness bound."""
    return factor * r / (2.0 * SQRT2)


def prob_all_cells_occupied(n: float, r: float, tau: float, cells: float | None = None) -> float:
    """P(every virtual cell's tau-ball holds a node) = (1 - exp(-n pi tau^2))^cells.

    ``cells`` defaults to ``2 / r**2``; pass ``L**2`` to match a concrete
    grid with ``L = floor(sqrt(2) / r)`` cells per side.
    """
    if n <= 0 or r <= 0 or r >= SQRT2:
        raise ValueError("need n > 0 and 0 < r < sqrt(2)")
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if cells is None:
        cells = 2.0 / (r * r)
    if tau == 0:
        return 0.0
    # log1p(-exp(-x)) keeps full precision when exp(-x) underflows or is tiny
    return math.exp(cells * math.log1p(-math.exp(-n * math.pi * tau * tau)))


def red_probability_q(m: float, n: float, rho: float) -> float:
    """P(a cell's rho-ball holds an anchor | it holds a node).

    Equal to ``1 - (e^{-m pi rho^2} - e^{-n pi rho^2}) / (1 - e^{-n pi rho^2})``,
    evaluated as ``expm1(-m pi rho^2) / expm1(-n pi rho^2)``.
    """
    area = math.pi * rho * rho
    if not n * area > 0:
        raise ValueError("n * pi * rho^2 must be positive")
    if not 0 <= m <= n:
        raise ValueError("need 0 <= m <= n")
    return math.expm1(-m * area) / math.expm1(-n * area)


def red_threshold(r: float, c_prime: float = 1.0) -> float:
    """Required red probability ``c' / ln(sqrt(2) / r)``."""
    if not 0 < r < SQRT2:
        raise ValueError("need 0 < r < sqrt(2)")
    if c_prime < 0:
        raise ValueError("c_prime must be non-negative")
    return c_prime / math.log(SQRT2 / r)


def sufficient_anchors(n: float, r: float, c_prime: float = 1.0, rho: float | None = None) -> int:
    """Smallest integer ``m`` with ``red_probability_q(m, n, rho) > red_threshold(r, c')``.

    ``rho`` defaults to ``r``.  The closed-form inversion is checked against
    the formula at ``m`` and ``m - 1`` and nudged if rounding put it off by one.
    """
    rho = r if rho is None else rho
    T = red_threshold(r, c_prime)
    if T >= 1:
        raise InfeasibleError(f"infeasible: threshold {T:.6g} unreachable (needs < 1)")
    area = math.pi * rho * rho
    if not n * area > 0:
        raise ValueError("n * pi * rho^2 must be positive")
    # q(m) > T  <=>  m * area > -log1p(T * expm1(-n * area))
    arg = 1.0 + T * math.expm1(-n * area)
    if arg <= 0:
        raise InfeasibleError("infeasible: inversion argument non-positive")
    x = -math.log1p(T * math.expm1(-n * area)) / area
    m = int(math.floor(x)) + 1
    cap = int(math.ceil(n))
    m = min(max(m, 0), cap)

    def q(k):
        return red_probability_q(min(k, n), n, rho)

    while m > 0 and q(m - 1) > T:
        m -= 1
    while m < cap and not q(m) > T:
        m += 1
    return m


def connectivity_radius(n: float, c_radius: float) -> float:
    """Connectivity-scale radio range ``sqrt(c ln n / n)``."""
    if n <= 1:
        raise ValueError("n must exceed 1")
    if c_radius <= 0:
        raise ValueError("c_radius must be positive")
    return math.sqrt(c_radius * math.log(n) / n)


@dataclass(frozen=True)
class ScalingRow:
    n: float
    c_radius: float
    r: float
    threshold: float
    q_at_m: float | None
    m_sufficient: int | None
    feasible: bool


@dataclass(frozen=True)
class ScalingTable:
    rows: tuple[ScalingRow, ...]
    slopes: dict
    c_prime: float
    rho_mode: str


def loglog_slope(n_values: Sequence[float], m_values: Sequence[float]) -> float | None:
    """Least-squares slope of log m against log n; None with fewer than two points."""
    if len(n_values) < 2:
        return None
    x, y = np.log(np.asarray(n_values, float)), np.log(np.asarray(m_values, float))
    if np.ptp(x) == 0:
        return None
    return float(np.polyfit(x, y, 1)[0])


def scaling_table(n_values: Sequence[float], c_radius_values: Sequence[float],
                  c_prime: float = 1.0, rho_mode: str = "paper_r",
                  tau_factor: float = 0.9) -> ScalingTable:
    """Sufficient anchor counts over a grid of ``n`` and connectivity constants.

    ``rho_mode='paper_r'`` evaluates the red probability with the radio range
    itself; ``'tau'`` uses the cell ball radius ``tau_factor * r / (2 sqrt 2)``.
    Infeasible rows are kept with ``feasible=False``.
    """
    if rho_mode not in ("paper_r", "tau"):
        raise ValueError("rho_mode must be 'paper_r' or 'tau'")
    rows, slopes = [], {}
    for c in c_radius_values:
        ok_n, ok_m = [], []
        for n in n_values:
            r = connectivity_radius(n, c)
            rho = r if rho_mode == "paper_r" else default_tau(r, tau_factor)
            try:
                T = red_threshold(r, c_prime)
                m = sufficient_anchors(n, r, c_prime, rho)
            except (InfeasibleError, ValueError):
                T = red_threshold(r, c_prime) if r < SQRT2 else math.inf
                rows.append(ScalingRow(n, c, r, T, None, None, False))
                continue
            rows.append(ScalingRow(n, c, r, T, red_probability_q(m, n, rho), m, True))
            ok_n.append(n)
            ok_m.append(m)
        slopes[c] = loglog_slope(ok_n, ok_m)
    return ScalingTable(tuple(rows), slopes, c_prime, rho_mode)

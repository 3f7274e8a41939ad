"""Figures written next to the CSV reports."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analytics import ScalingTable  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0


def _figure(width: float = 6.0):
    plt.rcParams.update({"font.size": 10, "axes.grid": True, "grid.alpha": 0.3,
                         "savefig.dpi": 150, "svg.hashsalt": "bootloc"})
    return plt.subplots(figsize=(width, width * GOLDEN))


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_scaling(table: ScalingTable, path: str | Path) -> Path:
    """Log-log sufficient anchor count against n, one line per connectivity constant."""
    fig, ax = _figure()
    by_c: dict = {}
    for row in table.rows:
        if row.feasible:
            by_c.setdefault(row.c_radius, []).append((row.n, row.m_sufficient))
    for c, pts in by_c.items():
        ns, ms = zip(*pts)
        slope = table.slopes.get(c)
        label = f"c = {c:g}" + (f" (slope {slope:.3f})" if slope is not None else "")
        ax.loglog(ns, ms, "o-", label=label)
    if by_c:
        ns = sorted({n for pts in by_c.values() for n, _ in pts})
        m0 = min(m for pts in by_c.values() for _, m in pts)
        ax.loglog(ns, [m0 * (n / ns[0]) ** (2.5 / 3) for n in ns], "k--", lw=1,
                  label=r"$\propto n^{2.5/3}$")
    ax.set_xlabel("number of nodes n")
    ax.set_ylabel("sufficient anchors m")
    ax.set_title(f"c' = {table.c_prime:g}, rho = {table.rho_mode}")
    if by_c:
        ax.legend(frameon=False)
    return _save(fig, path)


def plot_critical_curve(curve: list[dict], L: int, p_hat: float, reference: float | None,
                        path: str | Path) -> Path:
    """Success fraction against p with its Wilson band and the crossing point."""
    fig, ax = _figure()
    ps = [c["p"] for c in curve]
    frac = [c["successes"] / c["trials"] for c in curve]
    ax.fill_between(ps, [c["wilson_low"] for c in curve], [c["wilson_high"] for c in curve],
                    alpha=0.25, step="mid", label="95% Wilson")
    ax.plot(ps, frac, ".-", label=f"L = {L}")
    ax.axhline(0.5, color="grey", lw=0.8)
    ax.axvline(p_hat, color="C3", lw=1, label=f"crossing {p_hat:.4g}")
    if reference is not None:
        ax.axvline(reference, color="k", ls="--", lw=1,
                   label=rf"$\pi^2/(18\ln L)$ = {reference:.4g}")
    ax.set_xlim(0, min(1.0, 3 * max(p_hat, reference or 0)))
    ax.set_xlabel("initial activation probability p")
    ax.set_ylabel("P(fully active)")
    ax.legend(frameon=False, loc="lower right")
    return _save(fig, path)

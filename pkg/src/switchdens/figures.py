"""Figure rendering for report outputs.

The delimited tables stay the data contract; these plots are a visual
companion written next to them. The headless backend is forced before
pyplot loads, so rendering works without a display.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "render_comparison",
    "render_density",
    "render_fields",
    "render_histogram",
]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def render_fields(path, system, window, sets) -> None:
    plt = _pyplot()
    lo, hi = window
    xs = np.linspace(lo, hi, 600)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for s in sets:
        if s.kind != "open_interval":
            continue
        left = s.left if np.isfinite(s.left) else lo
        right = s.right if np.isfinite(s.right) else hi
        ax.axvspan(max(left, lo), min(right, hi), color="0.92", zorder=0)
    for i in range(system.n):
        ax.plot(xs, np.asarray(system.u(i, xs), dtype=float), label=f"state {i}")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("x")
    ax.set_ylabel("u(x)")
    ax.set_title("driving fields and invariant intervals")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_histogram(path, hist) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    density = hist.density()
    for i in range(density.shape[0]):
        ax.stairs(density[i], hist.edges, label=f"state {i}")
    ax.set_xlabel("x")
    ax.set_ylabel("occupation density")
    ax.set_title("simulated occupation histogram")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_density(path, grids) -> None:
    plt = _pyplot()
    fig, (ax_rho, ax_flux) = plt.subplots(
        2, 1, figsize=(7.0, 6.0), sharex=True,
        gridspec_kw={"height_ratios": [2.2, 1.0]})
    for grid in grids:
        for i in range(grid.rho.shape[0]):
            ax_rho.plot(grid.nodes, grid.rho[i], label=f"state {i}")
            ax_flux.plot(grid.nodes, grid.flux[i])
        ax_flux.plot(grid.nodes, grid.flux.sum(axis=0), "k--", lw=0.9)
    ax_rho.set_ylabel("rho")
    ax_rho.set_title("stationary density and flux")
    ax_rho.legend(loc="best", fontsize=8)
    ax_flux.set_xlabel("x")
    ax_flux.set_ylabel("flux")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_comparison(path, grids, pf_results, hist) -> None:
    """Overlay of the solved, iterated and simulated densities."""
    plt = _pyplot()
    n = max(g.rho.shape[0] for g in grids)
    fig, axes = plt.subplots(n, 1, figsize=(7.0, 2.6 * n), sharex=True, squeeze=False)
    if hist is not None:
        density = hist.density()
        centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
    for i in range(n):
        ax = axes[i, 0]
        for grid in grids:
            ax.plot(grid.nodes, grid.rho[i], "C0-", lw=1.4,
                    label="flux solve" if grid is grids[0] else None)
        for pf in pf_results:
            ax.plot(pf.nodes, pf.rho[i], "C1--", lw=1.1,
                    label="fixed point" if pf is pf_results[0] else None)
        if hist is not None:
            ax.plot(centers, density[i], "C2.", ms=3, label="simulation")
        ax.set_ylabel(f"rho[{i}]")
        if i == 0:
            ax.set_title("route comparison")
            ax.legend(loc="best", fontsize=8)
    axes[-1, 0].set_xlabel("x")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Machine-readable reports and figure rendering.

JSON reports are canonical (sorted keys, no timestamps) so a rerun of the
same configuration produces byte-identical files.  CSV companions use long
format with a header row.  Figures are rendered with the Agg backend next
to the delimited output.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_table(header, rows) -> str:
    """Aligned plain-text table for terminal report summaries."""
    data = [tuple(str(c) for c in header)]
    data += [tuple(str(c) for c in row) for row in rows]
    widths = [max(len(r[i]) for r in data) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip()
             for r in data]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def write_csv(path, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow(row)
    return path


def fig_environment(env, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 2.4))
    if env.ndim == 1:
        ax.step(np.arange(env.n_sites), env.alpha, where="mid")
        ax.set_xlabel("site")
        ax.set_ylabel("max occupancy")
    else:
        im = ax.imshow(env.alpha.reshape(env.dims), interpolation="nearest")
        fig.colorbar(im, ax=ax, label="max occupancy")
    ax.set_title(f"environment {env.content_hash()}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_walk_histogram(env, sites, t, path, reference=None) -> Path:
    counts = np.bincount(sites, minlength=env.n_sites) / len(sites)
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.bar(np.arange(env.n_sites), counts, width=0.9, alpha=0.6,
           label="empirical")
    if reference is not None:
        ax.plot(np.arange(env.n_sites), reference, "k.-", lw=1.0,
                label="exact semigroup")
    ax.set_xlabel("site")
    ax.set_ylabel(f"occupation frequency at t={t:g}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_msd(times, cov_trace, slope, intercept, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(times, cov_trace, "o", ms=4, label="displacement variance")
    ax.plot(times, intercept + slope * np.asarray(times), "-",
            label=f"slope {slope:.4f}")
    ax.set_xlabel("t")
    ax.set_ylabel("var(X_t)")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_sep_kymograph(env, traj, path, samples=200) -> Path:
    """Site-occupancy raster of one exclusion path over time (1-D tori)."""
    ts = np.linspace(0.0, traj.horizon, samples)
    grid = np.stack([traj.config_at(env, t) for t in ts])
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    im = ax.imshow(grid.T, aspect="auto", origin="lower",
                   extent=[0, traj.horizon, -0.5, env.n_sites - 0.5],
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="occupancy")
    ax.set_xlabel("t")
    ax.set_ylabel("site")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_err_decay(err_by_n, path, ylabel="err(N)") -> Path:
    ns = sorted(err_by_n)
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.loglog(ns, [err_by_n[n] for n in ns], "o-")
    ax.set_xlabel("N")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def fig_density_vs_limit(positions, empirical, limit, t, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.plot(positions, empirical, "o", ms=3, alpha=0.7, label="empirical")
    ax.plot(positions, limit, "-", lw=1.5, label="heat-equation limit")
    ax.set_xlabel("u")
    ax.set_ylabel(f"density at t={t:g}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)

"""Optional PNG figures written next to the CSV/JSON outputs.

Only the CLI calls these, and only when figures are requested. The CSV and
JSON dumps stay the primary plotting contract.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# No timestamps or version strings, so reruns give identical files.
_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _field_axes(ax, grid, values, label):
    if grid.dim == 1:
        ax.plot(grid.axis_centers(0), values, label=label)
        return None
    (x0, x1), (y0, y1) = grid.domain.bounds[:2]
    img = grid.as_array(values)
    while img.ndim > 2:
        img = img[..., img.shape[-1] // 2]
    return ax.imshow(img.T, origin="lower", extent=(x0, x1, y0, y1), aspect="auto")


def plot_observations(record, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    X = record.positions
    if record.dim == 1:
        ax.plot(record.times, X[:, 0], ".", ms=2)
        ax.set_xlabel("t")
        ax.set_ylabel("x")
    else:
        ax.plot(X[:, 0], X[:, 1], "-", lw=0.3, color="0.6")
        ax.plot(X[:, 0], X[:, 1], ".", ms=3)
        ax.set_xlabel("x_1")
        ax.set_ylabel("x_2")
    ax.set_title(f"N = {record.N}, D = {record.D:g}")
    return _save(fig, path)


def plot_spectrum(eigenvalues, path):
    lam = np.asarray(eigenvalues)
    j = np.arange(1, len(lam))
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(j, lam[1:], ".")
    ax.set_xlabel("j")
    ax.set_ylabel("eigenvalue")
    return _save(fig, path)


def plot_fields(grid, fields: dict, title: str, path):
    """Overlaid curves in 1-d, one panel per field otherwise."""
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, values in fields.items():
            _field_axes(ax, grid, values, name)
        ax.legend()
        ax.set_title(title)
        return _save(fig, path)
    fig, axes = plt.subplots(1, len(fields), figsize=(4.5 * len(fields), 4), squeeze=False)
    for ax, (name, values) in zip(axes[0], fields.items()):
        im = _field_axes(ax, grid, values, name)
        fig.colorbar(im, ax=ax)
        ax.set_title(name)
    fig.suptitle(title)
    return _save(fig, path)


def plot_rates(rows, slope, predicted, path):
    N = np.array([r["N"] for r in rows], dtype=float)
    m = np.array([r["mean"] for r in rows])
    sd = np.array([r["std"] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(N, m, yerr=sd, fmt="o")
    ax.loglog(N, m[0] * (N / N[0]) ** predicted, "--", label=f"slope {predicted:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("mean error")
    ax.set_title(f"fitted slope {slope:.3f}")
    ax.legend()
    return _save(fig, path)


def plot_trace(trace, path):
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(trace[:, 0], trace[:, 1], lw=0.5)
    ax.set_xlabel("iteration")
    ax.set_ylabel("log-likelihood")
    return _save(fig, path)

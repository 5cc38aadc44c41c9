"""SVG figures for boundary and attribution reports.

All figures go through :func:`save_svg`, which strips the creation date and
fixes the SVG id salt so that re-running a command rewrites identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLASS_COLORS = ("tab:orange", "tab:blue")
BASELINE_COLORS = {"optimal": "gold", "random-db": "purple", "zero": "black",
                   "noise": "grey", "custom-point": "teal"}

plt.rcParams.update({
    "svg.hashsalt": "ibs",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
})


def save_svg(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def boundary_scatter(features, labels, path, boundary_points=None, oracle_points=None,
                     baselines=None, sample=None, title=None) -> Path:
    """Data coloured by class with the sampled boundary on top (2-D data only).

    ``baselines`` maps a name to a point; names found in ``BASELINE_COLORS``
    get their usual colour.
    """
    features = np.asarray(features)
    fig, ax = plt.subplots(figsize=(5, 5))
    for c in (0, 1):
        pts = features[np.asarray(labels) == c]
        ax.scatter(pts[:, 0], pts[:, 1], s=4, alpha=0.35, color=CLASS_COLORS[c], label=f"class {c}",
                   linewidths=0)
    if oracle_points is not None and len(oracle_points):
        op = np.asarray(oracle_points)
        ax.scatter(op[:, 0], op[:, 1], s=0.5, color="red", label="grid oracle", linewidths=0)
    if boundary_points is not None and len(boundary_points):
        bp = np.asarray(boundary_points)
        ax.scatter(bp[:, 0], bp[:, 1], s=5, color="green", label="IBS boundary", linewidths=0)
    for name, pt in (baselines or {}).items():
        ax.scatter([pt[0]], [pt[1]], s=60, marker="o", edgecolors="k",
                   color=BASELINE_COLORS.get(name, "magenta"), label=f"baseline ({name})", zorder=5)
        if sample is not None:
            ax.plot([pt[0], sample[0]], [pt[1], sample[1]], "k:", lw=0.8)
    if sample is not None:
        ax.scatter([sample[0]], [sample[1]], s=60, marker="*", color="k", label="sample", zorder=6)
    ax.set_xlabel("feature 0")
    ax.set_ylabel("feature 1")
    ax.legend(loc="best", fontsize=7, markerscale=1.5, frameon=False)
    if title:
        ax.set_title(title)
    return save_svg(fig, path)


def gradient_path(traces, path, crossings=None, title=None) -> Path:
    """One panel per baseline: every feature's gradient against the path position.

    ``traces`` maps a baseline name to an :class:`~ibs.attribution.PathTrace`.
    Boundary crossings are drawn as red vertical lines.
    """
    names = list(traces)
    fig, axes = plt.subplots(len(names), 1, figsize=(6, 2.4 * len(names)), squeeze=False)
    for ax, name in zip(axes[:, 0], names):
        tr = traces[name]
        d = tr.gradients.shape[1]
        if d <= 10:
            for i in range(d):
                ax.plot(tr.t_values, tr.gradients[:, i], lw=1.2, label=f"dF/dx{i}")
        else:
            ax.plot(tr.t_values, np.linalg.norm(tr.gradients, axis=1), lw=1.2, label="|grad|")
        for t in (crossings or {}).get(name, ()):
            ax.axvline(t, color="red", lw=1)
        ax.set_ylabel(name)
        ax.legend(fontsize=7, frameon=False)
    axes[-1, 0].set_xlabel("t (0 = baseline, 1 = sample)")
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    return save_svg(fig, path)


def attribution_bars(attributions, path, title=None) -> Path:
    """Rows are baselines, columns are IG, Delta and cumulated gradients."""
    names = list(attributions)
    fig, axes = plt.subplots(len(names), 3, figsize=(9, 2.3 * len(names)), squeeze=False)
    for r, name in enumerate(names):
        a = attributions[name]
        cols = (("IG", a.values), ("Delta", a.delta), ("CG", a.cumulated_gradients))
        for c, (label, v) in enumerate(cols):
            ax = axes[r, c]
            idx = np.arange(v.size)
            if v.size <= 30:
                ax.bar(idx, v, color=np.where(v >= 0, "tab:green", "tab:red"))
                ax.set_xticks(idx)
            else:
                ax.plot(idx, v, lw=0.5)
            ax.axhline(0, color="k", lw=0.6)
            if r == 0:
                ax.set_title(label)
            if c == 0:
                ax.set_ylabel(name)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return save_svg(fig, path)


def attribution_maps(attributions, layout, path, title=None) -> Path:
    """Image-space IG, Delta and CG maps for data placed on a :class:`BrainLayout`."""
    names = list(attributions)
    fig, axes = plt.subplots(len(names), 3, figsize=(8, 3 * len(names)), squeeze=False)
    for r, name in enumerate(names):
        a = attributions[name]
        for c, (label, v) in enumerate((("IG", a.values), ("Delta", a.delta),
                                        ("CG", a.cumulated_gradients))):
            img = layout.to_images(v, fill=np.nan)
            lim = np.nanmax(np.abs(img)) or 1.0
            ax = axes[r, c]
            ax.imshow(img, cmap="RdBu_r", vmin=-lim, vmax=lim)
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(label)
            if c == 0:
                ax.set_ylabel(name)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return save_svg(fig, path)

"""Figure export for the CLI: loss curves, 3D curve sets and per-class AP bars.

Everything renders off-screen with the Agg backend and writes straight to a file.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .curves import CLASS_NAMES, CURVE_CLASSES, sample_by_interval  # noqa: E402

CLASS_COLORS = {1: "tab:purple", 2: "tab:blue", 3: "tab:orange", 4: "tab:green"}
STYLE = {"figure.dpi": 100, "font.size": 9, "axes.grid": True, "grid.alpha": 0.3}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_loss_history(history: Sequence[float], path, title: str = "scene loss") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3))
        h = np.asarray(history, dtype=float)
        ax.plot(np.arange(1, len(h) + 1), h, lw=1.0, color="k")
        if len(h) and np.all(h > 0):
            ax.set_yscale("log")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        ax.set_title(title)
        return _save(fig, path)


def plot_curves(curves, path, cloud: Optional[np.ndarray] = None, gt=None,
                interval: float = 0.01, max_cloud_points: int = 4000) -> Path:
    """Predicted curves colored by class; optional cloud and dashed ground truth."""
    with plt.rc_context(STYLE):
        fig = plt.figure(figsize=(5, 5))
        ax = fig.add_subplot(projection="3d")
        if cloud is not None and len(cloud):
            step = max(1, len(cloud) // max_cloud_points)
            c = np.asarray(cloud)[::step]
            ax.scatter(c[:, 0], c[:, 1], c[:, 2], s=0.5, c="0.7", depthshade=False)
        for g in gt or ():
            p = sample_by_interval(g, interval)
            ax.plot(p[:, 0], p[:, 1], p[:, 2], ls="--", lw=0.8, color="0.3")
        seen = set()
        for curve in curves:
            p = sample_by_interval(curve, interval)
            label = None if curve.cls in seen else CLASS_NAMES[curve.cls]
            seen.add(curve.cls)
            ax.plot(p[:, 0], p[:, 1], p[:, 2], lw=1.5, color=CLASS_COLORS[curve.cls], label=label)
        if seen:
            ax.legend(loc="upper left", fontsize=7)
        ax.set_box_aspect((1, 1, 1))
        return _save(fig, path)


def plot_ap(ap_per_class: dict, path, title: str = "average precision") -> Path:
    """Bar chart of AP per curve class (keys are class ids)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        classes = [c for c in CURVE_CLASSES if c in ap_per_class]
        ax.bar([CLASS_NAMES[c] for c in classes], [ap_per_class[c] for c in classes],
               color=[CLASS_COLORS[c] for c in classes])
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("AP")
        ax.set_title(title)
        return _save(fig, path)

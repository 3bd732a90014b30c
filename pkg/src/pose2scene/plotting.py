"""Static top-down renders of scenes and predictions, plus PR-curve and per-class AP charts."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon as PolygonPatch  # noqa: E402

from .geom import ScoredBox, footprint  # noqa: E402
from .synthgen.dataset import Dataset  # noqa: E402
from .synthgen.scene import SceneAnnotation  # noqa: E402

__all__ = ["ViewTransform", "view_for", "render_topdown", "plot_predictions", "plot_pr_curves", "plot_class_ap"]

GT_COLOR = "#2a9d3a"
PRED_COLOR = "#d1495b"
TRAJ_COLOR = "#1d3557"


@dataclass(frozen=True)
class ViewTransform:
    """Maps ground-plane metres to image pixels; +y in the world points up in the image."""

    xmin: float
    ymin: float
    width_m: float
    height_m: float
    px_per_m: float = 60.0

    @property
    def shape(self) -> tuple[int, int]:
        return int(round(self.height_m * self.px_per_m)), int(round(self.width_m * self.px_per_m))

    def world_to_pixel(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        col = (xy[..., 0] - self.xmin) * self.px_per_m
        row = (self.ymin + self.height_m - xy[..., 1]) * self.px_per_m
        return np.stack([col, row], -1)

    def pixel_to_world(self, px) -> np.ndarray:
        px = np.asarray(px, dtype=np.float64)
        x = px[..., 0] / self.px_per_m + self.xmin
        y = self.ymin + self.height_m - px[..., 1] / self.px_per_m
        return np.stack([x, y], -1)


def view_for(scene: SceneAnnotation | None, root_xy: np.ndarray | None, margin: float = 1.0,
             px_per_m: float = 60.0) -> ViewTransform:
    pts = [np.zeros((0, 2))]
    if scene is not None:
        pts += [footprint(b) for b in scene.boxes]
    if root_xy is not None:
        pts.append(np.asarray(root_xy)[:, :2])
    pts = np.concatenate(pts)
    if len(pts) == 0:
        pts = np.zeros((1, 2))
    lo = np.floor(pts.min(0) - margin)
    hi = np.ceil(pts.max(0) + margin)
    return ViewTransform(float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]), px_per_m)


def _draw_box(ax, box, color, fill: bool, label: str | None):
    poly = footprint(box)
    ax.add_patch(PolygonPatch(poly, closed=True, facecolor=color if fill else "none",
                              edgecolor=color, alpha=0.45 if fill else 1.0, linewidth=1.5))
    # short tick toward the front face
    front = poly[2:4].mean(0)
    ax.plot([box.center[0], front[0]], [box.center[1], front[1]], color=color, linewidth=1.0)
    if label:
        ax.text(box.center[0], box.center[1], label, color=color, fontsize=7, ha="center", va="center")


def render_topdown(
    path,
    transform: ViewTransform,
    gt: SceneAnnotation | None = None,
    predictions: Sequence[ScoredBox] = (),
    root_xy: np.ndarray | None = None,
    class_names: Sequence[str] | None = None,
    labels: bool = True,
) -> Path:
    """Write one PNG: filled GT footprints, outlined predictions, root trajectory polyline."""
    h, w = transform.shape
    dpi = 100
    fig = plt.figure(figsize=(w / dpi, h / dpi), dpi=dpi)
    ax = fig.add_axes((0, 0, 1, 1))
    ax.set_xlim(transform.xmin, transform.xmin + transform.width_m)
    ax.set_ylim(transform.ymin, transform.ymin + transform.height_m)
    ax.set_axis_off()

    def name(c):
        return (class_names[c] if class_names and 0 <= c < len(class_names) else str(c)) if labels else None

    if gt is not None:
        for cls, box in gt.objects:
            _draw_box(ax, box, GT_COLOR, True, name(cls))
    for p in predictions:
        _draw_box(ax, p.box, PRED_COLOR, False, name(p.class_id))
    if root_xy is not None and len(root_xy):
        ax.plot(root_xy[:, 0], root_xy[:, 1], color=TRAJ_COLOR, linewidth=1.0)
        ax.plot(root_xy[0, 0], root_xy[0, 1], "o", color=TRAJ_COLOR, markersize=3)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def plot_predictions(predictions, dataset: Dataset, out_dir, class_names: Sequence[str] | None = None,
                     labels: bool = True) -> list[Path]:
    """One image per hypothesis per sequence (the ML prediction when a sequence has none)."""
    out = Path(out_dir)
    lookup = dataset.by_id()
    names = class_names or dataset.class_names
    paths = []
    for pred in predictions:
        rec = lookup[pred.sequence_id]
        root = rec.trajectory.root(dataset.skeleton)
        view = view_for(rec.scene, root)
        if pred.hypotheses:
            for hyp in pred.hypotheses:
                file = out / f"seq{pred.sequence_id:05d}_hyp{hyp.hypothesis_id:02d}.png"
                paths.append(render_topdown(file, view, rec.scene, hyp.boxes, root, names, labels))
        else:
            file = out / f"seq{pred.sequence_id:05d}_ml.png"
            paths.append(render_topdown(file, view, rec.scene, pred.ml, root, names, labels))
    return paths


def plot_pr_curves(curves: dict[int, tuple[np.ndarray, np.ndarray]], class_names: Sequence[str], path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4), dpi=100)
    for cls, (rec, prec) in sorted(curves.items()):
        ax.step(np.concatenate([[0], rec]), np.concatenate([[1], prec]), where="post", label=class_names[cls])
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_class_ap(per_class_ap: dict[str, float], path) -> Path:
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(per_class_ap) + 1), 3.5), dpi=100)
    names = list(per_class_ap)
    ax.bar(names, [100 * per_class_ap[n] for n in names], color=GT_COLOR)
    ax.set_ylabel("AP@0.5 (%)")
    ax.set_ylim(0, 100)
    ax.tick_params(axis="x", rotation=45)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)

"""Figure rendering: density heatmaps and evaluation plots.

All output is file-based (Agg backend); heatmaps use one fixed colormap
so repeated renders of the same map are byte-identical.
"""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from PIL import Image  # noqa: E402

from .targets import DensityMap  # noqa: E402

HEATMAP_CMAP = "viridis"


def density_to_rgb(density: DensityMap | np.ndarray) -> np.ndarray:
    """Map a density grid to H x W x 3 uint8 via the fixed colormap.

    Normalization is by the map's own max, so the hottest pixel is always
    at the top of the scale; an all-zero map renders as the colormap floor.
    """
    values = density.values if isinstance(density, DensityMap) else np.asarray(density)
    if values.ndim != 2:
        raise ValueError(f"expected 2-D density, got shape {values.shape}")
    peak = float(values.max())
    norm = values / peak if peak > 0 else np.zeros_like(values, dtype=np.float64)
    cmap = matplotlib.colormaps[HEATMAP_CMAP]
    rgba = cmap(norm.astype(np.float64))
    return (rgba[:, :, :3] * 255.0 + 0.5).astype(np.uint8)


def heatmap_png_bytes(density: DensityMap | np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(density_to_rgb(density)).save(buf, format="PNG")
    return buf.getvalue()


def save_heatmap(density: DensityMap | np.ndarray, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(heatmap_png_bytes(density))
    return path


def save_eval_figures(report, out_dir: Path | str) -> list[Path]:
    """Scatter of true vs predicted counts and an error histogram."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = np.array([r["gt_count"] for r in report.per_image])
    pred = np.array([r["pred_count"] for r in report.per_image])
    errs = np.abs(gt - pred)
    paths = []

    fig, ax = plt.subplots(figsize=(5, 5))
    lim = max(1.0, float(max(gt.max(), pred.max())) * 1.05)
    ax.plot([0, lim], [0, lim], "k--", linewidth=0.8, label="ideal")
    ax.scatter(gt, pred, s=18, alpha=0.7)
    ax.set_xlim(0, lim)
    ax.set_ylim(0, lim)
    ax.set_xlabel("true count")
    ax.set_ylabel("predicted count")
    ax.set_title(f"{report.split}: MAE {report.mae:.2f}, RMSE {report.rmse:.2f}")
    ax.legend(loc="upper left")
    fig.tight_layout()
    p = out_dir / f"{report.split}_scatter.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(errs, bins=min(20, max(5, len(errs))), edgecolor="black", linewidth=0.5)
    ax.set_xlabel("absolute count error")
    ax.set_ylabel("images")
    ax.set_title(f"{report.split}: error distribution (n={report.n})")
    fig.tight_layout()
    p = out_dir / f"{report.split}_errors.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)
    return paths

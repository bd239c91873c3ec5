"""Intensity-profile plotting: one curve per method along a shared line,
written as a raster image plus the underlying CSV (columns: method, sample,
value; ``sample`` indexes the points along the line)."""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import intensity_profile  # noqa: E402


def profile_plot(images: dict, p0, p1, out_path, n_samples: int = 100) -> Path:
    """Sample every image along the segment p0 -> p1 and plot the profiles.

    ``images`` maps method name to a 2D array; all must share one shape.
    Returns the plot path; the CSV lands next to it with suffix ``.csv``.
    """
    if not images:
        raise ValueError("need at least one image")
    shapes = {img.shape for img in images.values()}
    if len(shapes) != 1:
        raise ValueError("images must share one shape")

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    series = {name: intensity_profile(img, p0, p1, n_samples)
              for name, img in images.items()}

    csv_path = out_path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "sample", "value"])
        for name, vals in series.items():
            for i, v in enumerate(vals):
                writer.writerow([name, i, f"{v:.8g}"])

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, vals in series.items():
        ax.plot(vals, label=name, linewidth=1.2)
    ax.set_xlabel("position along line")
    ax.set_ylabel("intensity")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path

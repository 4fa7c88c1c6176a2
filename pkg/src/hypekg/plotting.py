"""Static figures for the distance analysis and hyperboloid projections."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, FancyBboxPatch  # noqa: E402


def plot_deltas(intra: dict, inter, keys, metric: str, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    xs = [k for k in keys if intra[k] is not None]
    ax1.plot([f"P{k}" for k in xs], [intra[k] for k in xs], marker="o")
    ax1.set_title(f"within-level distance ({metric})")
    ax1.set_xlabel("level")
    im = ax2.imshow(inter, cmap="viridis")
    ax2.set_xticks(range(len(keys)), [f"P{k}" for k in keys])
    ax2.set_yticks(range(len(keys)), [f"P{k}" for k in keys])
    ax2.set_title("cross-level distance")
    fig.colorbar(im, ax=ax2, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_hyperboloids(records, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.add_patch(Circle((0, 0), 1.0, fill=False, lw=1.2, color="black"))
    levels = sorted({r["level"] for r in records})
    cmap = plt.get_cmap("tab10")
    for r in records:
        (x, y), (lx, ly) = r["center"], r["limit"]
        color = cmap(levels.index(r["level"]) % 10)
        pad = 0.25 * min(lx, ly)
        ax.add_patch(FancyBboxPatch((x - lx + pad, y - ly + pad), max(2 * (lx - pad), 0), max(2 * (ly - pad), 0),
                                    boxstyle=f"round,pad={pad}", fill=False, ec=color, lw=0.8, alpha=0.8))
        ax.plot(x, y, ".", color=color, ms=3)
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

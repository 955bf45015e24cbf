"""Report rendering: delimited tables plus matplotlib figures written
next to them.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["write_table", "embedding_figure", "error_figure", "loss_figure"]


def write_table(path, header, rows):
    """Tab-separated table with a header row."""
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(_cell(c) for c in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cell(value):
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def embedding_figure(path, coords, labels=None, title="latent embedding"):
    """2-D scatter of the first two embedding coordinates, colored by label."""
    fig, ax = plt.subplots(figsize=(6, 5))
    if labels:
        for lab in sorted(set(labels)):
            mask = [l == lab for l in labels]
            ax.scatter(coords[mask, 0], coords[mask, 1], s=18, label=lab, alpha=0.8)
        ax.legend()
    else:
        ax.scatter(coords[:, 0], coords[:, 1], s=18, alpha=0.8)
    ax.set_xlabel("dim 1")
    ax.set_ylabel("dim 2")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def error_figure(path, names, errors, diag, title="held-out reconstruction error"):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(errors)), errors, color="#4878a8")
    ax.axhline(sum(errors) / len(errors), color="#c44e52", linestyle="--",
               label=f"mean = {sum(errors) / len(errors):.3g}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel(f"per-vertex error (bbox diag = {diag:.3g})")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_figure(path, history, title="training loss"):
    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = range(1, len(history) + 1)
    ax.plot(epochs, [h[0] for h in history], label="total")
    ax.plot(epochs, [h[1] for h in history], label="reconstruction")
    ax.plot(epochs, [h[2] for h in history], label="kl")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""ROC curve figure from a verification sweep table."""

from __future__ import annotations

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .tables import read_roc


def render_roc(table_path, out_path):
    """Plot the ROC staircase with the chance diagonal for reference.

    Returns the saved figure.
    """
    rows = read_roc(table_path)
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    ax.plot([r["fpr"] for r in rows], [r["tpr"] for r in rows],
            drawstyle="steps-post", label="verification sweep")
    ax.plot([0.0, 1.0], [0.0, 1.0], linestyle="--", color="gray", label="chance")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("Receiver operating characteristic")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Render a ROC curve from a CSV sweep table.")
    parser.add_argument("table", help="ROC CSV (fpr,tpr)")
    parser.add_argument("out_image", help="image file to write")
    args = parser.parse_args(argv)
    try:
        fig = render_roc(args.table, args.out_image)
    except (OSError, ValueError) as error:
        parser.exit(1, f"error: {error}\n")
    plt.close(fig)
    print(f"wrote {args.out_image}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Error distribution curves; several tables overlay in one labeled figure."""

from __future__ import annotations

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .tables import read_edc


def render_edc(table_paths, out_path, labels=None):
    """Overlay one cumulative curve per table; labels default to file stems.

    Returns the saved figure.
    """
    paths = list(table_paths)
    if not paths:
        raise ValueError("at least one EDC table is required")
    if labels is None:
        labels = [Path(p).stem for p in paths]
    if len(labels) != len(paths):
        raise ValueError(f"{len(paths)} tables but {len(labels)} labels")
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    for path, label in zip(paths, labels):
        rows = read_edc(path)
        ax.plot([r["threshold"] for r in rows], [r["fraction"] for r in rows], label=label)
    ax.set_xlabel("NME threshold (%)")
    ax.set_ylabel("fraction of samples at or below threshold")
    ax.set_title("Error distribution curves")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Render error distribution curves from one or more EDC CSV tables.")
    parser.add_argument("tables", nargs="+", help="EDC CSVs (threshold,fraction)")
    parser.add_argument("out_image", help="image file to write")
    parser.add_argument("--labels", help="comma-separated legend labels, one per table")
    args = parser.parse_args(argv)
    labels = args.labels.split(",") if args.labels else None
    try:
        fig = render_edc(args.tables, args.out_image, labels=labels)
    except (OSError, ValueError) as error:
        parser.exit(1, f"error: {error}\n")
    plt.close(fig)
    print(f"wrote {args.out_image}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

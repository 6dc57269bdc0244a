"""Per-identity NME boxplots from a precomputed box-statistics table."""

from __future__ import annotations

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .tables import read_boxstats


def render_boxplots(table_path, out_path):
    """Draw one box per identity from the table's five-number summaries.

    Returns the saved figure.
    """
    rows = read_boxstats(table_path)
    stats = [
        {
            "label": f"id {row['identity_id']}",
            "whislo": row["min"],
            "q1": row["q1"],
            "med": row["median"],
            "q3": row["q3"],
            "whishi": row["max"],
            "fliers": [],
        }
        for row in rows
    ]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.45 * len(stats)), 4.0))
    ax.bxp(stats, showfliers=False)
    ax.set_xlabel("identity")
    ax.set_ylabel("NME (%)")
    ax.set_title("Per-identity reconstruction error distribution")
    ax.tick_params(axis="x", rotation=60)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Render per-identity NME boxplots from a boxstats CSV table.")
    parser.add_argument("table", help="boxstats CSV (identity_id,min,q1,median,q3,max,iqr)")
    parser.add_argument("out_image", help="image file to write (png, svg, pdf, ...)")
    args = parser.parse_args(argv)
    try:
        fig = render_boxplots(args.table, args.out_image)
    except (OSError, ValueError) as error:
        parser.exit(1, f"error: {error}\n")
    plt.close(fig)
    print(f"wrote {args.out_image}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

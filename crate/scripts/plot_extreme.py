#!/usr/bin/env python3
"""Plot median position error against kept-keypoint count per noise level.

Usage: plot_extreme.py extreme.csv [out.png]
"""

import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> None:
    if len(sys.argv) < 2:
        sys.exit(__doc__.strip())
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "extreme.png"

    curves = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            curves[float(row["sigma"])].append(
                (int(row["keypoints"]), float(row["median_error"]))
            )

    fig, ax = plt.subplots(figsize=(6, 4))
    for sigma in sorted(curves):
        pts = sorted(curves[sigma])
        ax.plot(
            [k for k, _ in pts],
            [e for _, e in pts],
            marker="o",
            label=f"sigma = {sigma:g} px",
        )
    ax.set_xlabel("kept keypoints")
    ax.set_ylabel("median position error (m)")
    ax.set_yscale("symlog", linthresh=1e-9)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()

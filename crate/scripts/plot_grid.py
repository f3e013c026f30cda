#!/usr/bin/env python3
"""Heatmap of mean percent difference over (layer, tau) from a sweep's grid.csv.

    python scripts/plot_grid.py runs/sweep/grid.csv -o sweep.png
    python scripts/plot_grid.py runs/pos-sweep/grid.csv --pos nouns -o nouns.png
"""

import argparse

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("grid")
    parser.add_argument("--pos", help="part of speech to plot from a pos-sweep grid")
    parser.add_argument("-o", "--out", default="grid.png")
    parser.add_argument("--title")
    args = parser.parse_args()

    df = pd.read_csv(args.grid)
    if "pos" in df.columns:
        if args.pos is None:
            parser.error(f"grid has several parts of speech; pick one with --pos ({', '.join(df.pos.unique())})")
        df = df[df.pos == args.pos]
    table = df.pivot(index="layer", columns="tau", values="mean_pct").sort_index()
    values = table.to_numpy(dtype=float)
    limit = np.nanmax(np.abs(values)) if np.isfinite(values).any() else 1.0

    fig, ax = plt.subplots(figsize=(1 + 0.5 * table.shape[1], 1 + 0.4 * table.shape[0]))
    im = ax.imshow(values, cmap="RdYlGn", vmin=-limit, vmax=limit, aspect="auto", origin="lower")
    ax.set_xticks(range(table.shape[1]), [f"{t:g}" for t in table.columns])
    ax.set_yticks(range(table.shape[0]), table.index)
    ax.set_xlabel("tau")
    ax.set_ylabel("layer")
    ax.set_title(args.title or args.grid)
    fig.colorbar(im, ax=ax, label="mean % difference")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()

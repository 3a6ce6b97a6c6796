#!/usr/bin/env python3
"""Plot k diagnostics and 2-D projections from a pipeline output directory.

Usage: python scripts/plot_diagnostics.py OUT_DIR [--save DIR]
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_kdiag(path: Path, ax_sse, ax_sil):
    rows = [line.split("\t") for line in path.read_text().splitlines()
            if line and not line.startswith(("#", "k\t"))]
    ks = [int(r[0]) for r in rows]
    sse = [float(r[1]) for r in rows]
    sil = [float(r[2]) for r in rows]
    label = path.stem.replace("kdiag_", "")
    ax_sse.plot(ks, sse, marker="o", label=label)
    ax_sil.plot(ks, sil, marker="o", label=label)


def plot_projection(path: Path, ax):
    rows = [line.split("\t") for line in path.read_text().splitlines()[1:]]
    xs = [float(r[1]) for r in rows]
    ys = [float(r[2]) for r in rows]
    clusters = [int(r[3]) for r in rows]
    ax.scatter(xs, ys, c=clusters, cmap="tab10", s=8)
    ax.set_title(path.stem)


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--save", type=Path, default=None,
                    help="directory for PNGs (default: alongside inputs)")
    args = ap.parse_args()
    save = args.save or args.out_dir
    save.mkdir(parents=True, exist_ok=True)

    diags = sorted(args.out_dir.glob("kdiag_*.tsv"))
    if diags:
        fig, (ax_sse, ax_sil) = plt.subplots(1, 2, figsize=(9, 3.5))
        for d in diags:
            plot_kdiag(d, ax_sse, ax_sil)
        ax_sse.set_xlabel("k"), ax_sse.set_ylabel("SSE")
        ax_sil.set_xlabel("k"), ax_sil.set_ylabel("mean silhouette")
        ax_sse.legend(), ax_sil.legend()
        fig.tight_layout()
        fig.savefig(save / "kdiag.png", dpi=120)
        print(f"wrote {save / 'kdiag.png'}")

    projections = sorted(args.out_dir.glob("proj_*.tsv"))
    if projections:
        cols = min(3, len(projections))
        rows = (len(projections) + cols - 1) // cols
        fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3.5 * rows),
                                 squeeze=False)
        for ax in axes.flat:
            ax.axis("off")
        for ax, path in zip(axes.flat, projections):
            ax.axis("on")
            plot_projection(path, ax)
        fig.tight_layout()
        fig.savefig(save / "projections.png", dpi=120)
        print(f"wrote {save / 'projections.png'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

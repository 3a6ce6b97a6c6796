#!/usr/bin/env python3
"""Generate the stock near-far benchmark, run the pipeline, score the result.

The benchmark has two source factories styled like the target and one far
off; the pipeline should drop the far factory and keep the rest. Factory
tags are ground truth for scoring only; the filter never reads them.

Usage: python scripts/run_near_far.py [workdir] [--images N] [--seed S]
"""

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

from stylefilter.cli import main as cli
from stylefilter.manifest import read_manifest


def run(workdir: Path, images: int, seed: int) -> int:
    workdir = workdir.resolve()  # config paths are resolved against the config
    workdir.mkdir(parents=True, exist_ok=True)
    spec = workdir / "bench.spec"
    bench = workdir / "bench"
    out = workdir / "out"
    if cli(["synth", "--write-default", str(spec), "--output-dir", str(bench),
            "--images-per-factory", str(images)]):
        return 1
    if cli(["synth", str(spec)]):
        return 1
    cfg = workdir / "run.cfg"
    cfg.write_text(f"""\
[paths]
source_manifest = {bench}/source.manifest
target_manifest = {bench}/target.manifest
output_dir = {out}

[clustering]
k_source = 3
k_target = 2
candidate_ks = 2-8

[filter]
centroid_candidate_ks = 2,3
mode = all_k

[run]
seed = {seed}
""")
    if cli(["run", "--config", str(cfg)]):
        return 1

    report = json.loads((out / "report.json").read_text())
    truth = {r.id: r.class_tags[0]
             for r in read_manifest(bench / "source.manifest").records}
    kept = Counter(truth[r.id]
                   for r in read_manifest(out / "filtered_source.manifest").records)
    total = Counter(truth.values())
    print("\nretention by factory (ground truth from synth tags):")
    for factory in sorted(total):
        print(f"  {factory:10s} kept {kept.get(factory, 0):4d} / {total[factory]}")
    print(f"removed clusters: {report['filter']['removed_source_clusters']}, "
          f"mode {report['filter']['mode']}, "
          f"candidates {report['filter']['candidate_ks']}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("workdir", nargs="?", default="near_far_run",
                    type=Path)
    ap.add_argument("--images", type=int, default=100)
    ap.add_argument("--seed", type=int, default=424242)
    args = ap.parse_args()
    sys.exit(run(args.workdir, args.images, args.seed))

"""Command-line entry point: the pipeline stages as subcommands."""

from __future__ import annotations

import argparse
import logging
import os
import sys


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylefilter",
        description="Curate a source-domain image set by style-space "
                    "clustering against a target domain.",
    )
    parser.add_argument("--verbose", action="store_true",
                        help="debug-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", required=True, help="pipeline config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override [run] seed")
        p.add_argument("--threads", type=int, default=None,
                       help="override [run] threads (affects BLAS pools only)")

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark")
    p_synth.add_argument("spec", nargs="?", help="synthesis spec file")
    p_synth.add_argument("--write-default", metavar="PATH",
                         help="write the stock near-far benchmark spec and exit")
    p_synth.add_argument("--output-dir", default="bench",
                         help="output dir recorded in the default spec")
    p_synth.add_argument("--images-per-factory", type=int, default=100,
                         help="count recorded in the default spec")

    for name, help_text in [
        ("extract", "map images to style vectors (cached)"),
        ("diagnose-k", "SSE/silhouette curves over candidate ks"),
        ("cluster", "k-means per domain at the configured k"),
        ("filter", "centroid clustering, removal decision, filtered manifest"),
        ("project", "2-D diagnostic projections"),
        ("run", "everything end-to-end"),
    ]:
        p = sub.add_parser(name, help=help_text)
        add_config_flags(p)
        if name in ("extract", "diagnose-k", "cluster"):
            p.add_argument("--domain", choices=["source", "target", "both"],
                           default="both")
        if name == "project":
            p.add_argument("--what", choices=["source", "target", "centroids",
                                              "all"], default="all")
    return parser


def _set_thread_env(threads: int | None) -> None:
    if threads is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(threads)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    _set_thread_env(getattr(args, "threads", None))

    from .errors import ConfigError, StyleFilterError

    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except StyleFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    from .manifest import Domain

    if args.command == "synth":
        return _cmd_synth(args)

    from .config import load_config
    from .pipeline import OutputLock, Pipeline

    cfg = load_config(args.config, seed_override=args.seed,
                      threads_override=args.threads)
    pipe = Pipeline(cfg)
    domains = {
        "source": [Domain.SOURCE],
        "target": [Domain.TARGET],
        "both": [Domain.SOURCE, Domain.TARGET],
    }

    if args.command == "run":
        report = pipe.run_all()
        removed = report["filter"]["removed_source_clusters"]
        kept = report["filter"]["kept_count"]
        dropped = report["filter"]["removed_count"]
        print(f"removed source clusters: {removed} "
              f"(kept {kept} instances, removed {dropped})")
        print(f"report: {pipe.report_path}")
        return 0

    with OutputLock(pipe.out):
        if args.command == "extract":
            for domain in domains[args.domain]:
                sset = pipe.stage_extract(domain)
                print(f"{domain.value}: {len(sset.ids)} style vectors "
                      f"(dim {sset.dim}) -> {pipe.cache_path(domain)}")
        elif args.command == "diagnose-k":
            for domain in domains[args.domain]:
                path = pipe.stage_diagnose(domain)
                print(f"{domain.value}: diagnostics -> {path}")
        elif args.command == "cluster":
            for domain in domains[args.domain]:
                result = pipe.stage_cluster(domain)
                print(f"{domain.value}: k={result.k} sse={result.sse:.6g} "
                      f"-> {pipe.clustering_path(domain)}")
        elif args.command == "filter":
            result = pipe.stage_filter()
            pipe.write_report(result)
            print(f"removed source clusters: "
                  f"{result['removed_source_clusters']} "
                  f"(kept {result['kept_count']}, "
                  f"removed {result['removed_count']})")
            print(f"filtered manifest: {result['output_manifest']}")
            print(f"report: {pipe.report_path}")
        elif args.command == "project":
            whats = (("source", "target", "centroids") if args.what == "all"
                     else (args.what,))
            for path in pipe.stage_project(whats):
                print(f"projection -> {path}")
    return 0


def _cmd_synth(args) -> int:
    from .manifest import write_manifest
    from .testkit import (
        default_near_far_spec,
        generate_benchmark,
        read_synth_spec,
        write_synth_spec,
    )

    if args.write_default:
        spec = default_near_far_spec(args.output_dir,
                                     images_per_factory=args.images_per_factory)
        write_synth_spec(spec, args.write_default)
        print(f"wrote default benchmark spec to {args.write_default}")
        return 0
    if not args.spec:
        print("error: synth needs a spec file (or --write-default)",
              file=sys.stderr)
        return 2
    spec = read_synth_spec(args.spec)
    source, target = generate_benchmark(spec)
    out = spec.output_dir
    write_manifest(source, os.path.join(out, "source.manifest"))
    write_manifest(target, os.path.join(out, "target.manifest"))
    print(f"{len(source.records)} source + {len(target.records)} target "
          f"images under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

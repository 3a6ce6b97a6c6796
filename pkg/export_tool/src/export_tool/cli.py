"""CLI: export a VGG-19 tap asset, or verify an existing one."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sf-model-export",
        description="VGG-19 -> multi-output ONNX asset for the style pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_export = sub.add_parser("export", help="write <out>.onnx + hash manifest")
    p_export.add_argument("--out", required=True, help="output .onnx path")
    p_export.add_argument("--taps", nargs="*", default=None,
                          help="tap outputs to expose (default: tap0..tap4)")
    p_export.add_argument("--input-size", type=int, default=224)
    p_export.add_argument("--weights", choices=["pretrained", "random"],
                          default="pretrained")
    p_export.add_argument("--seed", type=int, default=0,
                          help="seed for --weights random")
    p_export.add_argument("--opset", type=int, default=13)

    p_verify = sub.add_parser("verify", help="inspect an exported asset")
    p_verify.add_argument("asset", help="path to the .onnx file")

    args = parser.parse_args(argv)
    if args.command == "export":
        return _export(args)
    return _verify(args)


def _export(args) -> int:
    from .vgg import export_model

    try:
        result = export_model(
            args.out,
            taps=args.taps,
            input_size=(args.input_size, args.input_size),
            weights=args.weights,
            seed=args.seed,
            opset=args.opset,
        )
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"asset:  {result.asset_path}")
    print(f"hash:   {result.sha256}")
    print(f"taps:   {result.taps} channels {result.tap_channels}")
    print(f"manifest: {result.hash_path}")
    return 0


def _verify(args) -> int:
    from .onnx_writer import inspect_asset

    path = Path(args.asset)
    try:
        summary = inspect_asset(str(path))
    except Exception as exc:
        print(f"error: cannot parse {path}: {exc}", file=sys.stderr)
        return 1
    print(f"producer: {summary.producer} "
          f"(ir {summary.ir_version}, opset {summary.opset})")
    print(f"ops: {dict(summary.op_counts)}; "
          f"initializers: {summary.n_initializers}")
    for name, dims in summary.inputs:
        print(f"input:  {name} {dims}")
    for name, dims in summary.outputs:
        print(f"output: {name} {dims}")
    hash_path = path.with_suffix(path.suffix + ".hash.json")
    if hash_path.exists():
        recorded = json.loads(hash_path.read_text())["sha256"]
        actual = hashlib.sha256(path.read_bytes()).hexdigest()
        status = "OK" if recorded == actual else "MISMATCH"
        print(f"hash manifest: {status}")
        if status != "OK":
            return 1
    else:
        print("hash manifest: missing")
    return 0


if __name__ == "__main__":
    sys.exit(main())

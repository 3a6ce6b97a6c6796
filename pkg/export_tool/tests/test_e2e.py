"""Full consumer pipeline on the synthetic benchmark with the ONNX backend."""

import json
import subprocess


def _run_cli(*args):
    proc = subprocess.run(["stylefilter", *args], capture_output=True,
                          text=True)
    assert proc.returncode == 0, f"{args}: {proc.stderr}"
    return proc.stdout


def test_pipeline_end_to_end_with_onnx_backend(asset, tmp_path):
    bench = tmp_path / "bench"
    spec = tmp_path / "bench.spec"
    _run_cli("synth", "--write-default", str(spec),
             "--output-dir", str(bench), "--images-per-factory", "100")
    _run_cli("synth", str(spec))

    out = tmp_path / "out"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"""\
[paths]
source_manifest = {bench}/source.manifest
target_manifest = {bench}/target.manifest
output_dir = {out}

[extractor]
backend = onnx
asset_path = {asset.asset_path}
input_size = 64

[clustering]
k_source = 3
k_target = 2
candidate_ks = 2-5

[filter]
centroid_candidate_ks = 2,3

[projection]
perplexity = 10
iterations = 250

[run]
seed = 99
""")
    _run_cli("run", "--config", str(cfg))

    report = json.loads((out / "report.json").read_text())
    assert report["config"]["extractor"]["backend"] == "onnx"
    f = report["filter"]
    assert f["kept_count"] + f["removed_count"] == 300
    assert (out / "filtered_source.manifest").exists()
    assert (out / "style_source.sfstyle").exists()
    print(f"\nAC-9 e2e: onnx-backend run complete, removed clusters "
          f"{f['removed_source_clusters']} "
          f"({f['removed_count']} of 300 instances)")

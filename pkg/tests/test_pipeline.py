"""CLI subcommands, stage dependencies, skipping, and config validation."""

import json

import numpy as np
import pytest

from stylefilter.cli import main
from stylefilter.config import load_config, write_default_config
from stylefilter.errors import ConfigError, PipelineError
from stylefilter.manifest import read_manifest

PIPELINE_CFG = """\
[paths]
source_manifest = {bench}/source.manifest
target_manifest = {bench}/target.manifest
output_dir = {out}

[extractor]
input_size = 96

[clustering]
k_source = 3
k_target = 2
candidate_ks = 2-5

[filter]
centroid_candidate_ks = 2,3

[projection]
perplexity = 8
iterations = 200

[run]
seed = 7
"""


@pytest.fixture(scope="session")
def bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    spec = root / "bench.spec"
    assert main(["synth", "--write-default", str(spec),
                 "--output-dir", str(root / "data"),
                 "--images-per-factory", "12"]) == 0
    assert main(["synth", str(spec)]) == 0
    return root / "data"


def _write_cfg(tmp_path, bench, **extra):
    cfg_path = tmp_path / "pipeline.cfg"
    text = PIPELINE_CFG.format(bench=bench, out=tmp_path / "out")
    for section, kv in extra.items():
        text += f"\n[{section}]\n" if f"[{section}]" not in text else ""
        for key, value in kv.items():
            text = _set_key(text, section, key, value)
    cfg_path.write_text(text)
    return cfg_path


def _set_key(text, section, key, value):
    lines = text.splitlines()
    out, in_section, replaced = [], False, False
    for line in lines:
        if line.startswith("["):
            if in_section and not replaced:
                out.append(f"{key} = {value}")
                replaced = True
            in_section = line.strip() == f"[{section}]"
        elif in_section and line.split("=")[0].strip() == key:
            out.append(f"{key} = {value}")
            replaced = True
            continue
        out.append(line)
    if not replaced:
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"


def test_run_end_to_end(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["filter"]["kept_count"] + report["filter"]["removed_count"] == 36
    assert report["config"]["clustering"]["k_source"] == 3
    assert report["class_tags_consulted"] is False
    filtered = read_manifest(out / "filtered_source.manifest")
    assert len(filtered.records) == report["filter"]["kept_count"]
    for name in ["style_source.sfstyle", "clust_source.sfclust",
                 "kdiag_target.tsv", "standardizer.sfstd",
                 "proj_source_pca.tsv", "proj_centroids_pca.tsv"]:
        assert (out / name).exists(), name


def test_second_run_skips_everything(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["run", "--config", str(cfg)]) == 0
    before = {
        p.name: p.read_bytes()
        for p in (tmp_path / "out").iterdir()
        if p.suffix in (".sfstyle", ".sfclust", ".manifest", ".sfstd")
    }
    assert main(["run", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["counters"]["extractions_performed"] == 0
    assert report["counters"]["clusterings_performed"] == 0
    assert report["counters"]["stages_run"] == []
    after = {
        p.name: p.read_bytes()
        for p in (tmp_path / "out").iterdir()
        if p.suffix in (".sfstyle", ".sfclust", ".manifest", ".sfstd")
    }
    assert before == after


def test_target_manifest_never_touched(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    target = bench / "target.manifest"
    before = target.read_bytes()
    before_mtime = target.stat().st_mtime_ns
    assert main(["run", "--config", str(cfg)]) == 0
    assert target.read_bytes() == before
    assert target.stat().st_mtime_ns == before_mtime


def test_k_source_below_k_target_warns(tmp_path, bench, caplog):
    cfg = _write_cfg(tmp_path, bench, clustering={"k_source": "2",
                                                  "k_target": "3"})
    import logging

    with caplog.at_level(logging.WARNING):
        load_config(cfg)  # warning, not an error
    assert any("k_source" in r.message for r in caplog.records)


def test_filter_without_cluster_errors(tmp_path, bench, capsys):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["extract", "--config", str(cfg)]) == 0
    rc = main(["filter", "--config", str(cfg)])
    assert rc == 1
    assert "missing clustering artifact for domain source" in (
        capsys.readouterr().err
    )


def test_extract_before_manifest_errors(tmp_path, capsys):
    cfg_path = tmp_path / "p.cfg"
    cfg_path.write_text(PIPELINE_CFG.format(bench=tmp_path / "nowhere",
                                            out=tmp_path / "out"))
    rc = main(["extract", "--config", str(cfg_path)])
    assert rc == 1
    assert "missing manifest for domain source" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path, bench, capsys):
    cfg = _write_cfg(tmp_path, bench, clustering={"kk_source": "9"})
    rc = main(["run", "--config", str(cfg)])
    assert rc == 2
    assert "kk_source" in capsys.readouterr().err


def test_unknown_config_section_rejected(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    cfg.write_text(cfg.read_text() + "\n[tuning]\nalpha = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        load_config(cfg)


def test_bad_mode_rejected(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench, filter={"mode": "sometimes"})
    with pytest.raises(ConfigError, match="mode"):
        load_config(cfg)


def test_write_default_config_loads(tmp_path):
    path = tmp_path / "default.cfg"
    write_default_config(path, source_manifest="s.manifest",
                         target_manifest="t.manifest", output_dir="out")
    cfg = load_config(path)
    assert cfg.clustering.k_source == 7
    assert cfg.clustering.k_target == 3
    assert cfg.filter.centroid_candidate_ks is None  # auto
    assert cfg.filter.mode == "all_k"


def test_seed_override_changes_report(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["run", "--config", str(cfg), "--seed", "99"]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["seed"] == 99
    assert report["config"]["run"]["seed"] == 99


def test_stale_meta_triggers_recompute(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    # simulate a crash that left an artifact without its metadata
    (out / "clust_source.sfclust.meta.json").unlink()
    assert main(["run", "--config", str(cfg)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert "cluster/source" in report["counters"]["stages_run"]
    assert report["counters"]["clusterings_performed"] >= 1


def test_lock_file_blocks_second_run(tmp_path, bench, capsys):
    cfg = _write_cfg(tmp_path, bench)
    out = tmp_path / "out"
    out.mkdir()
    (out / ".sf.lock").write_text("12345")
    rc = main(["run", "--config", str(cfg)])
    assert rc == 1
    assert "lock file" in capsys.readouterr().err


def test_cluster_cli_per_domain(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["extract", "--config", str(cfg), "--domain", "both"]) == 0
    assert main(["cluster", "--config", str(cfg), "--domain", "source"]) == 0
    assert (tmp_path / "out" / "clust_source.sfclust").exists()
    assert not (tmp_path / "out" / "clust_target.sfclust").exists()


def test_auto_centroid_candidates(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench,
                     filter={"centroid_candidate_ks": "auto"})
    assert main(["run", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["filter"]["auto_candidates"] is True
    assert len(report["filter"]["candidate_ks"]) == 2
    # the evaluated range spans [2, n_centroids - 1]
    assert report["filter"]["centroid_diagnostics"]["candidate_ks"] == [2, 3, 4]


def test_changed_extractor_invalidates_downstream(tmp_path, bench):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["run", "--config", str(cfg)]) == 0
    cfg2 = _write_cfg(tmp_path, bench, extractor={"input_size": "64"})
    assert main(["run", "--config", str(cfg2)]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["counters"]["extractions_performed"] == 48
    assert "filter" in report["counters"]["stages_run"]


def test_fingerprint_mismatch_on_standalone_filter(tmp_path, bench, capsys):
    cfg = _write_cfg(tmp_path, bench)
    assert main(["run", "--config", str(cfg)]) == 0
    # user edits the extractor config without re-extracting
    cfg2 = _write_cfg(tmp_path, bench, extractor={"input_size": "64"})
    # skip extract: call filter directly against stale caches
    from stylefilter.pipeline import Pipeline

    pipe = Pipeline(load_config(cfg2))
    with pytest.raises(Exception, match="different extractor"):
        pipe.stage_filter()

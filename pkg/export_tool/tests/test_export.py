"""Exported asset structure and the export CLI."""

import json

import numpy as np
import pytest
import torch

from export_tool.cli import main
from export_tool.onnx_writer import inspect_asset
from export_tool.vgg import (
    TAP_CHANNELS,
    TAP_NAMES,
    build_features,
    export_model,
    preprocess_reference,
    reference_style_vector,
    tap_modules,
)

from conftest import EXPORT_SEED, INPUT_SIZE


def test_asset_has_five_tap_outputs_with_published_widths(asset):
    summary = inspect_asset(str(asset.asset_path))
    assert [name for name, _ in summary.outputs] == list(TAP_NAMES)
    widths = [dims[1] for _, dims in summary.outputs]
    assert widths == [64, 128, 256, 512, 512]
    assert summary.op_counts["Conv"] == 16
    assert summary.op_counts["Relu"] == 16
    assert summary.op_counts["MaxPool"] == 4
    assert summary.inputs == [("input", [1, 3, INPUT_SIZE, INPUT_SIZE])]
    # spatial sizes halve stage by stage
    spatial = [dims[2] for _, dims in summary.outputs]
    assert spatial == [64, 32, 16, 8, 4]


def test_hash_manifest_matches_file(asset):
    recorded = json.loads(asset.hash_path.read_text())
    assert recorded["sha256"] == asset.sha256
    assert recorded["taps"] == list(TAP_NAMES)
    assert recorded["tap_channels"] == list(TAP_CHANNELS)
    import hashlib

    assert hashlib.sha256(asset.asset_path.read_bytes()).hexdigest() == \
        asset.sha256


def test_zero_input_gives_nonnegative_taps():
    model = build_features(weights="random", seed=3)
    x = torch.zeros((1, 3, 64, 64))
    taps = tap_modules(model)
    with torch.no_grad():
        for i, module in enumerate(model):
            x = module(x)
            if i in taps:
                assert (x >= 0).all()


def test_export_deterministic(tmp_path):
    a = export_model(tmp_path / "a.onnx", weights="random", seed=7,
                     input_size=(64, 64))
    b = export_model(tmp_path / "b.onnx", weights="random", seed=7,
                     input_size=(64, 64))
    assert a.sha256 == b.sha256
    c = export_model(tmp_path / "c.onnx", weights="random", seed=8,
                     input_size=(64, 64))
    assert c.sha256 != a.sha256


def test_partial_tap_export(tmp_path):
    result = export_model(tmp_path / "p.onnx", taps=["tap1", "tap3"],
                          weights="random", seed=1, input_size=(64, 64))
    summary = inspect_asset(str(result.asset_path))
    assert [name for name, _ in summary.outputs] == ["tap1", "tap3"]
    assert result.tap_channels == [128, 512]


def test_unknown_tap_rejected(tmp_path):
    with pytest.raises(ValueError, match="unknown taps"):
        export_model(tmp_path / "x.onnx", taps=["tap9"], weights="random")


def test_cli_export_and_verify(tmp_path, capsys):
    out = tmp_path / "cli.onnx"
    assert main(["export", "--out", str(out), "--weights", "random",
                 "--seed", "2", "--input-size", "64"]) == 0
    assert out.exists()
    assert main(["verify", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "output: tap4 [1, 512, 4, 4]" in printed
    assert "hash manifest: OK" in printed


def test_cli_verify_detects_tamper(tmp_path, capsys):
    out = tmp_path / "t.onnx"
    assert main(["export", "--out", str(out), "--weights", "random",
                 "--seed", "2", "--input-size", "64"]) == 0
    raw = bytearray(out.read_bytes())
    raw[-100] ^= 0x01  # flip a weight byte deep in the initializers
    out.write_bytes(bytes(raw))
    assert main(["verify", str(out)]) == 1
    assert "MISMATCH" in capsys.readouterr().out


def test_pretrained_mode_loads_or_fails_clearly(tmp_path):
    try:
        result = export_model(tmp_path / "pre.onnx", weights="pretrained",
                              input_size=(64, 64))
    except RuntimeError as exc:
        assert "--weights random" in str(exc)
    else:
        summary = inspect_asset(str(result.asset_path))
        assert [d[1] for _, d in summary.outputs] == [64, 128, 256, 512, 512]


def test_reference_vector_layout():
    model = build_features(weights="random", seed=EXPORT_SEED)
    img = (np.random.default_rng(0).random((64, 64, 3)) * 255).astype(np.uint8)
    tensor = preprocess_reference(img, (INPUT_SIZE, INPUT_SIZE))
    vec = reference_style_vector(model, tensor)
    assert vec.shape == (2 * sum(TAP_CHANNELS),)
    offset = 0
    for c in TAP_CHANNELS:
        variances = vec[offset + c: offset + 2 * c]
        assert (variances >= 0).all()
        offset += 2 * c
